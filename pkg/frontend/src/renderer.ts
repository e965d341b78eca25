/** WebGL2 point cloud renderer with per-point colors and a delta heatmap mode. */

import { displacements } from "./codec.js";
import { OrbitCamera } from "./camera.js";
import type { DecodedCloud } from "./types.js";

const VERT = `#version 300 es
in vec3 aPosition;
in vec3 aColor;
uniform mat4 uMvp;
uniform float uPointSize;
out vec3 vColor;
void main() {
  gl_Position = uMvp * vec4(aPosition, 1.0);
  gl_PointSize = uPointSize;
  vColor = aColor;
}`;

const FRAG = `#version 300 es
precision mediump float;
in vec3 vColor;
out vec4 outColor;
void main() {
  vec2 d = gl_PointCoord - vec2(0.5);
  if (dot(d, d) > 0.25) discard;
  outColor = vec4(vColor, 1.0);
}`;

export type ColorMode = "rgb" | "delta";

/** Blue (no movement) to red (max movement) ramp. */
export function heatmapColor(value: number, maxValue: number): [number, number, number] {
  const t = maxValue > 0 ? Math.min(1, value / maxValue) : 0;
  return [t, 0.15, 1 - t];
}

export class PointRenderer {
  readonly camera = new OrbitCamera();
  pointSize = 4;
  private gl: WebGL2RenderingContext;
  private program: WebGLProgram;
  private vao: WebGLVertexArrayObject;
  private positionBuf: WebGLBuffer;
  private colorBuf: WebGLBuffer;
  private count = 0;
  private mvpLoc: WebGLUniformLocation;
  private sizeLoc: WebGLUniformLocation;

  constructor(private canvas: HTMLCanvasElement) {
    const gl = canvas.getContext("webgl2");
    if (!gl) throw new Error("WebGL2 is not available");
    this.gl = gl;
    this.program = this.link(VERT, FRAG);
    this.vao = gl.createVertexArray()!;
    this.positionBuf = gl.createBuffer()!;
    this.colorBuf = gl.createBuffer()!;
    this.mvpLoc = gl.getUniformLocation(this.program, "uMvp")!;
    this.sizeLoc = gl.getUniformLocation(this.program, "uPointSize")!;
    gl.bindVertexArray(this.vao);
    gl.bindBuffer(gl.ARRAY_BUFFER, this.positionBuf);
    gl.enableVertexAttribArray(0);
    gl.vertexAttribPointer(0, 3, gl.FLOAT, false, 0, 0);
    gl.bindBuffer(gl.ARRAY_BUFFER, this.colorBuf);
    gl.enableVertexAttribArray(1);
    gl.vertexAttribPointer(1, 3, gl.FLOAT, false, 0, 0);
    gl.enable(gl.DEPTH_TEST);
  }

  private link(vertSrc: string, fragSrc: string): WebGLProgram {
    const gl = this.gl;
    const compile = (kind: number, src: string) => {
      const shader = gl.createShader(kind)!;
      gl.shaderSource(shader, src);
      gl.compileShader(shader);
      if (!gl.getShaderParameter(shader, gl.COMPILE_STATUS)) {
        throw new Error(`shader: ${gl.getShaderInfoLog(shader)}`);
      }
      return shader;
    };
    const program = gl.createProgram()!;
    gl.attachShader(program, compile(gl.VERTEX_SHADER, vertSrc));
    gl.attachShader(program, compile(gl.FRAGMENT_SHADER, fragSrc));
    gl.bindAttribLocation(program, 0, "aPosition");
    gl.bindAttribLocation(program, 1, "aColor");
    gl.linkProgram(program);
    if (!gl.getProgramParameter(program, gl.LINK_STATUS)) {
      throw new Error(`program: ${gl.getProgramInfoLog(program)}`);
    }
    return program;
  }

  /** Upload a cloud; delta mode colors points by displacement vs reference. */
  setCloud(cloud: DecodedCloud, mode: ColorMode = "rgb",
           reference: DecodedCloud | null = null): void {
    const gl = this.gl;
    const positions = new Float32Array(cloud.n * 3);
    const colors = new Float32Array(cloud.n * 3);
    let deltas: Float32Array | null = null;
    let deltaMax = 0;
    if (mode === "delta" && reference && reference.n === cloud.n) {
      deltas = displacements(cloud, reference);
      for (const d of deltas) deltaMax = Math.max(deltaMax, d);
    }
    for (let i = 0; i < cloud.n; i++) {
      positions[i * 3] = cloud.points[i * 6];
      positions[i * 3 + 1] = cloud.points[i * 6 + 1];
      positions[i * 3 + 2] = cloud.points[i * 6 + 2];
      if (deltas) {
        const [r, g, b] = heatmapColor(deltas[i], deltaMax);
        colors[i * 3] = r;
        colors[i * 3 + 1] = g;
        colors[i * 3 + 2] = b;
      } else {
        colors[i * 3] = cloud.points[i * 6 + 3];
        colors[i * 3 + 1] = cloud.points[i * 6 + 4];
        colors[i * 3 + 2] = cloud.points[i * 6 + 5];
      }
    }
    gl.bindBuffer(gl.ARRAY_BUFFER, this.positionBuf);
    gl.bufferData(gl.ARRAY_BUFFER, positions, gl.STATIC_DRAW);
    gl.bindBuffer(gl.ARRAY_BUFFER, this.colorBuf);
    gl.bufferData(gl.ARRAY_BUFFER, colors, gl.STATIC_DRAW);
    this.count = cloud.n;
  }

  draw(): void {
    const gl = this.gl;
    const width = this.canvas.clientWidth || this.canvas.width;
    const height = this.canvas.clientHeight || this.canvas.height;
    if (this.canvas.width !== width || this.canvas.height !== height) {
      this.canvas.width = width;
      this.canvas.height = height;
    }
    gl.viewport(0, 0, width, height);
    gl.clearColor(0.07, 0.08, 0.1, 1);
    gl.clear(gl.COLOR_BUFFER_BIT | gl.DEPTH_BUFFER_BIT);
    if (this.count === 0) return;
    gl.useProgram(this.program);
    gl.bindVertexArray(this.vao);
    gl.uniformMatrix4fv(this.mvpLoc, false, this.camera.viewProjection(width / height));
    gl.uniform1f(this.sizeLoc, this.pointSize);
    gl.drawArrays(gl.POINTS, 0, this.count);
  }

  /** Wire standard orbit/zoom mouse controls; onChange fires after each move. */
  attachControls(onChange: () => void): void {
    let dragging = false;
    let lastX = 0;
    let lastY = 0;
    this.canvas.addEventListener("mousedown", (e) => {
      dragging = true;
      lastX = e.clientX;
      lastY = e.clientY;
    });
    window.addEventListener("mouseup", () => (dragging = false));
    window.addEventListener("mousemove", (e) => {
      if (!dragging) return;
      this.camera.rotate((e.clientX - lastX) * 0.01, (e.clientY - lastY) * 0.01);
      lastX = e.clientX;
      lastY = e.clientY;
      onChange();
    });
    this.canvas.addEventListener("wheel", (e) => {
      e.preventDefault();
      this.camera.zoom(e.deltaY > 0 ? 1.1 : 0.9);
      onChange();
    }, { passive: false });
  }
}
