/** Orbit camera and the 4x4 matrix math the renderer needs. */

export type Mat4 = Float32Array; // column-major 16 floats

export function mat4Multiply(a: Mat4, b: Mat4): Mat4 {
  const out = new Float32Array(16);
  for (let col = 0; col < 4; col++) {
    for (let row = 0; row < 4; row++) {
      let s = 0;
      for (let k = 0; k < 4; k++) s += a[k * 4 + row] * b[col * 4 + k];
      out[col * 4 + row] = s;
    }
  }
  return out;
}

export function perspective(fovY: number, aspect: number, near: number, far: number): Mat4 {
  const f = 1 / Math.tan(fovY / 2);
  const out = new Float32Array(16);
  out[0] = f / aspect;
  out[5] = f;
  out[10] = (far + near) / (near - far);
  out[11] = -1;
  out[14] = (2 * far * near) / (near - far);
  return out;
}

export function lookAt(eye: number[], target: number[], up: number[]): Mat4 {
  const sub = (a: number[], b: number[]) => [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
  const norm = (v: number[]) => {
    const l = Math.hypot(v[0], v[1], v[2]) || 1;
    return [v[0] / l, v[1] / l, v[2] / l];
  };
  const cross = (a: number[], b: number[]) => [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
  const dot = (a: number[], b: number[]) => a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
  const z = norm(sub(eye, target));
  const x = norm(cross(up, z));
  const y = cross(z, x);
  const out = new Float32Array(16);
  out.set([x[0], y[0], z[0], 0, x[1], y[1], z[1], 0, x[2], y[2], z[2], 0,
           -dot(x, eye), -dot(y, eye), -dot(z, eye), 1]);
  return out;
}

/** Spherical orbit around a target; z is up to match the shape programs. */
export class OrbitCamera {
  theta = Math.PI / 4;   // azimuth
  phi = Math.PI / 3;     // inclination from +z
  radius = 3;
  target: number[] = [0, 0, 0.4];

  private static EPS = 0.05;

  rotate(dTheta: number, dPhi: number): void {
    this.theta += dTheta;
    this.phi = Math.min(Math.PI - OrbitCamera.EPS, Math.max(OrbitCamera.EPS, this.phi + dPhi));
  }

  zoom(factor: number): void {
    this.radius = Math.min(50, Math.max(0.2, this.radius * factor));
  }

  eye(): number[] {
    return [
      this.target[0] + this.radius * Math.sin(this.phi) * Math.cos(this.theta),
      this.target[1] + this.radius * Math.sin(this.phi) * Math.sin(this.theta),
      this.target[2] + this.radius * Math.cos(this.phi),
    ];
  }

  viewProjection(aspect: number): Mat4 {
    const proj = perspective(Math.PI / 4, aspect, 0.01, 100);
    const view = lookAt(this.eye(), this.target, [0, 0, 1]);
    return mat4Multiply(proj, view);
  }

  /** Copy pose from another camera (synchronized compare panes). */
  syncFrom(other: OrbitCamera): void {
    this.theta = other.theta;
    this.phi = other.phi;
    this.radius = other.radius;
    this.target = [...other.target];
  }
}
