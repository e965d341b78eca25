/** Cloud wire-format codecs: base64 f32le rows and the PC6 file layout. */

import type { CloudWire, DecodedCloud } from "./types.js";

const PC6_MAGIC = [0x50, 0x43, 0x36, 0x00]; // "PC6\0"

function bytesFromBase64(data: string): Uint8Array {
  const binary = atob(data);
  const bytes = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) bytes[i] = binary.charCodeAt(i);
  return bytes;
}

function base64FromBytes(bytes: Uint8Array): string {
  let binary = "";
  const chunk = 0x8000;
  for (let i = 0; i < bytes.length; i += chunk) {
    binary += String.fromCharCode(...bytes.subarray(i, i + chunk));
  }
  return btoa(binary);
}

/** Decode a wire cloud; throws on size mismatch. */
export function decodeCloud(wire: CloudWire): DecodedCloud {
  const bytes = bytesFromBase64(wire.data);
  if (bytes.length !== wire.n * 24) {
    throw new Error(`cloud payload is ${bytes.length} bytes, expected ${wire.n * 24}`);
  }
  const points = new Float32Array(wire.n * 6);
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  for (let i = 0; i < points.length; i++) points[i] = view.getFloat32(i * 4, true);
  return { n: wire.n, points };
}

/** Encode a decoded cloud back into wire form. */
export function encodeCloud(cloud: DecodedCloud): CloudWire {
  const bytes = new Uint8Array(cloud.n * 24);
  const view = new DataView(bytes.buffer);
  for (let i = 0; i < cloud.points.length; i++) view.setFloat32(i * 4, cloud.points[i], true);
  return { n: cloud.n, data: base64FromBytes(bytes), color_range: "01" };
}

/** Parse an uploaded PC6 binary file into wire form; throws on malformed input. */
export function parsePc6(buffer: ArrayBuffer): CloudWire {
  const bytes = new Uint8Array(buffer);
  if (bytes.length < 8 || PC6_MAGIC.some((b, i) => bytes[i] !== b)) {
    throw new Error("not a PC6 file (bad magic)");
  }
  const view = new DataView(buffer);
  const n = view.getUint32(4, true);
  if (bytes.length !== 8 + n * 24) {
    throw new Error(`PC6 payload is ${bytes.length - 8} bytes, expected ${n * 24}`);
  }
  return { n, data: base64FromBytes(bytes.subarray(8)), color_range: "01" };
}

/** Largest per-point xyz displacement between two equally sized clouds. */
export function maxDisplacement(a: DecodedCloud, b: DecodedCloud): number {
  if (a.n !== b.n) throw new Error(`cloud sizes differ: ${a.n} vs ${b.n}`);
  let worst = 0;
  for (let i = 0; i < a.n; i++) {
    const dx = a.points[i * 6] - b.points[i * 6];
    const dy = a.points[i * 6 + 1] - b.points[i * 6 + 1];
    const dz = a.points[i * 6 + 2] - b.points[i * 6 + 2];
    const d = Math.sqrt(dx * dx + dy * dy + dz * dz);
    if (d > worst) worst = d;
  }
  return worst;
}

/** Per-point xyz displacement magnitudes (the delta heatmap input). */
export function displacements(a: DecodedCloud, b: DecodedCloud): Float32Array {
  if (a.n !== b.n) throw new Error(`cloud sizes differ: ${a.n} vs ${b.n}`);
  const out = new Float32Array(a.n);
  for (let i = 0; i < a.n; i++) {
    const dx = a.points[i * 6] - b.points[i * 6];
    const dy = a.points[i * 6 + 1] - b.points[i * 6 + 1];
    const dz = a.points[i * 6 + 2] - b.points[i * 6 + 2];
    out[i] = Math.sqrt(dx * dx + dy * dy + dz * dz);
  }
  return out;
}
