/** History strip thumbnails: 2D orthographic scatter onto a small canvas. */

import type { DecodedCloud } from "./types.js";

export function drawThumbnail(canvas: HTMLCanvasElement, cloud: DecodedCloud): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const w = canvas.width;
  const h = canvas.height;
  ctx.fillStyle = "#14161c";
  ctx.fillRect(0, 0, w, h);
  let minX = Infinity, maxX = -Infinity, minZ = Infinity, maxZ = -Infinity;
  for (let i = 0; i < cloud.n; i++) {
    const x = cloud.points[i * 6];
    const z = cloud.points[i * 6 + 2];
    if (x < minX) minX = x;
    if (x > maxX) maxX = x;
    if (z < minZ) minZ = z;
    if (z > maxZ) maxZ = z;
  }
  const span = Math.max(maxX - minX, maxZ - minZ) || 1;
  const scale = 0.85 * Math.min(w, h) / span;
  const cx = (minX + maxX) / 2;
  const cz = (minZ + maxZ) / 2;
  const step = Math.max(1, Math.floor(cloud.n / 1200));
  for (let i = 0; i < cloud.n; i += step) {
    const x = (cloud.points[i * 6] - cx) * scale + w / 2;
    const y = h / 2 - (cloud.points[i * 6 + 2] - cz) * scale;
    const r = Math.round(255 * cloud.points[i * 6 + 3]);
    const g = Math.round(255 * cloud.points[i * 6 + 4]);
    const b = Math.round(255 * cloud.points[i * 6 + 5]);
    ctx.fillStyle = `rgb(${r},${g},${b})`;
    ctx.fillRect(x, y, 2, 2);
  }
}
