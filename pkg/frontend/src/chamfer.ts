/** Client-side symmetric Chamfer-L1 on bounded subsamples (brute force). */

import type { DecodedCloud } from "./types.js";

export const CHAMFER_SUBSAMPLE = 512;

/** Deterministic stride subsample of xyz rows, at most maxPoints. */
export function subsampleXyz(cloud: DecodedCloud, maxPoints: number): Float32Array {
  const take = Math.min(cloud.n, maxPoints);
  const stride = cloud.n / take;
  const out = new Float32Array(take * 3);
  for (let k = 0; k < take; k++) {
    const i = Math.min(cloud.n - 1, Math.floor(k * stride));
    out[k * 3] = cloud.points[i * 6];
    out[k * 3 + 1] = cloud.points[i * 6 + 1];
    out[k * 3 + 2] = cloud.points[i * 6 + 2];
  }
  return out;
}

function meanNearest(a: Float32Array, b: Float32Array): number {
  const na = a.length / 3;
  const nb = b.length / 3;
  let total = 0;
  for (let i = 0; i < na; i++) {
    const x = a[i * 3], y = a[i * 3 + 1], z = a[i * 3 + 2];
    let best = Infinity;
    for (let j = 0; j < nb; j++) {
      const dx = x - b[j * 3];
      const dy = y - b[j * 3 + 1];
      const dz = z - b[j * 3 + 2];
      const d = dx * dx + dy * dy + dz * dz;
      if (d < best) best = d;
    }
    total += Math.sqrt(best);
  }
  return total / na;
}

/** 0.5 * (mean nearest a->b + mean nearest b->a) on <=512-point subsamples. */
export function chamferL1(a: DecodedCloud, b: DecodedCloud,
                          maxPoints: number = CHAMFER_SUBSAMPLE): number {
  const xa = subsampleXyz(a, maxPoints);
  const xb = subsampleXyz(b, maxPoints);
  return 0.5 * (meanNearest(xa, xb) + meanNearest(xb, xa));
}
