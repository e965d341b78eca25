/** Wire types mirroring the editing service API. */

export interface CloudWire {
  /** Number of points. */
  n: number;
  /** Base64 of row-major little-endian f32 N x 6 (x, y, z, r, g, b). */
  data: string;
  /** Colors are exchanged in [0, 1]. */
  color_range: "01";
}

export interface CreateSessionResponse {
  id: string;
  cloud: CloudWire;
}

export interface EditRequest {
  instruction: string;
  sampler?: "ddim" | "ddpm";
  steps?: number;
  seed?: number;
  guidance?: number;
}

export interface EditResponse {
  history_index: number;
  seed: number;
  cloud: CloudWire;
}

export interface HistoryEntryWire {
  index: number;
  instruction: string;
  sampler: string;
  steps: number;
  seed: number;
  guidance: number;
  cloud: CloudWire;
}

export interface HistoryResponse {
  id: string;
  current: number;
  initial: CloudWire;
  entries: HistoryEntryWire[];
}

export interface ParamSpec {
  name: string;
  property: string;
  kind: "continuous" | "integer" | "boolean";
  lo: number;
  hi: number;
  default: number | boolean;
  inc_instruction: string;
  dec_instruction: string;
  requires: Record<string, boolean>;
}

export interface ParamRegistryResponse {
  category: string;
  params: ParamSpec[];
}

/** A decoded cloud: flat Float32Array of length n * 6. */
export interface DecodedCloud {
  n: number;
  points: Float32Array;
}
