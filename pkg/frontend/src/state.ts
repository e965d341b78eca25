/** Client-side session state: a mirror of the server history, index for index.
 *
 * One edit request may be in flight at a time; the mirror is reconciled
 * against GET /history after every settled request so the UI can never
 * drift from the server.
 */

import { decodeCloud, maxDisplacement } from "./codec.js";
import type { EditServiceClient } from "./client.js";
import type { CloudWire, DecodedCloud, EditRequest } from "./types.js";

export interface HistoryItem {
  index: number;
  instruction: string;
  seed: number;
  cloud: DecodedCloud;
}

/** Draw a fresh random seed for an edit so transcripts can be replayed. */
export function drawSeed(): number {
  return Math.floor(Math.random() * 2 ** 31);
}

export class StudioSession {
  items: HistoryItem[] = [];
  current = -1; // -1 points at the initial cloud
  private inFlight = false;

  private constructor(private client: EditServiceClient, public id: string,
                      public initial: DecodedCloud) {}

  static async fromCloud(client: EditServiceClient, wire: CloudWire): Promise<StudioSession> {
    const resp = await client.createSessionFromCloud(wire);
    return new StudioSession(client, resp.id, decodeCloud(resp.cloud));
  }

  static async fromShape(client: EditServiceClient, category: string,
                         params: Record<string, number | boolean>,
                         seed = 0): Promise<StudioSession> {
    const resp = await client.createSessionFromShape(category, params, seed);
    return new StudioSession(client, resp.id, decodeCloud(resp.cloud));
  }

  get busy(): boolean {
    return this.inFlight;
  }

  currentCloud(): DecodedCloud {
    return this.current < 0 ? this.initial : this.items[this.current].cloud;
  }

  /** Cloud one step before the current entry (the delta-view reference). */
  previousCloud(): DecodedCloud {
    return this.current <= 0 ? this.initial : this.items[this.current - 1].cloud;
  }

  /** Max xyz displacement readout between the current entry and its input. */
  deltaReadout(): number {
    const cur = this.currentCloud();
    const prev = this.previousCloud();
    if (cur.n !== prev.n) return NaN;
    return maxDisplacement(cur, prev);
  }

  async edit(instruction: string, opts: Omit<EditRequest, "instruction"> = {}): Promise<HistoryItem> {
    if (this.inFlight) throw new Error("an edit is already in flight");
    this.inFlight = true;
    try {
      const seed = opts.seed ?? drawSeed();
      const resp = await this.client.edit(this.id, { instruction, ...opts, seed });
      // a new edit truncates any redo branch, matching the server
      this.items.splice(resp.history_index);
      this.items.push({
        index: resp.history_index,
        instruction,
        seed: resp.seed,
        cloud: decodeCloud(resp.cloud),
      });
      this.current = resp.history_index;
      return this.items[this.current];
    } finally {
      this.inFlight = false;
    }
  }

  async undo(): Promise<number> {
    if (this.inFlight) throw new Error("an edit is already in flight");
    this.inFlight = true;
    try {
      const resp = await this.client.undo(this.id);
      this.current = resp.current;
      return this.current;
    } finally {
      this.inFlight = false;
    }
  }

  /** Mirror the server history exactly; returns true when already in sync. */
  async reconcile(): Promise<boolean> {
    const hist = await this.client.history(this.id);
    const matched = hist.entries.length === this.items.length
      && hist.current === this.current
      && hist.entries.every((e, i) => e.index === this.items[i].index
        && e.instruction === this.items[i].instruction
        && e.seed === this.items[i].seed);
    if (!matched) {
      this.items = hist.entries.map((e) => ({
        index: e.index,
        instruction: e.instruction,
        seed: e.seed,
        cloud: decodeCloud(e.cloud),
      }));
      this.current = hist.current;
      this.initial = decodeCloud(hist.initial);
    }
    return matched;
  }
}
