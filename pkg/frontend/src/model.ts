// Client-side mirror of the session: latest state plus a bounded scrolling
// history for the charts.  Only schema-valid messages reach the model.

import { AdaptationMessage, DownstreamMessage, StateMessage } from "./protocol.js";

export interface HistoryPoint {
  t: number;
  p_m: number;
  ref_m: number;
  p_v: number;
  ref_v: number;
  k_h_hat: number[];
  k_a: number[];
  eig: number[];
  e_k: number;
}

export type ConnectionStatus = "connecting" | "connected" | "disconnected" | "schema-mismatch";

export class ClientModel {
  latest: StateMessage | null = null;
  lastAdaptation: AdaptationMessage | null = null;
  status: ConnectionStatus = "connecting";
  adaptationCount = 0;
  schemaErrors = 0;
  private history: HistoryPoint[] = [];

  constructor(private readonly windowSeconds = 30) {}

  apply(msg: DownstreamMessage): void {
    if (msg.type === "adaptation") {
      this.lastAdaptation = msg;
      if (!msg.held) this.adaptationCount += 1;
      return;
    }
    this.latest = msg;
    this.history.push({
      t: msg.t,
      p_m: msg.ref[0] + msg.x[0],
      ref_m: msg.ref[0],
      p_v: msg.ref[1] + msg.x[1],
      ref_v: msg.ref[1],
      k_h_hat: msg.K_h_hat,
      k_a: msg.K_a,
      eig: msg.eig,
      e_k: msg.e_K,
    });
    const cutoff = msg.t - this.windowSeconds;
    let drop = 0;
    while (drop < this.history.length && this.history[drop].t < cutoff) drop++;
    if (drop > 0) this.history.splice(0, drop);
  }

  applyRaw(parsed: DownstreamMessage | null): void {
    if (parsed === null) {
      this.schemaErrors += 1;
      return;
    }
    this.apply(parsed);
  }

  view(): readonly HistoryPoint[] {
    return this.history;
  }

  reset(): void {
    this.history = [];
    this.latest = null;
  }
}
