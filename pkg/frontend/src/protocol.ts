// Wire protocol shared with the service: JSON text frames over a WebSocket.
// Field names mirror the server side exactly.

export interface StateMessage {
  type: "state";
  t: number;
  x: number[];
  ref: number[];
  u_a: number[];
  u_h: number[];
  K_a: number[];
  K_h_hat: number[];
  eig: number[];
  e_K: number;
  mode: "adaptive" | "fixed";
}

export interface AdaptationMessage {
  type: "adaptation";
  theta_a: { q: number[]; r: number[] };
  J_g: number;
  held: boolean;
  cause: string | null;
}

export type DownstreamMessage = StateMessage | AdaptationMessage;

export type UpstreamMessage =
  | { type: "input"; axis: number }
  | { type: "mode"; value: "adaptive" | "fixed" }
  | { type: "reset" };

function numberArray(v: unknown): v is number[] {
  return Array.isArray(v) && v.every((e) => typeof e === "number" && isFinite(e));
}

export function parseDownstream(raw: string): DownstreamMessage | null {
  let doc: unknown;
  try {
    doc = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof doc !== "object" || doc === null) return null;
  const msg = doc as Record<string, unknown>;
  if (msg.type === "state") {
    if (
      typeof msg.t === "number" &&
      numberArray(msg.x) &&
      numberArray(msg.ref) &&
      msg.ref.length === 2 &&
      numberArray(msg.u_a) &&
      numberArray(msg.u_h) &&
      numberArray(msg.K_a) &&
      numberArray(msg.K_h_hat) &&
      numberArray(msg.eig) &&
      typeof msg.e_K === "number" &&
      (msg.mode === "adaptive" || msg.mode === "fixed")
    ) {
      return msg as unknown as StateMessage;
    }
    return null;
  }
  if (msg.type === "adaptation") {
    const theta = msg.theta_a as Record<string, unknown> | undefined;
    if (
      theta &&
      numberArray(theta.q) &&
      numberArray(theta.r) &&
      typeof msg.J_g === "number" &&
      typeof msg.held === "boolean"
    ) {
      return msg as unknown as AdaptationMessage;
    }
    return null;
  }
  return null;
}

export function encodeUpstream(msg: UpstreamMessage): string {
  return JSON.stringify(msg);
}
