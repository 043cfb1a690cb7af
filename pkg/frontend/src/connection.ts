// WebSocket session with reconnect backoff; hands schema-valid messages to
// the model and surfaces status changes for the banner.

import { ClientModel } from "./model.js";
import { encodeUpstream, parseDownstream, UpstreamMessage } from "./protocol.js";

const BACKOFF_MS = [500, 1000, 2000, 5000];

export class Connection {
  private socket: WebSocket | null = null;
  private attempts = 0;
  private closed = false;

  constructor(
    private readonly url: string,
    private readonly model: ClientModel,
    private readonly onStatus: () => void,
  ) {}

  open(): void {
    this.model.status = "connecting";
    this.onStatus();
    const socket = new WebSocket(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.attempts = 0;
      this.model.status = "connected";
      this.onStatus();
    };
    socket.onmessage = (event) => {
      const parsed = parseDownstream(String(event.data));
      this.model.applyRaw(parsed);
      if (parsed === null && this.model.schemaErrors > 3) {
        this.model.status = "schema-mismatch";
        this.onStatus();
      }
    };
    socket.onclose = () => {
      this.socket = null;
      if (this.closed) return;
      this.model.status = "disconnected";
      this.onStatus();
      const delay = BACKOFF_MS[Math.min(this.attempts, BACKOFF_MS.length - 1)];
      this.attempts += 1;
      setTimeout(() => this.open(), delay);
    };
    socket.onerror = () => socket.close();
  }

  send(msg: UpstreamMessage): boolean {
    if (this.socket && this.socket.readyState === WebSocket.OPEN) {
      this.socket.send(encodeUpstream(msg));
      return true;
    }
    return false;
  }

  close(): void {
    this.closed = true;
    this.socket?.close();
  }
}
