// Human command capture: keyboard arrows or a gamepad axis, normalized to
// [-1, 1] with a deadzone, sampled at the control rate while active.

export const DEADZONE = 0.05;
export const SEND_RATE_HZ = 25;

export function applyDeadzone(value: number, deadzone = DEADZONE): number {
  const v = Math.max(-1, Math.min(1, value));
  return Math.abs(v) < deadzone ? 0 : v;
}

export interface KeyState {
  left: boolean;
  right: boolean;
}

export function keyboardAxis(keys: KeyState): number {
  return (keys.right ? 1 : 0) - (keys.left ? 1 : 0);
}

/** Gamepad overrides keyboard when it supplies a live value. */
export function combinedAxis(keys: KeyState, gamepadAxis: number | null): number {
  if (gamepadAxis !== null) {
    const v = applyDeadzone(gamepadAxis);
    if (v !== 0) return v;
  }
  return applyDeadzone(keyboardAxis(keys));
}

export class InputCapture {
  keys: KeyState = { left: false, right: false };
  private timer: ReturnType<typeof setInterval> | null = null;
  private lastSent: number | null = null;

  constructor(private readonly send: (axis: number) => void) {}

  attach(target: Window): void {
    target.addEventListener("keydown", (e) => this.onKey(e as KeyboardEvent, true));
    target.addEventListener("keyup", (e) => this.onKey(e as KeyboardEvent, false));
    this.timer = setInterval(() => this.sample(), 1000 / SEND_RATE_HZ);
  }

  detach(): void {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
  }

  onKey(event: KeyboardEvent, down: boolean): void {
    if (event.key === "ArrowLeft") this.keys.left = down;
    else if (event.key === "ArrowRight") this.keys.right = down;
    else return;
    event.preventDefault();
  }

  private gamepadAxis(): number | null {
    const pads = typeof navigator !== "undefined" && navigator.getGamepads
      ? navigator.getGamepads()
      : [];
    for (const pad of pads) {
      if (pad && pad.axes.length > 0) return pad.axes[0];
    }
    return null;
  }

  /** Idle (zero after zero) sends nothing, so the server sees human-absent. */
  sample(): void {
    const axis = combinedAxis(this.keys, this.gamepadAxis());
    if (axis === 0 && this.lastSent === 0) return;
    if (axis === 0 && this.lastSent === null) return;
    this.send(axis);
    this.lastSent = axis;
  }
}
