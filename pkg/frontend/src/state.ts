import { StreamMessage } from "./types";

/** Live view state: renders only monotonically increasing tick counters. */
export class LiveState {
  latest: StreamMessage | null = null;
  framesRendered = 0;
  framesDropped = 0;
  connected = false;

  /** Returns true when the message should be rendered. */
  apply(msg: StreamMessage): boolean {
    if (this.latest !== null && msg.seq <= this.latest.seq) {
      this.framesDropped += 1;
      return false;
    }
    this.latest = msg;
    this.framesRendered += 1;
    return true;
  }
}

/** The on-screen character reacts only to action *changes*. */
export class ActionIndicator {
  current = "none";
  transitions = 0;

  update(actionKind: string): boolean {
    if (actionKind === this.current) return false;
    this.current = actionKind;
    this.transitions += 1;
    return true;
  }
}
