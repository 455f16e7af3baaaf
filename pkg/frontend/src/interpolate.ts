/**
 * Display-time smoothing between server states.
 *
 * The buffer keeps only the two most recent states and interpolates the
 * gripper position between them by receive time. The blend factor is
 * clamped to [0, 1]: when rendering runs ahead of the network the
 * gripper holds at the newest state rather than extrapolating physics
 * the server never computed.
 */

import type { StateMsg } from "./protocol.js";

interface Stamped {
  state: StateMsg;
  recvTime: number;
}

export class StateBuffer {
  private prev: Stamped | null = null;
  private next: Stamped | null = null;

  push(state: StateMsg, recvTime: number): void {
    this.prev = this.next;
    this.next = { state, recvTime };
  }

  get latest(): StateMsg | null {
    return this.next ? this.next.state : null;
  }

  get empty(): boolean {
    return this.next === null;
  }

  /** Interpolated gripper position at the given render timestamp. */
  gripperAt(renderTime: number): [number, number] | null {
    if (this.next === null) return null;
    if (this.prev === null) return this.next.state.gripper;
    const span = this.next.recvTime - this.prev.recvTime;
    let u = span > 0 ? (renderTime - this.prev.recvTime) / span : 1;
    u = Math.min(1, Math.max(0, u));
    const a = this.prev.state.gripper;
    const b = this.next.state.gripper;
    return [a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])];
  }

  /** Drop both states (new episode: old motion must not bleed across). */
  clear(): void {
    this.prev = null;
    this.next = null;
  }
}
