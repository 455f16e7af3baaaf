/**
 * Pointer-to-velocity mapping and the outbound command stream.
 *
 * The pointer acts like a virtual spring handle attached to the
 * gripper: displacement (in world units) times gain gives the velocity
 * command, with a small deadzone so a resting pointer means "hold
 * still" and a clip at v_max so the command is always executable.
 */

import type { UserCmdMsg } from "./protocol.js";

export interface InputParams {
  gain: number;
  deadzone: number;
  vMax: number;
}

export const DEFAULT_INPUT: InputParams = { gain: 2.0, deadzone: 0.02, vMax: 0.4 };

export const COMMAND_HZ = 20;
export const COMMAND_INTERVAL_MS = 1000 / COMMAND_HZ;

export function pointerToCommand(
  pointer: [number, number],
  gripper: [number, number],
  params: InputParams,
): [number, number] {
  const dx = pointer[0] - gripper[0];
  const dy = pointer[1] - gripper[1];
  const dist = Math.hypot(dx, dy);
  if (dist <= params.deadzone) return [0, 0];
  let vx = params.gain * dx;
  let vy = params.gain * dy;
  const speed = Math.hypot(vx, vy);
  if (speed > params.vMax) {
    vx *= params.vMax / speed;
    vy *= params.vMax / speed;
  }
  return [vx, vy];
}

/** Stamps commands with a monotonically increasing sequence number. */
export class CommandStream {
  private seq = 0;

  next(v: [number, number]): UserCmdMsg {
    this.seq += 1;
    return { type: "user_cmd", seq: this.seq, v };
  }

  get lastSeq(): number {
    return this.seq;
  }
}
