/**
 * Wire protocol types and message validation.
 *
 * The schema rules here must agree with the server's: both sides are
 * pinned by the shared fixture corpus under tests/fixtures/protocol in
 * the repository root. Unknown extra fields are ignored in both
 * directions.
 */

export const PROTOCOL_VERSION = 1;
export const GRID = 28;

export type ModeName = "direct" | "shared_baseline" | "shared_learned";
export const MODES: readonly ModeName[] = ["direct", "shared_baseline", "shared_learned"];

export interface HelloMsg {
  type: "hello";
  version: number;
}

export interface UserCmdMsg {
  type: "user_cmd";
  seq: number;
  v: [number, number];
}

export interface SetModeMsg {
  type: "set_mode";
  mode: ModeName;
}

export interface ResetMsg {
  type: "reset";
}

export type ClientMsg = HelloMsg | UserCmdMsg | SetModeMsg | ResetMsg;

export interface ConfigMsg {
  type: "config";
  protocol: number;
  mode: ModeName;
  pending_mode: ModeName;
  workspace: [[number, number], [number, number]];
  objects: [number, number][];
  object_half_extent: number;
  place_target: [number, number];
  place_radius: number;
  obstacles: [number, number, number][];
  gripper_start: [number, number];
  dt: number;
  v_max: number;
  grab_radius: number;
  max_steps: number;
  grid: number;
  heatmap_every: number;
}

export interface StateMsg {
  type: "state";
  t: number;
  gripper: [number, number];
  grabbed: number | null;
  alpha: number;
  conf: number | null;
  g_star: number | null;
  done: boolean;
  heatmap?: number[];
}

export interface EpisodeEndMsg {
  type: "episode_end";
  timesteps: number;
  success: boolean;
}

export interface ErrorMsg {
  type: "error";
  reason: string;
}

export type ServerMsg = ConfigMsg | StateMsg | EpisodeEndMsg | ErrorMsg;

const isNum = (x: unknown): x is number =>
  typeof x === "number" && Number.isFinite(x);
const isInt = (x: unknown): x is number => Number.isInteger(x);
const isVec2 = (v: unknown): v is [number, number] =>
  Array.isArray(v) && v.length === 2 && v.every(isNum);

type Obj = Record<string, unknown>;

function asObject(msg: unknown): Obj | null {
  if (typeof msg !== "object" || msg === null || Array.isArray(msg)) return null;
  if (!("type" in msg)) return null;
  return msg as Obj;
}

/** Returns a human-readable reason, or null when the message is well formed. */
export function checkClientMessage(msg: unknown): string | null {
  const m = asObject(msg);
  if (m === null) return "message must be an object with a 'type' field";
  switch (m.type) {
    case "hello":
      return m.version === PROTOCOL_VERSION
        ? null
        : `unsupported protocol version ${JSON.stringify(m.version)}`;
    case "user_cmd":
      if (!isInt(m.seq)) return "user_cmd needs an integer 'seq'";
      if (!isVec2(m.v)) return "user_cmd needs 'v' as two finite numbers";
      return null;
    case "set_mode":
      return MODES.includes(m.mode as ModeName)
        ? null
        : `unknown mode ${JSON.stringify(m.mode)}`;
    case "reset":
      return null;
    default:
      return `unknown message type ${JSON.stringify(m.type)}`;
  }
}

function checkConfig(m: Obj): string | null {
  if (m.protocol !== PROTOCOL_VERSION) return "config: bad protocol version";
  if (!MODES.includes(m.mode as ModeName) || !MODES.includes(m.pending_mode as ModeName))
    return "config: bad mode";
  const ws = m.workspace;
  if (!Array.isArray(ws) || ws.length !== 2 || !ws.every(isVec2))
    return "config: workspace must be [[xmin,ymin],[xmax,ymax]]";
  const objs = m.objects;
  if (!Array.isArray(objs) || objs.length === 0 || !objs.every(isVec2))
    return "config: objects must be a nonempty list of [x,y]";
  if (!isVec2(m.place_target) || !isVec2(m.gripper_start))
    return "config: place_target and gripper_start must be [x,y]";
  const obstacles = m.obstacles;
  if (
    !Array.isArray(obstacles) ||
    !obstacles.every((o) => Array.isArray(o) && o.length === 3 && o.every(isNum))
  )
    return "config: obstacles must be a list of [cx,cy,r]";
  for (const key of ["object_half_extent", "place_radius", "dt", "v_max", "grab_radius"]) {
    const x = m[key];
    if (!isNum(x) || x <= 0) return `config: ${key} must be a positive number`;
  }
  for (const key of ["max_steps", "grid", "heatmap_every"]) {
    const x = m[key];
    if (!isInt(x) || (x as number) < 1) return `config: ${key} must be a positive integer`;
  }
  return null;
}

function checkState(m: Obj): string | null {
  if (!isInt(m.t) || (m.t as number) < 0) return "state: t must be a non-negative integer";
  if (!isVec2(m.gripper)) return "state: gripper must be [x,y]";
  if (m.grabbed !== null && !isInt(m.grabbed))
    return "state: grabbed must be an object id or null";
  if (!isNum(m.alpha) || m.alpha < 0 || m.alpha > 1)
    return "state: alpha must be a number in [0, 1]";
  if (m.conf !== null && (!isNum(m.conf) || m.conf < 0 || m.conf > 1))
    return "state: conf must be null or a number in [0, 1]";
  if (m.g_star !== null && !isInt(m.g_star))
    return "state: g_star must be a goal id or null";
  if (typeof m.done !== "boolean") return "state: done must be a boolean";
  if ("heatmap" in m) {
    const hm = m.heatmap;
    if (!Array.isArray(hm) || hm.length !== GRID * GRID || !hm.every(isNum))
      return `state: heatmap must be ${GRID * GRID} finite numbers`;
  }
  return null;
}

export function checkServerMessage(msg: unknown): string | null {
  const m = asObject(msg);
  if (m === null) return "message must be an object with a 'type' field";
  switch (m.type) {
    case "config":
      return checkConfig(m);
    case "state":
      return checkState(m);
    case "episode_end":
      if (!isInt(m.timesteps) || (m.timesteps as number) < 0)
        return "episode_end: timesteps must be a non-negative integer";
      if (typeof m.success !== "boolean") return "episode_end: success must be a boolean";
      return null;
    case "error":
      return typeof m.reason === "string" && m.reason.length > 0
        ? null
        : "error: reason must be a nonempty string";
    default:
      return `unknown message type ${JSON.stringify(m.type)}`;
  }
}

/** Parse and validate one inbound frame; null when malformed. */
export function parseServerMessage(raw: string): ServerMsg | null {
  let parsed: unknown;
  try {
    parsed = JSON.parse(raw);
  } catch {
    return null;
  }
  return checkServerMessage(parsed) === null ? (parsed as ServerMsg) : null;
}
