/**
 * Console session state: a pure reducer over connection events, telemetry
 * frames and command-log updates. Replaying the same event sequence always
 * rebuilds the identical state (reconnect-safe), and the rendered tick
 * never decreases.
 */

import type { AckPayload, CommandKind, TelemetryFrame } from "./protocol.js";

export type CommandStatus = "pending" | "accepted" | "rejected";

export interface CommandEntry {
  commandId: string;
  kind: CommandKind;
  args: Record<string, unknown>;
  sentAt: number;
  retries: number;
  status: CommandStatus;
  reason: string;
}

export interface ConsoleState {
  connection: "disconnected" | "connecting" | "connected";
  runId: string | null;
  latestFrame: TelemetryFrame | null;
  renderedTick: number;
  lastFrameAt: number | null;
  frameCount: number;
  commandLog: CommandEntry[];
  /** accepted ack_handover with no accepted resume after it */
  handoverAcked: boolean;
  lastError: string | null;
}

export type SessionEvent =
  | { kind: "connecting" }
  | { kind: "hello"; runId: string }
  | { kind: "disconnected"; reason?: string }
  | { kind: "frame"; frame: TelemetryFrame; atMs: number }
  | {
      kind: "command_sent";
      commandId: string;
      command: CommandKind;
      args: Record<string, unknown>;
      atMs: number;
    }
  | { kind: "command_retry"; commandId: string }
  | { kind: "ack"; payload: AckPayload }
  | { kind: "error"; reason: string };

export function initialState(): ConsoleState {
  return {
    connection: "disconnected",
    runId: null,
    latestFrame: null,
    renderedTick: -1,
    lastFrameAt: null,
    frameCount: 0,
    commandLog: [],
    handoverAcked: false,
    lastError: null,
  };
}

export function reduce(state: ConsoleState, event: SessionEvent): ConsoleState {
  switch (event.kind) {
    case "connecting":
      return { ...state, connection: "connecting", lastError: null };
    case "hello":
      return { ...state, connection: "connected", runId: event.runId };
    case "disconnected":
      return {
        ...state,
        connection: "disconnected",
        lastError: event.reason ?? state.lastError,
      };
    case "frame": {
      if (event.frame.tick < state.renderedTick) {
        // a frame from the past (stale reconnect buffer): never render
        // backwards, only count it
        return { ...state, frameCount: state.frameCount + 1 };
      }
      return {
        ...state,
        latestFrame: event.frame,
        renderedTick: event.frame.tick,
        lastFrameAt: event.atMs,
        frameCount: state.frameCount + 1,
      };
    }
    case "command_sent": {
      const entry: CommandEntry = {
        commandId: event.commandId,
        kind: event.command,
        args: event.args,
        sentAt: event.atMs,
        retries: 0,
        status: "pending",
        reason: "",
      };
      return { ...state, commandLog: [...state.commandLog, entry] };
    }
    case "command_retry":
      return {
        ...state,
        commandLog: state.commandLog.map((e) =>
          e.commandId === event.commandId && e.status === "pending"
            ? { ...e, retries: e.retries + 1 }
            : e,
        ),
      };
    case "ack": {
      const target = state.commandLog.find(
        (e) => e.commandId === event.payload.command_id,
      );
      if (!target || target.status !== "pending") {
        return state; // late or duplicate ack for a settled command
      }
      // a duplicate rejection on a retried command means the first copy was
      // applied: the effect happened exactly once
      const duplicate =
        !event.payload.accepted && event.payload.reason.includes("duplicate");
      const accepted = event.payload.accepted || (duplicate && target.retries > 0);
      const entry: CommandEntry = {
        ...target,
        status: accepted ? "accepted" : "rejected",
        reason: accepted && duplicate ? "applied (retry deduplicated)" : event.payload.reason,
      };
      let handoverAcked = state.handoverAcked;
      if (accepted && target.kind === "ack_handover") handoverAcked = true;
      if (accepted && target.kind === "resume") handoverAcked = false;
      return {
        ...state,
        handoverAcked,
        commandLog: state.commandLog.map((e) =>
          e.commandId === entry.commandId ? entry : e,
        ),
      };
    }
    case "error":
      return { ...state, lastError: event.reason };
  }
}

export function replay(events: SessionEvent[]): ConsoleState {
  return events.reduce(reduce, initialState());
}

export function isStale(state: ConsoleState, nowMs: number): boolean {
  return (
    state.connection === "connected" &&
    state.lastFrameAt !== null &&
    nowMs - state.lastFrameAt > 1000
  );
}

export interface ControlGate {
  enabled: boolean;
  reason: string; // tooltip when disabled
}

const HELD_STATES = new Set(["MinimalRisk", "RemoteOperated"]);
const ALERT_STATES = new Set(["MinimalRisk", "FallbackDeterministic"]);

/**
 * Per-command availability. Anything the protocol would reject for state
 * reasons is disabled here, with the reason as the tooltip.
 */
export function controls(state: ConsoleState): Record<CommandKind, ControlGate> {
  const offline: ControlGate = { enabled: false, reason: "not connected" };
  if (state.connection !== "connected" || !state.latestFrame) {
    return {
      emergency_stop: offline,
      resume: offline,
      set_mode: offline,
      restore_source: offline,
      ack_handover: offline,
    };
  }
  const mode = state.latestFrame.mode;
  const operatorHolds =
    mode.state === "RemoteOperated" || state.handoverAcked;
  return {
    emergency_stop: { enabled: true, reason: "" },
    ack_handover: ALERT_STATES.has(mode.state)
      ? { enabled: true, reason: "" }
      : { enabled: false, reason: `no pending handover in state ${mode.state}` },
    resume: HELD_STATES.has(mode.state)
      ? state.handoverAcked
        ? { enabled: true, reason: "" }
        : { enabled: false, reason: "acknowledge handover first" }
      : { enabled: false, reason: "vehicle is not held" },
    set_mode: HELD_STATES.has(mode.state)
      ? { enabled: false, reason: "unavailable while the vehicle is held" }
      : { enabled: true, reason: "" },
    restore_source:
      mode.excluded_sources.length === 0
        ? { enabled: false, reason: "no excluded sources" }
        : operatorHolds && mode.state === "RemoteOperated"
          ? { enabled: true, reason: "" }
          : { enabled: false, reason: "requires operator responsibility (acknowledge handover)" },
  };
}
