import { describe, expect, it } from "vitest";

import {
  controls,
  initialState,
  isStale,
  reduce,
  replay,
  type SessionEvent,
} from "../src/session.js";
import { makeFrame, makeMode } from "./helpers.js";

function connectedEvents(): SessionEvent[] {
  return [
    { kind: "connecting" },
    { kind: "hello", runId: "r1" },
    { kind: "frame", frame: makeFrame({ tick: 1 }), atMs: 1000 },
  ];
}

describe("session reducer", () => {
  it("tracks connection and frames", () => {
    const state = replay(connectedEvents());
    expect(state.connection).toBe("connected");
    expect(state.runId).toBe("r1");
    expect(state.renderedTick).toBe(1);
    expect(state.frameCount).toBe(1);
  });

  it("rendered tick never decreases", () => {
    let state = replay(connectedEvents());
    state = reduce(state, { kind: "frame", frame: makeFrame({ tick: 9 }), atMs: 2 });
    state = reduce(state, { kind: "frame", frame: makeFrame({ tick: 4 }), atMs: 3 });
    expect(state.renderedTick).toBe(9);
    expect(state.latestFrame?.tick).toBe(9);
    state = reduce(state, { kind: "frame", frame: makeFrame({ tick: 10 }), atMs: 4 });
    expect(state.renderedTick).toBe(10);
  });

  it("is a pure function of the event history (reconnect replay)", () => {
    const events: SessionEvent[] = [
      ...connectedEvents(),
      { kind: "command_sent", commandId: "c1", command: "emergency_stop", args: {}, atMs: 5 },
      { kind: "ack", payload: { command_id: "c1", accepted: true, reason: "" } },
      { kind: "disconnected" },
      { kind: "connecting" },
      { kind: "hello", runId: "r1" },
      { kind: "frame", frame: makeFrame({ tick: 30, mode: makeMode({ state: "MinimalRisk" }) }), atMs: 9 },
    ];
    expect(replay(events)).toEqual(replay(events));
  });

  it("command lifecycle: pending -> accepted/rejected, late acks ignored", () => {
    let state = replay(connectedEvents());
    state = reduce(state, {
      kind: "command_sent", commandId: "c1", command: "resume", args: {}, atMs: 5,
    });
    expect(state.commandLog[0]?.status).toBe("pending");
    state = reduce(state, {
      kind: "ack",
      payload: { command_id: "c1", accepted: false, reason: "resume requires ack_handover first" },
    });
    expect(state.commandLog[0]?.status).toBe("rejected");
    expect(state.commandLog[0]?.reason).toMatch(/ack_handover/);
    const settled = state;
    const after = reduce(settled, {
      kind: "ack",
      payload: { command_id: "c1", accepted: true, reason: "" },
    });
    expect(after).toEqual(settled);
  });

  it("duplicate rejection after a retry counts as applied exactly once", () => {
    let state = replay(connectedEvents());
    state = reduce(state, {
      kind: "command_sent", commandId: "c2", command: "emergency_stop", args: {}, atMs: 5,
    });
    state = reduce(state, { kind: "command_retry", commandId: "c2" });
    state = reduce(state, {
      kind: "ack",
      payload: { command_id: "c2", accepted: false, reason: "duplicate command_id" },
    });
    expect(state.commandLog[0]?.status).toBe("accepted");
    expect(state.commandLog[0]?.reason).toMatch(/deduplicated/);
  });

  it("handover flag follows accepted ack_handover and resume", () => {
    let state = replay(connectedEvents());
    state = reduce(state, {
      kind: "command_sent", commandId: "h", command: "ack_handover", args: {}, atMs: 5,
    });
    state = reduce(state, { kind: "ack", payload: { command_id: "h", accepted: true, reason: "" } });
    expect(state.handoverAcked).toBe(true);
    state = reduce(state, {
      kind: "command_sent", commandId: "r", command: "resume", args: {}, atMs: 6,
    });
    state = reduce(state, { kind: "ack", payload: { command_id: "r", accepted: true, reason: "" } });
    expect(state.handoverAcked).toBe(false);
  });

  it("staleness after one second without frames", () => {
    const state = replay(connectedEvents()); // frame at t=1000
    expect(isStale(state, 1900)).toBe(false);
    expect(isStale(state, 2100)).toBe(true);
    expect(isStale(initialState(), 5000)).toBe(false);
  });
});

describe("control gating", () => {
  it("everything disabled while disconnected", () => {
    const gates = controls(initialState());
    for (const gate of Object.values(gates)) {
      expect(gate.enabled).toBe(false);
      expect(gate.reason).toBe("not connected");
    }
  });

  it("resume disabled with tooltip until handover acked", () => {
    let state = replay(connectedEvents());
    state = reduce(state, {
      kind: "frame",
      frame: makeFrame({ tick: 5, mode: makeMode({ state: "MinimalRisk" }) }),
      atMs: 2,
    });
    let gates = controls(state);
    expect(gates.resume.enabled).toBe(false);
    expect(gates.resume.reason).toMatch(/handover/);
    expect(gates.ack_handover.enabled).toBe(true);
    expect(gates.set_mode.enabled).toBe(false);

    state = reduce(state, {
      kind: "command_sent", commandId: "h", command: "ack_handover", args: {}, atMs: 3,
    });
    state = reduce(state, { kind: "ack", payload: { command_id: "h", accepted: true, reason: "" } });
    gates = controls(state);
    expect(gates.resume.enabled).toBe(true);
  });

  it("nominal driving: stop and set_mode enabled, handshake controls off", () => {
    const state = replay(connectedEvents());
    const gates = controls(state);
    expect(gates.emergency_stop.enabled).toBe(true);
    expect(gates.set_mode.enabled).toBe(true);
    expect(gates.ack_handover.enabled).toBe(false);
    expect(gates.resume.enabled).toBe(false);
    expect(gates.restore_source.enabled).toBe(false);
    expect(gates.restore_source.reason).toMatch(/no excluded/);
  });

  it("restore enabled only under operator responsibility with exclusions", () => {
    let state = replay(connectedEvents());
    state = reduce(state, {
      kind: "frame",
      frame: makeFrame({
        tick: 6,
        mode: makeMode({
          state: "RemoteOperated",
          responsibility: "operator",
          excluded_sources: ["cam1"],
          active_sources: ["cam0", "lidar0"],
        }),
      }),
      atMs: 2,
    });
    expect(controls(state).restore_source.enabled).toBe(true);
  });
});
