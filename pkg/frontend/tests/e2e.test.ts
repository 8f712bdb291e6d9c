/**
 * Operator-loop end-to-end test against a live local run: spawns the
 * vehicle-side CLI with the service enabled, drives it through the console
 * client stack (reducer + protocol), and checks the handover protocol:
 *
 *  - emergency stop reaches MinimalRisk within 2 telemetry frames
 *  - resume is rejected before ack_handover and accepted after
 *  - a duplicate command retry causes exactly one transition
 */

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import WebSocket from "ws";

import { commandMessage, parseServerMessage, type TelemetryFrame } from "../src/protocol.js";
import { reduce, replay, controls, initialState, type ConsoleState, type SessionEvent } from "../src/session.js";
import { renderSituation } from "../src/view.js";

const REPO = resolve(__dirname, "..", "..");
const SCENARIO = join(REPO, "scenarios", "benign.scn");

let child: ChildProcess;
let port = 0;

class Harness {
  ws!: WebSocket;
  state: ConsoleState = initialState();
  events: SessionEvent[] = [];
  frames: TelemetryFrame[] = [];
  private waiters: (() => void)[] = [];

  dispatch(event: SessionEvent): void {
    this.events.push(event);
    this.state = reduce(this.state, event);
    if (event.kind === "frame") this.frames.push(event.frame);
    this.waiters.splice(0).forEach((w) => w());
  }

  async connect(token = "failop-dev"): Promise<void> {
    this.ws = new WebSocket(`ws://127.0.0.1:${port}`);
    await new Promise<void>((res, rej) => {
      this.ws.once("open", () => res());
      this.ws.once("error", rej);
    });
    this.ws.on("message", (data) => {
      const msg = parseServerMessage(data.toString());
      if (msg.type === "hello") this.dispatch({ kind: "hello", runId: msg.payload.run_id });
      if (msg.type === "frame")
        this.dispatch({ kind: "frame", frame: msg.payload, atMs: Date.now() });
      if (msg.type === "ack") this.dispatch({ kind: "ack", payload: msg.payload });
    });
    this.dispatch({ kind: "connecting" });
    this.ws.send(JSON.stringify({ payload: { token }, type: "auth" }));
    await this.until(() => this.state.connection === "connected");
  }

  send(kind: "emergency_stop" | "resume" | "ack_handover", id: string): void {
    this.ws.send(commandMessage(kind, id, {}, Date.now()));
    this.dispatch({ kind: "command_sent", commandId: id, command: kind, args: {}, atMs: Date.now() });
  }

  /** raw duplicate retransmission, as the client's timeout retry would do */
  resend(kind: "emergency_stop" | "resume" | "ack_handover", id: string): void {
    this.ws.send(commandMessage(kind, id, {}, Date.now()));
    this.dispatch({ kind: "command_retry", commandId: id });
  }

  entry(id: string) {
    return this.state.commandLog.find((e) => e.commandId === id);
  }

  async until(cond: () => boolean, timeoutMs = 15000): Promise<void> {
    const deadline = Date.now() + timeoutMs;
    while (!cond()) {
      if (Date.now() > deadline) throw new Error("timed out waiting for condition");
      await new Promise<void>((res) => {
        const t = setTimeout(res, 100);
        this.waiters.push(() => {
          clearTimeout(t);
          res();
        });
      });
    }
  }
}

beforeAll(async () => {
  const out = mkdtempSync(join(tmpdir(), "failop-e2e-"));
  child = spawn(
    "python3",
    ["-m", "failop.cli", "run", "--scenario", SCENARIO, "--out", out,
     "--serve", "--pace", "1.0", "--ccc-port", "0"],
    { env: { ...process.env, PYTHONUNBUFFERED: "1" }, stdio: ["ignore", "pipe", "pipe"] },
  );
  port = await new Promise<number>((res, rej) => {
    let buffer = "";
    child.stdout!.on("data", (chunk) => {
      buffer += chunk.toString();
      const match = buffer.match(/ws:\/\/[\d.]+:(\d+)/);
      if (match) res(Number(match[1]));
    });
    child.on("exit", (code) => rej(new Error(`vehicle exited early (${code})`)));
    setTimeout(() => rej(new Error("vehicle did not announce its port")), 20000);
  });
}, 30000);

afterAll(() => {
  child?.kill("SIGKILL");
});

describe("operator loop against a live run", () => {
  it("runs the full stop / handover / resume protocol", async () => {
    const console1 = new Harness();
    await console1.connect();
    await console1.until(() => console1.frames.length >= 2);
    expect(console1.state.latestFrame?.mode.state).toBe("Nominal");

    // --- emergency stop, with a duplicate retry of the same command id
    const framesBefore = console1.frames.length;
    console1.send("emergency_stop", "e2e-stop-1");
    await console1.until(() => console1.entry("e2e-stop-1")?.status !== "pending");
    expect(console1.entry("e2e-stop-1")?.status).toBe("accepted");
    console1.resend("emergency_stop", "e2e-stop-1"); // retry: same id

    // MinimalRisk within 2 telemetry frames of the accepted stop
    await console1.until(() => console1.frames.length >= framesBefore + 2);
    const nextTwo = console1.frames.slice(framesBefore, framesBefore + 2);
    expect(nextTwo.some((f) => f.mode.state === "MinimalRisk")).toBe(true);

    // view model shows the e-stop banner; resume still gated
    const vm = renderSituation(console1.state, Date.now());
    expect(vm.banners.some((b) => b.text.includes("EMERGENCY STOP"))).toBe(true);
    expect(controls(console1.state).resume.enabled).toBe(false);

    // --- resume before handover: rejected with a reason the UI shows
    console1.send("resume", "e2e-resume-early");
    await console1.until(() => console1.entry("e2e-resume-early")?.status !== "pending");
    expect(console1.entry("e2e-resume-early")?.status).toBe("rejected");
    expect(console1.entry("e2e-resume-early")?.reason).toMatch(/ack_handover/);

    // --- acknowledge handover, then resume is accepted and applied
    console1.send("ack_handover", "e2e-ack-1");
    await console1.until(() => console1.entry("e2e-ack-1")?.status === "accepted");
    await console1.until(() => console1.state.latestFrame?.mode.state === "RemoteOperated");
    expect(controls(console1.state).resume.enabled).toBe(true);

    console1.send("resume", "e2e-resume-2");
    await console1.until(() => console1.entry("e2e-resume-2")?.status === "accepted");
    await console1.until(() => console1.state.latestFrame?.mode.state === "Nominal");

    // --- exactly one stop transition despite the duplicate retry
    const states = console1.frames.map((f) => f.mode.state);
    let stopEntries = 0;
    for (let i = 1; i < states.length; i++) {
      if (states[i] === "MinimalRisk" && states[i - 1] !== "MinimalRisk") stopEntries++;
    }
    expect(stopEntries).toBe(1);

    // reconnect replay gives the identical view for the same event history
    expect(replay(console1.events)).toEqual(console1.state);
    console1.ws.close();
  }, 60000);
});
