/**
 * Service client: authenticates, feeds server messages into the session
 * reducer, and tracks commands. A command that gets no ack within the
 * timeout is retried with the *same* command_id (the service deduplicates,
 * so retries cause at most one effect).
 */

import {
  authMessage,
  type CommandKind,
  commandMessage,
  parseServerMessage,
} from "./protocol.js";
import type { SessionEvent } from "./session.js";

export interface WsLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export interface ClientOptions {
  url: string;
  token: string;
  dispatch: (event: SessionEvent) => void;
  makeSocket?: (url: string) => WsLike;
  now?: () => number;
  setTimer?: (fn: () => void, ms: number) => unknown;
  clearTimer?: (handle: unknown) => void;
  ackTimeoutMs?: number;
  maxRetries?: number;
}

interface Pending {
  kind: CommandKind;
  args: Record<string, unknown>;
  retries: number;
  timer: unknown;
}

export class CccClient {
  private readonly opts: Required<Omit<ClientOptions, "makeSocket">> & {
    makeSocket: (url: string) => WsLike;
  };
  private socket: WsLike | null = null;
  private pending = new Map<string, Pending>();
  private counter = 0;

  constructor(options: ClientOptions) {
    this.opts = {
      ackTimeoutMs: 2000,
      maxRetries: 5,
      now: () => Date.now(),
      setTimer: (fn, ms) => setTimeout(fn, ms),
      clearTimer: (h) => clearTimeout(h as Parameters<typeof clearTimeout>[0]),
      makeSocket: (url: string) => new WebSocket(url) as unknown as WsLike,
      ...options,
    };
  }

  connect(): void {
    this.opts.dispatch({ kind: "connecting" });
    const ws = this.opts.makeSocket(this.opts.url);
    this.socket = ws;
    ws.onopen = () => ws.send(authMessage(this.opts.token));
    ws.onmessage = (ev) => this.onMessage(String(ev.data));
    ws.onclose = () => this.opts.dispatch({ kind: "disconnected" });
    ws.onerror = () =>
      this.opts.dispatch({ kind: "disconnected", reason: "socket error" });
  }

  close(): void {
    for (const p of this.pending.values()) this.opts.clearTimer(p.timer);
    this.pending.clear();
    this.socket?.close();
    this.socket = null;
  }

  /** Send a command with a fresh id; returns the id for log correlation. */
  sendCommand(kind: CommandKind, args: Record<string, unknown> = {}): string {
    const commandId = `${kind}-${++this.counter}-${Math.floor(Math.random() * 1e9)}`;
    this.transmit(commandId, kind, args);
    this.opts.dispatch({
      kind: "command_sent",
      commandId,
      command: kind,
      args,
      atMs: this.opts.now(),
    });
    this.armTimeout(commandId, kind, args, 0);
    return commandId;
  }

  private transmit(commandId: string, kind: CommandKind, args: Record<string, unknown>): void {
    this.socket?.send(commandMessage(kind, commandId, args, this.opts.now()));
  }

  private armTimeout(
    commandId: string,
    kind: CommandKind,
    args: Record<string, unknown>,
    retries: number,
  ): void {
    const timer = this.opts.setTimer(() => {
      const entry = this.pending.get(commandId);
      if (!entry) return;
      if (entry.retries >= this.opts.maxRetries) {
        this.pending.delete(commandId);
        this.opts.dispatch({
          kind: "ack",
          payload: { command_id: commandId, accepted: false, reason: "timed out" },
        });
        return;
      }
      entry.retries += 1;
      this.opts.dispatch({ kind: "command_retry", commandId });
      this.transmit(commandId, kind, args); // same id: idempotent retry
      this.armTimeout(commandId, kind, args, entry.retries);
    }, this.opts.ackTimeoutMs);
    this.pending.set(commandId, { kind, args, retries, timer });
  }

  private onMessage(raw: string): void {
    let message;
    try {
      message = parseServerMessage(raw);
    } catch (err) {
      this.opts.dispatch({ kind: "error", reason: `bad message: ${err}` });
      return;
    }
    switch (message.type) {
      case "hello":
        this.opts.dispatch({ kind: "hello", runId: message.payload.run_id });
        break;
      case "frame":
        this.opts.dispatch({
          kind: "frame",
          frame: message.payload,
          atMs: this.opts.now(),
        });
        break;
      case "ack": {
        const entry = this.pending.get(message.payload.command_id);
        if (entry) {
          this.opts.clearTimer(entry.timer);
          this.pending.delete(message.payload.command_id);
        }
        this.opts.dispatch({ kind: "ack", payload: message.payload });
        break;
      }
      case "error":
        this.opts.dispatch({ kind: "error", reason: message.payload.reason });
        break;
    }
  }
}
