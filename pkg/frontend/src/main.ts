/** Browser entry: connection form, plan-view canvas, controls, command log. */

import { CccClient } from "./client.js";
import { paint } from "./canvas.js";
import type { CommandKind } from "./protocol.js";
import {
  type ConsoleState,
  controls,
  initialState,
  reduce,
  type SessionEvent,
} from "./session.js";
import { renderSituation } from "./view.js";

let state: ConsoleState = initialState();
let client: CccClient | null = null;

function dispatch(event: SessionEvent): void {
  state = reduce(state, event);
  renderLog();
  renderControls();
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function renderControls(): void {
  const gates = controls(state);
  (Object.keys(gates) as CommandKind[]).forEach((kind) => {
    const button = document.getElementById(`btn-${kind}`) as HTMLButtonElement | null;
    if (!button) return;
    const gate = gates[kind];
    button.disabled = !gate.enabled;
    button.title = gate.reason;
  });
}

function renderLog(): void {
  const rows = state.commandLog
    .slice(-12)
    .reverse()
    .map(
      (e) =>
        `<tr class="${e.status}"><td>${e.kind}</td><td>${e.status}</td>` +
        `<td>${e.retries > 0 ? `retries ${e.retries} ` : ""}${e.reason}</td></tr>`,
    )
    .join("");
  el<HTMLTableSectionElement>("log-body").innerHTML = rows;
}

function frameLoop(): void {
  const vm = renderSituation(state, Date.now());
  const canvas = el<HTMLCanvasElement>("plan");
  const ctx = canvas.getContext("2d");
  if (ctx) paint(ctx, vm);
  el<HTMLDivElement>("banners").innerHTML = vm.banners
    .map((b) => `<div class="banner ${b.level}">${b.text}</div>`)
    .join("");
  el<HTMLDivElement>("mode-line").textContent = vm.modeLine;
  el<HTMLDivElement>("status-line").textContent =
    vm.statusLine + (vm.stale ? "  [stale]" : "");
  requestAnimationFrame(frameLoop);
}

function connect(): void {
  client?.close();
  state = initialState();
  const host = el<HTMLInputElement>("host").value || "127.0.0.1";
  const port = el<HTMLInputElement>("port").value || "8700";
  const token = el<HTMLInputElement>("token").value || "failop-dev";
  client = new CccClient({ url: `ws://${host}:${port}`, token, dispatch });
  client.connect();
}

function wire(): void {
  el<HTMLButtonElement>("connect").onclick = connect;
  const send = (kind: CommandKind, args: Record<string, unknown> = {}) => () =>
    client?.sendCommand(kind, args);
  el<HTMLButtonElement>("btn-emergency_stop").onclick = send("emergency_stop");
  el<HTMLButtonElement>("btn-ack_handover").onclick = send("ack_handover");
  el<HTMLButtonElement>("btn-resume").onclick = send("resume");
  el<HTMLButtonElement>("btn-set_mode").onclick = () => {
    const target =
      state.latestFrame?.mode.state === "FallbackDeterministic"
        ? "nominal"
        : "fallback_deterministic";
    client?.sendCommand("set_mode", { mode: target });
  };
  el<HTMLButtonElement>("btn-restore_source").onclick = () => {
    const source = state.latestFrame?.mode.excluded_sources[0];
    if (source) client?.sendCommand("restore_source", { source });
  };
  renderControls();
  frameLoop();
}

window.addEventListener("load", wire);
