/**
 * Situation view model: a declarative draw list computed purely from the
 * session state (plus the clock for staleness). The canvas painter consumes
 * it; tests assert on it directly without a DOM.
 */

import type { DetectedObject, TelemetryFrame } from "./protocol.js";
import type { ConsoleState } from "./session.js";
import { isStale } from "./session.js";

export interface PolyShape {
  points: [number, number][]; // ego frame
  stroke: string;
  fill: string | null;
  dashed: boolean;
  label: string;
}

export interface Banner {
  level: "alert" | "warn" | "info";
  text: string;
}

export interface ViewModel {
  banners: Banner[];
  shapes: PolyShape[];
  sparkline: { tick: number; score: number | null }[];
  modeLine: string;
  statusLine: string;
  stale: boolean;
  connected: boolean;
}

const SOURCE_COLORS = ["#4d9de0", "#e15554", "#7768ae", "#3bb273", "#e1bc29"];

function boxCorners(obj: DetectedObject): [number, number][] {
  const [cx, cy] = obj.center;
  const [l, w] = obj.extent;
  const c = Math.cos(obj.heading);
  const s = Math.sin(obj.heading);
  const hl = l / 2;
  const hw = w / 2;
  const local: [number, number][] = [
    [hl, hw],
    [-hl, hw],
    [-hl, -hw],
    [hl, -hw],
  ];
  return local.map(([x, y]) => [cx + c * x - s * y, cy + s * x + c * y]);
}

function egoShape(frame: TelemetryFrame): PolyShape {
  const e = frame.ego;
  const overhang = (e.length - e.wheelbase) / 2;
  return {
    points: [
      [-overhang, -e.width / 2],
      [e.wheelbase + overhang, -e.width / 2],
      [e.wheelbase + overhang, e.width / 2],
      [-overhang, e.width / 2],
    ],
    stroke: "#222",
    fill: "#d8d8d8",
    dashed: false,
    label: "ego",
  };
}

export function buildBanners(frame: TelemetryFrame, handoverAcked: boolean): Banner[] {
  const banners: Banner[] = [];
  if (frame.fm?.flag) {
    banners.push({
      level: "alert",
      text: `perception inconsistency: ${frame.fm.implicated_sources.join(", ")}`,
    });
  }
  if (frame.am?.flag) {
    banners.push({
      level: "alert",
      text: `out-of-distribution scene (score ${frame.am.score?.toFixed(5)})`,
    });
  }
  switch (frame.mode.state) {
    case "MinimalRisk":
      banners.push({
        level: "alert",
        text: handoverAcked
          ? "EMERGENCY STOP — handover acknowledged"
          : "EMERGENCY STOP — acknowledge handover to take control",
      });
      break;
    case "RemoteOperated":
      banners.push({ level: "warn", text: "operator holds the vehicle — resume to hand back" });
      break;
    case "FallbackDeterministic":
      banners.push({ level: "warn", text: "running on the deterministic fallback path" });
      break;
    case "DegradedPrimary":
      banners.push({
        level: "info",
        text: `degraded: excluded ${frame.mode.excluded_sources.join(", ")}`,
      });
      break;
  }
  return banners;
}

export function renderSituation(state: ConsoleState, nowMs: number): ViewModel {
  const frame = state.latestFrame;
  if (!frame) {
    return {
      banners: [],
      shapes: [],
      sparkline: [],
      modeLine: "",
      statusLine:
        state.connection === "connected" ? "waiting for telemetry" : "disconnected",
      stale: false,
      connected: state.connection === "connected",
    };
  }

  const shapes: PolyShape[] = [];
  if (frame.zone) {
    shapes.push({
      points: frame.zone.focus_zone as [number, number][],
      stroke: "#e8a33d",
      fill: "rgba(232,163,61,0.15)",
      dashed: false,
      label: "focus zone",
    });
    shapes.push({
      points: frame.zone.clear_zone as [number, number][],
      stroke: "#3a9e4f",
      fill: "rgba(58,158,79,0.20)",
      dashed: false,
      label: "clear zone",
    });
  }
  shapes.push(egoShape(frame));

  frame.source_lists.forEach((list, i) => {
    const color = SOURCE_COLORS[i % SOURCE_COLORS.length] ?? "#888";
    for (const obj of list.objects) {
      shapes.push({
        points: boxCorners(obj),
        stroke: color,
        fill: null,
        dashed: false,
        label: `${list.source}:${obj.object_class}`,
      });
    }
  });
  for (const obj of frame.fallback?.objects ?? []) {
    shapes.push({
      points: boxCorners(obj),
      stroke: "#666",
      fill: null,
      dashed: true,
      label: `fallback:${obj.object_class}`,
    });
  }
  for (const obj of frame.fused?.objects ?? []) {
    shapes.push({
      points: boxCorners(obj),
      stroke: "#111",
      fill: "rgba(0,0,0,0.08)",
      dashed: false,
      label: `fused:${obj.object_class}`,
    });
  }

  const mode = frame.mode;
  const incidents = frame.active_incidents.length
    ? ` | recording incident ${frame.active_incidents.join(", ")}`
    : "";
  return {
    banners: buildBanners(frame, state.handoverAcked),
    shapes,
    sparkline: frame.score_history.map(([tick, score]) => ({ tick, score })),
    modeLine: `${mode.state} | responsibility: ${mode.responsibility} | active: ${mode.active_sources.join(", ") || "none"}`,
    statusLine: `run ${state.runId ?? "?"} | tick ${frame.tick} | v=${frame.ego.speed.toFixed(2)} m/s${incidents}`,
    stale: isStale(state, nowMs),
    connected: state.connection === "connected",
  };
}
