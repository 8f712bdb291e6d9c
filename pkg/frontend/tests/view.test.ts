import { describe, expect, it } from "vitest";

import { initialState, reduce, replay } from "../src/session.js";
import { buildBanners, renderSituation } from "../src/view.js";
import { makeFrame, makeMode } from "./helpers.js";

function stateWith(frame: ReturnType<typeof makeFrame>) {
  return replay([
    { kind: "connecting" },
    { kind: "hello", runId: "r1" },
    { kind: "frame", frame, atMs: 1000 },
  ]);
}

describe("banners", () => {
  it("nominal frame shows no banner", () => {
    expect(buildBanners(makeFrame(), false)).toEqual([]);
  });

  it("fm flag names the implicated sources", () => {
    const frame = makeFrame({
      fm: {
        tick: 3,
        flag: true,
        implicated_sources: ["cam0", "lidar0"],
        evidence: [],
        zone: makeFrame().zone!,
      },
    });
    const banners = buildBanners(frame, false);
    expect(banners[0]?.level).toBe("alert");
    expect(banners[0]?.text).toContain("cam0");
    expect(banners[0]?.text).toContain("lidar0");
  });

  it("minimal risk shows the e-stop banner, wording follows handover state", () => {
    const frame = makeFrame({ mode: makeMode({ state: "MinimalRisk" }) });
    expect(buildBanners(frame, false)[0]?.text).toMatch(/EMERGENCY STOP/);
    expect(buildBanners(frame, false)[0]?.text).toMatch(/acknowledge handover/);
    expect(buildBanners(frame, true)[0]?.text).toMatch(/handover acknowledged/);
  });

  it("fallback and degraded modes are announced", () => {
    expect(
      buildBanners(makeFrame({ mode: makeMode({ state: "FallbackDeterministic", active_sources: ["fallback"] }) }), false)[0]?.text,
    ).toMatch(/fallback/);
    expect(
      buildBanners(
        makeFrame({ mode: makeMode({ state: "DegradedPrimary", excluded_sources: ["cam1"] }) }),
        false,
      )[0]?.text,
    ).toContain("cam1");
  });
});

describe("situation view", () => {
  it("zones drawn with distinct styles, detections per source", () => {
    const vm = renderSituation(stateWith(makeFrame()), 1000);
    const labels = vm.shapes.map((s) => s.label);
    expect(labels).toContain("focus zone");
    expect(labels).toContain("clear zone");
    expect(labels).toContain("ego");
    expect(labels).toContain("cam0:vehicle");
    const focus = vm.shapes.find((s) => s.label === "focus zone")!;
    const clear = vm.shapes.find((s) => s.label === "clear zone")!;
    expect(focus.stroke).not.toBe(clear.stroke);
  });

  it("sparkline mirrors the score history", () => {
    const vm = renderSituation(stateWith(makeFrame()), 1000);
    expect(vm.sparkline).toEqual([
      { tick: 0, score: 0.001 },
      { tick: 1, score: 0.002 },
    ]);
  });

  it("stale indicator appears after 1s without frames", () => {
    const state = stateWith(makeFrame());
    expect(renderSituation(state, 1500).stale).toBe(false);
    expect(renderSituation(state, 2600).stale).toBe(true);
  });

  it("view is a pure function of state and clock", () => {
    const state = stateWith(makeFrame({ tick: 12 }));
    expect(renderSituation(state, 1500)).toEqual(renderSituation(state, 1500));
  });

  it("renders a waiting status before any frame", () => {
    let state = initialState();
    state = reduce(state, { kind: "connecting" });
    state = reduce(state, { kind: "hello", runId: "x" });
    const vm = renderSituation(state, 0);
    expect(vm.shapes).toEqual([]);
    expect(vm.statusLine).toMatch(/waiting/);
  });
});
