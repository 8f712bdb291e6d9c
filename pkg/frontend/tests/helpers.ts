import type { SystemMode, TelemetryFrame } from "../src/protocol.js";

export function makeMode(overrides: Partial<SystemMode> = {}): SystemMode {
  return {
    state: "Nominal",
    active_sources: ["cam0", "lidar0"],
    excluded_sources: [],
    responsibility: "vehicle",
    ...overrides,
  };
}

export function makeFrame(overrides: Partial<TelemetryFrame> = {}): TelemetryFrame {
  return {
    tick: 0,
    ego: {
      x: 0,
      y: 0,
      heading: 0,
      speed: 5,
      steering_angle: 0,
      wheelbase: 2.7,
      width: 1.8,
      length: 4.3,
      max_steering: 0.6,
    },
    zone: {
      clear_zone: [
        [-0.8, -1.4],
        [8, -1.4],
        [8, 1.4],
        [-0.8, 1.4],
      ],
      focus_zone: [
        [-0.8, -1.55],
        [11, -1.55],
        [11, 1.55],
        [-0.8, 1.55],
      ],
      stop_distance: 5.3,
    },
    source_lists: [
      {
        tick: 0,
        source: "cam0",
        objects: [
          {
            object_class: "vehicle",
            center: [12, 2],
            extent: [4.5, 1.8],
            heading: 0,
            confidence: 0.9,
            source: "cam0",
          },
        ],
      },
    ],
    fused: null,
    fallback: { tick: 0, source: "fallback", objects: [] },
    fm: null,
    am: { tick: 0, score: 0.001, flag: false, model_version: 1 },
    mode: makeMode(),
    active_incidents: [],
    score_history: [
      [0, 0.001],
      [1, 0.002],
    ],
    ...overrides,
  };
}
