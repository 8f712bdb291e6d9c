/**
 * Wire protocol types and runtime validation (see ../protocol.md).
 * Every message is one canonical-JSON object with a `type` tag.
 */

import { z } from "zod";

const point = z.tuple([z.number(), z.number()]);

export const egoStateSchema = z.object({
  x: z.number(),
  y: z.number(),
  heading: z.number(),
  speed: z.number(),
  steering_angle: z.number(),
  wheelbase: z.number(),
  width: z.number(),
  length: z.number(),
  max_steering: z.number(),
});

export const safeZoneSchema = z.object({
  clear_zone: z.array(point),
  focus_zone: z.array(point),
  stop_distance: z.number(),
});

export const detectedObjectSchema = z.object({
  object_class: z.string(),
  center: point,
  extent: z.tuple([z.number(), z.number()]),
  heading: z.number(),
  confidence: z.number(),
  source: z.string(),
});

export const objectListSchema = z.object({
  tick: z.number().int(),
  source: z.string(),
  objects: z.array(detectedObjectSchema),
});

export const fmVerdictSchema = z.object({
  tick: z.number().int(),
  flag: z.boolean(),
  implicated_sources: z.array(z.string()),
  evidence: z.array(z.record(z.unknown())),
  zone: safeZoneSchema,
});

export const amVerdictSchema = z.object({
  tick: z.number().int(),
  score: z.number().nullable(),
  flag: z.boolean(),
  model_version: z.number().int(),
});

export const systemModeSchema = z.object({
  state: z.enum([
    "Nominal",
    "DegradedPrimary",
    "FallbackDeterministic",
    "MinimalRisk",
    "RemoteOperated",
  ]),
  active_sources: z.array(z.string()),
  excluded_sources: z.array(z.string()),
  responsibility: z.enum(["vehicle", "operator"]),
});

export const telemetryFrameSchema = z.object({
  tick: z.number().int(),
  ego: egoStateSchema,
  zone: safeZoneSchema.nullable(),
  source_lists: z.array(objectListSchema),
  fused: objectListSchema.nullable(),
  fallback: objectListSchema.nullable(),
  fm: fmVerdictSchema.nullable(),
  am: amVerdictSchema.nullable(),
  mode: systemModeSchema,
  active_incidents: z.array(z.string()),
  score_history: z.array(z.tuple([z.number(), z.number().nullable()])),
});

export const ackPayloadSchema = z.object({
  command_id: z.string(),
  accepted: z.boolean(),
  reason: z.string(),
});

export const serverMessageSchema = z.discriminatedUnion("type", [
  z.object({
    type: z.literal("hello"),
    payload: z.object({ run_id: z.string(), version: z.string() }),
  }),
  z.object({
    type: z.literal("frame"),
    seq: z.number().int(),
    tick: z.number().int(),
    payload: telemetryFrameSchema,
  }),
  z.object({ type: z.literal("ack"), payload: ackPayloadSchema }),
  z.object({ type: z.literal("error"), payload: z.object({ reason: z.string() }) }),
]);

export type EgoState = z.infer<typeof egoStateSchema>;
export type SafeZone = z.infer<typeof safeZoneSchema>;
export type DetectedObject = z.infer<typeof detectedObjectSchema>;
export type ObjectList = z.infer<typeof objectListSchema>;
export type FmVerdict = z.infer<typeof fmVerdictSchema>;
export type AmVerdict = z.infer<typeof amVerdictSchema>;
export type SystemMode = z.infer<typeof systemModeSchema>;
export type TelemetryFrame = z.infer<typeof telemetryFrameSchema>;
export type AckPayload = z.infer<typeof ackPayloadSchema>;
export type ServerMessage = z.infer<typeof serverMessageSchema>;

export const COMMAND_KINDS = [
  "emergency_stop",
  "resume",
  "set_mode",
  "restore_source",
  "ack_handover",
] as const;
export type CommandKind = (typeof COMMAND_KINDS)[number];

export function authMessage(token: string): string {
  return JSON.stringify({ payload: { token }, type: "auth" });
}

export function commandMessage(
  kind: CommandKind,
  commandId: string,
  args: Record<string, unknown>,
  issuedAt: number,
): string {
  return JSON.stringify({
    payload: { args, command_id: commandId, issued_at: issuedAt, kind },
    type: "command",
  });
}

export function parseServerMessage(raw: string): ServerMessage {
  return serverMessageSchema.parse(JSON.parse(raw));
}
