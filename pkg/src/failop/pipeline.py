"""Standard per-tick processing chain.

Wires the configured perception models, both monitors, the reactor, the
incident recorder and the telemetry sink into the simulator's hook slots, in
the fixed order perception -> monitors -> reactor -> recorder -> telemetry.
All mutable cross-tick state (mode, frozen model outputs, ring buffer,
command dedupe set, score history) lives here, owned by the tick loop.
"""

from __future__ import annotations

import queue
from collections import deque
from pathlib import Path
from typing import Callable

from . import fallback as fb
from .anomaly import AmVerdict, AnomalyModel
from .ccc import TelemetryFrame
from .function_monitor import (HaraThresholds, SafeZoneParams,
                               compute_safe_zone, match_across_sources,
                               validate)
from .perception import FaultDirective, PerceptionModelConfig, fuse, perceive
from .reactor import (FALLBACK_SOURCE, IncidentRecorder, OperatorCommand,
                      RecorderConfig, SystemMode, step_reactor, voter_filter)
from .records import require
from .scene import ObjectList
from .sim import Event, Hook, Scenario, TickContext


class Pipeline:
    def __init__(self, scenario: Scenario, out_dir: str | Path | None = None,
                 run_id: str = "run", anomaly_model: AnomalyModel | None = None,
                 command_queue: "queue.Queue[OperatorCommand] | None" = None,
                 frame_sink: Callable[[TelemetryFrame], None] | None = None):
        self.scenario = scenario
        self.models = sorted(scenario.of_type(PerceptionModelConfig), key=lambda m: m.id)
        require(len(self.models) >= 1, "scenario configures no perception models")
        self.faults = tuple(scenario.of_type(FaultDirective))
        self.zone_params = (scenario.of_type(SafeZoneParams) or [SafeZoneParams()])[-1]
        self.thresholds = (scenario.of_type(HaraThresholds) or [HaraThresholds()])[-1]
        self.cluster_params = (scenario.of_type(fb.ClusterParams) or [fb.ClusterParams()])[-1]
        rules = tuple(scenario.of_type(fb.ShapeRule)) or fb.DEFAULT_RULES
        fb.validate_rules(rules)
        self.rules = rules
        self.recorder_cfg = (scenario.of_type(RecorderConfig) or [RecorderConfig()])[-1]
        self.anomaly_model = anomaly_model
        if anomaly_model is not None:
            require(anomaly_model.window == scenario.raster_window,
                    "anomaly model raster window does not match the scenario")

        self.ai_sources = tuple(m.id for m in self.models)
        self.mode = SystemMode.initial(self.ai_sources)
        self.commands = command_queue
        self.frame_sink = frame_sink
        self.seen_command_ids: set[str] = set()
        self.score_history: deque[tuple[int, float | None]] = deque(maxlen=100)
        self._frozen: dict[str, tuple[int, ObjectList]] = {}
        self._last_output: dict[str, ObjectList] = {}

        recorder_context = {
            "zone_params": self.zone_params.to_payload(),
            "thresholds": self.thresholds.to_payload(),
            "model_version": anomaly_model.version if anomaly_model else 0,
            "model_tau": anomaly_model.tau if anomaly_model else None,
        }
        self.recorder = None
        if out_dir is not None:
            self.recorder = IncidentRecorder(self.recorder_cfg, scenario.dt,
                                             Path(out_dir) / "incidents", run_id,
                                             context=recorder_context)
        self._pending_triggers: list[dict] = []

    # -- hook chain

    def hooks(self) -> list[Hook]:
        return [("perception", self.run_perception),
                ("monitors", self.run_monitors),
                ("reactor", self.run_reactor),
                ("recorder", self.run_recorder),
                ("telemetry", self.run_telemetry)]

    def run_perception(self, ctx: TickContext) -> None:
        for model in self.models:
            frozen = self._freeze_window(model.id, ctx)
            if frozen is not None:
                lst = frozen
            else:
                lst = perceive(model, ctx.truth, self.scenario.seed, self.faults)
                self._last_output[model.id] = lst
            ctx.source_lists[model.id] = lst
            ctx.log.append(lst)
        ctx.fallback_list = fb.fallback_perceive(ctx.cloud, self.cluster_params,
                                                 self.rules, source=FALLBACK_SOURCE)
        ctx.log.append(ctx.fallback_list)

    def _freeze_window(self, model_id: str, ctx: TickContext) -> ObjectList | None:
        for f in self.faults:
            if f.model != model_id or f.kind != "freeze":
                continue
            start_tick = int(round(f.t_start / self.scenario.dt))
            if start_tick <= ctx.tick < start_tick + f.freeze_ticks:
                prev = self._last_output.get(model_id)
                if prev is not None:
                    return prev
        return None

    def run_monitors(self, ctx: TickContext) -> None:
        zone = compute_safe_zone(ctx.truth.ego, self.zone_params)
        watched = [ctx.source_lists[s] for s in self.ai_sources
                   if s not in self.mode.excluded_sources]
        ctx.fm_verdict = validate(watched, zone, self.thresholds)
        ctx.log.append(ctx.fm_verdict)

        if self.anomaly_model is not None:
            ctx.am_verdict = self.anomaly_model.detect(ctx.raster)
        else:
            ctx.am_verdict = AmVerdict(tick=ctx.tick, score=None, flag=False,
                                       model_version=0)
        ctx.log.append(ctx.am_verdict)

    def run_reactor(self, ctx: TickContext) -> None:
        commands: list[OperatorCommand] = []
        if self.commands is not None:
            while True:
                try:
                    commands.append(self.commands.get_nowait())
                except queue.Empty:
                    break

        # the mode the monitors/fusion ran under this tick; recorded in
        # incident bundles so replay can rebuild the watched-source set
        self._mode_before = self.mode
        self.mode, actions = step_reactor(
            self.mode, ctx.fm_verdict, ctx.am_verdict, commands,
            self.thresholds, self.ai_sources, tick=ctx.tick,
            seen_command_ids=self.seen_command_ids)
        ctx.mode = self.mode
        ctx.log.append(self.mode)
        for tr in actions.transitions:
            ctx.log.append(Event(tick=ctx.tick, kind="mode_transition", data=tr))
        for ack in actions.command_acks:
            ctx.log.append(Event(tick=ctx.tick, kind="command_ack", data=ack))
        self._pending_triggers = actions.record_triggers

        if actions.stop_requested:
            decel = -min(self.zone_params.a_max,
                         ctx.truth.ego.speed / self.scenario.dt)
            ctx.ego_command_override = (decel, 0.0)

        # switch position: fused output follows the active configuration
        if self.mode.state == "FallbackDeterministic":
            ctx.fused = ctx.fallback_list
            fusion_sources = [FALLBACK_SOURCE]
        else:
            active = [ctx.source_lists[s] for s in self.ai_sources
                      if s in self.mode.active_sources]
            kept, escalate = voter_filter(active, self.mode)
            if escalate:
                ctx.log.append(Event(tick=ctx.tick, kind="voter_escalation",
                                     data={"reason": "all sources excluded"}))
            if len(kept) >= 2:
                assignment = match_across_sources(kept, self.thresholds)
                ctx.fused = fuse(kept, assignment)
            elif kept:
                single = kept[0]
                ctx.fused = ObjectList(tick=ctx.tick, source="fused",
                                       objects=single.objects)
            else:
                ctx.fused = ObjectList(tick=ctx.tick, source="fused", objects=())
            fusion_sources = [l.source for l in kept]
        ctx.log.append(Event(tick=ctx.tick, kind="fusion",
                             data={"sources": sorted(fusion_sources)}))
        ctx.log.append(ctx.fused)

    def run_recorder(self, ctx: TickContext) -> None:
        if self.recorder is None:
            return
        bundle = [ctx.truth, ctx.cloud, ctx.raster,
                  *[ctx.source_lists[s] for s in self.ai_sources],
                  ctx.fallback_list, ctx.fm_verdict, ctx.am_verdict,
                  self._mode_before]
        before = len(self.recorder.written)
        self.recorder.push(ctx.tick, bundle, self._pending_triggers)
        for path in self.recorder.written[before:]:
            ctx.log.append(Event(tick=ctx.tick, kind="incident_written",
                                 data={"name": path.name}))
        for alert in self.recorder.alerts:
            ctx.log.append(Event(tick=ctx.tick, kind="recorder_alert",
                                 data={"message": alert}))
        self.recorder.alerts.clear()
        self._pending_triggers = []

    def run_telemetry(self, ctx: TickContext) -> None:
        score = ctx.am_verdict.score if ctx.am_verdict else None
        self.score_history.append((ctx.tick, score))
        if self.frame_sink is None:
            return
        incidents = ()
        if self.recorder is not None and self.recorder._open is not None:
            incidents = (str(self.recorder._open["trigger_tick"]),)
        frame = TelemetryFrame(
            tick=ctx.tick, ego=ctx.truth.ego,
            zone=ctx.fm_verdict.zone if ctx.fm_verdict else None,
            source_lists=tuple(ctx.source_lists[s] for s in self.ai_sources),
            fused=ctx.fused, fallback=ctx.fallback_list,
            fm=ctx.fm_verdict, am=ctx.am_verdict, mode=self.mode,
            active_incidents=incidents,
            score_history=tuple(self.score_history))
        self.frame_sink(frame)

    def finalize(self, log=None) -> None:
        if self.recorder is not None:
            before = len(self.recorder.written)
            self.recorder.finalize()
            if log is not None:
                for path in self.recorder.written[before:]:
                    log.append(Event(tick=self.scenario.n_ticks - 1,
                                     kind="incident_written",
                                     data={"name": path.name}))
