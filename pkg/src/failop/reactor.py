"""Fail-operational reaction: mode state machine, voter reconfiguration,
AI/deterministic switch, minimal-risk stop, and triggered data recording.

Transition priority: operator emergency stop, then anomaly switch, then
per-source exclusion (when enough sources survive), then minimal risk.
MinimalRisk is absorbing against monitor events — only the operator
handshake (ack_handover, then resume from RemoteOperated) leaves it.
step_reactor is a pure function of (mode, verdicts, commands); replaying a
log reproduces the mode trace exactly.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from . import records
from .anomaly import AmVerdict
from .function_monitor import FmVerdict, HaraThresholds
from .records import register, require

STATES = frozenset({"Nominal", "DegradedPrimary", "FallbackDeterministic",
                    "MinimalRisk", "RemoteOperated"})
DRIVING_STATES = frozenset({"Nominal", "DegradedPrimary", "FallbackDeterministic"})
FALLBACK_SOURCE = "fallback"

COMMAND_KINDS = frozenset({"emergency_stop", "resume", "set_mode",
                           "restore_source", "ack_handover"})


@register("operator_command")
@dataclass(frozen=True)
class OperatorCommand:
    kind: str
    command_id: str
    args: dict = field(default_factory=dict)
    issued_at: float = 0.0

    def to_payload(self) -> dict:
        return {"kind": self.kind, "command_id": self.command_id,
                "args": dict(self.args), "issued_at": self.issued_at}

    @classmethod
    def from_payload(cls, p: dict) -> "OperatorCommand":
        return cls(kind=p["kind"], command_id=p["command_id"],
                   args=p.get("args", {}), issued_at=p.get("issued_at", 0.0))


@register("system_mode")
@dataclass(frozen=True)
class SystemMode:
    state: str
    active_sources: tuple[str, ...]
    excluded_sources: tuple[str, ...] = ()
    responsibility: str = "vehicle"

    def __post_init__(self):
        require(self.state in STATES, f"unknown state {self.state!r}")
        require(self.responsibility in ("vehicle", "operator"),
                "responsibility must be vehicle|operator")
        act = tuple(sorted(set(self.active_sources)))
        exc = tuple(sorted(set(self.excluded_sources)))
        require(not set(act) & set(exc), "active and excluded sources overlap")
        if self.state == "FallbackDeterministic":
            require(act == (FALLBACK_SOURCE,),
                    "fallback mode must run on the deterministic source only")
        object.__setattr__(self, "active_sources", act)
        object.__setattr__(self, "excluded_sources", exc)

    def to_payload(self) -> dict:
        return {"state": self.state, "active_sources": list(self.active_sources),
                "excluded_sources": list(self.excluded_sources),
                "responsibility": self.responsibility}

    @classmethod
    def from_payload(cls, p: dict) -> "SystemMode":
        return cls(state=p["state"], active_sources=tuple(p["active_sources"]),
                   excluded_sources=tuple(p["excluded_sources"]),
                   responsibility=p["responsibility"])

    @classmethod
    def initial(cls, ai_sources: Sequence[str]) -> "SystemMode":
        return cls(state="Nominal", active_sources=tuple(ai_sources))


@register("recorder_config")
@dataclass(frozen=True)
class RecorderConfig:
    pre_trigger_window: float = 3.0
    post_trigger_window: float = 2.0

    def __post_init__(self):
        require(self.pre_trigger_window > 0 and self.post_trigger_window > 0,
                "recorder windows must be positive")

    def to_payload(self) -> dict:
        return {"pre_trigger_window": self.pre_trigger_window,
                "post_trigger_window": self.post_trigger_window}

    @classmethod
    def from_payload(cls, p: dict) -> "RecorderConfig":
        return cls(**p)


@dataclass
class ReactorActions:
    stop_requested: bool = False         # hold a decelerate-to-zero command
    record_triggers: list[dict] = field(default_factory=list)
    command_acks: list[dict] = field(default_factory=list)
    transitions: list[dict] = field(default_factory=list)


def _enter(actions: ReactorActions, tick: int, old: SystemMode, new_state: str,
           reason: str) -> None:
    actions.transitions.append({"tick": tick, "from": old.state,
                                "to": new_state, "reason": reason})


def step_reactor(mode: SystemMode, fm: FmVerdict | None, am: AmVerdict | None,
                 commands: Sequence[OperatorCommand],
                 thresholds: HaraThresholds, ai_sources: Sequence[str],
                 tick: int = 0,
                 seen_command_ids: set[str] | None = None,
                 ) -> tuple[SystemMode, ReactorActions]:
    """One reaction step. Commands are applied first in arrival order, then
    the monitor rules on the resulting state. `ai_sources` is the static
    roster of configured AI paths (fallback excluded); it is needed to
    rebuild the active set when leaving the deterministic path."""
    actions = ReactorActions()
    ai_sources = tuple(sorted(set(ai_sources) - {FALLBACK_SOURCE}))

    for cmd in commands:
        accepted, reason = False, ""
        if cmd.kind not in COMMAND_KINDS:
            reason = f"unknown command kind {cmd.kind!r}"
        elif seen_command_ids is not None and cmd.command_id in seen_command_ids:
            reason = "duplicate command_id"
        elif cmd.kind == "emergency_stop":
            _enter(actions, tick, mode, "MinimalRisk", "operator emergency_stop")
            mode = SystemMode(state="MinimalRisk", active_sources=mode.active_sources,
                              excluded_sources=mode.excluded_sources,
                              responsibility="operator")
            actions.record_triggers.append({"monitor": "operator",
                                            "reason": "emergency_stop", "tick": tick})
            accepted = True
        elif cmd.kind == "ack_handover":
            if mode.state in ("MinimalRisk", "FallbackDeterministic"):
                _enter(actions, tick, mode, "RemoteOperated", "handover acknowledged")
                mode = SystemMode(state="RemoteOperated",
                                  active_sources=mode.active_sources,
                                  excluded_sources=mode.excluded_sources,
                                  responsibility="operator")
                accepted = True
            else:
                reason = f"no pending handover in state {mode.state}"
        elif cmd.kind == "resume":
            if mode.state == "RemoteOperated" and mode.responsibility == "operator":
                active = tuple(s for s in ai_sources if s not in mode.excluded_sources)
                _enter(actions, tick, mode, "Nominal", "operator resume")
                mode = SystemMode(state="Nominal", active_sources=active,
                                  excluded_sources=mode.excluded_sources,
                                  responsibility="vehicle")
                accepted = True
            else:
                reason = "resume requires acknowledged handover (RemoteOperated)"
        elif cmd.kind == "restore_source":
            src = cmd.args.get("source")
            if mode.responsibility != "operator":
                reason = "restore_source requires operator responsibility"
            elif src not in mode.excluded_sources:
                reason = f"source {src!r} is not excluded"
            else:
                excluded = tuple(s for s in mode.excluded_sources if s != src)
                active = mode.active_sources
                if mode.state in ("Nominal", "DegradedPrimary"):
                    active = tuple(sorted(set(active) | {src}))
                mode = SystemMode(state=mode.state, active_sources=active,
                                  excluded_sources=excluded,
                                  responsibility=mode.responsibility)
                accepted = True
        elif cmd.kind == "set_mode":
            target = cmd.args.get("mode")
            if mode.state not in ("Nominal", "DegradedPrimary", "FallbackDeterministic"):
                reason = f"set_mode unavailable in state {mode.state}"
            elif target == "fallback_deterministic":
                _enter(actions, tick, mode, "FallbackDeterministic", "operator set_mode")
                mode = SystemMode(state="FallbackDeterministic",
                                  active_sources=(FALLBACK_SOURCE,),
                                  excluded_sources=mode.excluded_sources,
                                  responsibility=mode.responsibility)
                accepted = True
            elif target == "nominal":
                active = tuple(s for s in ai_sources if s not in mode.excluded_sources)
                _enter(actions, tick, mode, "Nominal", "operator set_mode")
                mode = SystemMode(state="Nominal", active_sources=active,
                                  excluded_sources=mode.excluded_sources,
                                  responsibility=mode.responsibility)
                accepted = True
            else:
                reason = f"unknown target mode {target!r}"
        if seen_command_ids is not None and accepted:
            seen_command_ids.add(cmd.command_id)
        actions.command_acks.append({"command_id": cmd.command_id,
                                     "accepted": accepted, "reason": reason,
                                     "tick": tick})

    fm_flag = bool(fm and fm.flag)
    am_flag = bool(am and am.flag)

    # every flagged tick raises a record trigger so the recorder's merge rule
    # yields exactly one covering incident per flagged tick
    if am_flag:
        actions.record_triggers.append({"monitor": "anomaly", "tick": tick,
                                        "score": am.score})
    if fm_flag:
        actions.record_triggers.append({"monitor": "function", "tick": tick,
                                        "implicated": list(fm.implicated_sources)})

    if mode.state in ("Nominal", "DegradedPrimary"):
        if am_flag:
            _enter(actions, tick, mode, "FallbackDeterministic", "anomaly flag")
            mode = SystemMode(state="FallbackDeterministic",
                              active_sources=(FALLBACK_SOURCE,),
                              excluded_sources=mode.excluded_sources,
                              responsibility=mode.responsibility)
        elif fm_flag:
            implicated = set(fm.implicated_sources)
            survivors = tuple(s for s in mode.active_sources if s not in implicated)
            needed = thresholds.required_sources(len(mode.active_sources))
            if len(survivors) >= needed and implicated:
                _enter(actions, tick, mode, "DegradedPrimary",
                       "source exclusion: " + ",".join(sorted(implicated)))
                mode = SystemMode(
                    state="DegradedPrimary", active_sources=survivors,
                    excluded_sources=tuple(sorted(set(mode.excluded_sources)
                                                  | implicated)),
                    responsibility=mode.responsibility)
            else:
                _enter(actions, tick, mode, "MinimalRisk", "no surviving majority")
                mode = SystemMode(state="MinimalRisk",
                                  active_sources=mode.active_sources,
                                  excluded_sources=mode.excluded_sources,
                                  responsibility=mode.responsibility)
        elif not mode.active_sources:
            _enter(actions, tick, mode, "MinimalRisk", "all sources excluded")
            mode = SystemMode(state="MinimalRisk", active_sources=(),
                              excluded_sources=mode.excluded_sources,
                              responsibility=mode.responsibility)

    actions.stop_requested = mode.state in ("MinimalRisk", "RemoteOperated")
    return mode, actions


def voter_filter(lists: Sequence[Any], mode: SystemMode) -> tuple[list[Any], bool]:
    """Drop lists from excluded sources; escalate when nothing survives."""
    kept = [lst for lst in lists if lst.source not in mode.excluded_sources]
    escalate = bool(lists) and not kept
    return kept, escalate


class IncidentRecorder:
    """Ring buffer of recent tick bundles plus triggered incident files.

    A trigger opens an incident spanning the pre-trigger window (clamped at
    tick 0 and at the previous incident's end) through the post-trigger
    window; triggers landing inside an open window extend it, so overlapping
    alarms merge into one file.
    """

    def __init__(self, cfg: RecorderConfig, dt: float, out_dir: str | Path,
                 run_id: str, context: dict | None = None):
        self.cfg = cfg
        self.dt = dt
        self.pre_ticks = int(round(cfg.pre_trigger_window / dt))
        self.post_ticks = int(round(cfg.post_trigger_window / dt))
        self.dir = Path(out_dir) / run_id
        self.context = context or {}
        self._ring: deque[tuple[int, list[Any]]] = deque(maxlen=self.pre_ticks)
        self._open: dict | None = None
        self._last_end = -1
        self.written: list[Path] = []
        self.alerts: list[str] = []

    def push(self, tick: int, bundle: list[Any], triggers: list[dict]) -> None:
        if self._open is not None:
            if tick <= self._open["deadline"]:
                self._open["ticks"].append((tick, bundle))
                if triggers:
                    self._open["triggers"].extend(triggers)
                    self._open["deadline"] = tick + self.post_ticks
            else:
                self.flush()
        if self._open is None and triggers:
            start = max(0, tick - self.pre_ticks, self._last_end + 1)
            ticks = [(t, b) for t, b in self._ring if t >= start]
            ticks.append((tick, bundle))
            self._open = {"trigger_tick": tick, "triggers": list(triggers),
                          "deadline": tick + self.post_ticks, "ticks": ticks}
        self._ring.append((tick, bundle))

    def flush(self) -> None:
        if self._open is None:
            return
        inc = self._open
        self._open = None
        start = inc["ticks"][0][0]
        end = inc["ticks"][-1][0]
        self._last_end = end
        header = {"type": "incident_header", "trigger_tick": inc["trigger_tick"],
                  "start_tick": start, "end_tick": end,
                  "triggers": inc["triggers"], "dt": self.dt, **self.context}
        lines = [records.canonical_json(header)]
        for _, bundle in inc["ticks"]:
            for rec in bundle:
                lines.append(records.encode(rec))
        path = self.dir / f"{inc['trigger_tick']}.inc"
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
            path.write_text("\n".join(lines) + "\n", encoding="utf-8")
            self.written.append(path)
        except OSError as exc:
            # recording must never take the vehicle down
            self.alerts.append(f"incident write failed: {exc}")

    def finalize(self) -> None:
        self.flush()
