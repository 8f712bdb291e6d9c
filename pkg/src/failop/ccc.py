"""Remote command-control boundary.

Streams per-tick telemetry frames to operator consoles over a websocket and
feeds validated operator commands into the reactor's inbound queue. The
vehicle side never blocks on a client: every connection owns a bounded
drop-oldest buffer, so slow consumers see a strictly tick-increasing
subsequence ending at the latest frame. Commands are deduplicated by
command_id (exactly-once effect regardless of retries) and the
resume-after-handover handshake is enforced per session.
"""

from __future__ import annotations

import asyncio
import http
import json
import queue
import threading
from collections import deque
from dataclasses import dataclass
from typing import Any

from . import __version__, records
from .anomaly import AmVerdict
from .function_monitor import FmVerdict, SafeZone
from .reactor import OperatorCommand, SystemMode
from .records import register
from .scene import EgoState, ObjectList

DEFAULT_PORT = 8700
DEFAULT_TOKEN = "failop-dev"


@register("telemetry_frame")
@dataclass(frozen=True)
class TelemetryFrame:
    tick: int
    ego: EgoState
    zone: SafeZone | None
    source_lists: tuple[ObjectList, ...]
    fused: ObjectList | None
    fallback: ObjectList | None
    fm: FmVerdict | None
    am: AmVerdict | None
    mode: SystemMode
    active_incidents: tuple[str, ...] = ()
    score_history: tuple[tuple[int, float | None], ...] = ()  # last 100 ticks

    def to_payload(self) -> dict:
        return {
            "tick": self.tick,
            "ego": self.ego.to_payload(),
            "zone": self.zone.to_payload() if self.zone else None,
            "source_lists": [l.to_payload() for l in self.source_lists],
            "fused": self.fused.to_payload() if self.fused else None,
            "fallback": self.fallback.to_payload() if self.fallback else None,
            "fm": self.fm.to_payload() if self.fm else None,
            "am": self.am.to_payload() if self.am else None,
            "mode": self.mode.to_payload(),
            "active_incidents": list(self.active_incidents),
            "score_history": [list(p) for p in self.score_history],
        }

    @classmethod
    def from_payload(cls, p: dict) -> "TelemetryFrame":
        from .function_monitor import SafeZone as SZ
        return cls(
            tick=p["tick"], ego=EgoState.from_payload(p["ego"]),
            zone=SZ.from_payload(p["zone"]) if p.get("zone") else None,
            source_lists=tuple(ObjectList.from_payload(l) for l in p["source_lists"]),
            fused=ObjectList.from_payload(p["fused"]) if p.get("fused") else None,
            fallback=ObjectList.from_payload(p["fallback"]) if p.get("fallback") else None,
            fm=FmVerdict.from_payload(p["fm"]) if p.get("fm") else None,
            am=AmVerdict.from_payload(p["am"]) if p.get("am") else None,
            mode=SystemMode.from_payload(p["mode"]),
            active_incidents=tuple(p.get("active_incidents", ())),
            score_history=tuple(tuple(s) for s in p.get("score_history", ())))


class DropOldestBuffer:
    """Bounded frame buffer: producers never block; overflow discards the
    oldest entries, preserving order."""

    def __init__(self, capacity: int = 8):
        self._dq: deque = deque(maxlen=capacity)

    def push(self, item: Any) -> None:
        self._dq.append(item)

    def pop_all(self) -> list[Any]:
        out = []
        while self._dq:
            out.append(self._dq.popleft())
        return out

    def __len__(self) -> int:
        return len(self._dq)


def envelope(msg_type: str, payload: dict, seq: int | None = None,
             tick: int | None = None) -> str:
    env: dict[str, Any] = {"type": msg_type, "payload": payload}
    if seq is not None:
        env["seq"] = seq
    if tick is not None:
        env["tick"] = tick
    return records.canonical_json(env)


class _Session:
    def __init__(self, ws, capacity: int):
        self.ws = ws
        self.buffer = DropOldestBuffer(capacity)
        self.wakeup = asyncio.Event()
        self.authed = False
        self.handover_acked = False
        self.seen_ids: set[str] = set()
        self.seq = 0

    def next_seq(self) -> int:
        self.seq += 1
        return self.seq


class CccServer:
    """Websocket telemetry/command server running on its own thread.

    The simulation publishes frames from the tick loop; operator commands
    cross back through a thread-safe queue drained at tick start. State
    shared across the boundary is limited to those queues plus a mode
    snapshot used for session-level command validation.
    """

    def __init__(self, host: str = "127.0.0.1", port: int = DEFAULT_PORT,
                 token: str = DEFAULT_TOKEN, run_id: str = "run",
                 command_queue: "queue.Queue[OperatorCommand] | None" = None,
                 client_buffer: int = 8, max_message_bytes: int = 1 << 20):
        self.host = host
        self.port = port
        self.token = token
        self.run_id = run_id
        self.commands: "queue.Queue[OperatorCommand]" = command_queue or queue.Queue()
        self.client_buffer = client_buffer
        self.max_message_bytes = max_message_bytes
        self.dropped_oversize = 0
        self._sessions: set[_Session] = set()
        self._sessions_lock = threading.Lock()
        self._loop: asyncio.AbstractEventLoop | None = None
        self._thread: threading.Thread | None = None
        self._started = threading.Event()
        self._stop: asyncio.Event | None = None
        self._mode_snapshot: SystemMode | None = None
        self.bound_port: int | None = None

    # -- lifecycle

    def start(self) -> None:
        self._thread = threading.Thread(target=self._run, name="ccc-server", daemon=True)
        self._thread.start()
        if not self._started.wait(timeout=10.0):
            raise RuntimeError("ccc server failed to start")

    def stop(self) -> None:
        if self._loop and self._stop:
            self._loop.call_soon_threadsafe(self._stop.set)
        if self._thread:
            self._thread.join(timeout=10.0)

    def _run(self) -> None:
        asyncio.run(self._serve())

    async def _serve(self) -> None:
        import websockets.asyncio.server as ws_server

        self._loop = asyncio.get_running_loop()
        self._stop = asyncio.Event()

        async def handler(ws):
            await self._handle(ws)

        def process_request(connection, request):
            if request.path == "/health":
                body = records.canonical_json(
                    {"version": __version__, "run_id": self.run_id}).encode()
                return connection.respond(http.HTTPStatus.OK, body.decode() + "\n")
            return None

        async with ws_server.serve(handler, self.host, self.port,
                                   process_request=process_request) as server:
            self.bound_port = server.sockets[0].getsockname()[1] if server.sockets else self.port
            self._started.set()
            await self._stop.wait()

    # -- vehicle-side API (called from the tick loop thread)

    def publish(self, frame: TelemetryFrame) -> None:
        line = envelope("frame", frame.to_payload(), tick=frame.tick)
        self._mode_snapshot = frame.mode
        if len(line.encode("utf-8")) > self.max_message_bytes:
            self.dropped_oversize += 1
            return
        with self._sessions_lock:
            sessions = list(self._sessions)
        for s in sessions:
            if not s.authed:
                continue
            s.buffer.push((frame.tick, line))
            if self._loop:
                self._loop.call_soon_threadsafe(s.wakeup.set)

    # -- connection handling

    async def _handle(self, ws) -> None:
        session = _Session(ws, self.client_buffer)
        with self._sessions_lock:
            self._sessions.add(session)
        sender = asyncio.create_task(self._sender(session))
        try:
            async for raw in ws:
                reply, fatal = self._on_message(session, raw)
                if reply is not None:
                    await ws.send(reply)
                if fatal:
                    break
        except Exception:
            pass
        finally:
            sender.cancel()
            with self._sessions_lock:
                self._sessions.discard(session)

    async def _sender(self, session: _Session) -> None:
        try:
            while True:
                await session.wakeup.wait()
                session.wakeup.clear()
                for tick, line in session.buffer.pop_all():
                    payload = json.loads(line)
                    payload["seq"] = session.next_seq()
                    await session.ws.send(records.canonical_json(payload))
        except asyncio.CancelledError:
            pass
        except Exception:
            pass

    def _on_message(self, session: _Session, raw: str | bytes) -> tuple[str | None, bool]:
        try:
            msg = json.loads(raw)
            msg_type = msg.get("type")
            payload = msg.get("payload") or {}
        except (json.JSONDecodeError, AttributeError) as exc:
            return envelope("error", {"reason": f"malformed message: {exc}"}), True
        if msg_type == "auth":
            if payload.get("token") == self.token:
                session.authed = True
                return envelope("hello", {"run_id": self.run_id,
                                          "version": __version__}), False
            return envelope("error", {"reason": "bad token"}), True
        if not session.authed:
            return envelope("error", {"reason": "not authenticated"}), True
        if msg_type == "command":
            return self._on_command(session, payload), False
        return envelope("error", {"reason": f"unknown message type {msg_type!r}"}), False

    def _on_command(self, session: _Session, payload: dict) -> str:
        def ack(cid: str, accepted: bool, reason: str = "") -> str:
            return envelope("ack", {"command_id": cid, "accepted": accepted,
                                    "reason": reason})

        try:
            cmd = OperatorCommand.from_payload(payload)
        except (KeyError, records.RecordError, TypeError) as exc:
            return ack(str(payload.get("command_id", "?")), False,
                       f"parse error: {exc}")
        if cmd.command_id in session.seen_ids:
            return ack(cmd.command_id, False, "duplicate command_id")
        session.seen_ids.add(cmd.command_id)

        from .reactor import COMMAND_KINDS
        if cmd.kind not in COMMAND_KINDS:
            return ack(cmd.command_id, False, f"unknown command kind {cmd.kind!r}")

        mode = self._mode_snapshot
        if cmd.kind == "resume":
            held = mode is not None and mode.state in ("MinimalRisk", "RemoteOperated")
            if held and not session.handover_acked:
                return ack(cmd.command_id, False,
                           "resume requires ack_handover first")
        if cmd.kind == "ack_handover":
            session.handover_acked = True
        if cmd.kind == "resume":
            session.handover_acked = False

        self.commands.put(cmd)
        return ack(cmd.command_id, True)
