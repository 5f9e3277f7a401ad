"""WebSocket session service.

One owner thread steps the session; clients connect to /ws, receive
`state` snapshots at the broadcast rate, and submit `command` messages
that are answered with `ack` or `error`. Multiple viewers may watch; a
single teacher lease gates mutating commands. Messages are single-line
JSON with a schema version field.
"""

from __future__ import annotations

import asyncio
import json
import threading
import time
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .kinematics import chain_pass
from .session import COMMAND_MODES, ModeViolation, Session, TeachCommand

PROTOCOL_VERSION = 1

# Commands handled by the transport itself rather than the session.
TRANSPORT_COMMANDS = ("acquire_lease", "release_lease")


@dataclass
class SessionHub:
    """Owns the session loop thread and snapshot/command plumbing."""

    session: Session
    realtime: bool = True
    snapshot: dict = field(default_factory=dict)
    lease_holder: str | None = None
    _lock: threading.Lock = field(default_factory=threading.Lock)
    _running: bool = False
    _thread: threading.Thread | None = None
    _overlay_rev: int = 0
    _overlay_name: str | None = None
    _seq: int = 0

    def start(self):
        self._running = True
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()

    def stop(self):
        self._running = False
        if self._thread is not None:
            self._thread.join(timeout=2.0)

    def _loop(self):
        dt = self.session.arm.dt
        next_deadline = time.monotonic()
        while self._running:
            pending_exec = self._pop_execution_request()
            if pending_exec is not None:
                self._run_program(pending_exec)
                continue
            self.session.tick()
            self._publish()
            if self.realtime:
                next_deadline += dt
                delay = next_deadline - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
                else:
                    next_deadline = time.monotonic()

    def _pop_execution_request(self):
        q = self.session.command_queue
        if q and q[0].kind == "start_execution" and self.session.mode == "idle":
            return q.popleft().payload["program"]
        return None

    def _run_program(self, program):
        dt = self.session.arm.dt
        deadline = time.monotonic()

        def on_tick(session, res, goal):
            nonlocal deadline
            self._publish()
            if self.realtime:
                deadline += dt
                delay = deadline - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
                else:
                    deadline = time.monotonic()

        try:
            self.session.run_task_program(list(program), on_tick=on_tick)
        except KeyError as e:
            self.session.events.append(
                (self.session.tick_count, "rejected", str(e)))

    def submit(self, cmd: TeachCommand, client: str) -> tuple[bool, str | None]:
        """Validate lease and mode, then queue; returns (accepted, error)."""
        with self._lock:
            if self.lease_holder != client:
                return False, "teacher lease not held"
        if self.session.mode not in COMMAND_MODES.get(cmd.kind, ()):
            return False, f"command {cmd.kind!r} not allowed in mode " \
                          f"{self.session.mode!r}"
        self.session.submit(cmd)
        return True, None

    def lease(self, client: str, want: bool) -> bool:
        with self._lock:
            if want:
                if self.lease_holder in (None, client):
                    self.lease_holder = client
                    return True
                return False
            if self.lease_holder == client:
                self.lease_holder = None
            return True

    def _publish(self):
        s = self.session
        ee = s.arm.chain.ee_pose()
        joints = chain_pass(s.model, s.arm.state.q)
        link_poses = [{"position_m": joints.joint_origins[i].tolist()}
                      for i in range(s.model.n_joints)]
        self._seq += 1
        snap = {
            "v": PROTOCOL_VERSION,
            "kind": "state",
            "seq": self._seq,
            "time_s": round(s.arm.state.t, 6),
            "mode": s.mode,
            "joint_positions_rad": s.arm.state.q.tolist(),
            "ee_pose": ee.to_dict(),
            "link_origins_m": link_poses,
            "gripper_held": s.rig.held_item,
            "stiffness_translational_n_per_m": s.gains.k_trans.tolist(),
            "lease_holder": self.lease_holder,
            "overlay_rev": s.overlay_rev,
        }
        self.snapshot = snap

    def overlay_payload(self) -> dict:
        """Current trajectory overlay: full sample lists, active set."""
        s = self.session
        out = {}
        for name, prim in s.active_primitives.items():
            out[name] = prim.trajectory.to_dict()
        return {"v": PROTOCOL_VERSION, "kind": "overlay",
                "rev": s.overlay_rev, "primitives": out}


def build_app(session: Session, realtime: bool = True) -> FastAPI:
    hub = SessionHub(session, realtime=realtime)
    app = FastAPI(title="teacharm session service")
    app.state.hub = hub

    @app.on_event("startup")
    def _startup():
        hub.start()

    @app.on_event("shutdown")
    def _shutdown():
        hub.stop()

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        client = f"client-{id(ws)}"
        interval = 1.0 / session.config.broadcast_rate_hz
        last_overlay_rev = -1

        async def sender():
            nonlocal last_overlay_rev
            while True:
                snap = hub.snapshot
                if snap:
                    await ws.send_text(json.dumps(snap, separators=(",", ":")))
                    if snap.get("overlay_rev", -1) != last_overlay_rev:
                        last_overlay_rev = snap.get("overlay_rev", -1)
                        await ws.send_text(json.dumps(
                            hub.overlay_payload(), separators=(",", ":")))
                await asyncio.sleep(interval)

        send_task = asyncio.create_task(sender())
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    await ws.send_text(json.dumps(
                        {"v": PROTOCOL_VERSION, "kind": "error", "id": None,
                         "code": "bad_json", "message": "unparseable message"},
                        separators=(",", ":")))
                    continue
                reply = handle_message(hub, msg, client)
                await ws.send_text(json.dumps(reply, separators=(",", ":")))
        except WebSocketDisconnect:
            pass
        finally:
            send_task.cancel()
            hub.lease(client, want=False)

    return app


def handle_message(hub: SessionHub, msg: dict, client: str) -> dict:
    """One inbound message to its ack/error reply (transport-level)."""
    mid = msg.get("id")
    base = {"v": PROTOCOL_VERSION, "id": mid}
    if msg.get("kind") != "command" or "command" not in msg:
        return {**base, "kind": "error", "code": "bad_kind",
                "message": "expected a command message"}
    body = msg["command"]
    kind = body.get("kind")
    if kind in TRANSPORT_COMMANDS:
        ok = hub.lease(client, want=(kind == "acquire_lease"))
        if ok:
            return {**base, "kind": "ack", "lease_holder": hub.lease_holder}
        return {**base, "kind": "error", "code": "lease_denied",
                "message": "another teacher holds the lease"}
    try:
        cmd = TeachCommand(kind, body.get("payload", {}))
    except ValueError as e:
        return {**base, "kind": "error", "code": "bad_command", "message": str(e)}
    accepted, err = hub.submit(cmd, client)
    if accepted:
        return {**base, "kind": "ack"}
    code = "mode_violation" if "not allowed" in (err or "") else "lease_required"
    return {**base, "kind": "error", "code": code, "message": err}
