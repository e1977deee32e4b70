"""Real-time session engine and streaming service for the HMI demo.

A Session owns the simulation assets (mesh, baseline, factorizable solver,
reference frame, inverse operator) computed once at start.  Touch events
mutate the live contact set; fixed-rate logical ticks sample it: simulate
the current frame, reconstruct, push the difference frame into a 15-frame
ring buffer, classify the window when full, and map gestures plus press
state to HMI actions through a declarative rule table.

The engine itself is synchronous and deterministic (seeded measurement
noise); the FastAPI layer adds the tick clock and fan-out.  Slow stream
clients are conflated: they always receive the latest tick, never a
backlog.
"""

from __future__ import annotations

import asyncio
import base64
import json
import time
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np
from fastapi import Request

from .errors import OutOfDomainError, UnknownTouchIdError
from .forward import ForwardSolver
from .gestures import (CLASS_NAMES, N_FRAMES, GestureClass, SequenceClassifier)
from .geometry import SensorGeometry, baseline_field, generate_mesh
from .inverse import LinearInverseMap, TikhonovSolver
from .phantom import TouchPhantom, TouchPoint, apply_phantom

DEFAULT_TICK_HZ = 10.0


@dataclass
class HmiAction:
    kind: str                  # none|move-left|move-right|jump-low|jump-high|action-a
    source_gesture: str = "none"
    confidence: float = 1.0


@dataclass(frozen=True)
class ActionRule:
    """One declarative mapping from touch/gesture state to an action.

    trigger: "held" fires every tick while a touch sits in the region;
    "release" fires once when a touch ends, gated by press duration in
    ticks; "gesture" fires on the classified label.
    """

    trigger: str
    action: str
    region: str = "any"            # left|middle|right thirds, or any
    min_ticks: int = 0
    max_ticks: Optional[int] = None
    gesture: Optional[str] = None


def default_rules() -> list:
    return [
        ActionRule(trigger="held", region="left", action="move-left"),
        ActionRule(trigger="held", region="right", action="move-right"),
        ActionRule(trigger="release", region="middle", max_ticks=4, action="jump-low"),
        ActionRule(trigger="release", region="middle", min_ticks=5, action="jump-high"),
        ActionRule(trigger="gesture", gesture="finger-double-tap", action="action-a"),
    ]


def rules_from_config(entries: list) -> list:
    return [ActionRule(**e) for e in entries]


@dataclass
class _LiveTouch:
    position: tuple
    depth: float
    born_tick: int


class Session:
    """Deterministic simulation session; one writer, snapshot readers."""

    def __init__(self, geom: SensorGeometry | None = None,
                 target_element_size: float = 2.0,
                 method: str = "tikhonov",
                 linear_map: LinearInverseMap | None = None,
                 classifier: SequenceClassifier | None = None,
                 rules: list | None = None,
                 noise_snr_db: Optional[float] = 40.0,
                 seed: int = 0,
                 tikhonov_lambda: float = 1e-2):
        self.geom = geom or SensorGeometry(channel_width=4.0, layer_thickness=3.0)
        self.mesh = generate_mesh(self.geom, target_element_size)
        self.baseline = baseline_field(self.geom, self.mesh)
        self.solver = ForwardSolver(self.mesh)
        self.reference = self.solver.simulate_frame(self.baseline).values
        self.method = method
        if method == "linear":
            if linear_map is None:
                raise ValueError("linear method needs a trained map")
            self.inverse = linear_map
        else:
            jac = self.solver.jacobian(self.baseline)
            self.inverse = TikhonovSolver(self.solver.jacobian_raster(jac),
                                          lam=tikhonov_lambda,
                                          geometry_hash=self.mesh.geometry_hash)
        self.classifier = classifier
        self.rules = list(rules) if rules is not None else default_rules()
        self.noise_snr_db = noise_snr_db
        self.rng = np.random.default_rng(seed)
        self.seed = seed
        self.touches: dict = {}
        self.ring: list = []
        self.tick_counter = 0
        self.last_result: Optional[dict] = None
        self._released: list = []   # (region, held_ticks) since last tick
        self._ref_rms = float(np.sqrt(np.mean(self.reference ** 2)))

    # -- events ---------------------------------------------------------------

    def ingest_touch(self, touch_id, event: str, position=None,
                     depth: float | None = None) -> dict:
        """Apply one down/move/up event; takes effect from the next tick."""
        if event == "down":
            if position is None or depth is None:
                raise ValueError("down events need position and depth")
            self._validate(position, depth)
            self.touches[touch_id] = _LiveTouch(position=tuple(position),
                                                depth=float(depth),
                                                born_tick=self.tick_counter)
        elif event == "move":
            if touch_id not in self.touches:
                raise UnknownTouchIdError(f"move for unknown touch {touch_id!r}")
            live = self.touches[touch_id]
            if position is not None:
                self._validate(position, live.depth)
                live.position = tuple(position)
            if depth is not None:
                self._validate(live.position, depth)
                live.depth = float(depth)
        elif event == "up":
            if touch_id not in self.touches:
                raise UnknownTouchIdError(f"up for unknown touch {touch_id!r}")
            live = self.touches.pop(touch_id)
            held = self.tick_counter - live.born_tick
            self._released.append((self._region(live.position), held))
        else:
            raise ValueError(f"unknown touch event {event!r}")
        return {"ok": True, "active_touches": len(self.touches)}

    def _validate(self, position, depth):
        x, y = position
        L = self.geom.side_length
        if not (0 <= x <= L and 0 <= y <= L):
            raise OutOfDomainError(f"touch position {position} outside the sensor")
        if not 0 < depth < self.geom.layer_thickness:
            raise OutOfDomainError(
                f"press depth {depth} outside (0, {self.geom.layer_thickness})")

    def _region(self, position) -> str:
        third = self.geom.side_length / 3.0
        x = position[0]
        if x < third:
            return "left"
        if x > 2 * third:
            return "right"
        return "middle"

    # -- ticking ---------------------------------------------------------------

    def _current_phantom(self) -> Optional[TouchPhantom]:
        if not self.touches:
            return None
        L = self.geom.side_length
        touches = []
        for live in self.touches.values():
            r = 7.0
            x = min(max(live.position[0], r), L - r)
            y = min(max(live.position[1], r), L - r)
            touches.append(TouchPoint(center=(x, y), radius=r,
                                      press_depth=live.depth))
        return TouchPhantom(tuple(touches), "depth")

    def tick(self) -> dict:
        """Advance one logical step; returns the full tick result."""
        self.tick_counter += 1
        phantom = self._current_phantom()
        if phantom is None:
            dv = np.zeros_like(self.reference)
        else:
            touched = apply_phantom(self.baseline, phantom, self.mesh)
            dv = self.solver.simulate_frame(touched).values - self.reference
        if self.noise_snr_db is not None:
            scale = max(float(np.sqrt(np.mean(dv ** 2))), 1e-2 * self._ref_rms)
            dv = dv + self.rng.normal(size=dv.shape) * scale * 10 ** (-self.noise_snr_db / 20)

        if self.method == "linear":
            recon = self.inverse.apply(dv, geometry_hash=self.mesh.geometry_hash)
        else:
            # resolution-compensated: the streamed image is a display product
            # and the compensation keeps the hotspot under the touch
            recon = self.inverse.reconstruct(dv, geometry_hash=self.mesh.geometry_hash,
                                             compensate=True)

        self.ring.append(dv)
        if len(self.ring) > N_FRAMES:
            self.ring.pop(0)

        gesture_label = "none"
        posterior = None
        if self.classifier is not None and len(self.ring) == N_FRAMES:
            probs = self.classifier.predict_proba(np.stack(self.ring))
            posterior = probs
            gesture_label = CLASS_NAMES[GestureClass(int(np.argmax(probs)))]

        action = self._apply_rules(gesture_label, posterior)
        self._released.clear()

        result = {
            "seq": self.tick_counter,
            "dv": dv,
            "reconstruction": recon.pixels,
            "gesture": gesture_label,
            "posterior": posterior,
            "action": action,
        }
        self.last_result = result
        return result

    def _apply_rules(self, gesture_label: str, posterior) -> HmiAction:
        held_regions = {self._region(t.position) for t in self.touches.values()}
        for rule in self.rules:
            if rule.trigger == "held":
                if rule.region in held_regions or (rule.region == "any" and held_regions):
                    return HmiAction(kind=rule.action, source_gesture="press")
            elif rule.trigger == "release":
                for region, held in self._released:
                    if rule.region not in ("any", region):
                        continue
                    if held < rule.min_ticks:
                        continue
                    if rule.max_ticks is not None and held > rule.max_ticks:
                        continue
                    return HmiAction(kind=rule.action, source_gesture="press")
            elif rule.trigger == "gesture" and posterior is not None:
                if gesture_label == rule.gesture:
                    conf = float(np.max(posterior))
                    return HmiAction(kind=rule.action, source_gesture=gesture_label,
                                     confidence=conf)
        return HmiAction(kind="none", source_gesture=gesture_label)

    # -- snapshots ---------------------------------------------------------------

    def snapshot(self) -> dict:
        """JSON-ready view of the latest tick (current state for new clients)."""
        if self.last_result is None:
            return {"seq": 0, "dv": [0.0] * len(self.reference),
                    "img": _encode_image(np.zeros((48, 48))),
                    "gesture": {"label": "none", "probs": None},
                    "action": {"kind": "none", "source_gesture": "none",
                               "confidence": 1.0},
                    "geometry": {"side_length": self.geom.side_length,
                                 "layer_thickness": self.geom.layer_thickness}}
        r = self.last_result
        probs = r["posterior"]
        return {
            "seq": r["seq"],
            "dv": [float(v) for v in r["dv"]],
            "img": _encode_image(r["reconstruction"]),
            "gesture": {"label": r["gesture"],
                        "probs": None if probs is None else [float(p) for p in probs]},
            "action": asdict(r["action"]) | {"kind": r["action"].kind},
            "geometry": {"side_length": self.geom.side_length,
                         "layer_thickness": self.geom.layer_thickness},
        }


def _encode_image(pixels: np.ndarray) -> str:
    """Min-max normalized 8-bit magnitude, row-major, base64 (2304 bytes).

    Presses reduce conductivity, so the signed reconstruction is a negative
    blob; the displayed touch map is its magnitude, bright where touched.
    """
    a = np.abs(np.asarray(pixels, dtype=float))
    lo, hi = a.min(), a.max()
    if hi - lo <= 0:
        b = np.zeros(a.shape, dtype=np.uint8)
    else:
        b = np.round(255.0 * (a - lo) / (hi - lo)).astype(np.uint8)
    return base64.b64encode(b.tobytes()).decode()


def replay_events(session: Session, script: list) -> list:
    """Deterministically replay a recorded event script.

    Script entries: {"tick": true} advances time; any other entry is an
    ingest_touch call: {"id", "event", "position", "depth"}.  Returns the
    action kind emitted at each tick.
    """
    actions = []
    for entry in script:
        if entry.get("tick"):
            actions.append(session.tick()["action"].kind)
        else:
            session.ingest_touch(entry["id"], entry["event"],
                                 entry.get("position"), entry.get("depth"))
    return actions


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------

def create_app(default_geom: SensorGeometry | None = None,
               classifier_path: str | None = None,
               method: str = "tikhonov",
               linear_map_path: str | None = None,
               tick_hz: float = DEFAULT_TICK_HZ,
               rules: list | None = None,
               auto_tick: bool = True):
    """FastAPI app exposing session control, state and an NDJSON stream."""
    from fastapi import FastAPI, HTTPException
    from fastapi.middleware.cors import CORSMiddleware
    from fastapi.responses import StreamingResponse

    classifier = SequenceClassifier.load(classifier_path) if classifier_path else None
    linear_map = LinearInverseMap.load(linear_map_path) if linear_map_path else None

    app = FastAPI(title="tactile-eit session service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    state = {"sessions": {}, "next_id": 1}

    class _Managed:
        def __init__(self, session: Session, hz: float):
            self.session = session
            self.hz = hz
            self.lock = asyncio.Lock()
            self.new_tick = asyncio.Condition()
            self.task: Optional[asyncio.Task] = None

        async def tick_once(self):
            async with self.lock:
                loop = asyncio.get_running_loop()
                await loop.run_in_executor(None, self.session.tick)
            async with self.new_tick:
                self.new_tick.notify_all()

        async def run(self):
            period = 1.0 / self.hz
            while True:
                started = time.monotonic()
                await self.tick_once()
                elapsed = time.monotonic() - started
                await asyncio.sleep(max(0.0, period - elapsed))

    def _get(sid: int) -> _Managed:
        managed = state["sessions"].get(sid)
        if managed is None:
            raise HTTPException(status_code=404, detail="no such session")
        return managed

    @app.post("/sessions")
    async def create_session(config: dict | None = None):
        config = config or {}
        geom_kwargs = config.get("geometry") or {}
        geom = (SensorGeometry(**geom_kwargs) if geom_kwargs
                else (default_geom or SensorGeometry(channel_width=4.0,
                                                     layer_thickness=3.0)))
        session = Session(
            geom=geom,
            method=config.get("method", method),
            linear_map=linear_map,
            classifier=classifier,
            rules=rules,
            noise_snr_db=config.get("noise_snr_db", 40.0),
            seed=int(config.get("seed", 0)),
        )
        sid = state["next_id"]
        state["next_id"] += 1
        managed = _Managed(session, float(config.get("tick_hz", tick_hz)))
        state["sessions"][sid] = managed
        if auto_tick:
            managed.task = asyncio.create_task(managed.run())
        return {"session_id": sid,
                "geometry": {"side_length": geom.side_length,
                             "layer_thickness": geom.layer_thickness,
                             "channel_width": geom.channel_width},
                "tick_hz": managed.hz,
                "classifier": classifier is not None}

    @app.delete("/sessions/{sid}")
    async def close_session(sid: int):
        managed = _get(sid)
        if managed.task:
            managed.task.cancel()
        del state["sessions"][sid]
        return {"ok": True}

    @app.post("/sessions/{sid}/events")
    async def post_event(sid: int, event: dict):
        managed = _get(sid)
        try:
            async with managed.lock:
                ack = managed.session.ingest_touch(
                    event.get("id", 0), event["event"],
                    event.get("position"), event.get("depth"))
        except OutOfDomainError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        except UnknownTouchIdError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return ack

    @app.post("/sessions/{sid}/tick")
    async def manual_tick(sid: int):
        managed = _get(sid)
        await managed.tick_once()
        return managed.session.snapshot()

    @app.get("/sessions/{sid}/state")
    async def get_state(sid: int):
        managed = _get(sid)
        return managed.session.snapshot()

    @app.get("/sessions/{sid}/stream")
    async def stream(sid: int, request: Request, limit: int | None = None):
        """NDJSON tick stream; starts with the current state, conflated.

        ``limit`` bounds the number of messages (handy for scripted
        clients); without it the stream runs until the client disconnects
        or the session is closed.
        """
        managed = _get(sid)

        async def gen():
            sent = 0
            # current full state first, so late joiners render immediately
            snap = managed.session.snapshot()
            last_sent = snap["seq"]
            yield json.dumps(snap) + "\n"
            sent += 1
            while sid in state["sessions"] and (limit is None or sent < limit):
                if await request.is_disconnected():
                    return
                async with managed.new_tick:
                    try:
                        await asyncio.wait_for(managed.new_tick.wait(), timeout=0.5)
                    except asyncio.TimeoutError:
                        continue
                snap = managed.session.snapshot()
                if snap["seq"] > last_sent:
                    last_sent = snap["seq"]
                    yield json.dumps(snap) + "\n"
                    sent += 1

        return StreamingResponse(gen(), media_type="application/x-ndjson")

    return app
