"""Cart control commands and the recording/PTZ state machine."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from ..core.types import (
    PAN_MAX,
    PAN_MIN,
    TILT_MAX,
    TILT_MIN,
    ZOOM_MAX,
    ZOOM_MIN,
    CartState,
    RecordingState,
)

log = logging.getLogger(__name__)

CMD_START = "start"
CMD_STOP = "stop"
CMD_PAUSE = "pause"
CMD_PAN = "pan"
CMD_TILT = "tilt"
CMD_ZOOM = "zoom"

COMMANDS = (CMD_START, CMD_STOP, CMD_PAUSE, CMD_PAN, CMD_TILT, CMD_ZOOM)


@dataclass(frozen=True)
class ControlCommand:
    name: str
    delta: float = 0.0

    def __post_init__(self):
        if self.name not in COMMANDS:
            raise ValueError(f"unknown control command {self.name!r}")

    def to_dict(self) -> dict:
        return {"name": self.name, "delta": self.delta}

    @classmethod
    def from_dict(cls, d: dict) -> "ControlCommand":
        return cls(name=d["name"], delta=float(d.get("delta", 0.0)))


def _clamp(v: float, lo: float, hi: float) -> float:
    return lo if v < lo else hi if v > hi else v


def apply_control(state: CartState, cmd: ControlCommand) -> CartState:
    """Pure transition function; invalid transitions are logged no-ops."""
    rec = state.recording
    if cmd.name == CMD_START:
        if rec in (RecordingState.STOPPED, RecordingState.PAUSED):
            return CartState(RecordingState.RECORDING, state.pan_deg, state.tilt_deg, state.zoom)
        log.warning("start ignored: already recording")
        return state
    if cmd.name == CMD_PAUSE:
        if rec is RecordingState.RECORDING:
            return CartState(RecordingState.PAUSED, state.pan_deg, state.tilt_deg, state.zoom)
        log.warning("pause ignored: not recording (state=%s)", rec.value)
        return state
    if cmd.name == CMD_STOP:
        return CartState(RecordingState.STOPPED, state.pan_deg, state.tilt_deg, state.zoom)
    if cmd.name == CMD_PAN:
        return CartState(rec, _clamp(state.pan_deg + cmd.delta, PAN_MIN, PAN_MAX), state.tilt_deg, state.zoom)
    if cmd.name == CMD_TILT:
        return CartState(rec, state.pan_deg, _clamp(state.tilt_deg + cmd.delta, TILT_MIN, TILT_MAX), state.zoom)
    if cmd.name == CMD_ZOOM:
        return CartState(rec, state.pan_deg, state.tilt_deg, _clamp(state.zoom + cmd.delta, ZOOM_MIN, ZOOM_MAX))
    return state
