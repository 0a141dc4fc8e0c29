"""Deterministic discrete-event twin: kernel, resources, system model."""

from renderbench.des.kernel import Channel, Event, Sim, delay, wait, wait_any
from renderbench.des.model import DesResult, run_sim
from renderbench.des.verify import (
    calibrate_contention,
    constant_cost_scenario,
    contention_roundtrip,
    verify_against_closed_form,
)

__all__ = [
    "Channel", "Event", "Sim", "delay", "wait", "wait_any",
    "DesResult", "run_sim",
    "calibrate_contention", "constant_cost_scenario", "contention_roundtrip",
    "verify_against_closed_form",
]
