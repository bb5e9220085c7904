"""Fiber loss plus a passive beam-splitter eavesdropper, in both directions.

Eve's tap sits next to Bob's station by default: in the forward direction
(Bob to Alice) she taps the pulse before the fiber, and in the backward
direction (Alice to Bob) after it.  This is the placement under which the
closed-form mutual informations in :mod:`cvqsdc.security` are exact.  The
alternative ``"midpoint"`` placement splits the fiber loss evenly around
the tap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gaussian import GaussianState, attenuate, beam_splitter, partial_trace, tensor, vacuum

FORWARD = "forward"
BACKWARD = "backward"
TOPOLOGIES = ("two-channels", "one-channel")
EVE_POSITIONS = ("bob-end", "midpoint")


@dataclass(frozen=True)
class ChannelParams:
    """Channel between Bob and Alice.

    eta_L is the fiber transmissivity per direction, eta_E the transmissivity
    of Eve's beam splitter.  With ``"one-channel"`` (circulators) Eve uses a
    single splitter for both directions; with ``"two-channels"`` she uses one
    per fiber at the same transmissivity.  Both are modeled identically.
    ``excess_noise`` adds classical Gaussian noise (vacuum units) to the
    delivered pulse; it is zero for the pure-loss channel.
    """

    eta_L: float = 0.9
    eta_E: float = 1.0
    topology: str = "two-channels"
    eve_position: str = "bob-end"
    excess_noise: float = 0.0

    def __post_init__(self):
        for name in ("eta_L", "eta_E"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {val}")
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"topology must be one of {TOPOLOGIES}")
        if self.eve_position not in EVE_POSITIONS:
            raise ValueError(f"eve_position must be one of {EVE_POSITIONS}")
        if self.excess_noise < 0.0:
            raise ValueError("excess_noise must be non-negative")


@dataclass(frozen=True)
class TapRecord:
    direction: str
    tapped_state: GaussianState
    pulse_index: np.ndarray | int | None = None


def _tap(state: GaussianState, eta_E: float) -> tuple[GaussianState, GaussianState]:
    joint = beam_splitter(tensor(state, vacuum(1)), 0, 1, eta_E)
    return partial_trace(joint, [0]), partial_trace(joint, [1])


def transmit(state: GaussianState, params: ChannelParams, direction: str,
             pulse_index=None) -> tuple[GaussianState, TapRecord]:
    """Send a single-mode pulse (or batch of pulses) through the channel.

    Returns the state delivered to the far end and Eve's tapped marginal.
    """
    if state.num_modes != 1:
        raise ValueError("transmit() carries single-mode pulses only")
    if direction not in (FORWARD, BACKWARD):
        raise ValueError(f"direction must be {FORWARD!r} or {BACKWARD!r}")

    if params.eve_position == "midpoint":
        half = np.sqrt(params.eta_L)
        out, tapped = _tap(attenuate(state, 0, half), params.eta_E)
        out = attenuate(out, 0, half)
    elif direction == FORWARD:
        out, tapped = _tap(state, params.eta_E)
        out = attenuate(out, 0, params.eta_L)
    else:
        out, tapped = _tap(attenuate(state, 0, params.eta_L), params.eta_E)

    if params.excess_noise:
        out = GaussianState(out.mean, out.cov + params.excess_noise * np.eye(2))
    return out, TapRecord(direction, tapped, pulse_index)


def round_trip_eve_amplitude(eta_E: float) -> tuple[float, float]:
    """Amplitude fractions of Bob's pulse that Eve holds on each pass.

    Forward she reflects ``sqrt(1 - eta_E)``; backward she reflects the same
    fraction of the ``sqrt(eta_E)`` that reached Alice.
    """
    if not 0.0 <= eta_E <= 1.0:
        raise ValueError("eta_E must lie in [0, 1]")
    leak = np.sqrt(1.0 - eta_E)
    return float(leak), float(np.sqrt(eta_E) * leak)
