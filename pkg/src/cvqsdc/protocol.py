"""Symmetric and asymmetric CV-QSDC protocol runs.

One run follows the causal order of the protocol:

1. Bob prepares ``n`` coherent pulses with random amplitudes ``|alpha_i|``
   (symmetric variant: squeezed along their own phase through the 99/1
   coupler).
2. Forward transmission; Eve homodynes her tap along ``x``.
3. Alice picks control pulses, measures them and compares the measured
   transmissivity with the declared one.
4. Alice splits the rest into decoys and message pulses and encodes
   ``m_A`` by attenuating the message pulses by ``sqrt(m_A)`` (asymmetric
   variant: she then squeezes message and decoy pulses along ``x``).
5. Backward transmission; Eve homodynes her second tap along ``x``.
6. Bob homodynes every returning pulse along its phase, checks decoy means
   and variances against the declared channel and decodes
   ``m_hat = (measured / expected unattenuated amplitude)**2``.

Everything is vectorized over the pulse train, so a run is a handful of
batched symplectic operations.  A fixed seed gives a bit-identical
:class:`Transcript`.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import BACKWARD, FORWARD, ChannelParams, transmit
from .config import ConfigError, ProtocolConfig, parse_pairs
from .gaussian import (
    GaussianState,
    HomodyneResult,
    attenuate,
    coherent_state,
    homodyne_sample,
    homodyne_stats,
    mix_with_squeezed_vacuum,
)

CONTROL, DECOY, MESSAGE, UNUSED = 0, 1, 2, 3
LABEL_NAMES = ("control", "decoy", "message", "unused")

TRANSCRIPT_MAGIC = "# cvqsdc transcript v1"
COLUMNS = (
    "index", "label", "alpha_re", "alpha_im", "theta", "m_true",
    "alice_meas", "bob_meas", "eve_fwd_meas", "eve_bwd_meas", "m_decoded",
)


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    reason: str | None = None

    def __str__(self):
        return "accepted" if self.accepted else f"aborted: {self.reason}"


@dataclass(frozen=True)
class PulseTrain:
    """Bob's prepared pulses: batched state plus the secrets he keeps."""

    state: GaussianState
    alpha: np.ndarray

    @property
    def amplitude(self) -> np.ndarray:
        return np.abs(self.alpha)

    @property
    def theta(self) -> np.ndarray:
        return np.angle(self.alpha) % (2 * np.pi)


@dataclass(frozen=True)
class PulseRecord:
    index: int
    label: str
    alpha: complex
    theta: float
    m_true: float | None
    alice_meas: float | None
    bob_meas: float | None
    eve_fwd_meas: float | None
    eve_bwd_meas: float | None


@dataclass(eq=False)
class Transcript:
    """Columnar record of one run; ``nan`` marks an absent value.

    ``pulses`` and ``decoded`` give the per-pulse view.
    """

    config: ProtocolConfig
    alpha: np.ndarray
    theta: np.ndarray
    labels: np.ndarray
    m_true: np.ndarray
    alice_meas: np.ndarray
    bob_meas: np.ndarray
    eve_fwd_meas: np.ndarray
    eve_bwd_meas: np.ndarray
    m_decoded: np.ndarray
    verdict: Verdict

    @property
    def accepted(self) -> bool:
        return self.verdict.accepted

    @property
    def amplitude(self) -> np.ndarray:
        return np.abs(self.alpha)

    def indices(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)

    @property
    def pulses(self) -> list[PulseRecord]:
        def opt(v):
            return None if math.isnan(v) else float(v)

        return [
            PulseRecord(i, LABEL_NAMES[self.labels[i]], complex(self.alpha[i]), float(self.theta[i]),
                        opt(self.m_true[i]), opt(self.alice_meas[i]), opt(self.bob_meas[i]),
                        opt(self.eve_fwd_meas[i]), opt(self.eve_bwd_meas[i]))
            for i in range(len(self.alpha))
        ]

    @property
    def decoded(self) -> list[tuple[int, float]]:
        if not self.accepted:
            return []
        return [(int(i), float(self.m_decoded[i])) for i in self.indices(MESSAGE)]

    # -- text form ----------------------------------------------------------

    def to_text(self) -> str:
        lines = [TRANSCRIPT_MAGIC]
        lines += [f"{k}={v}" for k, v in self.config.to_pairs()]
        lines.append(",".join(COLUMNS))
        cols = [self.alpha.real, self.alpha.imag, self.theta, self.m_true, self.alice_meas,
                self.bob_meas, self.eve_fwd_meas, self.eve_bwd_meas, self.m_decoded]
        for i in range(len(self.alpha)):
            vals = ",".join(_fmt_float(c[i]) for c in cols)
            lines.append(f"{i},{LABEL_NAMES[self.labels[i]]},{vals}")
        lines.append(f"verdict={self.verdict}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Transcript":
        lines = text.splitlines()
        if not lines or lines[0] != TRANSCRIPT_MAGIC:
            raise ValueError("not a transcript file")
        header = ",".join(COLUMNS)
        try:
            split = lines.index(header)
        except ValueError:
            raise ValueError("transcript is missing its column header") from None
        try:
            config = ProtocolConfig.from_pairs(parse_pairs(lines[1:split]))
        except ConfigError as exc:
            raise ValueError(f"bad transcript header: {exc}") from exc
        body, tail = lines[split + 1:-1], lines[-1]
        if not tail.startswith("verdict="):
            raise ValueError("transcript is missing its verdict line")
        verdict_text = tail[len("verdict="):]
        if verdict_text == "accepted":
            verdict = Verdict(True)
        elif verdict_text.startswith("aborted: "):
            verdict = Verdict(False, verdict_text[len("aborted: "):])
        else:
            raise ValueError(f"bad verdict {verdict_text!r}")
        n = len(body)
        labels = np.empty(n, dtype=np.int8)
        data = np.empty((n, 9))
        for row, line in enumerate(body):
            fields = line.split(",")
            if len(fields) != len(COLUMNS) or int(fields[0]) != row:
                raise ValueError(f"malformed transcript row {row}")
            labels[row] = LABEL_NAMES.index(fields[1])
            data[row] = [np.nan if f == "NA" else float(f) for f in fields[2:]]
        return cls(config, data[:, 0] + 1j * data[:, 1], data[:, 2], labels, data[:, 3], data[:, 4],
                   data[:, 5], data[:, 6], data[:, 7], data[:, 8], verdict)


def _fmt_float(v) -> str:
    v = float(v)
    return "NA" if math.isnan(v) else repr(v)


# -- state pipeline ---------------------------------------------------------


def prepare_states(config: ProtocolConfig, alpha: np.ndarray) -> GaussianState:
    """Bob's pulses; the symmetric variant squeezes each along its own phase."""
    state = coherent_state(alpha.real, alpha.imag)
    if config.variant == "symmetric":
        angle = np.angle(alpha) if config.phase_mode == "random" else 0.0
        state = mix_with_squeezed_vacuum(state, config.z, config.coupler_eta, angle=angle)
    return state


def encode_states(state: GaussianState, m: np.ndarray, config: ProtocolConfig) -> GaussianState:
    """Attenuate by ``m`` (1 for decoys); asymmetric variant then squeezes along ``x``."""
    if np.any(m != 1.0):
        state = attenuate(state, 0, m)
    if config.variant == "asymmetric":
        state = mix_with_squeezed_vacuum(state, config.z, config.coupler_eta)
    return state


def declared_channel(config: ProtocolConfig) -> ChannelParams:
    """The channel Alice and Bob believe in: pure loss at the declared transmissivity."""
    return dataclasses.replace(config.channel, eta_L=config.declared_transmissivity, eta_E=1.0,
                               excess_noise=0.0)


def expected_control_stats(config: ProtocolConfig, alpha: np.ndarray) -> HomodyneResult:
    """What Alice should see on control pulses under the declared channel."""
    delivered, _ = transmit(prepare_states(config, alpha), declared_channel(config), FORWARD)
    return homodyne_stats(delivered, 0, np.angle(alpha))


def expected_return_stats(config: ProtocolConfig, alpha: np.ndarray) -> HomodyneResult:
    """What Bob should see on an unattenuated (decoy-like) pulse under the declared channel."""
    chan = declared_channel(config)
    delivered, _ = transmit(prepare_states(config, alpha), chan, FORWARD)
    back, _ = transmit(encode_states(delivered, np.ones(len(alpha)), config), chan, BACKWARD)
    return homodyne_stats(back, 0, np.angle(alpha))


def eve_gains(config: ProtocolConfig) -> tuple[float, float]:
    """Mean of Eve's x-homodyne per unit of Bob's initial x-quadrature, on each tap.

    Eve is assumed to know the channel and to be phase-aligned with Bob's
    pulses (``theta = 0``), the most favourable case for her.  The backward
    gain is for an unattenuated pulse, so it multiplies ``x sqrt(m_A)``.
    """
    ref = np.array([1.0 / np.sqrt(2.0) + 0j])  # x-quadrature exactly 1
    delivered, tap_f = transmit(prepare_states(config, ref), config.channel, FORWARD)
    _, tap_b = transmit(encode_states(delivered, np.ones(1), config), config.channel, BACKWARD)
    g_f = float(homodyne_stats(tap_f.tapped_state, 0, 0.0).mean[0])
    g_b = float(homodyne_stats(tap_b.tapped_state, 0, 0.0).mean[0])
    return g_f, g_b


# -- consistency checks -----------------------------------------------------


MIN_EMPIRICAL_SAMPLES = 10


def _mean_check(y, mu, var, tol, what, declared):
    """Least-squares gain of ``y`` on the expected means; abort if it is off by > tol SE.

    The standard error uses the measured residual spread, or the predicted
    noise when fewer than ``MIN_EMPIRICAL_SAMPLES`` pulses were checked.
    """
    k = len(y)
    if k == 0:
        return Verdict(True)
    model_sd = float(np.sqrt(np.mean(var)))
    norm = float(np.dot(mu, mu))
    if norm > 0.0:
        gain = float(np.dot(y, mu)) / norm
        sd = float(np.std(y - gain * mu, ddof=1)) if k >= MIN_EMPIRICAL_SAMPLES else model_sd
        se = sd / math.sqrt(norm)
        stat = (gain - 1.0) / se if se > 0 else (0.0 if gain == 1.0 else math.inf)
        if abs(stat) > tol:
            return Verdict(False, f"{what} transmissivity {gain * gain * declared:.4g} "
                                  f"vs declared {declared:.4g} ({stat:+.1f} sigma)")
        return Verdict(True)
    sd = float(np.std(y, ddof=1)) if k >= MIN_EMPIRICAL_SAMPLES else model_sd
    stat = float(np.mean(y)) / (sd / math.sqrt(k)) if sd > 0 else 0.0
    if abs(stat) > tol:
        return Verdict(False, f"{what} mean {np.mean(y):.4g} where no light was expected ({stat:+.1f} sigma)")
    return Verdict(True)


def _variance_check(y, mu, var, tol, what):
    k = len(y)
    if k < 2:
        return Verdict(True)
    ratio = float(np.mean((y - mu) ** 2 / var))
    stat = (ratio - 1.0) / math.sqrt(2.0 / k)
    if abs(stat) > tol:
        return Verdict(False, f"{what} noise {ratio:.4g} x expected ({stat:+.1f} sigma)")
    return Verdict(True)


# -- protocol steps ---------------------------------------------------------


def bob_prepare(config: ProtocolConfig, rng: np.random.Generator) -> PulseTrain:
    amp = config.x_distribution.sample(rng, config.n)
    if config.phase_mode == "random":
        theta = rng.uniform(0.0, 2 * np.pi, config.n)
        alpha = amp * np.exp(1j * theta)
    else:
        alpha = amp + 0j
    return PulseTrain(prepare_states(config, alpha), alpha)


def alice_select_and_check(train: PulseTrain, delivered: GaussianState, config: ProtocolConfig,
                           rng: np.random.Generator) -> tuple[Verdict, np.ndarray, np.ndarray]:
    """Pick the control set, measure it and test the channel transmissivity.

    Returns the verdict, the sorted control indices and Alice's outcomes.
    """
    control = np.sort(rng.choice(config.n, size=config.num_control, replace=False))
    alpha = train.alpha[control]
    meas = homodyne_sample(delivered.take(control), 0, np.angle(alpha), rng)
    expected = expected_control_stats(config, alpha)
    mu = np.broadcast_to(expected.mean, meas.shape)
    var = np.broadcast_to(expected.variance, meas.shape)
    verdict = _mean_check(meas, mu, var, config.check_tolerance_sigma, "control",
                          config.declared_transmissivity)
    return verdict, control, meas


def alice_encode(state: GaussianState, labels: np.ndarray, message: Sequence[float],
                 config: ProtocolConfig) -> GaussianState:
    """Encode ``message`` on the pulses labelled MESSAGE, in order; decoys pass unattenuated."""
    labels = np.asarray(labels)
    message = np.asarray(message, dtype=float)
    is_msg = labels == MESSAGE
    if message.shape != (int(is_msg.sum()),):
        raise ValueError(f"need {int(is_msg.sum())} message values, got {message.shape}")
    if np.any(~(message > 0.0)) or np.any(message > 1.0):
        raise ValueError("message values must lie in (0, 1]")
    m = np.ones(len(labels))
    m[is_msg] = message
    return encode_states(state, m, config)


def bob_decode(state: GaussianState, alpha: np.ndarray, labels: np.ndarray, config: ProtocolConfig,
               rng: np.random.Generator) -> tuple[Verdict, np.ndarray, np.ndarray]:
    """Measure returning pulses, check the decoys, decode the message pulses.

    Returns the verdict, Bob's outcomes and ``m_hat`` (``nan`` except on
    message pulses, and where no light was expected).
    """
    meas = homodyne_sample(state, 0, np.angle(alpha), rng)
    expected = expected_return_stats(config, alpha)
    mu = np.broadcast_to(expected.mean, meas.shape)
    var = np.broadcast_to(expected.variance, meas.shape)
    tol = config.check_tolerance_sigma
    decoy = labels == DECOY
    verdict = _mean_check(meas[decoy], mu[decoy], var[decoy], tol, "decoy",
                          config.declared_transmissivity)
    if verdict.accepted:
        verdict = _variance_check(meas[decoy], mu[decoy], var[decoy], tol, "decoy")
    m_hat = np.full(meas.shape, np.nan)
    msg = labels == MESSAGE
    with np.errstate(divide="ignore", invalid="ignore"):
        m_hat[msg] = np.where(mu[msg] != 0.0, (meas[msg] / mu[msg]) ** 2, np.nan)
    return verdict, meas, m_hat


def run_protocol(config: ProtocolConfig) -> Transcript:
    rng = np.random.default_rng(config.seed)
    n = config.n
    nan = np.full(n, np.nan)
    labels = np.full(n, UNUSED, dtype=np.int8)
    m_true, alice_meas, bob_meas, eve_bwd, m_decoded = (nan.copy() for _ in range(5))

    train = bob_prepare(config, rng)
    fwd, tap_f = transmit(train.state, config.channel, FORWARD)
    eve_fwd = homodyne_sample(tap_f.tapped_state, 0, 0.0, rng)

    verdict, control, meas = alice_select_and_check(train, fwd, config, rng)
    labels[control] = CONTROL
    alice_meas[control] = meas

    def transcript(v):
        return Transcript(config, train.alpha, train.theta, labels, m_true, alice_meas, bob_meas,
                          eve_fwd, eve_bwd, m_decoded, v)

    if not verdict.accepted:
        return transcript(verdict)

    rest = np.setdiff1d(np.arange(n), control)
    rest_labels = np.full(len(rest), MESSAGE, dtype=np.int8)
    rest_labels[rng.choice(len(rest), size=config.num_decoy, replace=False)] = DECOY
    message = config.message_distribution.sample(rng, int((rest_labels == MESSAGE).sum()))
    labels[rest] = rest_labels
    m_true[rest[rest_labels == MESSAGE]] = message

    encoded = alice_encode(fwd.take(rest), rest_labels, message, config)
    back, tap_b = transmit(encoded, config.channel, BACKWARD)
    eve_bwd[rest] = homodyne_sample(tap_b.tapped_state, 0, 0.0, rng)

    verdict, meas, m_hat = bob_decode(back, train.alpha[rest], rest_labels, config, rng)
    bob_meas[rest] = meas
    if verdict.accepted:
        m_decoded[rest] = m_hat
    return transcript(verdict)


# -- readings used by the security analysis ---------------------------------


def eve_estimate(transcript: Transcript) -> list[tuple[int, float]]:
    """Eve's passive estimate of each message value from her two taps.

    ``m_E = ((y_bwd / g_bwd) / (y_fwd / g_fwd))**2`` with her known gains,
    measuring along ``x`` whatever Bob's phases are.  When either gain is
    zero (``eta_E`` of 0 or 1) one tap holds only vacuum and the estimate
    is ``nan``.
    """
    idx = transcript.indices(MESSAGE)
    g_f, g_b = eve_gains(transcript.config)
    if g_f == 0.0 or g_b == 0.0:
        return [(int(i), math.nan) for i in idx]
    with np.errstate(divide="ignore", invalid="ignore"):
        est = ((transcript.eve_bwd_meas[idx] * g_f) / (transcript.eve_fwd_meas[idx] * g_b)) ** 2
    return [(int(i), float(v)) for i, v in zip(idx, est)]


def message_signal(transcript: Transcript) -> np.ndarray:
    """True encoded amplitude ``x sqrt(m_A)`` of each message pulse, ``x = sqrt(2)|alpha|``."""
    idx = transcript.indices(MESSAGE)
    return np.sqrt(2.0) * transcript.amplitude[idx] * np.sqrt(transcript.m_true[idx])


def bob_signal_readings(transcript: Transcript) -> np.ndarray:
    """Bob's reading of ``x sqrt(m_A)`` per message pulse: outcome over his expected gain.

    ``nan`` where the declared channel predicts no light at all.
    """
    idx = transcript.indices(MESSAGE)
    alpha = transcript.alpha[idx]
    mu = np.broadcast_to(expected_return_stats(transcript.config, alpha).mean, idx.shape)
    x = np.sqrt(2.0) * np.abs(alpha)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(mu != 0.0, transcript.bob_meas[idx] * x / mu, np.nan)


def eve_signal_readings(transcript: Transcript) -> tuple[np.ndarray, float]:
    """Eve's backward-tap outcomes on message pulses and her gain on ``x sqrt(m_A)``."""
    idx = transcript.indices(MESSAGE)
    _, g_b = eve_gains(transcript.config)
    return transcript.eve_bwd_meas[idx], g_b


def quantize_message(values, bits: int, low: float = 0.1, high: float = 1.0) -> np.ndarray:
    """Map decoded values onto the nearest of ``2**bits`` evenly spaced attenuation levels.

    The levels span ``[low, high]``; ``nan`` stays ``nan``.
    """
    if bits < 1:
        raise ValueError("bits must be at least 1")
    if not high > low:
        raise ValueError("need high > low")
    levels = np.linspace(low, high, 2 ** bits)
    values = np.asarray(values, dtype=float)
    idx = np.clip(np.rint((values - low) / (levels[1] - levels[0])), 0, len(levels) - 1)
    out = np.full(values.shape, np.nan)
    ok = ~np.isnan(values)
    out[ok] = levels[idx[ok].astype(int)]
    return out
