"""Mutual informations and secrecy capacity, analytic and simulated.

The analytic signal-to-noise ratios follow the beam-splitter attack model:
the message rides on the mean of Bob's (or Eve's) homodyne outcome, the
noise is the variance of that outcome.  The 0.01/0.99 constants are the
transmissivities of the 99/1 coupler that mixes a pulse with squeezed
vacuum.  Information is ``log2(1 + S/N)``; ``raw_log=True`` gives the bare
``log2(S/N)``, which is negative at low SNR; a party with no signal at all
gets 0 bits in either mode.

Signals are in quadrature units: a pulse of amplitude ``|alpha|`` has
``x = sqrt(2)|alpha|``, so ``Var(x sqrt(m_A)) = 2 Var(|alpha| sqrt(m_A))``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .config import ProtocolConfig
from .distributions import Distribution
from .protocol import (
    Transcript,
    bob_signal_readings,
    eve_signal_readings,
    message_signal,
    run_protocol,
)

BOB, EVE = "bob", "eve"
ANALYTIC, MONTE_CARLO = "analytic", "monte_carlo"
SWEEP_VARIANTS = ("asymmetric", "symmetric", "symmetric_random_phase")
INFO_CAP_BITS = 30.0
COUPLER_LEAK = 0.01
COUPLER_PASS = 0.99
CSV_HEADER = "eta_E,I_AB_bits,I_AE_bits,C_s_bits,provenance,variant"
TABLE_HEADER = CSV_HEADER + ",squeezing_db"


@dataclass(frozen=True)
class AnalyticParams:
    """Inputs of the closed-form mutual informations.

    Attributes
    ----------
    eta_E, eta_L : float
        Eve's beam-splitter and fiber transmissivities, in [0, 1].
    z : float
        Squeezing parameter in (0, 1]; 1 means no squeezing.
    var_x_sqrt_m : float
        ``Var(x sqrt(m_A))`` with ``x`` the initial x-quadrature.
    var_m : float
        ``Var(m_A)``.
    mean_m : float, optional
        ``E[m_A]``, only needed for ``m_moment="mean"`` in the symmetric case.
    """

    eta_E: float
    eta_L: float
    z: float
    var_x_sqrt_m: float
    var_m: float
    mean_m: float | None = None

    def __post_init__(self):
        for name in ("eta_E", "eta_L"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0.0 < self.z <= 1.0:
            raise ValueError("z must lie in (0, 1]")
        if self.var_x_sqrt_m < 0.0 or self.var_m < 0.0:
            raise ValueError("variances must be non-negative")

    def replace(self, **changes) -> "AnalyticParams":
        return AnalyticParams(**{**self.__dict__, **changes})


def variance_of_product(x_dist: Distribution, m_dist: Distribution) -> float:
    """``Var(x sqrt(m))`` for independent ``x`` and ``m``.

    Uses ``E[x^2] E[m] - (E[x] E[sqrt m])^2``; the moments come in closed
    form for the built-in distributions and by quadrature otherwise.
    """
    val = x_dist.second_moment() * m_dist.mean() - (x_dist.mean() * m_dist.mean_sqrt()) ** 2
    return max(val, 0.0)


def analytic_params(config: ProtocolConfig, eta_E: float | None = None) -> AnalyticParams:
    """Analytic inputs matching a protocol configuration (``eta_E`` overrides the channel's)."""
    m = config.message_distribution
    return AnalyticParams(
        eta_E=config.channel.eta_E if eta_E is None else float(eta_E),
        eta_L=config.channel.eta_L,
        z=config.z,
        var_x_sqrt_m=2.0 * variance_of_product(config.x_distribution, m),
        var_m=m.variance(),
        mean_m=m.mean(),
    )


def shannon_hartley(signal: float, noise: float) -> float:
    if not noise > 0.0:
        raise ValueError("noise must be positive")
    if signal < 0.0:
        raise ValueError("signal must be non-negative")
    return math.log2(1.0 + signal / noise)


def _info(signal: float, noise: float, raw_log: bool) -> float:
    if raw_log:
        if not noise > 0.0:
            raise ValueError("noise must be positive")
        return math.log2(signal / noise) if signal > 0.0 else 0.0
    return shannon_hartley(signal, noise)


def _check_party(party):
    if party not in (BOB, EVE):
        raise ValueError(f"party must be {BOB!r} or {EVE!r}, got {party!r}")


def asym_snr(params: AnalyticParams, party: str) -> tuple[float, float]:
    """Signal and noise when Alice squeezes (along ``x``) after encoding."""
    _check_party(party)
    p = params
    squeeze = COUPLER_PASS * (1.0 - p.z ** 2)
    if party == BOB:
        signal = COUPLER_LEAK * p.eta_E ** 2 * p.eta_L ** 2 * p.var_x_sqrt_m
        noise = 0.5 * (1.0 - p.eta_E * p.eta_L * squeeze)
    else:
        signal = COUPLER_LEAK * p.eta_E * (1.0 - p.eta_E) * p.eta_L ** 2 * p.var_x_sqrt_m
        noise = 0.5 * (1.0 - (1.0 - p.eta_E) * p.eta_L * squeeze)
    return signal, noise


def sym_snr(params: AnalyticParams, party: str, m_moment: str = "variance") -> tuple[float, float]:
    """Signal and noise when Bob squeezes each pulse before sending it.

    The squeezed noise reaching a detector scales with the power of the
    pulse that carried it, hence the ``m_A`` moment in the denominator.
    ``m_moment="variance"`` uses ``Var(m_A)`` as in the standard formula;
    ``"mean"`` uses ``E[m_A]``, the average noise seen in simulation.
    Eve's signal carries ``eta_E (1 - eta_E)``, her share of the round trip.
    """
    _check_party(party)
    p = params
    if m_moment == "variance":
        mom = p.var_m
    elif m_moment == "mean":
        if p.mean_m is None:
            raise ValueError("m_moment='mean' needs AnalyticParams.mean_m")
        mom = p.mean_m
    else:
        raise ValueError(f"m_moment must be 'variance' or 'mean', got {m_moment!r}")
    share = p.eta_E ** 2 if party == BOB else p.eta_E * (1.0 - p.eta_E)
    signal = COUPLER_LEAK * share * p.eta_L ** 2 * p.var_x_sqrt_m
    reduction = COUPLER_PASS * share * p.eta_L ** 2 * mom * (1.0 - p.z ** 2)
    if reduction >= 1.0:
        raise ValueError("squeezed noise term would make the noise non-positive")
    return signal, 0.5 * (1.0 - reduction)


def mutual_info_asym(params: AnalyticParams, party: str, *, raw_log: bool = False) -> float:
    """Bits per message pulse learned by ``party``, asymmetric variant."""
    return _info(*asym_snr(params, party), raw_log)


def mutual_info_sym(params: AnalyticParams, party: str, *, raw_log: bool = False,
                    m_moment: str = "variance") -> float:
    """Bits per message pulse learned by ``party``, symmetric (phase-locked) variant."""
    return _info(*sym_snr(params, party, m_moment), raw_log)


def secrecy_capacity(I_AB: float, I_AE: float, *, clip: bool = False) -> float:
    """``I_AB - I_AE``; signed unless ``clip``, which floors it at zero.

    The floor is the capacity proper: maximizing over input distributions
    includes sending nothing, which achieves zero.
    """
    cs = I_AB - I_AE
    return max(cs, 0.0) if clip else cs


# -- discrete information theory ---------------------------------------------


def _as_distribution(p, tol=1e-9) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.size == 0 or np.any(p < 0.0) or not np.all(np.isfinite(p)):
        raise ValueError("probabilities must be finite and non-negative")
    if abs(p.sum() - 1.0) > tol:
        raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
    return p


def _entropy(p: np.ndarray) -> float:
    nz = p[p > 0.0]
    return float(-np.sum(nz * np.log2(nz)))


def discrete_entropy(p) -> float:
    """Shannon entropy in bits of a probability vector (or table, flattened)."""
    return _entropy(_as_distribution(p).ravel())


def conditional_entropy(joint) -> float:
    """``H(X|Y)`` for a joint table indexed ``joint[x, y]``."""
    joint = _as_distribution(joint)
    if joint.ndim != 2:
        raise ValueError("joint distribution must be a 2-D table")
    return _entropy(joint.ravel()) - _entropy(joint.sum(axis=0))


def discrete_mutual_info(joint) -> float:
    """``I(X;Y) = H(X) + H(Y) - H(X,Y)`` for a joint table ``joint[x, y]``."""
    joint = _as_distribution(joint)
    if joint.ndim != 2:
        raise ValueError("joint distribution must be a 2-D table")
    val = _entropy(joint.sum(axis=1)) + _entropy(joint.sum(axis=0)) - _entropy(joint.ravel())
    return max(val, 0.0)


# -- Monte-Carlo estimate -----------------------------------------------------


def _party_estimates(tr: Transcript, party: str) -> tuple[np.ndarray, np.ndarray | None]:
    """True signal ``x sqrt(m_A)`` and the party's reading of it (``None`` if blind)."""
    s = message_signal(tr)
    if party == BOB:
        est = bob_signal_readings(tr)
        return s, None if np.all(np.isnan(est)) else est
    y, gain = eve_signal_readings(tr)
    if gain == 0.0:
        return s, None
    if tr.config.phase_mode == "locked":
        return s, y / gain
    # Bob's phases are hidden from Eve, so she calibrates her tap on the
    # message itself: fit y = a s + b and invert it.
    a, b = np.polyfit(s, y, 1)
    return s, (y - b) / a if a != 0.0 else None


def monte_carlo_mutual_info(transcripts: Iterable[Transcript], party: str, *,
                            cap: float = INFO_CAP_BITS) -> float:
    """Mutual information estimated from the reading error on message pulses.

    Each party reads the encoded amplitude ``s = x sqrt(m_A)`` of every
    message pulse from its homodyne outcome.  With ``eps^2`` the mean-square
    reading error divided by ``Var(s)``, the estimate is
    ``log2(1 + 1 / eps^2)``, capped at ``cap`` bits.  A party whose
    expected signal is identically zero learns nothing.

    Parameters
    ----------
    transcripts : iterable of Transcript
        Aborted transcripts are skipped.
    party : {"bob", "eve"}
    cap : float
        Value returned when the reading error vanishes.
    """
    _check_party(party)
    signals, errors = [], []
    blind = False
    for tr in transcripts:
        if not tr.accepted or not len(tr.indices(2)):
            continue
        s, est = _party_estimates(tr, party)
        signals.append(s)
        if est is None:
            blind = True
        else:
            errors.append(est - s)
    if not signals:
        raise ValueError("no accepted transcript carries message pulses")
    if blind:
        return 0.0
    s = np.concatenate(signals)
    mse = float(np.mean(np.concatenate(errors) ** 2))
    var = float(np.var(s))
    if mse == 0.0:
        return cap
    if var == 0.0:
        return 0.0
    return min(cap, math.log2(1.0 + var / mse))


# -- curves -------------------------------------------------------------------


def _fmt6(v: float) -> str:
    return "NA" if math.isnan(v) else f"{v:.6g}"


def _parse6(s: str) -> float:
    return math.nan if s == "NA" else float(s)


@dataclass(eq=False)
class SecrecyCurve:
    """Mutual informations and secrecy capacity over an ``eta_E`` grid.

    Rows where a simulated run aborted hold ``nan`` (written ``NA``);
    ``aborted`` flags them.  ``C_s`` is the signed difference.
    """

    eta_E: np.ndarray
    I_AB: np.ndarray
    I_AE: np.ndarray
    C_s: np.ndarray
    provenance: str
    variant: str
    squeezing_db: float | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.eta_E, self.I_AB, self.I_AE, self.C_s = (
            np.asarray(a, dtype=float) for a in (self.eta_E, self.I_AB, self.I_AE, self.C_s))
        n = len(self.eta_E)
        if any(len(a) != n for a in (self.I_AB, self.I_AE, self.C_s)):
            raise ValueError("curve columns differ in length")
        if np.any(np.diff(self.eta_E) <= 0.0):
            raise ValueError("eta_E grid must be strictly increasing")
        if self.provenance not in (ANALYTIC, MONTE_CARLO):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.variant not in SWEEP_VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        diff = self.I_AB - self.I_AE
        finite = np.isfinite(diff)
        if not np.allclose(self.C_s[finite], diff[finite], rtol=1e-5, atol=2e-6):
            raise ValueError("C_s must equal I_AB - I_AE row-wise")

    @classmethod
    def from_values(cls, eta_E, I_AB, I_AE, provenance, variant, squeezing_db=None, metadata=None):
        I_AB = np.asarray(I_AB, dtype=float)
        I_AE = np.asarray(I_AE, dtype=float)
        return cls(eta_E, I_AB, I_AE, I_AB - I_AE, provenance, variant, squeezing_db, dict(metadata or {}))

    @property
    def aborted(self) -> np.ndarray:
        return np.isnan(self.I_AB) | np.isnan(self.I_AE)

    @property
    def C_s_clipped(self) -> np.ndarray:
        return np.maximum(self.C_s, 0.0)

    def _rows(self, with_db: bool) -> list[str]:
        rows = []
        for e, ab, ae, cs in zip(self.eta_E, self.I_AB, self.I_AE, self.C_s):
            row = f"{_fmt6(e)},{_fmt6(ab)},{_fmt6(ae)},{_fmt6(cs)},{self.provenance},{self.variant}"
            if with_db:
                row += "," + _fmt6(self.squeezing_db if self.squeezing_db is not None else math.nan)
            rows.append(row)
        return rows

    def to_csv(self) -> str:
        lines = [f"# {k}={v}" for k, v in self.metadata.items()]
        lines.append(CSV_HEADER)
        lines += self._rows(False)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "SecrecyCurve":
        curves = curves_from_csv(text)
        if len(curves) != 1:
            raise ValueError(f"expected one curve, found {len(curves)}")
        return curves[0]


def curves_to_csv(curves: Sequence[SecrecyCurve], metadata: dict | None = None) -> str:
    """Several series in one table, distinguished by the ``squeezing_db`` column."""
    lines = [f"# {k}={v}" for k, v in (metadata or {}).items()]
    lines.append(TABLE_HEADER)
    for c in curves:
        lines += c._rows(True)
    return "\n".join(lines) + "\n"


def curves_from_csv(text: str) -> list[SecrecyCurve]:
    """Parse a curve file; rows are grouped by (provenance, variant, squeezing_db)."""
    metadata = {}
    header = None
    groups: dict[tuple, list] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            key, sep, val = line[1:].strip().partition("=")
            if sep and header is None:
                metadata[key] = val
            continue
        if header is None:
            if line not in (CSV_HEADER, TABLE_HEADER):
                raise ValueError(f"unexpected CSV header {line!r}")
            header = line
            continue
        fields = line.split(",")
        if len(fields) != len(header.split(",")):
            raise ValueError(f"line {lineno}: expected {len(header.split(','))} fields")
        try:
            nums = [_parse6(f) for f in fields[:4]]
            db = _parse6(fields[6]) if len(fields) == 7 else None
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        key = (fields[4], fields[5], None if db is None or math.isnan(db) else db)
        groups.setdefault(key, []).append(nums)
    if header is None:
        raise ValueError("missing CSV header")
    curves = []
    for (prov, variant, db), rows in groups.items():
        arr = np.array(rows, dtype=float)
        curves.append(SecrecyCurve(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], prov, variant, db,
                                   dict(metadata)))
    return curves


# -- sweeps -------------------------------------------------------------------


def variant_config(base: ProtocolConfig, variant: str) -> ProtocolConfig:
    """Map a sweep variant name onto protocol settings."""
    if variant == "asymmetric":
        return base.replace(variant="asymmetric")
    if variant == "symmetric":
        return base.replace(variant="symmetric")
    if variant == "symmetric_random_phase":
        return base.replace(variant="symmetric", phase_mode="random")
    raise ValueError(f"variant must be one of {SWEEP_VARIANTS}, got {variant!r}")


def analytic_point(config: ProtocolConfig, variant: str, eta_E: float, *, raw_log: bool = False,
                   m_moment: str = "variance") -> tuple[float, float]:
    params = analytic_params(config, eta_E)
    if variant == "asymmetric":
        return (mutual_info_asym(params, BOB, raw_log=raw_log),
                mutual_info_asym(params, EVE, raw_log=raw_log))
    if variant == "symmetric":
        return (mutual_info_sym(params, BOB, raw_log=raw_log, m_moment=m_moment),
                mutual_info_sym(params, EVE, raw_log=raw_log, m_moment=m_moment))
    raise ValueError(f"no closed form for variant {variant!r}")


def point_config(base: ProtocolConfig, eta_E: float, seed: int, index: int) -> ProtocolConfig:
    """Config of one Monte-Carlo grid point.

    Alice and Bob budget for the total per-direction loss ``eta_E eta_L``,
    so the tap is hidden from their checks and the run completes.
    """
    point_seed = int(np.random.SeedSequence([seed, index]).generate_state(1)[0])
    return base.replace(channel_eta_E=float(eta_E), declared_eta=float(eta_E) * base.channel.eta_L,
                        seed=point_seed)


def _mc_point(config: ProtocolConfig) -> tuple[float, float]:
    tr = run_protocol(config)
    if not tr.accepted:
        return math.nan, math.nan
    return monte_carlo_mutual_info([tr], BOB), monte_carlo_mutual_info([tr], EVE)


def sweep(variant: str, grid: Sequence[float], base: ProtocolConfig | None = None,
          mode: str = ANALYTIC, *, seed: int | None = None, raw_log: bool = False,
          m_moment: str = "variance", workers: int = 1) -> SecrecyCurve:
    """Evaluate ``I_AB``, ``I_AE`` and ``C_s`` at each ``eta_E`` in ``grid``.

    Parameters
    ----------
    variant : {"asymmetric", "symmetric", "symmetric_random_phase"}
        The random-phase variant has no closed form and needs
        ``mode="monte_carlo"``.
    grid : sequence of float
        Strictly increasing values in [0, 1].
    base : ProtocolConfig
        Supplies ``eta_L``, squeezing, distributions and pulse count.
    mode : {"analytic", "monte_carlo"}
    seed : int, optional
        Master seed for Monte-Carlo points (default ``base.seed``); point
        ``i`` runs with a seed derived from ``(seed, i)``, so the curve does
        not depend on ``workers``.
    raw_log, m_moment
        Passed to the closed forms.
    workers : int
        Worker processes for Monte-Carlo points.
    """
    base = base or ProtocolConfig()
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or np.any((grid < 0.0) | (grid > 1.0)):
        raise ValueError("grid must be a 1-D sequence in [0, 1]")
    cfg = variant_config(base, variant)
    meta = {"variant": variant, "mode": mode}
    if mode == ANALYTIC:
        vals = [analytic_point(cfg, cfg.variant if variant != "symmetric_random_phase" else variant,
                               e, raw_log=raw_log, m_moment=m_moment) for e in grid]
    elif mode == MONTE_CARLO:
        seed = cfg.seed if seed is None else seed
        configs = [point_config(cfg, e, seed, i) for i, e in enumerate(grid)]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                vals = list(pool.map(_mc_point, configs))
        else:
            vals = [_mc_point(c) for c in configs]
        meta["seed"] = seed
    else:
        raise ValueError(f"mode must be {ANALYTIC!r} or {MONTE_CARLO!r}")
    I_AB, I_AE = (np.array(v, dtype=float) for v in zip(*vals)) if vals else (np.array([]),) * 2
    return SecrecyCurve.from_values(grid, I_AB, I_AE, mode, variant, cfg.squeezing_db, meta)
