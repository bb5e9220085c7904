"""Protocol configuration and its flat ``key=value`` file format.

Keys are written one per line; channel parameters carry a ``channel.``
prefix (``channel.eta_L=0.9``).  Blank lines and lines starting with ``#``
are ignored.  The same format is used for transcript headers.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .channel import ChannelParams
from .distributions import Distribution, Uniform, parse_distribution
from .gaussian import db_to_z

VARIANTS = ("asymmetric", "symmetric")
PHASE_MODES = ("locked", "random")
DB_CONVENTIONS = ("power", "amplitude")


class ConfigError(ValueError):
    """Malformed configuration text or an invalid parameter value."""


@dataclass(frozen=True)
class ProtocolConfig:
    """Every free parameter of one protocol run.

    ``declared_eta`` is the per-direction transmissivity Alice and Bob
    believe the channel has.  ``None`` means they only budget for the fiber
    (``channel.eta_L``), so any tap shows up as unexplained loss; a sweep
    sets it to ``eta_E * eta_L`` to model an eavesdropper hidden inside a
    loosely characterized loss budget.
    """

    variant: str = "asymmetric"
    n: int = 1000
    control_fraction: float = 0.1
    decoy_fraction: float = 0.1
    squeezing_db: float = -1.0
    db_convention: str = "power"
    phase_mode: str = "locked"
    x_distribution: Distribution = field(default_factory=lambda: Uniform(1.0, 10.0))
    message_distribution: Distribution = field(default_factory=lambda: Uniform(0.1, 1.0))
    channel: ChannelParams = field(default_factory=ChannelParams)
    declared_eta: float | None = None
    coupler_eta: float = 0.99
    check_tolerance_sigma: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.phase_mode not in PHASE_MODES:
            raise ConfigError(f"phase_mode must be one of {PHASE_MODES}, got {self.phase_mode!r}")
        if self.db_convention not in DB_CONVENTIONS:
            raise ConfigError(f"db_convention must be one of {DB_CONVENTIONS}")
        if self.n < 10:
            raise ConfigError("n must be at least 10")
        for name in ("control_fraction", "decoy_fraction"):
            val = getattr(self, name)
            if not 0.0 < val < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1)")
        if self.control_fraction + self.decoy_fraction >= 1.0:
            raise ConfigError("control_fraction + decoy_fraction must be < 1")
        if self.num_control + self.num_decoy >= self.n:
            raise ConfigError("no pulses left for the message")
        if self.squeezing_db > 0.0:
            raise ConfigError("squeezing_db must be <= 0")
        if self.declared_eta is not None and not 0.0 <= self.declared_eta <= 1.0:
            raise ConfigError("declared_eta must lie in [0, 1]")
        if not 0.0 <= self.coupler_eta <= 1.0:
            raise ConfigError("coupler_eta must lie in [0, 1]")
        if not self.check_tolerance_sigma > 0.0:
            raise ConfigError("check_tolerance_sigma must be positive")
        lo, hi = self.message_distribution.support
        if not (0.0 < lo and hi <= 1.0):
            raise ConfigError("message values must lie in (0, 1]")
        if self.x_distribution.support[0] < 0.0:
            raise ConfigError("pulse amplitudes |alpha| must be non-negative")

    @property
    def z(self) -> float:
        return db_to_z(self.squeezing_db, self.db_convention)

    @property
    def num_control(self) -> int:
        return math.ceil(self.control_fraction * self.n)

    @property
    def num_decoy(self) -> int:
        return math.ceil(self.decoy_fraction * self.n)

    @property
    def declared_transmissivity(self) -> float:
        return self.channel.eta_L if self.declared_eta is None else self.declared_eta

    def replace(self, **changes) -> "ProtocolConfig":
        """Copy with fields replaced; ``channel_<name>`` keys update the channel."""
        chan = {k[len("channel_"):]: changes.pop(k) for k in list(changes) if k.startswith("channel_")}
        if chan:
            changes["channel"] = dataclasses.replace(changes.get("channel", self.channel), **chan)
        return dataclasses.replace(self, **changes)

    # -- text form ----------------------------------------------------------

    def to_pairs(self) -> list[tuple[str, str]]:
        pairs = []
        for f in dataclasses.fields(self):
            val = getattr(self, f.name)
            if f.name == "channel":
                for cf in dataclasses.fields(val):
                    pairs.append((f"channel.{cf.name}", _fmt(getattr(val, cf.name))))
            else:
                pairs.append((f.name, _fmt(val)))
        return pairs

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.to_pairs())

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]], base: "ProtocolConfig | None" = None) -> "ProtocolConfig":
        base = base or cls()
        top = {f.name: f for f in dataclasses.fields(cls)}
        chan_fields = {f.name: f for f in dataclasses.fields(ChannelParams)}
        changes: dict = {}
        chan_changes: dict = {}
        for key, raw in pairs:
            key = key.strip()
            raw = raw.strip()
            if key.startswith("channel."):
                name = key[len("channel."):]
                if name not in chan_fields:
                    raise ConfigError(f"unknown channel key {key!r}")
                chan_changes[name] = _parse_value(name, raw, getattr(base.channel, name))
            elif key in top and key != "channel":
                changes[key] = _parse_value(key, raw, getattr(base, key))
            else:
                raise ConfigError(f"unknown config key {key!r}")
        try:
            if chan_changes:
                changes["channel"] = dataclasses.replace(base.channel, **chan_changes)
            return dataclasses.replace(base, **changes)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_text(cls, text: str, base: "ProtocolConfig | None" = None) -> "ProtocolConfig":
        return cls.from_pairs(parse_pairs(text.splitlines()), base)


def parse_pairs(lines: Iterable[str]) -> list[tuple[str, str]]:
    pairs = []
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        pairs.append((key, val))
    return pairs


def load_config(path: str | Path, overrides: Iterable[str] = (),
                base: ProtocolConfig | None = None) -> ProtocolConfig:
    """Read a config file (``None`` path means defaults) and apply ``k=v`` overrides."""
    cfg = base or ProtocolConfig()
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        cfg = ProtocolConfig.from_text(text, cfg)
    if overrides:
        cfg = ProtocolConfig.from_pairs(parse_pairs(overrides), cfg)
    return cfg


def _fmt(val) -> str:
    if val is None:
        return "none"
    if isinstance(val, bool):
        return str(val).lower()
    if isinstance(val, float):
        return repr(val)
    return str(val)


def _parse_value(name: str, raw: str, current):
    try:
        if name == "declared_eta":
            return None if raw.lower() in ("none", "") else float(raw)
        if isinstance(current, Distribution):
            return parse_distribution(raw)
        if isinstance(current, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r} ({exc})") from exc
