"""Command-line front end.

Commands
--------
run       one protocol run; writes the transcript, exit 2 if it aborts
sweep     one secrecy curve (analytic or Monte-Carlo) as CSV
figure3   the three variant comparisons (coherent vs -3 dB) as CSV tables
figure4   asymmetric curves at 0, -1, -5 and -10 dB as a CSV table
compare   analytic curves against a measured curve in the same CSV schema

Exit codes: 0 success, 1 usage or config error, 2 protocol abort,
3 comparison outside tolerance.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ConfigError, ProtocolConfig, load_config
from .protocol import MESSAGE, eve_estimate, run_protocol
from .security import (
    ANALYTIC,
    MONTE_CARLO,
    SWEEP_VARIANTS,
    analytic_point,
    curves_from_csv,
    curves_to_csv,
    sweep,
    variant_config,
)

EXIT_OK, EXIT_USAGE, EXIT_ABORT, EXIT_COMPARE = 0, 1, 2, 3
COMMANDS = ("run", "sweep", "figure3", "figure4", "compare")
FIGURE_MC_PULSES = 100_000
FIGURE3_DB = (0.0, -3.0)
FIGURE4_DB = (0.0, -1.0, -5.0, -10.0)
COMPARE_DB = -1.0


@dataclass
class RunSpec:
    command: str
    config_path: str | None = None
    overrides: list[str] = field(default_factory=list)
    output_path: str | None = None
    seed: int | None = None
    input_path: str | None = None
    grid: int = 101
    raw_log: bool = False
    tolerance_pct: float = 5.0
    abs_floor: float = 0.0
    workers: int = 1
    variant: str = "asymmetric"
    mode: str = ANALYTIC

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.grid < 2:
            raise ConfigError("--grid needs at least 2 points")
        if self.workers < 1:
            raise ConfigError("--workers must be positive")

    def load(self, base: ProtocolConfig | None = None) -> ProtocolConfig:
        cfg = load_config(self.config_path, self.overrides, base)
        return cfg if self.seed is None else cfg.replace(seed=self.seed)

    @property
    def eta_grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.grid)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", dest="config_path", metavar="PATH", help="key=value config file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", dest="output_path", metavar="PATH", help="output file or directory")

    curves = argparse.ArgumentParser(add_help=False)
    curves.add_argument("--grid", type=int, default=101, help="number of eta_E points in [0, 1]")
    curves.add_argument("--raw-log", action="store_true", help="use log2(S/N) instead of log2(1 + S/N)")
    curves.add_argument("--workers", type=int, default=1, help="processes for Monte-Carlo points")

    parser = _Parser(prog="cvqsdc", description="Continuous-variable QSDC simulator.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("run", parents=[common], help="run the protocol once")
    p = sub.add_parser("sweep", parents=[common, curves], help="one secrecy curve")
    p.add_argument("--variant", choices=SWEEP_VARIANTS, default="asymmetric")
    p.add_argument("--mode", choices=(ANALYTIC, MONTE_CARLO), default=ANALYTIC)
    sub.add_parser("figure3", parents=[common, curves], help="variant comparison tables")
    sub.add_parser("figure4", parents=[common, curves], help="squeezing-level comparison table")
    p = sub.add_parser("compare", parents=[common], help="analytic curves vs a measured CSV")
    p.add_argument("input_path", metavar="MEASURED_CSV")
    p.add_argument("--tolerance", dest="tolerance_pct", type=float, default=5.0, metavar="PCT",
                   help="allowed relative deviation in percent")
    p.add_argument("--abs-floor", type=float, default=0.0, metavar="BITS",
                   help="deviations are relative to max(|model|, floor)")
    p.add_argument("--raw-log", action="store_true")
    return parser


def write_atomic(path: str | Path, text: str) -> None:
    """Write via a temporary file in the same directory, renamed on success."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _emit(spec: RunSpec, text: str) -> None:
    if spec.output_path in (None, "-"):
        sys.stdout.write(text)
    else:
        write_atomic(spec.output_path, text)


def _config_metadata(cfg: ProtocolConfig, **extra) -> dict:
    meta = {f"config.{k}": v for k, v in cfg.to_pairs()}
    meta.update({k: str(v).lower() if isinstance(v, bool) else v for k, v in extra.items()})
    return meta


# -- commands -----------------------------------------------------------------


def cmd_run(spec: RunSpec) -> int:
    cfg = spec.load()
    tr = run_protocol(cfg)
    if spec.output_path is not None:
        _emit(spec, tr.to_text())
    out = sys.stderr if spec.output_path == "-" else sys.stdout
    print(f"verdict={tr.verdict}", file=out)
    if tr.accepted:
        idx = tr.indices(MESSAGE)
        decoded = tr.m_decoded[idx]
        ok = ~np.isnan(decoded)
        mse = float(np.mean((decoded[ok] - tr.m_true[idx][ok]) ** 2)) if ok.any() else math.nan
        eve = np.array([v for _, v in eve_estimate(tr)])
        eve_ok = ~np.isnan(eve)
        eve_mse = float(np.mean((eve[eve_ok] - tr.m_true[idx][eve_ok]) ** 2)) if eve_ok.any() else math.nan
        print(f"message_pulses={len(idx)} decoy_pulses={len(tr.indices(1))} "
              f"control_pulses={len(tr.indices(0))}", file=out)
        print(f"bob_decode_mse={mse:.6g} eve_estimate_mse={eve_mse:.6g}", file=out)
        return EXIT_OK
    return EXIT_ABORT


def cmd_sweep(spec: RunSpec) -> int:
    cfg = spec.load()
    curve = sweep(spec.variant, spec.eta_grid, cfg, spec.mode, raw_log=spec.raw_log, workers=spec.workers)
    curve.metadata = _config_metadata(cfg, variant=spec.variant, mode=spec.mode, grid=spec.grid,
                                      raw_log=spec.raw_log)
    _emit(spec, curve.to_csv())
    return EXIT_OK


def _figure3_tables(spec: RunSpec, cfg: ProtocolConfig) -> dict[str, str]:
    grid = spec.eta_grid
    panels = {"fig3a.csv": ("asymmetric", True), "fig3b.csv": ("symmetric", True),
              "fig3c.csv": ("symmetric_random_phase", False)}
    tables = {}
    for name, (variant, with_analytic) in panels.items():
        curves = []
        if with_analytic:
            curves += [sweep(variant, grid, cfg.replace(squeezing_db=db), ANALYTIC, raw_log=spec.raw_log)
                       for db in FIGURE3_DB]
        curves += [sweep(variant, grid, cfg.replace(squeezing_db=db), MONTE_CARLO, workers=spec.workers)
                   for db in FIGURE3_DB]
        meta = _config_metadata(cfg, panel=name[4], variant=variant, grid=spec.grid, raw_log=spec.raw_log)
        tables[name] = curves_to_csv(curves, meta)
    return tables


def cmd_figure3(spec: RunSpec) -> int:
    cfg = spec.load(ProtocolConfig(n=FIGURE_MC_PULSES))
    out = Path(spec.output_path or ".")
    if out.exists() and not out.is_dir():
        raise ConfigError(f"--out {out} is not a directory")
    tables = _figure3_tables(spec, cfg)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in tables.items():
        write_atomic(out / name, text)
        print(f"wrote {out / name}")
    return EXIT_OK


def cmd_figure4(spec: RunSpec) -> int:
    cfg = spec.load()
    curves = [sweep("asymmetric", spec.eta_grid, cfg.replace(squeezing_db=db), ANALYTIC, raw_log=spec.raw_log)
              for db in FIGURE4_DB]
    meta = _config_metadata(cfg, variant="asymmetric", grid=spec.grid, raw_log=spec.raw_log)
    _emit(spec, curves_to_csv(curves, meta))
    return EXIT_OK


def _deviation(measured: float, model: float, floor: float) -> float:
    if measured == model:
        return 0.0
    scale = max(abs(model), floor)
    return abs(measured - model) / scale if scale > 0.0 else math.inf


def cmd_compare(spec: RunSpec) -> int:
    try:
        curves = curves_from_csv(Path(spec.input_path).read_text())
    except (OSError, UnicodeDecodeError, ValueError) as exc:
        raise ConfigError(f"cannot read measurement {spec.input_path}: {exc}") from exc
    cfg = spec.load()
    tol = spec.tolerance_pct / 100.0
    worst = 0.0
    for curve in curves:
        if curve.variant == "symmetric_random_phase":
            raise ConfigError("no analytic model for the random-phase variant")
        db = COMPARE_DB if curve.squeezing_db is None else curve.squeezing_db
        model_cfg = variant_config(cfg, curve.variant).replace(squeezing_db=db)
        print(f"# {curve.variant} {curve.provenance} squeezing_db={db:g}")
        print("eta_E,I_AB_meas,I_AB_model,I_AB_dev,I_AE_meas,I_AE_model,I_AE_dev,C_s_meas,C_s_model")
        for e, ab, ae, cs in zip(curve.eta_E, curve.I_AB, curve.I_AE, curve.C_s):
            if math.isnan(ab) or math.isnan(ae):
                print(f"{e:.6g},NA,,,NA,,,NA,")
                continue
            m_ab, m_ae = analytic_point(model_cfg, curve.variant, e, raw_log=spec.raw_log)
            d_ab = _deviation(ab, m_ab, spec.abs_floor)
            d_ae = _deviation(ae, m_ae, spec.abs_floor)
            worst = max(worst, d_ab, d_ae)
            print(f"{e:.6g},{ab:.6g},{m_ab:.6g},{d_ab:.3%},{ae:.6g},{m_ae:.6g},{d_ae:.3%},"
                  f"{cs:.6g},{m_ab - m_ae:.6g}")
    passed = worst <= tol
    print(f"max_deviation={worst:.3%} tolerance={tol:.3%} {'PASS' if passed else 'FAIL'}")
    return EXIT_OK if passed else EXIT_COMPARE


HANDLERS = {"run": cmd_run, "sweep": cmd_sweep, "figure3": cmd_figure3, "figure4": cmd_figure4,
            "compare": cmd_compare}


def main(argv: list[str] | None = None) -> int:
    args = vars(build_parser().parse_args(argv))
    try:
        spec = RunSpec(**args)
        return HANDLERS[spec.command](spec)
    except ConfigError as exc:
        print(f"cvqsdc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"cvqsdc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
