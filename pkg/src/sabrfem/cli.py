"""Batch command-line front end: config loading, studies, CSV emission.

Subcommands: price, converge, masszero, validate.  Configurations are flat
INI-style key/value files with section headers; unknown sections or keys are
rejected.  Three presets reproduce the published experiments.  Exit codes:
0 success, 1 validation failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .assembly import DiscretizationSpec
from .mesh import FREE
from .model import ParameterError, SabrParams, check_mu, default_mu, validate_params
from .oracles import (
    ConvergenceReport,
    McConfig,
    black_scholes_price,
    cev_exact_price,
    mc_price,
    spatial_convergence_study,
    temporal_convergence_study,
)
from .pricing import Payoff, default_spec, mass_at_zero, price_european
from .stepping import ThetaConfig

OUTPUT_DIR_ENV = "SABRFEM_OUTPUT_DIR"


@dataclass(frozen=True)
class RunConfig:
    """Fully validated run description assembled from a config file or preset."""

    params: SabrParams
    payoff: Payoff
    T: float
    theta: float = 0.5
    M_steps: int = 256
    R_x: float | None = None       # None: default domain rule
    R_y: float | None = None
    y_center: float | None = None
    L_x: int = 6
    L_y: int = 6
    mu: float | None = None        # None: "auto" = -beta
    base_cells_x: int = 1
    base_cells_y: int = 1
    mc_paths: int = 50_000
    mc_steps: int = 500
    mc_seed: int = 4711
    eps_sequence: tuple = (0.4, 0.2, 0.1, 0.05)
    output_dir: str = "."

    def spec(self) -> DiscretizationSpec:
        base = default_spec(self.params, self.payoff, self.T, self.L_x, self.L_y, mu=self.mu)
        return DiscretizationSpec(
            R_x=self.R_x if self.R_x is not None else base.R_x,
            R_y=self.R_y if self.R_y is not None else base.R_y,
            L_x=self.L_x,
            L_y=self.L_y,
            mu=self.mu if self.mu is not None else base.mu,
            bc_x0=FREE,
            y_center=self.y_center if self.y_center is not None else base.y_center,
            base_cells_x=self.base_cells_x,
            base_cells_y=self.base_cells_y,
        )

    def theta_config(self) -> ThetaConfig:
        return ThetaConfig(self.theta, self.T, self.M_steps)

    def mc_config(self) -> McConfig:
        return McConfig(n_paths=self.mc_paths, n_steps=self.mc_steps, seed=self.mc_seed)


# the three published experiments; mass-at-zero horizon is T=10
PRESETS = {
    "paper-exp1": RunConfig(
        params=SabrParams(beta=0.2, rho=0.0, nu=1.0, x0=1.0, y0=0.3),
        payoff=Payoff.put(1.0),
        T=25.0,
        M_steps=512,
        theta=1.0,
    ),
    "paper-exp2": RunConfig(
        params=SabrParams(beta=0.5, rho=-0.3, nu=1.0, x0=1.0, y0=0.3),
        payoff=Payoff.put(1.0),
        T=10.0,
        M_steps=256,
        theta=1.0,
    ),
    "paper-exp3": RunConfig(
        params=SabrParams(beta=0.2, rho=0.0, nu=1.0, x0=1.0, y0=0.3),
        payoff=Payoff.mass_zero_put(0.05),
        T=10.0,
        M_steps=256,
        theta=1.0,
    ),
}

_SCHEMA = {
    "model": {"beta", "rho", "nu", "x0", "y0"},
    "payoff": {"kind", "strike", "eps"},
    "discretization": {
        "r_x", "r_y", "y_center", "l_x", "l_y", "mu", "base_cells_x", "base_cells_y"
    },
    "time": {"t", "theta", "m_steps"},
    "oracle": {"n_paths", "n_steps", "seed"},
    "output": {"directory"},
}


class ConfigError(ValueError):
    """A config file failed to parse or validate."""


def _get(parser, section, key, conv, default=None, required=False):
    if not parser.has_option(section, key):
        if required:
            raise ConfigError(f"missing required key '{key}' in section [{section}]")
        return default
    raw = parser.get(section, key).strip()
    if raw.lower() == "auto":
        return None
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"invalid value for '{key}' in [{section}]: {raw!r}") from exc


def load_config(path) -> RunConfig:
    """Parse and validate a flat INI config file into a RunConfig."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    path = Path(path)
    if not path.exists():
        raise OSError(f"config file not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc

    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key in parser.options(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")

    if not parser.has_section("model"):
        raise ConfigError("missing required section [model]")
    try:
        params = SabrParams(
            beta=_get(parser, "model", "beta", float, required=True),
            rho=_get(parser, "model", "rho", float, required=True),
            nu=_get(parser, "model", "nu", float, required=True),
            x0=_get(parser, "model", "x0", float, required=True),
            y0=_get(parser, "model", "y0", float, required=True),
        )
    except ParameterError as exc:
        raise ConfigError(f"invalid [model]: {exc}") from exc

    kind = "put"
    strike = eps = None
    if parser.has_section("payoff"):
        kind = _get(parser, "payoff", "kind", str, default="put")
        strike = _get(parser, "payoff", "strike", float)
        eps = _get(parser, "payoff", "eps", float)
    try:
        if kind in ("call", "put"):
            payoff = Payoff(kind, strike=strike if strike is not None else 1.0)
        elif kind == "mass_zero_put":
            payoff = Payoff.mass_zero_put(eps if eps is not None else 0.05)
        elif kind == "identity":
            payoff = Payoff.identity()
        else:
            raise ConfigError(f"unknown payoff kind {kind!r}")
    except ParameterError as exc:
        raise ConfigError(f"invalid [payoff]: {exc}") from exc

    t_val = 1.0
    theta = 0.5
    m_steps = 256
    if parser.has_section("time"):
        t_val = _get(parser, "time", "t", float, default=1.0)
        theta = _get(parser, "time", "theta", float, default=0.5)
        m_steps = _get(parser, "time", "m_steps", int, default=256)

    mu = None
    kwargs = {}
    if parser.has_section("discretization"):
        mu = _get(parser, "discretization", "mu", float)
        if mu is not None:
            try:
                check_mu(params.beta, mu)
            except ParameterError as exc:
                raise ConfigError(f"invalid [discretization] mu: {exc}") from exc
        kwargs = dict(
            R_x=_get(parser, "discretization", "r_x", float),
            R_y=_get(parser, "discretization", "r_y", float),
            y_center=_get(parser, "discretization", "y_center", float),
            L_x=_get(parser, "discretization", "l_x", int, default=6),
            L_y=_get(parser, "discretization", "l_y", int, default=6),
            base_cells_x=_get(parser, "discretization", "base_cells_x", int, default=1),
            base_cells_y=_get(parser, "discretization", "base_cells_y", int, default=1),
        )

    mc_kwargs = {}
    if parser.has_section("oracle"):
        mc_kwargs = dict(
            mc_paths=_get(parser, "oracle", "n_paths", int, default=50_000),
            mc_steps=_get(parser, "oracle", "n_steps", int, default=500),
            mc_seed=_get(parser, "oracle", "seed", int, default=4711),
        )

    out_dir = "."
    if parser.has_section("output"):
        out_dir = _get(parser, "output", "directory", str, default=".")

    try:
        return RunConfig(
            params=params,
            payoff=payoff,
            T=t_val,
            theta=theta,
            M_steps=m_steps,
            mu=mu,
            output_dir=out_dir,
            **kwargs,
            **mc_kwargs,
        )
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc


def write_csv_report(rows, header, path) -> None:
    """RFC-4180-style CSV: header row, '.' decimals, LF line endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.12g}" if isinstance(v, float) else v for v in row])


def convergence_csv(report: ConvergenceReport, path) -> None:
    keys = list(report.errors)
    header = ["level_or_k"]
    for key in keys:
        header.append(f"error_{key}")
    header.append("fitted_slope")
    slope_join = ";".join(f"{k}={report.slopes[k]:.4g}" for k in keys)
    rows = []
    for i, x in enumerate(report.xs):
        row = [float(x)] + [float(report.errors[k][i]) for k in keys] + [slope_join]
        rows.append(row)
    write_csv_report(rows, header, path)


def _resolve_config(args) -> RunConfig:
    if args.preset:
        cfg = PRESETS[args.preset]
    elif args.config:
        cfg = load_config(args.config)
    else:
        raise ConfigError("either --preset or --config is required")
    if args.output_dir:
        cfg = replace(cfg, output_dir=args.output_dir)
    elif os.environ.get(OUTPUT_DIR_ENV):
        cfg = replace(cfg, output_dir=os.environ[OUTPUT_DIR_ENV])
    return cfg


def _cmd_price(args) -> int:
    cfg = _resolve_config(args)
    surf = price_european(cfg.params, cfg.payoff, cfg.spec(), cfg.theta_config())
    out = Path(cfg.output_dir) / "surface.csv"
    write_csv_report(surf.surface_rows(), ["x", "y", "value"], out)
    print(f"payoff: {cfg.payoff}")
    print(f"point price at (x0={cfg.params.x0}, ln y0={math.log(cfg.params.y0):.4f}): "
          f"{surf.point_price:.8f}")
    print(f"surface written to {out}")
    return 0


def _cmd_converge(args) -> int:
    cfg = _resolve_config(args)
    levels = args.levels or [3, 4, 5]
    out = Path(cfg.output_dir) / f"convergence_{args.mode}.csv"
    if args.mode == "space":
        report = spatial_convergence_study(
            cfg.params, cfg.payoff, levels, cfg.theta_config(), cfg.spec()
        )
    else:
        ms = args.m_steps or [8, 16, 32, 64]
        report = temporal_convergence_study(
            cfg.params, cfg.payoff, cfg.spec(), ms, cfg.theta, cfg.T
        )
    convergence_csv(report, out)
    for key, slope in report.slopes.items():
        print(f"fitted {key}-rate: {slope:.4f}")
    print(f"report written to {out}")
    return 0


def _cmd_masszero(args) -> int:
    cfg = _resolve_config(args)
    if cfg.params.beta >= 1.0:
        print("beta = 1: the forward never hits zero; mass at zero is 0")
        return 0
    result = mass_at_zero(
        cfg.params, cfg.T, cfg.spec(), cfg.theta_config(), cfg.eps_sequence
    )
    out = Path(cfg.output_dir) / "mass_at_zero.csv"
    write_csv_report([tuple(r) for r in result.table], ["eps", "price"], out)
    print(f"mass-at-zero estimate (smallest eps): {result.estimate:.8f}")
    print(f"table written to {out}")
    return 0


def _cmd_validate(args) -> int:
    cfg = _resolve_config(args)
    failures = 0

    def gate(name, ok, detail):
        nonlocal failures
        status = "PASS" if ok else "FAIL"
        if not ok:
            failures += 1
        print(f"[{status}] {name}: {detail}")

    # Black-Scholes limit (nu=0, beta=1)
    p_bs = SabrParams(beta=1.0, rho=0.0, nu=0.0, x0=1.0, y0=0.2)
    spec = default_spec(p_bs, Payoff.put(1.0), T=1.0, L_x=7, L_y=3)
    v = price_european(p_bs, Payoff.put(1.0), spec, ThetaConfig(0.5, 1.0, 128)).point_price
    ref = black_scholes_price(0.2, 1.0, 1.0, 1.0, "put")
    rel = abs(v - ref) / ref
    gate("black-scholes limit", rel < 5e-3, f"fem={v:.6f} exact={ref:.6f} rel={rel:.2e}")

    # CEV limit (nu=0, beta=0.5)
    p_cev = SabrParams(beta=0.5, rho=0.0, nu=0.0, x0=1.0, y0=0.3)
    spec = default_spec(p_cev, Payoff.put(1.0), T=1.0, L_x=7, L_y=3)
    v = price_european(p_cev, Payoff.put(1.0), spec, ThetaConfig(0.5, 1.0, 128)).point_price
    ref = cev_exact_price(0.3, 0.5, 1.0, 1.0, 1.0, "put")
    rel = abs(v - ref) / ref
    gate("cev exact limit", rel < 1e-2, f"fem={v:.6f} exact={ref:.6f} rel={rel:.2e}")

    # Monte Carlo cross-check on the configured model
    mc = mc_price(cfg.params, cfg.payoff, cfg.T, cfg.mc_config())
    surf = price_european(cfg.params, cfg.payoff, cfg.spec(), cfg.theta_config())
    diff = abs(surf.point_price - mc.mean)
    tol = 3.0 * mc.stderr + getattr(args, "mc_slack", 0.0)
    gate(
        "monte carlo cross-check",
        diff <= 3.0 * mc.stderr + args.mc_slack,
        f"fem={surf.point_price:.6f} mc={mc.mean:.6f}+-{mc.stderr:.6f} "
        f"|diff|={diff:.6f} tol={tol:.6f}",
    )
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sabrfem",
        description="Finite element pricing engine for the SABR/CEV models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(sp):
        group = sp.add_mutually_exclusive_group()
        group.add_argument("--preset", choices=sorted(PRESETS), help="named experiment preset")
        group.add_argument("--config", help="path to an INI config file")
        sp.add_argument("--output-dir", help=f"output directory (default: ${OUTPUT_DIR_ENV} or '.')")

    sp = sub.add_parser("price", help="price one contract and emit the surface CSV")
    add_common(sp)
    sp.set_defaults(fn=_cmd_price)

    sp = sub.add_parser("converge", help="run a convergence-rate study")
    add_common(sp)
    sp.add_argument("--mode", choices=["space", "time"], default="space")
    sp.add_argument("--levels", type=int, nargs="+", help="refinement levels (space mode)")
    sp.add_argument("--m-steps", type=int, nargs="+", help="step counts (time mode)")
    sp.set_defaults(fn=_cmd_converge)

    sp = sub.add_parser("masszero", help="mass-at-zero estimate via small-eps puts")
    add_common(sp)
    sp.set_defaults(fn=_cmd_masszero)

    sp = sub.add_parser("validate", help="run oracle cross-checks, exit 1 on failure")
    add_common(sp)
    sp.add_argument("--mc-slack", type=float, default=0.0,
                    help="extra absolute tolerance on the MC cross-check")
    sp.set_defaults(fn=_cmd_validate)
    return parser


def run_cli(argv=None) -> int:
    """Entry point returning the exit code (0 ok, 1 validation failure, 2 usage)."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 2
    try:
        return args.fn(args)
    except (ConfigError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_cli())
