"""Command-line front end.

Every check prints one line ``PASS <name> value=<v> limit=<l>`` or
``FAIL <name> value=<v> limit=<l>``; the exit code is 0 iff no check failed.
Usage errors and unreadable inputs exit with status 2.
"""
from __future__ import annotations

import argparse
import io
import math
import sys
import typing
from dataclasses import fields
from pathlib import Path

import numpy as np

from .sim import PRESETS, SimConfig

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class ConfigError(ValueError):
    pass


# config files ----------------------------------------------------------------------

_FIELD_TYPES = {f.name: f.type for f in fields(SimConfig)}


def _field_kind(name: str) -> str:
    t = _FIELD_TYPES[name]
    t = t if isinstance(t, str) else getattr(t, "__name__", str(t))
    return {"int": "int", "float": "float", "bool": "bool", "tuple": "vec3"}.get(t, "str")


def _convert(name: str, text: str):
    kind = _field_kind(name)
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind == "bool":
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected true or false, got {text!r}")
    if kind == "vec3":
        parts = [p for p in text.replace(",", " ").split() if p]
        if len(parts) != 3:
            raise ValueError(f"expected three comma-separated numbers, got {text!r}")
        return tuple(float(p) for p in parts)
    return text


def parse_config_text(text: str, source: str = "<config>") -> SimConfig:
    """Parse flat ``key = value`` lines; ``#`` starts a comment.

    ``preset`` (wherever it appears) supplies the base values and every other
    key overrides it.
    """
    values: dict = {}
    lines: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: malformed line, expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} (first set on line {lines[key]})")
        if not value and _field_kind(key) != "str":
            raise ConfigError(f"{source}:{lineno}: missing value for {key!r}")
        try:
            values[key] = _convert(key, value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: {key}: {exc}") from None
        lines[key] = lineno
    preset = values.get("preset", "custom")
    base = dict(PRESETS[preset]) if preset in PRESETS else {}
    if preset not in PRESETS and preset != "custom":
        raise ConfigError(f"{source}:{lines['preset']}: unknown preset {preset!r}; "
                          f"choose from custom, {', '.join(PRESETS)}")
    try:
        return SimConfig(**{**base, **values})
    except (ValueError, TypeError) as exc:
        key = str(exc).split(":", 1)[0]
        where = f"{source}:{lines[key]}" if key in lines else source
        raise ConfigError(f"{where}: {exc}") from None


def parse_config(path) -> SimConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror or exc})") from None
    return parse_config_text(text, str(path))


def format_config(config: SimConfig) -> str:
    """Config echo that re-parses to an identical config."""
    out = []
    for f in fields(SimConfig):
        v = getattr(config, f.name)
        if isinstance(v, bool):
            s = "true" if v else "false"
        elif isinstance(v, tuple):
            s = ", ".join(repr(float(x)) for x in v)
        elif isinstance(v, float):
            s = repr(v)
        else:
            s = str(v)
        out.append(f"{f.name} = {s}")
    return "\n".join(out) + "\n"


def _config_help() -> str:
    default = SimConfig()
    rows = [f"  {f.name:<15} {getattr(default, f.name)!r}" for f in fields(SimConfig)]
    return ("config keys (flat 'key = value' lines, '#' comments) and defaults:\n" + "\n".join(rows)
            + "\npresets: " + ", ".join(PRESETS))


# reporting ------------------------------------------------------------------------------


class Checks:
    def __init__(self, out=None):
        self.out = out or sys.stdout
        self.failed = 0

    def check(self, name: str, ok: bool, value, limit) -> bool:
        word = "PASS" if ok else "FAIL"
        if not ok:
            self.failed += 1
        print(f"{word} {name} value={_fmt(value)} limit={limit}", file=self.out)
        return ok

    def info(self, text: str) -> None:
        print(text, file=self.out)

    @property
    def code(self) -> int:
        return EXIT_OK if self.failed == 0 else EXIT_FAIL


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)


# subcommands ------------------------------------------------------------------------------


def _load_config(args) -> SimConfig:
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"--set: unknown key {key!r}")
        try:
            overrides[key] = _convert(key, value)
        except ValueError as exc:
            raise ConfigError(f"--set: {key}: {exc}") from None
    if args.config:
        cfg = parse_config(args.config)
        base = {f.name: getattr(cfg, f.name) for f in fields(SimConfig)}
    else:
        name = args.preset or "zero"
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
        base = {"preset": name, **PRESETS[name]}
    try:
        return SimConfig(**{**SimConfig().to_dict(), **base, **overrides})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_run(args, checks: Checks) -> None:
    from .sim import conservation_check, energy_balance_residual, energy_nonincreasing, fit_decay, run
    from .vlasov import support_bound_check

    config = _load_config(args)
    out = args.output or config.output_dir or f"runs/{config.preset}"
    result = run(config, output_dir=out)
    checks.info(f"run {config.preset}: {result.status}, {len(result.rows)} records -> {out}")
    if not checks.check("run_completed", result.ok, result.status, "completed"):
        checks.info(f"error: {result.error}")
        return
    s = result.series
    cons = conservation_check(s)
    checks.check("mass_drift", cons.mass_drift == 0.0, cons.mass_drift, 0)
    checks.check("mean_b_drift", cons.mean_b_drift <= 1e-12, cons.mean_b_drift, 1e-12)
    checks.info(f"info momentum_drift={cons.momentum_drift:.6g}")
    checks.info(f"info energy_balance_residual={energy_balance_residual(s):.6g}")
    checks.check("energy_nonincreasing", energy_nonincreasing(s), "monotone", "nonincreasing")
    if s["r_v"][0] > 0 or np.any(s["r_v"] > 0):
        slack = support_bound_check(s, float(s["sup_b"][-1]), float(s["sup_ub"][-1]))
        checks.check("support_bound_slack", slack >= 0, slack, ">= 0")
    window = (config.fit_t0, config.fit_t1)
    if np.sum((s["t"] >= window[0]) & (s["t"] <= window[1])) >= 10 and np.all(s["ub_l2"] > 0):
        fit = fit_decay(s["t"], s["ub_l2"], "exponential", window)
        checks.info(f"info ub_l2_exponential_rate={fit.rate:.6g} r2={fit.r2:.6g} window={window}")


def cmd_linear_check(args, checks: Checks) -> None:
    from .io import atomic_write_text
    from .linear import (ModeState, decay_exponent, duhamel_reconstruct, gaussian_decay_closed_form,
                         gaussian_decay_curve, semigroup_apply)
    from .sim import fit_decay

    t = np.linspace(args.t0, args.t1, args.samples)
    curves = {}
    for m, col in ((0, "l2_norm"), (1, "grad_norm")):
        quad = gaussian_decay_curve(t, m)
        exact = gaussian_decay_closed_form(t, m)
        err = float(np.max(np.abs(quad / exact - 1.0)))
        checks.check(f"quadrature_vs_closed_form_m{m}", err <= 1e-8, err, 1e-8)
        fit = fit_decay(t, quad, "algebraic", (args.t0, args.t1))
        target = decay_exponent(1.0, m)
        tol = 0.02 if m == 0 else 0.03
        checks.check(f"decay_exponent_m{m}", abs(fit.slope - target) <= tol, fit.slope, f"{target}+-{tol}")
        curves[col] = quad
    k = np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [1.0, 1.0, 1.0]])
    amp = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [1.0, -1.0, 0.0]], dtype=complex)
    state = ModeState(k, amp, 0.5 * amp)
    a = semigroup_apply(semigroup_apply(state, 0.3), 0.4)
    b = semigroup_apply(state, 0.7)
    err = float(np.max(np.abs(a.u_hat - b.u_hat)) + np.max(np.abs(a.b_hat - b.b_hat)))
    checks.check("semigroup_property", err <= 1e-14, err, 1e-14)
    order = duhamel_order()
    checks.check("duhamel_order", order >= 1.9, order, ">= 1.9")
    if args.output:
        out = Path(args.output)
        lines = ["t,l2_norm,grad_norm"] + [f"{float(ti)!r},{float(a)!r},{float(b)!r}" for ti, a, b in
                                           zip(t, curves["l2_norm"], curves["grad_norm"])]
        atomic_write_text(out / "decay_curves.csv", "\n".join(lines) + "\n")
        checks.info(f"wrote {out / 'decay_curves.csv'}")


def duhamel_order(t: float = 1.0, n_coarse: int = 10) -> float:
    """Measured order of the Duhamel trapezoid error for constant forcing on one mode."""
    from .linear import ModeState, duhamel_reconstruct

    k = np.array([[2.0, 0.0, 0.0]])
    zero = ModeState(k, np.zeros((1, 3)), np.zeros((1, 3)))
    g = np.array([[0.0, 1.0, 0.0]])
    exact = g * (1.0 - math.exp(-4.0 * t)) / 4.0
    errs = []
    for n in (n_coarse, 2 * n_coarse):
        forcing = [ModeState(k, g, g, s) for s in np.linspace(0.0, t, n + 1)]
        res = duhamel_reconstruct(zero, forcing, t)
        errs.append(float(np.max(np.abs(res.u_hat - exact))))
    return math.log2(errs[0] / errs[1])


def cmd_identities(args, checks: Checks) -> None:
    from .core import Grid, identity_residuals, random_field
    from .vlasov import maxwellian, maxwellian_background_force

    grid = Grid.cube(3, args.n)
    worst = [0.0, 0.0, 0.0]
    for seed in range(args.seeds):
        rng = np.random.default_rng(seed)
        u = random_field(grid, rng, solenoidal=True)
        b = random_field(grid, rng, solenoidal=True)
        worst = [max(w, r) for w, r in zip(worst, identity_residuals(grid, u, b))]
    for name, r in zip(("curl_b_cross_b", "curl_u_cross_b", "u_dot_u_cross_b"), worst):
        checks.check(f"identity_{name}", r <= 1e-10, r, 1e-10)
    # Maxwellian moments by tensor Gauss-Hermite quadrature
    x, w = np.polynomial.hermite_e.hermegauss(40)
    w = w / math.sqrt(2.0 * math.pi)
    vx, vy, vz = np.meshgrid(x, x, x, indexing="ij")
    ww = w[:, None, None] * w[None, :, None] * w[None, None, :]
    dens = ww * maxwellian(np.stack([vx, vy, vz], axis=-1)) * (2.0 * math.pi) ** 1.5 * np.exp(
        0.5 * (vx**2 + vy**2 + vz**2))
    mass = float(np.sum(dens))
    mom = float(max(abs(np.sum(dens * v)) for v in (vx, vy, vz)))
    checks.check("maxwellian_mass", abs(mass - 1.0) <= 1e-12, mass, "1+-1e-12")
    checks.check("maxwellian_momentum", mom <= 1e-12, mom, 1e-12)
    zero = np.zeros((3,) + grid.shape)
    f = float(np.max(np.abs(maxwellian_background_force(zero, zero))))
    checks.check("equilibrium_force", f == 0.0, f, 0)


def cmd_picard(args, checks: Checks) -> None:
    from .linear import PicardDivergence, picard_iterate

    config = _load_config(args)
    try:
        res = picard_iterate(config, args.iters)
    except PicardDivergence as exc:
        checks.check("picard_converges", False, "diverged", str(exc))
        return
    for n, (d, a, b, c) in enumerate(zip(res.deltas, res.du, res.db, res.df), start=1):
        checks.info(f"info Delta_{n}={d:.6e} (u H1 surrogate {a:.3e}, B H1 surrogate {b:.3e}, "
                    f"f histogram L2 surrogate {c:.3e})")
    zero = bool(np.all(res.deltas == 0))
    ok = zero or res.contracting()
    checks.check("picard_strictly_decreasing", ok, "all zero" if zero else "decreasing" if ok else "not", "strict")


def cmd_fit(args, checks: Checks) -> None:
    from .sim import fit_decay, read_csv

    data = read_csv(args.csv)
    if args.column not in data:
        raise ConfigError(f"{args.csv}: no column {args.column!r}; have {', '.join(data)}")
    tcol = data.get(args.time_column)
    if tcol is None:
        raise ConfigError(f"{args.csv}: no time column {args.time_column!r}")
    window = None if args.t0 is None and args.t1 is None else (
        args.t0 if args.t0 is not None else float(tcol.min()), args.t1 if args.t1 is not None else float(tcol.max()))
    fit = fit_decay(tcol, data[args.column], args.model, window)
    value = fit.slope if args.model == "algebraic" else fit.rate
    label = "exponent" if args.model == "algebraic" else "rate"
    checks.info(f"fit model={fit.model} column={args.column} {label}={value:.6g} coefficient={fit.coefficient:.6g} "
                f"r2={fit.r2:.8f} window=[{fit.t0:g},{fit.t1:g}] samples={fit.n_samples}")
    if args.expect is not None:
        checks.check(f"fit_{label}", abs(value - args.expect) <= args.tol, value, f"{args.expect}+-{args.tol}")
    if args.min_r2 is not None:
        checks.check("fit_r2", fit.r2 >= args.min_r2, fit.r2, f">= {args.min_r2}")


def cmd_plot(args, checks: Checks) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .io import atomic_write_bytes
    from .sim import read_csv

    data = read_csv(args.csv)
    cols = [c.strip() for c in args.columns.split(",") if c.strip()]
    missing = [c for c in cols + [args.x] if c not in data]
    if missing:
        raise ConfigError(f"{args.csv}: missing columns {', '.join(missing)}")
    fig, ax = plt.subplots(figsize=(6, 4))
    for c in cols:
        ax.plot(data[args.x], data[c], label=c)
    if args.logx:
        ax.set_xscale("log")
    if args.logy:
        ax.set_yscale("log")
    ax.set_xlabel(args.x)
    ax.legend()
    fig.tight_layout()
    buf = io.BytesIO()
    fig.savefig(buf, format="svg")
    plt.close(fig)
    atomic_write_bytes(args.output, buf.getvalue())
    checks.info(f"wrote {args.output}")


# entry point ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vmhd", description="Vlasov-MHD simulator and verification harness.",
                                epilog=_config_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    def add_config_args(sp):
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--preset", help=f"named preset ({', '.join(PRESETS)})")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")

    sp = sub.add_parser("run", help="run a simulation and check its invariants",
                        epilog=_config_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
    add_config_args(sp)
    sp.add_argument("--output", help="output directory (default: config output_dir or runs/<preset>)")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("linear-check", help="Gaussian decay exponents, semigroup and Duhamel checks")
    sp.add_argument("--t0", type=float, default=10.0)
    sp.add_argument("--t1", type=float, default=100.0)
    sp.add_argument("--samples", type=int, default=91)
    sp.add_argument("--output", help="directory for decay_curves.csv")
    sp.set_defaults(func=cmd_linear_check)

    sp = sub.add_parser("identities", help="vector identity residuals on seeded random fields")
    sp.add_argument("--seeds", type=int, default=100)
    sp.add_argument("--n", type=int, default=32)
    sp.set_defaults(func=cmd_identities)

    sp = sub.add_parser("picard", help="Picard contraction experiment")
    add_config_args(sp)
    sp.add_argument("--iters", type=int, default=4)
    sp.set_defaults(func=cmd_picard, preset=None)

    sp = sub.add_parser("fit", help="fit a decay law to a CSV column")
    sp.add_argument("csv")
    sp.add_argument("--column", required=True)
    sp.add_argument("--model", choices=("exponential", "algebraic"), default="exponential")
    sp.add_argument("--time-column", default="t")
    sp.add_argument("--t0", type=float)
    sp.add_argument("--t1", type=float)
    sp.add_argument("--expect", type=float, help="expected rate (exponential) or exponent (algebraic)")
    sp.add_argument("--tol", type=float, default=0.03)
    sp.add_argument("--min-r2", type=float)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("plot", help="render CSV columns to an SVG file")
    sp.add_argument("csv")
    sp.add_argument("--columns", required=True, help="comma-separated column names")
    sp.add_argument("--x", default="t")
    sp.add_argument("--output", required=True)
    sp.add_argument("--logx", action="store_true")
    sp.add_argument("--logy", action="store_true")
    sp.set_defaults(func=cmd_plot)
    return p


def main(argv: typing.Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "picard" and not args.config and not args.preset:
        args.preset = "picard-small"
    checks = Checks()
    try:
        args.func(args, checks)
    except (ConfigError, ValueError, OSError, ArithmeticError) as exc:
        print(f"FAIL {args.command} error={str(exc).splitlines()[0] if str(exc) else type(exc).__name__}")
        return EXIT_USAGE if isinstance(exc, (ConfigError, OSError)) else EXIT_FAIL
    return checks.code


if __name__ == "__main__":
    sys.exit(main())
