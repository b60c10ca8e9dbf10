"""Coupled particle/fluid time loop, run diagnostics and their analysis.

One coupled step is a symmetric split:

    half RK4 push with the fields at t_n
    deposit rho, j at the half-step particle state
    integrating-factor Heun MHD step with the coupling source built from rho, j
    half RK4 push with the fields at t_n + dt

Records are emitted for the initial state and then every ``cadence`` steps
(and always at the final step).
"""
from __future__ import annotations

import csv
import io
import math
import subprocess
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ._kernels import max_magnitude
from .core import Grid, NumericalError, curl_hat, l2_norm_hat, leray_project_hat, sobolev_norm_hat
from .io import atomic_write_text
from .mhd import CouplingSource, FluidState, MHDParams, dissipation_rates, energies, step_mhd
from .vlasov import (HistogramSpec, ParticleEnsemble, deposit_moments, perturbation_norm, push_fields,
                     rk4_push, sample_maxwellian, support_radii)

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class SimConfig:
    """Complete, flat description of a run.  See ``PRESETS`` for the shipped ones."""

    preset: str = "custom"
    dim: int = 2
    n: int = 32
    box: float = TWO_PI
    # particles
    particles: str = "none"  # none | uniform | ball | single
    n_particles: int = 0
    density: float = 1.0
    x_radius: float = 1.0
    v_max: float = 6.0
    antithetic: bool = False
    single_v: tuple = (1.0, 0.0, 0.0)
    mode: str = "vacuum"  # vacuum | maxwellian
    # fields
    fields: str = "none"  # none | shear | modes | localized
    amp_u: float = 0.0
    amp_b: float = 0.0
    b_uniform: tuple = (0.0, 0.0, 0.0)
    mu1: float = 1.0
    mu2: float = 1.0
    lorentz_form: str = "gradient"
    nonlinear_form: str = "flux"
    # time stepping and output
    dt: float = 0.01
    t_end: float = 1.0
    cadence: int = 1
    seed: int = 0
    output_dir: str = ""
    deterministic: bool = True
    checkpoint: bool = True
    hist_nx: int = 8
    hist_nv: int = 8
    hist_vmax: float = 6.0
    fit_t0: float = 0.5
    fit_t1: float = 3.0

    def __post_init__(self):
        for name in ("single_v", "b_uniform"):
            v = tuple(float(x) for x in getattr(self, name))
            if len(v) != 3:
                raise ValueError(f"{name} must have three components")
            object.__setattr__(self, name, v)
        self.validate()

    def validate(self) -> None:
        def bad(key, why):
            raise ValueError(f"{key}: {why}")

        if self.dim not in (2, 3):
            bad("dim", "must be 2 or 3")
        if self.n < 8 or self.n % 2:
            bad("n", "must be even and at least 8")
        if not (self.box > 0 and math.isfinite(self.box)):
            bad("box", "must be positive")
        if self.particles not in ("none", "uniform", "ball", "single"):
            bad("particles", "must be none, uniform, ball or single")
        if self.n_particles < 0:
            bad("n_particles", "must be nonnegative")
        if self.particles in ("uniform", "ball") and self.n_particles < 1:
            bad("n_particles", "must be positive for sampled particles")
        if self.antithetic and self.n_particles % 2:
            bad("n_particles", "must be even for antithetic sampling")
        if not (self.density >= 0 and math.isfinite(self.density)):
            bad("density", "must be nonnegative")
        if not self.x_radius > 0:
            bad("x_radius", "must be positive")
        if not self.v_max > 0:
            bad("v_max", "must be positive")
        if self.mode not in ("vacuum", "maxwellian"):
            bad("mode", "must be vacuum or maxwellian")
        if self.mode == "maxwellian" and self.particles not in ("uniform", "none"):
            bad("mode", "maxwellian mode needs spatially uniform particles")
        if self.fields not in ("none", "shear", "modes", "localized"):
            bad("fields", "must be none, shear, modes or localized")
        for key in ("amp_u", "amp_b", "mu1", "mu2", "fit_t0", "fit_t1", "hist_vmax"):
            if not math.isfinite(getattr(self, key)):
                bad(key, "must be finite")
        if not all(math.isfinite(x) for x in self.b_uniform + self.single_v):
            bad("b_uniform", "must be finite")
        if self.mu1 < 0 or self.mu2 < 0:
            bad("mu1" if self.mu1 < 0 else "mu2", "must be nonnegative")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            bad("dt", "must be positive")
        if not (self.t_end >= self.dt and math.isfinite(self.t_end)):
            bad("t_end", "must be at least dt")
        if self.cadence < 1:
            bad("cadence", "must be at least 1")
        if self.hist_nx < 1 or self.hist_nv < 1 or not self.hist_vmax > 0:
            bad("hist_nx" if self.hist_nx < 1 else "hist_nv", "histogram sizes must be positive")
        if not self.fit_t0 < self.fit_t1:
            bad("fit_t1", "must exceed fit_t0")
        MHDParams(self.mu1, self.mu2, self.lorentz_form, self.nonlinear_form)

    @classmethod
    def from_preset(cls, name: str, **overrides) -> "SimConfig":
        if name not in PRESETS:
            raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
        return cls(**{"preset": name, **PRESETS[name], **overrides})

    def grid(self) -> Grid:
        return Grid.cube(self.dim, self.n, self.box)

    def params(self) -> MHDParams:
        return MHDParams(self.mu1, self.mu2, self.lorentz_form, self.nonlinear_form)

    def histogram(self) -> HistogramSpec:
        return HistogramSpec(self.hist_nx, self.hist_nv, self.hist_vmax)

    def n_steps(self) -> int:
        return max(1, int(math.ceil(self.t_end / self.dt - 1e-9)))

    def to_dict(self) -> dict:
        return asdict(self)


PRESETS: dict[str, dict] = {
    "zero": dict(dim=2, n=16, dt=0.01, t_end=0.1),
    "shear": dict(dim=3, n=32, fields="shear", amp_u=1.0, dt=1e-3, t_end=2.0, cadence=10),
    "gyro": dict(dim=2, n=16, particles="single", n_particles=1, density=0.0, b_uniform=(0.0, 0.0, 1.0),
                 dt=1e-3, t_end=0.5 * np.pi, cadence=10),
    "torus-small": dict(dim=2, n=32, particles="uniform", n_particles=20000, density=0.1, antithetic=True,
                        fields="modes", amp_u=0.05, amp_b=0.05, dt=0.01, t_end=3.0, cadence=5,
                        fit_t0=0.5, fit_t1=3.0),
    "torus-coupled": dict(dim=2, n=32, particles="uniform", n_particles=100000, density=1.0, antithetic=True,
                          fields="modes", amp_u=0.5, amp_b=0.5, dt=0.02, t_end=2.0, cadence=5),
    "maxwellian-eq": dict(dim=2, n=32, particles="uniform", n_particles=1000000, density=1.0,
                          mode="maxwellian", dt=0.05, t_end=1.0, cadence=2),
    "maxwellian-b": dict(dim=2, n=32, particles="uniform", n_particles=1000000, density=1.0,
                         mode="maxwellian", fields="shear", amp_b=0.01, dt=0.05, t_end=1.0, cadence=2),
    "picard-small": dict(dim=2, n=16, particles="uniform", n_particles=2000, density=0.1, antithetic=True,
                         fields="modes", amp_u=0.05, amp_b=0.05, dt=0.01, t_end=0.5, cadence=5),
    "r3-proxy": dict(dim=3, n=32, box=8.0 * np.pi, particles="ball", n_particles=20000, density=0.05,
                     x_radius=1.0, v_max=4.0, fields="localized", amp_u=0.05, amp_b=0.05,
                     dt=0.02, t_end=2.0, cadence=5),
}


# initial data -------------------------------------------------------------------


def initial_fields(config: SimConfig, grid: Grid | None = None) -> FluidState:
    """Solenoidal initial ``(u, B)`` with the configured uniform part added to ``B``."""
    grid = grid or config.grid()
    xs = [TWO_PI * x / L for x, L in zip(grid.mesh(), grid.lengths)]
    zero = np.zeros(grid.shape)
    u = np.zeros((3,) + grid.shape)
    b = np.zeros((3,) + grid.shape)
    if config.fields == "shear":
        u[0] = config.amp_u * np.sin(xs[1])
        b[0] = config.amp_b * np.sin(xs[1])
    elif config.fields == "modes":
        # each component is independent of its own coordinate, so both fields are solenoidal
        if grid.dim == 2:
            x1, x2 = xs
            u[:] = (np.sin(x2), np.sin(x1), np.sin(x1 + x2))
            b[:] = (np.cos(x2), np.cos(x1) + zero, np.cos(x1 - x2))
        else:
            x1, x2, x3 = xs
            u[:] = (np.sin(x2) + np.sin(x3), np.sin(x3) + np.sin(x1), np.sin(x1) + np.sin(x2))
            b[:] = (np.cos(x3), np.cos(x1), np.cos(x2))
        u *= config.amp_u
        b *= config.amp_b
    elif config.fields == "localized":
        # curl of a Gaussian vector potential centered in the box
        r2 = sum((x - c) ** 2 for x, c in zip(grid.mesh(), grid.center))
        psi = np.exp(-0.5 * r2)
        psi_hat = grid.forward(np.stack([psi, psi, psi]))
        shape = grid.backward(curl_hat(grid, psi_hat))
        u = config.amp_u * shape
        b = config.amp_b * shape
    uh = leray_project_hat(grid, grid.forward(u))
    bh = leray_project_hat(grid, grid.forward(b))
    origin = (slice(None),) + (0,) * grid.dim
    bh[origin] = np.asarray(config.b_uniform) * grid.size
    uh[origin] = 0.0
    return FluidState(grid, uh, bh, 0.0)


def initial_particles(config: SimConfig, grid: Grid | None = None) -> ParticleEnsemble:
    grid = grid or config.grid()
    if config.particles == "none":
        return ParticleEnsemble.empty()
    if config.particles == "single":
        x = np.zeros(3)
        x[: grid.dim] = grid.center
        return ParticleEnsemble(x, np.array(config.single_v), np.array([config.density]))
    n = config.n_particles // 2 if config.antithetic else config.n_particles
    ens = sample_maxwellian(n, grid, config.seed, profile=config.particles, density=config.density,
                            v_max=config.v_max, radius=config.x_radius)
    if config.antithetic:
        # mirrored velocities at shared positions: zero net momentum and current
        ens = ParticleEnsemble(np.concatenate([ens.X, ens.X]), np.concatenate([ens.V, -ens.V]),
                               np.concatenate([ens.w, ens.w]) * 0.5)
    return ens


# coupled step -------------------------------------------------------------------


@dataclass
class StepInfo:
    wrapped: bool = False
    rho: np.ndarray | None = None
    j: np.ndarray | None = None


def step_coupled(ens: ParticleEnsemble, fluid: FluidState, dt: float, params: MHDParams | None = None,
                 step: int | None = None, info: StepInfo | None = None):
    """One symmetric split step; returns ``(ensemble, fluid)``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    grid = fluid.grid
    info = info if info is not None else StepInfo()
    if ens.n == 0:
        info.wrapped = False
        return ens, step_mhd(fluid, None, dt, params, step)
    h = 0.5 * dt
    X, V, w1 = rk4_push(grid, ens.X, ens.V, h, push_fields(fluid.u, fluid.b))
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(V))):
        raise NumericalError("NaN in particle push", phase="push", step=step)
    mid = ParticleEnsemble(X, V, ens.w)
    rho, j = deposit_moments(mid, grid)
    if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(j))):
        raise NumericalError("non-finite deposited moments", phase="deposit", step=step)
    fluid = step_mhd(fluid, CouplingSource(rho, j), dt, params, step)
    X, V, w2 = rk4_push(grid, X, V, h, push_fields(fluid.u, fluid.b))
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(V))):
        raise NumericalError("NaN in particle push", phase="push", step=step)
    info.wrapped, info.rho, info.j = w1 or w2, rho, j
    return ParticleEnsemble(X, V, ens.w), fluid


# diagnostics --------------------------------------------------------------------

COLUMNS = (
    "step", "t", "mass", "kinetic_energy", "fluid_energy", "magnetic_energy", "total_energy",
    "eps_u", "eps_b", "dissipated", "momentum_x", "momentum_y", "momentum_z", "momentum_scale",
    "mean_b_x", "mean_b_y", "mean_b_z", "b_l1", "u_h2", "b_h2", "grad_h1", "u_l2", "b_l2", "ub_l2",
    "j_l2", "r_x", "r_v", "perturbation_norm", "max_u", "max_b", "sup_b", "sup_ub", "b_heat_deviation",
)


class _Tracker:
    """Per-step running quantities: dissipation integral and field sups."""

    def __init__(self, fluid: FluidState, params: MHDParams):
        self.params = params
        self.b0_hat = fluid.b_hat.copy()
        self.eps = sum(dissipation_rates(fluid, params))
        self.dissipated = 0.0
        self.sup_b = 0.0
        self.sup_ub = 0.0
        self.observe(fluid)

    def observe(self, fluid: FluidState) -> None:
        mu, mb = _max_norm(fluid.u), _max_norm(fluid.b)
        self.sup_b = max(self.sup_b, mb)
        self.sup_ub = max(self.sup_ub, mu * mb)

    def advance(self, fluid: FluidState, dt: float) -> None:
        eps = sum(dissipation_rates(fluid, self.params))
        self.dissipated += 0.5 * dt * (self.eps + eps)
        self.eps = eps
        self.observe(fluid)


def _max_norm(v: np.ndarray) -> float:
    return float(max_magnitude(np.ascontiguousarray(v).reshape(3, -1)))


def _heat_deviation(fluid: FluidState, b0_hat: np.ndarray, mu2: float) -> float:
    """Largest relative per-mode deviation of ``B`` from ``e^(-mu2 |k|^2 t) B_0``."""
    grid = fluid.grid
    mag = np.sqrt(np.sum(np.abs(b0_hat) ** 2, axis=0))
    if not np.any(mag > 0):
        return 0.0
    active = mag > 1e-8 * mag.max()
    if not np.any(active):
        return math.inf
    expected = b0_hat * np.exp(-mu2 * grid.k2 * fluid.t)
    err = np.sqrt(np.sum(np.abs(fluid.b_hat - expected) ** 2, axis=0))
    ref = np.sqrt(np.sum(np.abs(expected) ** 2, axis=0))
    return float(np.max(err[active] / ref[active]))


def record(step: int, ens: ParticleEnsemble, fluid: FluidState, tracker: _Tracker, config: SimConfig) -> dict:
    """One diagnostics row (see ``COLUMNS``)."""
    grid = fluid.grid
    params = tracker.params
    eu, eb = energies(fluid)
    eps_u, eps_b = dissipation_rates(fluid, params)
    ke = ens.kinetic_energy()
    u_mean = fluid.mean_u() * grid.volume
    b_mean = fluid.mean_b() * grid.volume
    p = ens.momentum() + u_mean
    speed = np.sqrt(np.einsum("ij,ij->i", ens.V, ens.V)) if ens.n else np.zeros(0)
    u_abs = np.sqrt(np.einsum("i...,i...->...", fluid.u, fluid.u))
    b_abs = np.sqrt(np.einsum("i...,i...->...", fluid.b, fluid.b))
    if ens.n:
        r_x, r_v = support_radii(ens, grid)
        _, j = deposit_moments(ens, grid)
        j_l2 = float(np.sqrt(np.sum(j * j) * grid.cell_volume))
        pert = perturbation_norm(ens, grid, config.histogram(), config.mode, config.density)
    else:
        r_x = r_v = j_l2 = pert = 0.0
    uh, bh = fluid.u_hat, fluid.b_hat
    grad = math.sqrt(sobolev_norm_hat(grid, uh, 2, 1) ** 2 + sobolev_norm_hat(grid, bh, 2, 1) ** 2)
    u_l2, b_l2 = l2_norm_hat(grid, uh), l2_norm_hat(grid, bh)
    row = {
        "step": step, "t": fluid.t, "mass": ens.mass(), "kinetic_energy": ke,
        "fluid_energy": eu, "magnetic_energy": eb, "total_energy": ke + eu + eb,
        "eps_u": eps_u, "eps_b": eps_b, "dissipated": tracker.dissipated,
        "momentum_x": p[0], "momentum_y": p[1], "momentum_z": p[2],
        "momentum_scale": float(np.sum(ens.w * speed)) + float(np.sum(u_abs)) * grid.cell_volume,
        "mean_b_x": b_mean[0], "mean_b_y": b_mean[1], "mean_b_z": b_mean[2],
        "b_l1": float(np.sum(b_abs)) * grid.cell_volume,
        "u_h2": sobolev_norm_hat(grid, uh, 2), "b_h2": sobolev_norm_hat(grid, bh, 2), "grad_h1": grad,
        "u_l2": u_l2, "b_l2": b_l2, "ub_l2": math.hypot(u_l2, b_l2), "j_l2": j_l2,
        "r_x": r_x, "r_v": r_v, "perturbation_norm": pert,
        "max_u": float(u_abs.max()), "max_b": float(b_abs.max()),
        "sup_b": tracker.sup_b, "sup_ub": tracker.sup_ub,
        "b_heat_deviation": _heat_deviation(fluid, tracker.b0_hat, params.mu2),
    }
    for key, value in row.items():
        if not math.isfinite(value):
            raise NumericalError(f"non-finite diagnostic {key}", phase="diagnostics", step=step)
    return row


def series_from_rows(rows: list[dict]) -> dict[str, np.ndarray]:
    return {c: np.array([r[c] for r in rows], dtype=float) for c in COLUMNS}


def format_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in rows:
        writer.writerow([str(r[c]) if c == "step" else repr(float(r[c])) for c in COLUMNS])
    return buf.getvalue()


def read_csv(path) -> dict[str, np.ndarray]:
    """Read a diagnostics (or any numeric) CSV into column arrays."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty CSV") from None
        rows = [r for r in reader if r]
    if not rows:
        raise ValueError(f"{path}: CSV has a header but no data rows")
    data = np.array(rows, dtype=float)
    return {name: data[:, i] for i, name in enumerate(header)}


# run orchestration --------------------------------------------------------------


@dataclass
class RunResult:
    config: SimConfig
    rows: list
    status: str
    manifest: dict
    fluid: FluidState
    ensemble: ParticleEnsemble
    first_wrap_time: float | None = None
    paths: dict = field(default_factory=dict)
    error: str = ""

    @property
    def series(self) -> dict[str, np.ndarray]:
        return series_from_rows(self.rows)

    @property
    def ok(self) -> bool:
        return self.status == "completed"


def build_id() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True, text=True,
                             cwd=Path(__file__).resolve().parent, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    from importlib.metadata import PackageNotFoundError, version
    try:
        return f"artifact-{version('artifact')}"
    except PackageNotFoundError:
        return "unknown"


def format_manifest(manifest: dict) -> str:
    return "".join(f"{k} = {v}\n" for k, v in manifest.items())


def run(config: SimConfig, output_dir=None, progress=None) -> RunResult:
    """Execute the time loop; write CSV, manifest and checkpoints if an output directory is set."""
    out = Path(output_dir or config.output_dir) if (output_dir or config.output_dir) else None
    grid = config.grid()
    params = config.params()
    fluid = initial_fields(config, grid)
    ens = initial_particles(config, grid)
    tracker = _Tracker(fluid, params)
    rows = [record(0, ens, fluid, tracker, config)]
    n_steps = config.n_steps()
    started = time.time()
    status, error, first_wrap = "completed", "", None
    info = StepInfo()
    step = 0
    try:
        for step in range(1, n_steps + 1):
            dt = min(config.dt, config.t_end - fluid.t) if step == n_steps else config.dt
            ens, fluid = step_coupled(ens, fluid, dt, params, step, info)
            if info.wrapped and first_wrap is None:
                first_wrap = fluid.t
            tracker.advance(fluid, dt)
            if step % config.cadence == 0 or step == n_steps:
                rows.append(record(step, ens, fluid, tracker, config))
            if progress is not None:
                progress(step, n_steps)
    except NumericalError as exc:
        status, error = "aborted", str(exc)
    ended = time.time()
    manifest = {
        "status": status,
        "error": error or "none",
        "build": build_id(),
        "start_time": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        "end_time": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(ended)),
        "wall_seconds": f"{ended - started:.3f}",
        "steps_completed": step if status == "completed" else step - 1,
        "records": len(rows),
        "first_wrap_time": "none" if first_wrap is None else repr(first_wrap),
    }
    manifest.update({f"config.{k}": _format_value(v) for k, v in config.to_dict().items()})
    result = RunResult(config, rows, status, manifest, fluid, ens, first_wrap, error=error)
    if out is not None:
        _write_outputs(result, out)
    return result


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_outputs(result: RunResult, out: Path) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = {"series": out / "series.csv"}
        atomic_write_text(paths["series"], format_csv(result.rows))
        if result.ok and result.config.checkpoint:
            paths["fluid_checkpoint"] = result.fluid.save(out / "fluid.bin")
            paths["particle_checkpoint"] = result.ensemble.save(out / "particles.bin")
        paths["manifest"] = out / "manifest.txt"
        for key, p in paths.items():
            result.manifest[f"artifact.{key}"] = str(p)
        atomic_write_text(paths["manifest"], format_manifest(result.manifest))
        result.paths = paths
    except OSError as exc:
        raise OSError(f"cannot write run outputs under {out}: {exc}") from exc


# analysis -----------------------------------------------------------------------


def energy_balance_residual(series) -> float:
    """``max_t |E(t) - E(0) + int_0^t (eps_u + eps_b)| / E(0)`` (absolute if ``E(0) = 0``)."""
    e = np.asarray(series["total_energy"], dtype=float)
    d = np.asarray(series["dissipated"], dtype=float)
    res = np.abs(e - e[0] + (d - d[0]))
    scale = e[0] if e[0] > 0 else 1.0
    return float(np.max(res) / scale)


def energy_nonincreasing(series, rtol: float = 1e-12) -> bool:
    """Whether ``total_energy`` never grows by more than a round-off tolerance between samples."""
    e = np.asarray(series["total_energy"], dtype=float)
    tol = rtol * max(float(np.max(np.abs(e))), 1e-300)
    return bool(np.all(np.diff(e) <= tol))


@dataclass(frozen=True)
class ConservationReport:
    mass_drift: float
    momentum_drift: float
    mean_b_drift: float


def conservation_check(series) -> ConservationReport:
    """Relative drifts of particle mass, total momentum and ``int B dx``."""
    m = np.asarray(series["mass"], dtype=float)
    mass = float(np.max(np.abs(m - m[0])) / m[0]) if m[0] > 0 else float(np.max(np.abs(m - m[0])))
    p = np.stack([np.asarray(series[f"momentum_{c}"], dtype=float) for c in "xyz"], axis=1)
    dp = float(np.max(np.linalg.norm(p - p[0], axis=1)))
    pscale = float(np.max(series["momentum_scale"]))
    mb = np.stack([np.asarray(series[f"mean_b_{c}"], dtype=float) for c in "xyz"], axis=1)
    db = float(np.max(np.linalg.norm(mb - mb[0], axis=1)))
    bscale = float(np.max(series["b_l1"]))
    return ConservationReport(mass, dp / pscale if pscale > 0 else dp, db / bscale if bscale > 0 else db)


@dataclass(frozen=True)
class DecayFit:
    """``value ~ C exp(-rate t)`` (exponential) or ``C (1 + t)^(-rate)`` (algebraic)."""

    model: str
    rate: float
    coefficient: float
    r2: float
    t0: float
    t1: float
    n_samples: int

    @property
    def slope(self) -> float:
        """Slope of log(value) against t or log(1 + t)."""
        return -self.rate


def fit_decay(t, values, model: str = "exponential", window: tuple[float, float] | None = None,
              min_samples: int = 10) -> DecayFit:
    """Least-squares fit of ``log(value)`` against ``t`` or ``log(1 + t)`` inside ``window``."""
    if model not in ("exponential", "algebraic"):
        raise ValueError(f"model must be 'exponential' or 'algebraic', got {model!r}")
    t = np.asarray(t, dtype=float)
    y = np.asarray(values, dtype=float)
    t0, t1 = window if window is not None else (float(t.min()), float(t.max()))
    if not t0 < t1:
        raise ValueError("fit window must satisfy t0 < t1")
    sel = np.flatnonzero((t >= t0 - 1e-12) & (t <= t1 + 1e-12))
    if sel.size < min_samples:
        raise ValueError(f"need at least {min_samples} samples in [{t0}, {t1}], found {sel.size}")
    bad = sel[~(y[sel] > 0)]
    if bad.size:
        i = int(bad[0])
        raise ValueError(f"nonpositive value {y[i]!r} at sample {i} (t={t[i]!r})")
    x = t[sel] if model == "exponential" else np.log1p(t[sel])
    ly = np.log(y[sel])
    slope, intercept = np.polyfit(x, ly, 1)
    pred = intercept + slope * x
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(model, float(-slope), float(np.exp(intercept)), float(min(max(r2, 0.0), 1.0)),
                    float(t0), float(t1), int(sel.size))


@dataclass(frozen=True)
class EquilibriumReport:
    max_u_l2: float
    u_floor: float
    statistical_floor: float
    max_b_heat_deviation: float
    max_perturbation_norm: float
    perturbation_floor: float


def equilibrium_deviation(series, n_particles: int) -> EquilibriumReport:
    """Deviation from ``(M, 0, B_0 e^(t lap))`` against the measured sampling floors.

    ``u_floor = T sup_t ||j|| sup_t |B|_inf`` bounds the velocity the noisy
    current can drive through ``-j x B``; the perturbation floor is the
    initial histogram distance from ``M``.
    """
    t = np.asarray(series["t"], dtype=float)
    span = float(t[-1] - t[0])
    u_floor = span * float(np.max(series["j_l2"])) * float(np.max(series["sup_b"]))
    return EquilibriumReport(
        max_u_l2=float(np.max(series["u_l2"])),
        u_floor=u_floor,
        statistical_floor=5.0 / math.sqrt(n_particles) if n_particles > 0 else 0.0,
        max_b_heat_deviation=float(np.max(series["b_heat_deviation"])),
        max_perturbation_norm=float(np.max(series["perturbation_norm"])),
        perturbation_floor=float(series["perturbation_norm"][0]),
    )


def config_keys() -> list[str]:
    return [f.name for f in fields(SimConfig)]
