"""Error norms, convergence studies, stability probes and CSV reports."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .assembly import (
    BlockSystem,
    PenaltyParams,
    assemble_grad_flux,
    assemble_mass,
    assemble_penalties,
    compose_system,
    volume_rule,
)
from .basis import ReferenceBasis
from .errors import SolverError, ValidationError
from .fracop import (
    FracCouplingMatrix,
    assemble_frac_coupling_matrix,
    cache_path,
    load_coupling_matrix,
    save_coupling_matrix,
)
from .mesh import Mesh, build_mesh
from .problems import ManufacturedProblem, exact_eval, get_problem
from .quadrature import triangle_quadrature
from .timestepper import SolutionState, advance_step, initial_state

log = logging.getLogger(__name__)

__all__ = [
    "ErrorReport",
    "StudyConfig",
    "StudyReport",
    "StabilityRecord",
    "StabilityLog",
    "error_norms",
    "convergence_rate",
    "energy_seminorm",
    "time_grid",
    "build_system",
    "run_single",
    "run_convergence_study",
    "run_stability_probe",
    "write_report_csv",
    "read_report_csv",
    "write_stability_csv",
    "parse_config_file",
    "CSV_HEADER",
]

CSV_HEADER = ["h", "L2_u", "rate_L2", "L1_u", "rate_L1", "L2_dxu", "rate_dxu", "L2_dyu", "rate_dyu"]
_RATE_COLUMNS = {"rate_L2": "L2_u", "rate_L1": "L1_u", "rate_dxu": "L2_dxu", "rate_dyu": "L2_dyu"}


@dataclass
class ErrorReport:
    h: float
    L2_u: float
    L1_u: float
    L2_dxu: float
    L2_dyu: float
    L2_px: float = float("nan")
    L2_py: float = float("nan")
    rates: dict = field(default_factory=dict)


def error_norms(
    mesh: Mesh,
    basis: ReferenceBasis,
    u_coeffs,
    problem: ManufacturedProblem,
    t: float,
    p_coeffs=None,
    degree: int = 10,
) -> ErrorReport:
    """Errors of ``u_h`` against the exact solution at time ``t``.

    Derivative errors use the elementwise gradient of ``u_h``; when
    ``p_coeffs = (px, py)`` is given, the errors of the auxiliary gradient
    field are reported alongside.
    """
    rule = triangle_quadrature(degree)
    T = mesh.n_triangles
    pts = mesh.to_physical(np.arange(T)[:, None], rule.points[None, :, :])
    w = rule.weights[None, :] * (2.0 * mesh.area)[:, None]
    phi = basis.values(rule.points)
    c = np.asarray(u_coeffs).reshape(T, basis.dim)
    uh = c @ phi.T  # (T, Q)
    gref = basis.gradients(rule.points)  # (Q, nk, 2)
    gphys = np.einsum("qir,trx->tqix", gref, mesh.jac_inv)
    duh = np.einsum("tqix,ti->tqx", gphys, c)
    u, (ux, uy) = exact_eval(problem, pts[..., 0], pts[..., 1], t)
    e = u - uh
    rep = ErrorReport(
        h=mesh.h,
        L2_u=float(np.sqrt(np.sum(w * e * e))),
        L1_u=float(np.sum(w * np.abs(e))),
        L2_dxu=float(np.sqrt(np.sum(w * (ux - duh[..., 0]) ** 2))),
        L2_dyu=float(np.sqrt(np.sum(w * (uy - duh[..., 1]) ** 2))),
    )
    if p_coeffs is not None:
        px = np.asarray(p_coeffs[0]).reshape(T, basis.dim) @ phi.T
        py = np.asarray(p_coeffs[1]).reshape(T, basis.dim) @ phi.T
        rep.L2_px = float(np.sqrt(np.sum(w * (ux - px) ** 2)))
        rep.L2_py = float(np.sqrt(np.sum(w * (uy - py) ** 2)))
    return rep


def convergence_rate(e1: float, h1: float, e2: float, h2: float) -> float:
    """``log(e1 / e2) / log(h1 / h2)``."""
    if min(e1, h1, e2, h2) <= 0.0:
        raise ValidationError("convergence rate needs positive errors and mesh sizes")
    if h1 == h2:
        raise ValidationError("convergence rate needs distinct mesh sizes")
    return math.log(e1 / e2) / math.log(h1 / h2)


def energy_seminorm(state_vec, D, Epen, Bx, By, layout) -> float:
    """``u'Du + px'Bx px + py'By py + sx'Epen sx + sy'Epen sy``."""
    f = layout.split(state_vec)
    return float(
        f["u"] @ (D @ f["u"])
        + f["p_x"] @ (Bx @ f["p_x"])
        + f["p_y"] @ (By @ f["p_y"])
        + f["sigma_x"] @ (Epen @ f["sigma_x"])
        + f["sigma_y"] @ (Epen @ f["sigma_y"])
    )


@dataclass
class StudyConfig:
    example: str = "example51"
    alpha: float = 1.2
    beta: float = 1.4
    eps1: str = "1"
    eps2: str = "1"
    degree: int = 1
    meshes: tuple = (6, 10, 14, 18)
    t_final: float = 0.1
    dt_const: float = 1.0
    quad_smooth: int = 16
    quad_singular: int = 4
    out: str | None = None
    cache_dir: str | None = None

    def validate(self) -> "StudyConfig":
        m = tuple(int(v) for v in self.meshes)
        if not m or any(v < 1 for v in m) or any(b <= a for a, b in zip(m, m[1:])):
            raise ValidationError(f"mesh list must be positive and strictly increasing, got {m}")
        if not self.t_final > 0.0:
            raise ValidationError(f"t_final must be positive, got {self.t_final}")
        if not self.dt_const > 0.0:
            raise ValidationError(f"dt_const must be positive, got {self.dt_const}")
        if self.degree not in (0, 1, 2):
            raise ValidationError(f"degree must be 0, 1 or 2, got {self.degree}")
        if self.quad_smooth < 1 or self.quad_singular < 1:
            raise ValidationError("quadrature orders must be positive")
        get_problem(self.example, self.alpha, self.beta)
        PenaltyParams(self.eps1, self.eps2).resolve(0.1)
        return replace(self, meshes=m)

    @property
    def problem(self) -> ManufacturedProblem:
        return get_problem(self.example, self.alpha, self.beta)


_CONFIG_TYPES = {f.name: f.type for f in fields(StudyConfig)}


def parse_config_file(path) -> dict:
    """Read ``key = value`` lines (``#`` starts a comment) into typed values."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        values[key] = coerce_config_value(key, val)
    return values


def coerce_config_value(key: str, val):
    if key not in _CONFIG_TYPES:
        raise ValidationError(f"unknown config key {key!r}")
    try:
        if key == "meshes":
            return tuple(int(v) for v in str(val).replace(",", " ").split())
        if key in ("alpha", "beta", "t_final", "dt_const"):
            return float(val)
        if key in ("degree", "quad_smooth", "quad_singular"):
            return int(val)
    except ValueError:
        raise ValidationError(f"bad value for {key}: {val!r}") from None
    return str(val)


def time_grid(t_final: float, h: float, dt_const: float = 1.0) -> tuple[int, float]:
    """Uniform step ``dt = T / N`` with ``N = ceil(T / (c h^1.5))``."""
    target = dt_const * h**1.5
    n = max(1, math.ceil(t_final / target - 1e-9))
    return n, t_final / n


_FRAC_MEMO: dict = {}


def coupling_matrix(mesh, basis, mu, axis, n_lines, cache_dir=None) -> FracCouplingMatrix:
    """Assembled coupling matrix, reused within the process and optionally on disk."""
    key = (mesh.fingerprint, basis.degree, float(mu), axis, n_lines)
    path = cache_path(cache_dir, mesh, basis.degree, mu, axis, n_lines) if cache_dir else None
    B = _FRAC_MEMO.get(key)
    if B is None and path is not None and path.exists():
        B = load_coupling_matrix(path, mesh, basis)
    if B is None:
        B = assemble_frac_coupling_matrix(mesh, basis, mu, axis, n_lines=n_lines)
    if path is not None and not path.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
        save_coupling_matrix(B, path)
    if len(_FRAC_MEMO) > 16:
        _FRAC_MEMO.clear()
    _FRAC_MEMO[key] = B
    return B


def build_system(config: StudyConfig, mesh: Mesh, dt: float, timings: dict | None = None) -> BlockSystem:
    timings = timings if timings is not None else {}
    basis = ReferenceBasis(config.degree)
    rule = volume_rule(basis)
    problem = config.problem
    t0 = time.perf_counter()
    Bx = coupling_matrix(mesh, basis, problem.orders.alpha1, "x", config.quad_smooth, config.cache_dir)
    By = coupling_matrix(mesh, basis, problem.orders.alpha2, "y", config.quad_smooth, config.cache_dir)
    t1 = time.perf_counter()
    M = assemble_mass(mesh, basis, rule)
    G = assemble_grad_flux(mesh, basis, rule)
    D, Epen = assemble_penalties(mesh, basis, PenaltyParams(config.eps1, config.eps2))
    system = compose_system(mesh, basis, M, G, D, Epen, Bx, By, dt, rule)
    t2 = time.perf_counter()
    timings["fractional"] = timings.get("fractional", 0.0) + (t1 - t0)
    timings["local"] = timings.get("local", 0.0) + (t2 - t1)
    return system


@dataclass
class RunResult:
    mesh: Mesh
    system: BlockSystem
    state: SolutionState
    report: ErrorReport
    steps: int
    dt: float
    step_log: list
    timings: dict


def run_single(config: StudyConfig, nx: int, problem: ManufacturedProblem | None = None) -> RunResult:
    """Solve on one ``nx x nx`` mesh up to ``t_final`` and measure the errors."""
    problem = problem or config.problem
    mesh = build_mesh(nx, nx, problem.domain)
    steps, dt = time_grid(config.t_final, mesh.h, config.dt_const)
    timings: dict = {}
    system = build_system(config, mesh, dt, timings)
    t0 = time.perf_counter()
    state = initial_state(system, problem)
    step_log = []
    for n in range(1, steps + 1):
        state = advance_step(system, state, problem, n * dt)
        M = system.M
        u = state.vec[system.layout.slice("u")]
        step_log.append((n, state.t, float(np.sqrt(u @ (M @ u))), system.seminorm(state.vec)))
    timings["stepping"] = time.perf_counter() - t0
    lay = system.layout
    report = error_norms(
        mesh, system.basis, state.vec[lay.slice("u")], problem, state.t,
        p_coeffs=(state.vec[lay.slice("p_x")], state.vec[lay.slice("p_y")]),
    )
    log.info(
        "nx=%d steps=%d dt=%.4g L2=%.4e | fractional %.2fs, local %.2fs, stepping %.2fs",
        nx, steps, dt, report.L2_u, timings["fractional"], timings["local"], timings["stepping"],
    )
    return RunResult(mesh, system, state, report, steps, dt, step_log, timings)


@dataclass
class StudyReport:
    config: StudyConfig
    rows: list
    timings: list = field(default_factory=list)

    def rates(self, column: str = "L2_u") -> list:
        key = {v: k for k, v in _RATE_COLUMNS.items()}[column]
        return [r.rates[key] for r in self.rows[1:]]


def fill_rates(rows: list) -> None:
    for prev, cur in zip(rows, rows[1:]):
        for rate_key, col in _RATE_COLUMNS.items():
            cur.rates[rate_key] = convergence_rate(getattr(prev, col), prev.h, getattr(cur, col), cur.h)


def run_convergence_study(config: StudyConfig) -> StudyReport:
    config = config.validate()
    rows, timings = [], []
    for nx in config.meshes:
        try:
            res = run_single(config, nx)
        except SolverError as exc:
            raise SolverError(f"mesh nx={nx}: {exc}", residual=exc.residual) from exc
        rows.append(res.report)
        timings.append(res.timings)
    fill_rates(rows)
    report = StudyReport(config, rows, timings)
    if config.out:
        write_report_csv(report, config.out)
    return report


@dataclass
class StabilityRecord:
    n: int
    t: float
    norm_u_sq: float
    seminorm_cum: float
    bound_ratio: float


@dataclass
class StabilityLog:
    records: list
    monotone: bool | None
    max_ratio: float


def _l2_sq(mesh, func, t, degree=10):
    rule = triangle_quadrature(degree)
    pts = mesh.to_physical(np.arange(mesh.n_triangles)[:, None], rule.points[None, :, :])
    v = np.broadcast_to(func(pts[..., 0], pts[..., 1], t), pts.shape[:2])
    return float(np.sum(rule.weights[None, :] * (2.0 * mesh.area)[:, None] * v * v))


def run_stability_probe(
    config: StudyConfig,
    nx: int | None = None,
    steps: int | None = None,
    forcing: str = "manufactured",
    zero_velocity: bool = False,
    zero_initial: bool = False,
) -> StabilityLog:
    """Track the discrete energy bound step by step.

    The ratio logged is
    ``(|u_h^n|^2 + 2 dt sum |.|_A^2) / (|u0|^2 + dt sum |f^m|^2)``.
    With ``f = 0`` and ``b = 0`` the L2 norm of ``u_h`` must not grow; the
    returned ``monotone`` flag records whether it did.
    """
    config = config.validate()
    nx = nx or config.meshes[0]
    problem = config.problem
    if forcing == "zero":
        problem = problem.homogeneous(zero_velocity=zero_velocity, zero_initial=zero_initial)
    elif forcing != "manufactured":
        raise ValidationError(f"forcing must be 'manufactured' or 'zero', got {forcing!r}")
    elif zero_velocity or zero_initial:
        raise ValidationError("zero velocity / initial data only apply to the homogeneous probe")
    mesh = build_mesh(nx, nx, problem.domain)
    if steps is None:
        steps, dt = time_grid(config.t_final, mesh.h, config.dt_const)
    else:
        dt = config.dt_const * mesh.h**1.5
    system = build_system(config, mesh, dt)
    state = initial_state(system, problem)
    u0_sq = _l2_sq(mesh, lambda x, y, t: problem.initial(x, y), 0.0)
    M = system.M
    lay = system.layout
    norms = [float(state.vec[lay.slice("u")] @ (M @ state.vec[lay.slice("u")]))]
    semi_cum, f_cum = 0.0, 0.0
    records = []
    for n in range(1, steps + 1):
        state = advance_step(system, state, problem, n * dt)
        u = state.vec[lay.slice("u")]
        nu = float(u @ (M @ u))
        semi = system.seminorm(state.vec)
        if semi < -1e-10 * max(1.0, nu):
            log.warning("negative semi-norm increment %.3e at step %d", semi, n)
        semi_cum += 2.0 * dt * semi
        f_cum += dt * _l2_sq(mesh, problem.forcing, n * dt)
        denom = u0_sq + f_cum
        ratio = (nu + semi_cum) / denom if denom > 0.0 else 0.0
        records.append(StabilityRecord(n, n * dt, nu, semi_cum, ratio))
        norms.append(nu)
    monotone = None
    if problem.forcing_on is False and problem.velocity.is_zero:
        monotone = all(b <= a * (1.0 + 1e-12) + 1e-300 for a, b in zip(norms, norms[1:]))
        if not monotone:
            log.error("L2 norm of u_h increased in the homogeneous probe")
    max_ratio = max((r.bound_ratio for r in records), default=0.0)
    return StabilityLog(records, monotone, max_ratio)


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return f"{v:.4e}"


def write_report_csv(report: StudyReport, path) -> None:
    """Write the convergence table to ``path`` (a filename or an open text stream)."""
    if hasattr(path, "write"):
        _write_report_rows(report, path)
        return
    with open(path, "w", newline="") as fh:
        _write_report_rows(report, fh)


def _write_report_rows(report: StudyReport, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in report.rows:
        out = []
        for col in CSV_HEADER:
            if col in _RATE_COLUMNS:
                out.append(_fmt(row.rates.get(col)))
            else:
                out.append(_fmt(getattr(row, col)))
        w.writerow(out)


def read_report_csv(path) -> list[dict]:
    """Parse a report CSV; empty cells become ``None``."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (float(v) if v != "" else None) for k, v in r.items()} for r in rows]


def write_stability_csv(log_: StabilityLog, path) -> None:
    """Per-step stability log to ``path`` (a filename or an open text stream)."""
    if hasattr(path, "write"):
        _write_stability_rows(log_, path)
        return
    with open(path, "w", newline="") as fh:
        _write_stability_rows(log_, fh)


def _write_stability_rows(log_: StabilityLog, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["n", "t", "norm_u_sq", "seminorm_cum", "bound_ratio"])
    for r in log_.records:
        w.writerow([r.n, f"{r.t:.6g}", f"{r.norm_u_sq:.6e}", f"{r.seminorm_cum:.6e}", f"{r.bound_ratio:.6e}"])
