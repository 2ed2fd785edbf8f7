import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frachdg.basis import ReferenceBasis
from frachdg.errors import ValidationError
from frachdg.harness import (
    CSV_HEADER,
    ErrorReport,
    StudyConfig,
    StudyReport,
    build_system,
    convergence_rate,
    energy_seminorm,
    error_norms,
    fill_rates,
    parse_config_file,
    read_report_csv,
    run_convergence_study,
    run_single,
    run_stability_probe,
    time_grid,
    write_report_csv,
)
from frachdg.mesh import build_mesh
from frachdg.problems import ZERO_VELOCITY, ManufacturedProblem, Poly1D, example51
from frachdg.fracop import FractionalOrders
from frachdg.timestepper import l2_project

QUICK = StudyConfig(meshes=(3, 4), t_final=0.05)


# ---- rates ------------------------------------------------------------------

def test_rate_from_table_entries():
    assert round(convergence_rate(1.3993e-4, 1 / 6, 5.6088e-5, 1 / 10), 2) == 1.79


def test_rate_exact_halving_and_stagnation():
    assert convergence_rate(0.3, 0.2, 0.075, 0.1) == pytest.approx(2.0)
    assert convergence_rate(0.3, 0.2, 0.3, 0.1) == 0.0


@given(st.floats(1e-8, 1.0), st.floats(1e-8, 1.0), st.floats(0.01, 1), st.floats(0.01, 1), st.floats(1e-3, 1e3))
@settings(max_examples=60)
def test_rate_scale_invariant(e1, e2, h1, h2, c):
    if abs(math.log(h1 / h2)) < 1e-3:
        return
    assert convergence_rate(c * e1, h1, c * e2, h2) == pytest.approx(convergence_rate(e1, h1, e2, h2), abs=1e-9)


@pytest.mark.parametrize("args", [(0, 0.1, 1, 0.2), (1, -0.1, 1, 0.2), (1, 0.1, 2, 0.1)])
def test_rate_rejects(args):
    with pytest.raises(ValidationError):
        convergence_rate(*args)


# ---- error norms ------------------------------------------------------------

def test_projection_error_is_second_order():
    prob, basis = example51(), ReferenceBasis(1)
    errs = []
    for nx in (8, 16, 32):
        mesh = build_mesh(nx, nx)
        c = l2_project(mesh, basis, lambda x, y: math.exp(-0.3) * prob.X(x) * prob.Y(y))
        rep = error_norms(mesh, basis, c, prob, 0.3)
        assert rep.L2_u > 0 and rep.L1_u > 0
        errs.append(rep.L2_u)
    rates = [convergence_rate(a, 1 / n, b, 0.5 / n) for a, b, n in zip(errs, errs[1:], (8, 16))]
    assert all(1.9 < r < 2.1 for r in rates)


def test_exactly_represented_solution_has_no_error():
    linear = ManufacturedProblem("linear", Poly1D((0.5, 2.0)), Poly1D((1.0,)), ZERO_VELOCITY, FractionalOrders(1.5, 1.5))
    mesh, basis = build_mesh(3, 3), ReferenceBasis(1)
    c = l2_project(mesh, basis, lambda x, y: math.exp(-0.4) * (0.5 + 2 * x) + 0 * y)
    ex = math.exp(-0.4)
    rep = error_norms(mesh, basis, c, linear, 0.4, p_coeffs=(np.full_like(c, 2 * ex), np.zeros_like(c)))
    for v in (rep.L2_u, rep.L1_u, rep.L2_dxu, rep.L2_dyu, rep.L2_px, rep.L2_py):
        assert 0 <= v <= 1e-12


# ---- energy semi-norm -------------------------------------------------------

@pytest.fixture(scope="module")
def sys4():
    return build_system(StudyConfig(), build_mesh(4, 4), 0.1)


def test_seminorm_zero_and_constant(sys4):
    lay = sys4.layout
    args = (sys4.D, sys4.Epen, sys4.Bx, sys4.By, lay)
    assert energy_seminorm(np.zeros(lay.total), *args) == 0.0
    x = np.zeros(lay.total)
    x[lay.slice("u")] = 1.0
    assert energy_seminorm(x, *args) == pytest.approx(4.0, rel=1e-13)


def test_seminorm_random_states_match_system(sys4, rng):
    lay = sys4.layout
    for _ in range(20):
        x = rng.standard_normal(lay.total)
        val = energy_seminorm(x, sys4.D, sys4.Epen, sys4.Bx, sys4.By, lay)
        assert val >= -1e-10
        f, r = lay.split(x), lay.split(sys4.A @ x)
        ident = (f["u"] @ r["u"] - f["p_x"] @ r["sigma_x"] - f["p_y"] @ r["sigma_y"]
                 + f["sigma_x"] @ r["p_x"] + f["sigma_y"] @ r["p_y"] - f["u"] @ (sys4.M @ f["u"]) / sys4.dt)
        assert val == pytest.approx(ident, rel=1e-12)


# ---- configuration ----------------------------------------------------------

def test_time_grid_lands_on_final_time():
    n, dt = time_grid(0.1, 1 / 6)
    assert n == math.ceil(0.1 / (1 / 6) ** 1.5) and n * dt == pytest.approx(0.1)
    assert dt <= (1 / 6) ** 1.5
    n, dt = time_grid(1.0, 0.25, 1.0)
    assert (n, dt) == (8, 0.125)


def test_config_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# penalty-scaled run\nexample = example51\nalpha = 1.9\nbeta=1.6\neps1 = 1/h\n"
                 "meshes = 6, 10 14\nt_final = 1  # observation time\nquad_smooth = 20\n")
    vals = parse_config_file(p)
    assert vals == {"example": "example51", "alpha": 1.9, "beta": 1.6, "eps1": "1/h",
                    "meshes": (6, 10, 14), "t_final": 1.0, "quad_smooth": 20}


@pytest.mark.parametrize("text", ["nonsense\n", "colour = blue\n", "alpha = fast\n"])
def test_config_file_errors(tmp_path, text):
    p = tmp_path / "bad.cfg"
    p.write_text(text)
    with pytest.raises(ValidationError):
        parse_config_file(p)


@pytest.mark.parametrize(
    "changes",
    [dict(meshes=(6, 6)), dict(meshes=(10, 6)), dict(meshes=()), dict(t_final=0.0), dict(dt_const=-1.0),
     dict(degree=3), dict(alpha=2.0), dict(example="nope"), dict(eps1="0"), dict(quad_smooth=0)],
)
def test_invalid_configs(changes):
    from dataclasses import replace
    with pytest.raises(ValidationError):
        replace(StudyConfig(), **changes).validate()


# ---- CSV --------------------------------------------------------------------

def _row(h, e):
    return ErrorReport(h, e, e / 2, 10 * e, 11 * e)


def test_empty_report_is_header_only(tmp_path):
    p = tmp_path / "r.csv"
    write_report_csv(StudyReport(StudyConfig(), []), p)
    assert p.read_text().splitlines() == [",".join(CSV_HEADER)]


def test_single_row_report(tmp_path):
    p = tmp_path / "r.csv"
    rows = [_row(1 / 6, 1.3993e-4)]
    fill_rates(rows)
    write_report_csv(StudyReport(StudyConfig(), rows), p)
    lines = p.read_text().splitlines()
    assert len(lines) == 2
    assert lines[1] == "1.6667e-01,1.3993e-04,,6.9965e-05,,1.3993e-03,,1.5392e-03,"


def test_four_mesh_report_round_trip(tmp_path):
    rows = [_row(1 / n, e) for n, e in ((6, 1.3993e-4), (10, 5.6088e-5), (14, 2.9926e-5), (18, 1.8388e-5))]
    fill_rates(rows)
    buf = io.StringIO()
    write_report_csv(StudyReport(StudyConfig(), rows), buf)
    lines = buf.getvalue().splitlines()
    assert len(lines) == 5
    assert lines[1].split(",")[2] == "" and lines[2].split(",")[2] != ""
    p = tmp_path / "r.csv"
    p.write_text(buf.getvalue())
    back = read_report_csv(p)
    assert back[0]["rate_L2"] is None
    for r, b in zip(rows, back):
        for col in ("h", "L2_u", "L1_u", "L2_dxu", "L2_dyu"):
            assert b[col] == pytest.approx(getattr(r, col), rel=5e-5)
    assert back[1]["rate_L2"] == pytest.approx(rows[1].rates["rate_L2"], rel=5e-5)
    assert round(back[1]["rate_L2"], 2) == 1.79


# ---- drivers ----------------------------------------------------------------

def test_single_mesh_study_has_no_rates(tmp_path):
    from dataclasses import replace
    out = tmp_path / "one.csv"
    report = run_convergence_study(replace(QUICK, meshes=(3,), out=str(out)))
    assert len(report.rows) == 1 and report.rows[0].rates == {}
    assert out.read_text().splitlines()[1].count(",,") >= 1


def test_study_is_deterministic():
    a = run_convergence_study(QUICK)
    b = run_convergence_study(QUICK)
    for ra, rb in zip(a.rows, b.rows):
        assert (ra.L2_u, ra.L1_u, ra.L2_dxu, ra.L2_dyu) == (rb.L2_u, rb.L1_u, rb.L2_dxu, rb.L2_dyu)
    assert len(a.rates()) == 1 and set(a.rows[1].rates) == {"rate_L2", "rate_L1", "rate_dxu", "rate_dyu"}
    assert set(a.timings[0]) == {"fractional", "local", "stepping"}


def test_run_single_log(tmp_path):
    res = run_single(QUICK, 4)
    assert res.steps == len(res.step_log) and res.state.t == pytest.approx(0.05)
    assert all(semi >= 0 for *_, semi in res.step_log)


def test_disk_cache_is_used(tmp_path):
    from dataclasses import replace
    from frachdg import harness
    cfg = replace(QUICK, cache_dir=str(tmp_path / "cache"))
    first = run_single(cfg, 3).report.L2_u
    assert len(list((tmp_path / "cache").glob("bmat-*.bin"))) == 2
    harness._FRAC_MEMO.clear()
    assert run_single(cfg, 3).report.L2_u == first


def test_stability_zero_everything():
    log_ = run_stability_probe(QUICK, nx=4, steps=5, forcing="zero", zero_velocity=True, zero_initial=True)
    assert len(log_.records) == 5 and log_.monotone is True
    for r in log_.records:
        assert r.norm_u_sq == r.seminorm_cum == r.bound_ratio == 0.0


def test_stability_homogeneous_monotone():
    log_ = run_stability_probe(QUICK, nx=5, steps=20, forcing="zero", zero_velocity=True)
    assert log_.monotone is True
    norms = [r.norm_u_sq for r in log_.records]
    assert all(b <= a for a, b in zip(norms, norms[1:]))
    assert log_.max_ratio <= 1.0 + 1e-12


def test_stability_manufactured_bounded():
    log_ = run_stability_probe(QUICK, nx=4, steps=10)
    assert log_.monotone is None and 0 < log_.max_ratio < 10
    cum = [r.seminorm_cum for r in log_.records]
    assert all(b >= a for a, b in zip(cum, cum[1:]))


def test_stability_option_errors():
    with pytest.raises(ValidationError):
        run_stability_probe(QUICK, nx=3, steps=2, forcing="sometimes")
    with pytest.raises(ValidationError):
        run_stability_probe(QUICK, nx=3, steps=2, zero_velocity=True)
