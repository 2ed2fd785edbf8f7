"""Command line entry point: ``frachdg {convergence,stability,single}``.

Exit codes: 0 success, 2 invalid input, 3 solver failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

import numpy as np

from .errors import SolverError, ValidationError
from .harness import (
    StudyConfig,
    coerce_config_value,
    parse_config_file,
    run_convergence_study,
    run_single,
    run_stability_probe,
    write_report_csv,
    write_stability_csv,
)
from .mesh import write_mesh_dump

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3

_OVERRIDES = [
    ("example", "--example"),
    ("alpha", "--alpha"),
    ("beta", "--beta"),
    ("eps1", "--eps1"),
    ("eps2", "--eps2"),
    ("degree", "--degree"),
    ("meshes", "--meshes"),
    ("t_final", "--t-final"),
    ("dt_const", "--dt-const"),
    ("quad_smooth", "--quad-smooth"),
    ("quad_singular", "--quad-singular"),
    ("out", "--out"),
    ("cache_dir", "--cache-dir"),
]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", help="key = value configuration file")
    for key, flag in _OVERRIDES:
        p.add_argument(flag, dest=key, default=None)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="frachdg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    conv = sub.add_parser("convergence", help="run a mesh-refinement study and write the CSV table")
    _common(conv)

    stab = sub.add_parser("stability", help="log the discrete energy bound step by step")
    _common(stab)
    stab.add_argument("--nx", type=int, help="cells per side (default: first mesh)")
    stab.add_argument("--steps", type=int, help="number of steps of size dt_const*h^1.5")
    stab.add_argument("--forcing", choices=("manufactured", "zero"), default="manufactured")
    stab.add_argument("--zero-velocity", action="store_true")
    stab.add_argument("--zero-initial", action="store_true")

    single = sub.add_parser("single", help="solve on one mesh, print norms and dump the state")
    _common(single)
    single.add_argument("--nx", type=int, help="cells per side (default: first mesh)")
    single.add_argument("--state-out", help="text file for the final coefficient vector")
    single.add_argument("--step-log", help="per-step log: n, t, |u_h|_L2, semi-norm increment")
    single.add_argument("--mesh-dump", help="plain-text mesh dump")
    return parser


def load_config(args) -> StudyConfig:
    values = parse_config_file(args.config) if args.config else {}
    for key, _ in _OVERRIDES:
        raw = getattr(args, key)
        if raw is not None:
            values[key] = coerce_config_value(key, raw)
    return replace(StudyConfig(), **values).validate()


def _cmd_convergence(args, cfg):
    report = run_convergence_study(cfg)
    write_report_csv(report, sys.stdout)
    if cfg.out:
        print(f"wrote {cfg.out}", file=sys.stderr)
    return EXIT_OK


def _cmd_stability(args, cfg):
    log_ = run_stability_probe(
        cfg, nx=args.nx, steps=args.steps, forcing=args.forcing,
        zero_velocity=args.zero_velocity, zero_initial=args.zero_initial,
    )
    write_stability_csv(log_, cfg.out or sys.stdout)
    print(f"max bound ratio {log_.max_ratio:.4g}", file=sys.stderr)
    if log_.monotone is False:
        print("L2 norm increased during the homogeneous run", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _cmd_single(args, cfg):
    res = run_single(cfg, args.nx or cfg.meshes[0])
    r = res.report
    print(f"nx={res.mesh.nx} h={r.h:.6g} steps={res.steps} dt={res.dt:.6g} t={res.state.t:.6g}")
    print(f"L2_u={r.L2_u:.4e} L1_u={r.L1_u:.4e} L2_dxu={r.L2_dxu:.4e} L2_dyu={r.L2_dyu:.4e}")
    print(f"L2_px={r.L2_px:.4e} L2_py={r.L2_py:.4e}")
    if args.state_out:
        np.savetxt(args.state_out, res.state.vec, header="u | sigma_x | sigma_y | p_x | p_y")
    if args.step_log:
        with open(args.step_log, "w") as fh:
            fh.write("n,t,norm_u,seminorm\n")
            for n, t, nu, semi in res.step_log:
                fh.write(f"{n},{t:.6g},{nu:.6e},{semi:.6e}\n")
    if args.mesh_dump:
        write_mesh_dump(res.mesh, args.mesh_dump)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args)
        handler = {"convergence": _cmd_convergence, "stability": _cmd_stability, "single": _cmd_single}
        return handler[args.command](args, cfg)
    except ValidationError as exc:
        print(f"frachdg: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverError as exc:
        print(f"frachdg: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"frachdg: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
