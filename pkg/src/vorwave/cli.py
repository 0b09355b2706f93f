"""Command-line front end.

Commands: ``dispersion``, ``bifurcate``, ``trace``, ``reconstruct``, ``sweep``.

Configuration is read from an optional JSON file (``--config``)::

    {
      "params": {"gamma": 2.0, "g": 1.0, "k": 1.0, "h": 1.0},
      "solver": {"newton_tol": 1e-11, "max_newton_iters": 25, "ds": 1e-3,
                 "ds_min": 1e-5, "ds_max": 5e-2, "n_modes": 128, "adaptive": true},
      "mode_n": 1,
      "output_dir": "out",
      "grid": {"nx": 256, "ny": 64}
    }

Every key is optional; unknown keys are rejected.  Precedence, lowest first:
built-in defaults, the config file, command-line flags.

Exit codes: 0 success, 2 config or input error, 3 solver divergence,
4 rejected state (validity condition).
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import io as vio
from .continuation import (
    DivergenceError,
    SingularJacobianError,
    SolverConfig,
    find_bifurcation_points,
    sweep_surface,
    trace_branch,
)
from .reconstruction import (
    SingularMapError,
    ValidityError,
    find_stagnation,
    reconstruct,
    surface_geometry,
)
from .residual import (
    PhysicalParams,
    bifurcating_flux,
    dispersion_lambdas,
    laminar_flow,
    residual,
    stagnation_criterion,
)

log = logging.getLogger("vorwave")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_VALIDITY = 4


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    params: PhysicalParams = field(default_factory=PhysicalParams)
    solver: SolverConfig = field(default_factory=SolverConfig)
    mode_n: int = 1
    output_dir: Path = Path(".")
    nx: int | None = None
    ny: int = 64

    @property
    def grid_nx(self) -> int:
        return self.nx if self.nx is not None else 2 * self.solver.n_modes


_TOP_KEYS = {"params", "solver", "mode_n", "output_dir", "grid"}
_PARAM_KEYS = {"gamma", "g", "k", "h"}
_SOLVER_KEYS = set(SolverConfig().to_record())
_GRID_KEYS = {"nx", "ny"}


def _check_keys(section: str, data, allowed: set) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(f"'{section}' must be an object")
    for key in data:
        if key not in allowed:
            raise ConfigError(f"unknown key '{key}' in {section}")
    return data


def load_config(data: dict) -> RunConfig:
    """Validate a parsed config document."""
    _check_keys("config", data, _TOP_KEYS)
    try:
        params = PhysicalParams(**_check_keys("params", data.get("params", {}), _PARAM_KEYS))
        solver = SolverConfig(**_check_keys("solver", data.get("solver", {}), _SOLVER_KEYS))
        grid = _check_keys("grid", data.get("grid", {}), _GRID_KEYS)
        mode_n = data.get("mode_n", 1)
        if not isinstance(mode_n, int) or isinstance(mode_n, bool) or mode_n < 1:
            raise ConfigError(f"mode_n must be a positive integer, got {mode_n!r}")
        cfg = RunConfig(
            params,
            solver,
            mode_n,
            Path(data.get("output_dir", ".")),
            grid.get("nx"),
            grid.get("ny", 64),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    _validate_grid(cfg)
    return cfg


def _validate_grid(cfg: RunConfig) -> None:
    if cfg.nx is not None and (not isinstance(cfg.nx, int) or cfg.nx < 4 or cfg.nx % 2):
        raise ConfigError(f"grid.nx must be an even integer >= 4, got {cfg.nx!r}")
    if not isinstance(cfg.ny, int) or cfg.ny < 2:
        raise ConfigError(f"grid.ny must be an integer >= 2, got {cfg.ny!r}")
    if cfg.mode_n >= cfg.solver.n_modes:
        raise ConfigError(f"mode_n={cfg.mode_n} is not resolved with {cfg.solver.n_modes} modes")


def resolve_config(args: argparse.Namespace) -> RunConfig:
    data = {}
    if args.config is not None:
        try:
            data = vio.read_json(args.config)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(f"malformed config {args.config}: {exc}") from exc
    cfg = load_config(data)
    solver = cfg.solver
    try:
        if args.modes is not None:
            solver = replace(solver, n_modes=args.modes)
        if args.seed_amplitude is not None:
            solver = replace(solver, ds=args.seed_amplitude)
        params = cfg.params
        for name in ("gamma", "g", "k", "h"):
            value = getattr(args, name, None)
            if value is not None:
                params = replace(params, **{name: value})
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    cfg = replace(cfg, params=params, solver=solver)
    if args.out is not None:
        cfg = replace(cfg, output_dir=Path(args.out))
    if getattr(args, "ny", None) is not None:
        cfg = replace(cfg, ny=args.ny)
    if getattr(args, "nx", None) is not None:
        cfg = replace(cfg, nx=args.nx)
    _validate_grid(cfg)
    return cfg


def _fmt(x) -> str:
    if x is None:
        return "-"
    return format(x, ".17g")


# -- commands --------------------------------------------------------------------


def cmd_dispersion(cfg: RunConfig, args) -> int:
    p = cfg.params
    n = cfg.mode_n
    plus, minus = dispersion_lambdas(n, p)
    m_plus, m_minus = (lam * p.h + p.gamma * p.h**2 / 2.0 for lam in (plus, minus))
    crit = stagnation_criterion(p)
    lam_flows = {"plus": laminar_flow(plus, p), "minus": laminar_flow(minus, p)}
    rec = {
        "params": p.to_record(),
        "mode_n": n,
        "lambda_plus": plus,
        "lambda_minus": minus,
        "m_plus": m_plus,
        "m_minus": m_minus,
        "stagnation_criterion": {
            "lhs": crit.lhs,
            "rhs": crit.rhs,
            "holds": crit.holds,
            "critical_k": crit.critical_k,
            "critical_gamma": crit.critical_gamma,
        },
        "stagnation_line": {side: flow.stagnation_y for side, flow in lam_flows.items()},
    }
    if n == 1:
        assert np.allclose(bifurcating_flux(p), (m_plus, m_minus), rtol=1e-14, atol=1e-15)
    print(f"params        gamma={_fmt(p.gamma)} g={_fmt(p.g)} k={_fmt(p.k)} h={_fmt(p.h)} n={n}")
    print(f"lambda_plus   {_fmt(plus)}")
    print(f"lambda_minus  {_fmt(minus)}")
    print(f"m_plus        {_fmt(m_plus)}")
    print(f"m_minus       {_fmt(m_minus)}")
    if p.gamma == 0.0:
        print("stagnation    no stagnation (irrotational)")
    else:
        verdict = "holds" if crit.holds else "fails"
        print(f"stagnation    tanh(kh)/(kh)={_fmt(crit.lhs)} <= {_fmt(crit.rhs)}: {verdict}")
        for side, flow in lam_flows.items():
            print(f"Y0_{side:<11}{_fmt(flow.stagnation_y)}")
        print(f"k_critical    {_fmt(crit.critical_k)}")
        print(f"gamma_crit    {_fmt(crit.critical_gamma)}")
    vio.write_json(cfg.output_dir / "dispersion.json", rec)
    return EXIT_OK


def cmd_bifurcate(cfg: RunConfig, args) -> int:
    points = find_bifurcation_points(cfg.params, args.n_max, cfg.solver.n_modes)
    rows = []
    for bp in points:
        rows.append(
            {
                "n": bp.n,
                "side": bp.side,
                "lambda_star": bp.lambda_star,
                "smallest_singular_value": bp.smallest_singular_value,
                "second_singular_value": bp.second_singular_value,
                "null_overlap": bp.null_overlap,
                "transversality": bp.transversality,
            }
        )
        print(
            f"n={bp.n} {bp.side:<5} lambda*={_fmt(bp.lambda_star)} "
            f"sigma_min={bp.smallest_singular_value:.3e} overlap={bp.null_overlap:.12f} "
            f"transversality={_fmt(bp.transversality)}"
        )
    vio.write_json(
        cfg.output_dir / "bifurcation.json", {"params": cfg.params.to_record(), "points": rows}
    )
    return EXIT_OK


def branch_records(branch) -> list[dict]:
    out = []
    for i, st in enumerate(branch.points):
        flags = branch.validity[i]
        out.append(
            vio.state_record(
                st,
                index=i,
                mode_n=branch.mode_n,
                side=branch.side,
                lambda_star=branch.lambda_star,
                arclength=branch.arclength[i],
                iterations=branch.iterations[i],
                residual_norm=branch.residual_norms[i],
                validity={key: flags[key] for key in ("os", "gra", "injective")},
            )
        )
        out[-1]["s"] = st.amplitude(branch.mode_n)
    return out


def cmd_trace(cfg: RunConfig, args) -> int:
    p, n = cfg.params, cfg.mode_n
    plus, minus = dispersion_lambdas(n, p)
    lam = plus if args.side == "plus" else minus
    branch = trace_branch(p, (n, lam, args.side), args.n_points, cfg.solver, args.s_max)
    path = cfg.output_dir / f"branch_{args.side}.jsonl"
    vio.write_branch(path, branch_records(branch))
    for note in branch.diagnostics:
        log.warning(note)
    last = branch.points[-1]
    print(f"{len(branch.points)} points, last s={_fmt(last.amplitude(n))} lambda={_fmt(last.lam)}")
    print(f"wrote {path}")
    if branch.truncated:
        print("branch truncated: Newton failed below the minimum step", file=sys.stderr)
        return EXIT_DIVERGENCE
    return EXIT_OK


def cmd_reconstruct(cfg: RunConfig, args) -> int:
    try:
        records = vio.read_branch(args.branch)
    except OSError as exc:
        raise ConfigError(f"cannot read branch file: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"malformed branch file {args.branch}: {exc}") from exc
    if not 0 <= args.index < len(records):
        raise ConfigError(f"index {args.index} outside 0..{len(records) - 1}")
    state = vio.state_from_record(records[args.index])
    nx = cfg.nx if cfg.nx is not None else 2 * state.n_modes
    state = state.with_values(w=state.w.resample(nx // 2))
    res = float(np.max(np.abs(residual(state).values)))
    field_ = reconstruct(state, args.a_offset, cfg.ny)
    surface = surface_geometry(state, args.a_offset)
    stag = find_stagnation(field_)
    i = args.index
    u, w = field_.velocity
    meta = {
        "params": state.params.to_record(),
        "index": i,
        "a_offset": args.a_offset,
        "residual_norm": res,
        "nx": int(field_.x.size),
        "ny": int(cfg.ny),
        "x0": float(field_.x[0]),
        "dx": float(field_.x[1] - field_.x[0]),
        "y0": float(field_.y[0]),
        "dy": float(field_.y[1] - field_.y[0]),
    }
    vio.write_field(
        cfg.output_dir / f"field_{i}.json",
        meta,
        {"U": field_.U, "V": field_.V, "zeta": field_.zeta, "psi": field_.psi, "u": u, "v": w},
    )
    vio.write_json(cfg.output_dir / f"stagnation_{i}.json", stag.to_record())
    vio.write_csv_table(
        cfg.output_dir / f"surface_{i}.csv",
        {"X": surface.X.tolist(), "Y": surface.Y.tolist(), "theta0": surface.theta0.values.tolist()},
    )
    if args.emit_gnuplot:
        (cfg.output_dir / f"surface_{i}.gp").write_text(
            "set datafile separator ','\n"
            "set key autotitle columnhead\n"
            "set xlabel 'X'\nset ylabel 'Y'\n"
            f"plot 'surface_{i}.csv' using 1:2 with lines\n"
        )
    print(f"state {i}: residual {res:.3e}, {len(stag.points)} stagnation points, "
          f"critical layer: {'yes' if stag.has_critical_layer else 'no'}")
    for pt in stag.points:
        print(f"  {pt['type']:<6} X={_fmt(pt['X'])} Y={_fmt(pt['Y'])}")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, args) -> int:
    p = cfg.params
    if not (0 < args.h_min < args.h_max) or args.h_count < 2:
        raise ConfigError("need 0 < h_min < h_max and h_count >= 2")
    hs = np.linspace(args.h_min, args.h_max, args.h_count)
    result = sweep_surface(p.gamma, p.g, p.k, hs, args.branch_points, cfg.solver, args.s_max)
    dev_plus, dev_minus = (
        result.relative_deviation() if p.gamma != 0 else (np.full(hs.size, math.nan),) * 2
    )
    header = {
        "gamma": p.gamma,
        "g": p.g,
        "k": p.k,
        "h_flux_zero": result.h_flux_zero,
        "h_stagnation": result.h_stagnation,
    }
    columns = {
        "h": hs.tolist(),
        "m_plus": result.m_plus.tolist(),
        "m_minus": result.m_minus.tolist(),
        "stp_holds": [bool(v) for v in result.stp_holds],
        "h_star_bracket": result.region().tolist(),
        "rel_dev_plus": dev_plus.tolist(),
        "rel_dev_minus": dev_minus.tolist(),
    }
    vio.write_csv_table(cfg.output_dir / "sweep.csv", columns, header)
    if result.branches:
        rows = []
        for (h, side), br in sorted(result.branches.items()):
            fit = br.asymptotics()
            rows.append(
                {
                    "h": h,
                    "side": side,
                    "points": len(br.points),
                    "s_last": br.points[-1].amplitude(1),
                    "lambda_last": br.points[-1].lam,
                    "order": fit["order"],
                    "truncated": br.truncated,
                }
            )
        vio.write_branch(cfg.output_dir / "sweep_branches.jsonl", rows)
    if args.emit_gnuplot:
        (cfg.output_dir / "sweep.gp").write_text(
            "set datafile separator ','\n"
            "set datafile commentschars '#'\n"
            "set key autotitle columnhead\n"
            "set xlabel 'h'\nset ylabel 'm'\n"
            "plot 'sweep.csv' using 1:2 with lines, '' using 1:3 with lines\n"
        )
    print(f"h_flux_zero   {_fmt(result.h_flux_zero)}")
    print(f"h_stagnation  {_fmt(result.h_stagnation)}")
    print(f"wrote {cfg.output_dir / 'sweep.csv'}")
    return EXIT_OK


# -- argument parsing ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    common.add_argument("--modes", type=int, help="Fourier modes N (overrides solver.n_modes)")
    common.add_argument(
        "--seed-amplitude", type=float, help="first step off the trivial branch (solver.ds)"
    )
    for name in ("gamma", "g", "k", "h"):
        common.add_argument(f"--{name}", type=float, help=f"override params.{name}")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="vorwave", description="Periodic water waves with constant vorticity."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("dispersion", parents=[common], help="laminar speeds, fluxes, stagnation")

    bif = sub.add_parser("bifurcate", parents=[common], help="bifurcation points with SVD checks")
    bif.add_argument("--n-max", type=int, default=3)

    tr = sub.add_parser("trace", parents=[common], help="follow a bifurcating branch")
    tr.add_argument("--side", choices=("plus", "minus"), default="minus")
    tr.add_argument("--n-points", type=int, default=20)
    tr.add_argument("--s-max", type=float, default=None)

    rc = sub.add_parser("reconstruct", parents=[common], help="flow field of a branch point")
    rc.add_argument("--branch", type=Path, required=True)
    rc.add_argument("--index", type=int, required=True)
    rc.add_argument("--a-offset", type=float, default=0.0)
    rc.add_argument("--nx", type=int)
    rc.add_argument("--ny", type=int)
    rc.add_argument("--emit-gnuplot", action="store_true")

    sw = sub.add_parser("sweep", parents=[common], help="bifurcating fluxes over depth")
    sw.add_argument("--h-min", type=float, default=0.05)
    sw.add_argument("--h-max", type=float, default=5.0)
    sw.add_argument("--h-count", type=int, default=100)
    sw.add_argument("--branch-points", type=int, default=0)
    sw.add_argument("--s-max", type=float, default=None)
    sw.add_argument("--emit-gnuplot", action="store_true")
    return parser


COMMANDS = {
    "dispersion": cmd_dispersion,
    "bifurcate": cmd_bifurcate,
    "trace": cmd_trace,
    "reconstruct": cmd_reconstruct,
    "sweep": cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s"
    )
    try:
        cfg = resolve_config(args)
        if args.command == "bifurcate" and args.n_max < 1:
            raise ConfigError(f"--n-max must be >= 1, got {args.n_max}")
        if args.command == "trace" and args.n_points < 1:
            raise ConfigError(f"--n-points must be >= 1, got {args.n_points}")
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, SingularJacobianError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except ValidityError as exc:
        print(f"error: rejected state {exc}", file=sys.stderr)
        return EXIT_VALIDITY
    except SingularMapError as exc:
        print(f"error: rejected state [m3] {exc}", file=sys.stderr)
        return EXIT_VALIDITY


if __name__ == "__main__":
    sys.exit(main())
