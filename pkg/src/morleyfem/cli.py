"""Command line interface.

Subcommands
-----------
converge
    Sweep (eps, level) and report error norms and observed rates as CSV.
bench
    Sweep (eps, level) and report per-stage iteration counts as CSV.
solve
    Run a single solve; optionally export the system matrix or solution.
check
    Run the property-check battery; nonzero exit on any failure.
mesh-info
    Print mesh statistics; optionally save a generated mesh to a file.

Options shared by the sweep subcommands can also come from a config file of
``key = value`` lines (``--config``); explicit flags win over the file. Set
``MORLEYFEM_THREADS`` to cap the linear-algebra thread pools.

Exit codes: 0 on success, 1 on solver failure, 2 on configuration errors.
"""

import argparse
import csv
import os
import sys
import time

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)

_NORMS = ("l2", "h1", "h2", "energy", "h2_bnd", "energy_bnd")

CONFIG_ERROR, SOLVER_FAILURE = 2, 1


def _cap_threads():
    cap = os.environ.get("MORLEYFEM_THREADS")
    if cap:
        for var in _THREAD_VARS:
            os.environ.setdefault(var, cap)


def _float_list(text):
    items = [t for t in text.replace(" ", "").split(",") if t]
    return [float(t) for t in items]


def _int_list(text):
    items = [t for t in text.replace(" ", "").split(",") if t]
    return [int(t) for t in items]


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


class ConfigError(Exception):
    pass


def read_config(path):
    """Parse a file of ``key = value`` lines (# comments, blank lines ok)."""
    values = {}
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                text = line.split("#", 1)[0].strip()
                if not text:
                    continue
                if "=" not in text:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                key, _, value = text.partition("=")
                values[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    return values


# per-subcommand option tables: dest -> (converter, hard default)
_SWEEP_OPTIONS = {
    "example": (int, 1),
    "method": (str, "auto"),
    "eps": (_float_list, [1.0, 1e-2, 1e-4]),
    "levels": (_int_list, [1, 2, 3, 4, 5]),
    "ell": (int, 1),
    "sigma": (float, 5.0),
    "alpha": (float, 2.0),
    "tol": (float, 1e-8),
    "maxit": (int, 1000),
    "maxit_gmres": (int, 500),
    "restart": (int, 20),
    "output": (str, "-"),
    "plot_data": (str, None),
    "zero_timings": (_bool, False),
}


def _add_sweep_arguments(sub):
    sub.add_argument("--config", help="key = value file with any of the other options")
    sub.add_argument("--example", type=int, choices=[1, 2], default=None,
                     help="manufactured problem (default 1)")
    sub.add_argument("--method", default=None,
                     help="direct, decoupled, direct-penalized, decoupled-penalized, "
                          "or auto (default auto)")
    sub.add_argument("--eps", type=_float_list, default=None,
                     help="comma-separated perturbation parameters (default 1,1e-2,1e-4)")
    sub.add_argument("--levels", type=_int_list, default=None,
                     help="comma-separated refinement levels k, meshes n = 2^k "
                          "(default 1,2,3,4,5)")
    sub.add_argument("--ell", type=int, choices=[1, 2], default=None,
                     help="order of the conforming Poisson stage (default 1)")
    sub.add_argument("--sigma", type=float, default=None,
                     help="boundary penalty parameter (default 5)")
    sub.add_argument("--alpha", type=float, default=None,
                     help="pressure scaling of the saddle preconditioner (default 2)")
    sub.add_argument("--tol", type=float, default=None,
                     help="relative residual tolerance (default 1e-8)")
    sub.add_argument("--maxit", type=int, default=None,
                     help="conjugate gradient iteration cap (default 1000)")
    sub.add_argument("--maxit-gmres", type=int, default=None,
                     help="GMRES iteration cap (default 500)")
    sub.add_argument("--restart", type=int, default=None,
                     help="GMRES restart length (default 20)")
    sub.add_argument("--output", default=None, help="CSV path, - for stdout (default -)")
    sub.add_argument("--zero-timings", action="store_const", const=True, default=None,
                     help="write 0 in the timing column for reproducible files")


def _merge_options(args, table):
    config = read_config(args.config) if args.config else {}
    unknown = set(config) - set(table)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    merged = {}
    for key, (conv, default) in table.items():
        given = getattr(args, key, None)
        if given is not None:
            merged[key] = given
        elif key in config:
            try:
                merged[key] = conv(config[key])
            except ValueError as exc:
                raise ConfigError(f"config key {key}: {exc}") from None
        else:
            merged[key] = default
    return merged


def _validate_sweep(opts):
    from .methods import METHODS

    if not opts["eps"]:
        raise ConfigError("eps list is empty")
    if any(e <= 0 for e in opts["eps"]):
        raise ConfigError("eps values must be positive")
    if not opts["levels"]:
        raise ConfigError("levels list is empty")
    if any(k < 1 for k in opts["levels"]):
        raise ConfigError("levels must be at least 1")
    if list(opts["levels"]) != sorted(set(opts["levels"])):
        raise ConfigError("levels must be strictly ascending")
    if opts["method"] not in METHODS + ("auto",):
        raise ConfigError(f"unknown method {opts['method']!r}")
    if opts["example"] not in (1, 2):
        raise ConfigError("example must be 1 or 2")


def _resolve_method(method, eps):
    """The decoupled cascade pays off where the monolithic solver degrades
    (gradient-dominated regimes); elsewhere the direct solve is cheaper."""
    if method != "auto":
        return method
    return "decoupled" if eps >= 0.1 else "direct"


def _solver_options(opts):
    from .methods import SolverOptions

    return SolverOptions(
        tol=opts["tol"],
        maxit_cg=opts["maxit"],
        maxit_gmres=opts["maxit_gmres"],
        restart=opts["restart"],
        alpha=opts["alpha"],
        sigma=opts["sigma"],
    )


def _exact_solution(example, eps):
    from .analysis import example1, example2

    return example1(eps) if example == 1 else example2()


def _write_rows(path, header, rows):
    own = path not in (None, "-")
    fh = open(path, "w", newline="") if own else sys.stdout
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if own:
            fh.close()


def _fmt(x):
    return f"{x:.3E}"


def cmd_converge(args):
    from .analysis import error_norms, rate_table
    from .mesh import uniform_unit_square
    from .methods import solve

    opts = _merge_options(args, _SWEEP_OPTIONS)
    _validate_sweep(opts)
    solver = _solver_options(opts)

    rows, plot_rows, failed = [], [], False
    for eps in sorted(opts["eps"]):
        exact = _exact_solution(opts["example"], eps)
        method = _resolve_method(opts["method"], eps)
        level_rows, errors = [], {name: [] for name in _NORMS}
        for level in opts["levels"]:
            mesh = uniform_unit_square(2**level)
            start = time.perf_counter()
            try:
                res = solve(mesh, eps, exact.forcing, method=method,
                            ell=opts["ell"], options=solver)
                ok = all(r.converged for r in res.reports.values())
            except RuntimeError:
                res, ok = None, False
            wall = 0.0 if opts["zero_timings"] else time.perf_counter() - start
            if res is None:
                level_rows.append([_fmt(eps), level, _fmt(2.0**-level), "",
                                   *[""] * (2 * len(_NORMS)), f"{wall:.3f}", "false"])
                for name in _NORMS:
                    errors[name].append(0.0)
                failed = True
                continue
            failed = failed or not ok
            report = error_norms(exact, res.u, eps)
            values = report.as_dict()
            for name in _NORMS:
                errors[name].append(values[name])
                plot_rows.append([_fmt(eps), level, _fmt(2.0**-level),
                                  name, _fmt(values[name])])
            level_rows.append([_fmt(eps), level, _fmt(2.0**-level),
                               res.u.space.n_dofs, values, f"{wall:.3f}",
                               "true" if ok else "false"])
        rates = {}
        for name in _NORMS:
            if len(errors[name]) >= 2:
                rates[name] = rate_table(errors[name])
            else:
                rates[name] = [float("nan")] * len(errors[name])
        for i, row in enumerate(level_rows):
            if isinstance(row[4], dict):
                cells = []
                for name in _NORMS:
                    cells.append(_fmt(row[4][name]))
                    r = rates[name][i]
                    cells.append("" if r != r else f"{r:.2f}")
                row[4:5] = cells
        rows.extend(level_rows)

    header = ["eps", "level", "h", "dofs"]
    for name in _NORMS:
        header += [name, f"{name}_rate"]
    header += ["wall_time_s", "converged"]
    _write_rows(opts["output"], header, rows)
    if opts["plot_data"]:
        _write_rows(opts["plot_data"], ["eps", "level", "h", "metric", "value"], plot_rows)
    return SOLVER_FAILURE if failed else 0


def cmd_bench(args):
    from .mesh import uniform_unit_square
    from .methods import solve

    opts = _merge_options(args, _SWEEP_OPTIONS)
    _validate_sweep(opts)
    solver = _solver_options(opts)

    rows, failed = [], False
    for eps in sorted(opts["eps"]):
        exact = _exact_solution(opts["example"], eps)
        method = _resolve_method(opts["method"], eps)
        for level in opts["levels"]:
            mesh = uniform_unit_square(2**level)
            try:
                res = solve(mesh, eps, exact.forcing, method=method,
                            ell=opts["ell"], options=solver)
            except RuntimeError as exc:
                rows.append([_fmt(eps), level, _fmt(2.0**-level),
                             "error", 0, "false"])
                print(f"solver failure at eps={eps:g}, level={level}: {exc}",
                      file=sys.stderr)
                failed = True
                continue
            for stage, report in res.reports.items():
                ok = report.converged
                failed = failed or not ok
                rows.append([_fmt(eps), level, _fmt(2.0**-level), stage,
                             report.iterations, "true" if ok else "false"])

    _write_rows(opts["output"], ["eps", "level", "h", "stage", "iterations", "converged"],
                rows)
    return SOLVER_FAILURE if failed else 0


def cmd_solve(args):
    from .analysis import error_norms
    from .linalg import save_matrix_market
    from .mesh import load_mesh, uniform_unit_square
    from .methods import solve, system_matrix

    from .methods import SolverOptions

    if (args.n is None) == (args.mesh is None):
        raise ConfigError("give exactly one of --n or --mesh")
    if args.eps <= 0:
        raise ConfigError("eps must be positive")
    mesh = uniform_unit_square(args.n) if args.n is not None else load_mesh(args.mesh)
    method = _resolve_method(args.method, args.eps)
    options = SolverOptions(tol=args.tol, sigma=args.sigma)
    exact = _exact_solution(args.example, args.eps) if args.example else None
    forcing = exact.forcing if exact else _default_forcing
    res = solve(mesh, args.eps, forcing, method=method, ell=args.ell, options=options)

    print(f"method {res.method}, eps {args.eps:g}, {mesh.n_cells} cells, "
          f"{res.u.space.n_dofs} dofs")
    for stage, report in res.reports.items():
        state = "converged" if report.converged else "FAILED"
        print(f"  {stage}: {report.iterations} iterations, "
              f"residual {report.residual:.2e}, {state}")
    if res.boundary_dof_drop is not None:
        print(f"  boundary dof drop {res.boundary_dof_drop:.2e}")
    if exact:
        values = error_norms(exact, res.u, args.eps).as_dict()
        print("  errors " + ", ".join(f"{k} {values[k]:.3E}" for k in _NORMS))

    if args.export_matrix:
        save_matrix_market(args.export_matrix,
                           system_matrix(mesh, args.eps, method, options))
        print(f"  wrote system matrix to {args.export_matrix}")
    if args.output:
        raw = res.u.raw()
        with open(args.output, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["dof", "value"])
            writer.writerows([i, f"{v:.17g}"] for i, v in enumerate(raw))
        print(f"  wrote solution dofs to {args.output}")
    return 0 if all(r.converged for r in res.reports.values()) else SOLVER_FAILURE


def _default_forcing(p):
    import numpy as np

    return np.ones(p.shape[:-1])


def cmd_check(args):
    from .checks import run_all

    results = run_all(sigma=args.sigma, cell_normals=args.cell_normals)
    width = max(len(r.name) for r in results)
    ok = True
    for r in results:
        status = "PASS" if r.ok else "FAIL"
        ok = ok and r.ok
        print(f"{r.name:<{width}}  {status}  {r.detail}")
    return 0 if ok else SOLVER_FAILURE


def cmd_mesh_info(args):
    from .mesh import load_mesh, save_mesh, uniform_unit_square

    if (args.n is None) == (args.mesh is None):
        raise ConfigError("give exactly one of --n or --mesh")
    mesh = uniform_unit_square(args.n) if args.n is not None else load_mesh(args.mesh)
    print(f"vertices {mesh.n_vertices}, edges {mesh.n_edges}, cells {mesh.n_cells}")
    print(f"boundary vertices {int(mesh.boundary_vertex.sum())}, "
          f"boundary edges {int(mesh.boundary_edge.sum())}")
    print(f"h_K in [{mesh.h_K.min():.6g}, {mesh.h_K.max():.6g}], "
          f"total area {mesh.areas.sum():.6g}")
    if args.save:
        save_mesh(mesh, args.save)
        print(f"wrote mesh to {args.save}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="morleyfem",
        description="Benchmarks and checks for the fourth-order singular "
                    "perturbation solvers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    converge = sub.add_parser("converge", help="error norms and rates as CSV")
    _add_sweep_arguments(converge)
    converge.add_argument("--plot-data", default=None,
                          help="also write long-format CSV of all norms")
    converge.set_defaults(func=cmd_converge)

    bench = sub.add_parser("bench", help="per-stage iteration counts as CSV")
    _add_sweep_arguments(bench)
    bench.set_defaults(func=cmd_bench)

    solve = sub.add_parser("solve", help="run a single solve")
    solve.add_argument("--n", type=int, default=None, help="uniform mesh parameter")
    solve.add_argument("--mesh", default=None, help="mesh file to load")
    solve.add_argument("--eps", type=float, required=True)
    solve.add_argument("--method", default="auto")
    solve.add_argument("--ell", type=int, choices=[1, 2], default=1)
    solve.add_argument("--sigma", type=float, default=5.0)
    solve.add_argument("--tol", type=float, default=1e-8)
    solve.add_argument("--example", type=int, choices=[1, 2], default=None,
                       help="use a manufactured forcing and report errors")
    solve.add_argument("--export-matrix", default=None,
                       help="write the system matrix in MatrixMarket format")
    solve.add_argument("--output", default=None, help="write solution dofs as CSV")
    solve.set_defaults(func=cmd_solve)

    check = sub.add_parser("check", help="run the property-check battery")
    check.add_argument("--sigma", type=float, default=5.0,
                       help="penalty used by the coercivity check")
    check.add_argument("--cell-normals", action="store_true",
                       help="inject per-cell edge normals to demonstrate failure")
    check.set_defaults(func=cmd_check)

    info = sub.add_parser("mesh-info", help="print mesh statistics")
    info.add_argument("--n", type=int, default=None, help="uniform mesh parameter")
    info.add_argument("--mesh", default=None, help="mesh file to load")
    info.add_argument("--save", default=None, help="write the mesh to this path")
    info.set_defaults(func=cmd_mesh_info)
    return parser


def main(argv=None):
    _cap_threads()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
