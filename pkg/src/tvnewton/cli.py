"""Command-line entry point: run the experiment suites and export CSV / PGM files.

Exit codes: 0 on success, 1 on solver non-convergence or I/O failure,
2 on usage errors.
"""

import argparse
import csv
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checks
from .experiments import (
    ALPHA_GRID,
    BETA_GRID,
    DENOISE_ALPHA,
    DENOISE_BETA,
    DISK_ALPHA,
    DISK_BETA,
    BenchmarkProblem,
    run_convergence,
    run_denoise_full,
    run_disk,
    run_robustness,
)
from .nonlinear import SolveConfig

log = logging.getLogger(__name__)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
EMITS = ("csv", "pgm", "history")


# ---------------------------------------------------------------- writers


def _format_cell(key, value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return "nan"
        return f"{value:.2f}" if key.startswith("order") else f"{value:.5e}"
    return str(value)


def write_csv(rows, path, columns=None):
    """Write dict rows as CSV: header row, LF line endings.

    Floats use scientific notation with 6 significant digits; columns whose
    name starts with ``order`` use 2 decimals; None becomes an empty cell.
    Columns default to the keys of the first row (``columns`` is required for
    an empty row list to produce a header).
    """
    rows = list(rows)
    if columns is None:
        columns = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_format_cell(c, row.get(c)) for c in columns])


def quantize(grid):
    """Affine map of ``[min, max]`` to ``[0, 255]`` with rounding; constant grids map to 0."""
    g = np.asarray(grid, dtype=float)
    if g.ndim != 2:
        raise ValueError("image grid must be two-dimensional")
    if not np.all(np.isfinite(g)):
        raise ValueError("image grid contains non-finite values")
    lo, hi = float(g.min()), float(g.max())
    if hi == lo:
        return np.zeros(g.shape, dtype=np.uint8)
    if not np.isfinite(hi - lo):  # range overflows: halving is exact at this magnitude
        g, lo, hi = 0.5 * g, 0.5 * lo, 0.5 * hi
    return np.rint((g - lo) / (hi - lo) * 255.0).clip(0, 255).astype(np.uint8)


def write_pgm(grid, path):
    """Binary PGM (P5, maxval 255), rows written top to bottom."""
    q = quantize(grid)
    h, w = q.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(q.tobytes())


def read_pgm(path):
    """Read a P5 file written by :func:`write_pgm`."""
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM file")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


def history_rows(report, label=""):
    rows = []
    r0 = report.residuals[0] if report.residuals else 0.0
    for k, res in enumerate(report.residuals):
        rows.append({
            "run": label,
            "step": k,
            "residual": res,
            "relative_residual": res / r0 if r0 else 0.0,
            "minres": report.minres_iterations[k - 1] if k else None,
            "theta": report.thetas[k - 1] if k else None,
        })
    return rows


# ---------------------------------------------------------------- arguments


def parse_levels(text):
    """``"3"`` -> [3]; ``"1..4"`` -> [1, 2, 3, 4]; ``"1,3"`` -> [1, 3].

    Values 1-4 are mesh levels (16, 32, 64, 128 subdivisions); larger
    integers are taken as the number of subdivisions per side.
    """
    try:
        if ".." in text:
            a, b = text.split("..")
            levels = list(range(int(a), int(b) + 1))
        else:
            levels = [int(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid level specification {text!r}") from None
    if not levels or min(levels) < 1 or levels != sorted(levels):
        raise argparse.ArgumentTypeError(f"levels must be ascending positive integers: {text!r}")
    return levels


def parse_p_index(text):
    if text in ("1", "2"):
        return int(text)
    if text in ("inf", "Inf", "infinity"):
        return "inf"
    raise argparse.ArgumentTypeError("p-index must be 1, 2 or inf")


def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("value must be positive")
    return v


def _unit(text):
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("tolerance must lie in (0, 1)")
    return v


def _count(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("count must be >= 1")
    return v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--alpha", type=_positive, help="penalization parameter")
    common.add_argument("--beta", type=_positive, help="regularization parameter")
    common.add_argument("--level", type=parse_levels,
                        help="mesh level 1..4, a range a..b, or subdivisions n > 4")
    common.add_argument("--method", choices=("newton", "picard"), default="newton")
    common.add_argument("--precond", choices=("exact", "inexact"))
    common.add_argument("--nl-tol", type=_unit, default=1e-6)
    common.add_argument("--minres-tol", type=_unit, default=1e-10)
    common.add_argument("--minres-maxit", type=_count, default=200)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--p-index", type=parse_p_index, default=2)
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--emit", action="append", choices=EMITS,
                        help="outputs to write (repeatable; default csv, plus pgm for denoise)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="tvnewton", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.add_parser("convergence", parents=[common], help="errors and orders, smooth problem")
    sub.add_parser("robustness", parents=[common], help="iteration counts over (alpha, beta)")
    sub.add_parser("disk", parents=[common], help="non-smooth disk problem")
    sub.add_parser("denoise", parents=[common], help="noisy l_p-ball benchmark")
    sub.add_parser("proptest", parents=[common], help="run the operator property checks")
    return parser


@dataclass
class RunManifest:
    command: str
    config: SolveConfig
    levels: list
    out: Path
    emit: set = field(default_factory=set)
    p_index: object = 2
    alpha_grid: tuple = ALPHA_GRID
    beta_grid: tuple = BETA_GRID


def manifest_from_args(args):
    defaults = {
        "convergence": (1.0, 1.0, [1, 2, 3, 4], "exact"),
        "robustness": (None, None, [3], "exact"),
        "disk": (DISK_ALPHA, DISK_BETA, [1, 2, 3, 4], "exact"),
        "denoise": (DENOISE_ALPHA, DENOISE_BETA, [4], "inexact"),
        "proptest": (1.0, 1.0, [1], "exact"),
    }[args.command]
    alpha = args.alpha if args.alpha is not None else (defaults[0] or 1.0)
    beta = args.beta if args.beta is not None else (defaults[1] or 1.0)
    cfg = SolveConfig(
        alpha=alpha, beta=beta, method=args.method,
        precond_mode=args.precond or defaults[3],
        nl_tol=args.nl_tol, minres_tol=args.minres_tol, minres_maxit=args.minres_maxit,
        seed=args.seed,
    )
    emit = set(args.emit or (["csv", "pgm"] if args.command == "denoise" else ["csv"]))
    return RunManifest(
        args.command, cfg, args.level or defaults[2], args.out, emit, args.p_index,
        ALPHA_GRID if args.alpha is None else (args.alpha,),
        BETA_GRID if args.beta is None else (args.beta,),
    )


# ---------------------------------------------------------------- commands


def _cmd_convergence(m):
    rows, reports = run_convergence(m.levels, m.config.alpha, m.config.beta, m.config)
    cols = ["h", "err_p", "order_p", "err_lam", "order_lam", "err_u_h1", "order_u_h1",
            "err_u_l2", "order_u_l2", "outer", "minres_avg", "converged"]
    _emit(m, "convergence", rows, cols, reports, [str(lev) for lev in m.levels])
    for r in rows:
        print(f"h={r['h']:.2e}  p {r['err_p']:.5e}  lam {r['err_lam']:.5e}  "
              f"u_h1 {r['err_u_h1']:.5e}  u_l2 {r['err_u_l2']:.5e}  "
              f"iters {r['outer']}({round(r['minres_avg'])})")
    return all(r["converged"] for r in rows)


def _cmd_robustness(m):
    alphas, betas = m.alpha_grid, m.beta_grid
    cells = run_robustness(alphas, betas, m.levels[-1], m.config.method,
                           m.config.precond_mode, m.config)
    grid = []
    for beta in betas:
        row = {"beta": beta}
        for c in cells:
            if c["beta"] == beta:
                row[f"alpha={c['alpha']:.0e}"] = c["summary"] + ("" if c["converged"] else "*")
        grid.append(row)
    cols = ["beta"] + [f"alpha={a:.0e}" for a in alphas]
    reports = [c["report"] for c in cells if c["report"] is not None]
    labels = [f"alpha={c['alpha']:.0e},beta={c['beta']:.0e}" for c in cells if c["report"]]
    _emit(m, "robustness", grid, cols, reports, labels)
    for row in grid:
        print(f"beta={row['beta']:.0e}  " + "  ".join(str(row[c]) for c in cols[1:]))
    return all(c["converged"] for c in cells)


def _cmd_disk(m):
    rows, reports = run_disk(m.levels, m.config.alpha, m.config.beta, m.config)
    cols = ["h", "err_u_l2", "order_u_l2", "err_interp", "order_interp", "outer",
            "minres_avg", "min_theta", "converged"]
    _emit(m, "disk", rows, cols, reports, [str(lev) for lev in m.levels])
    for r in rows:
        print(f"h={r['h']:.2e}  u_l2 {r['err_u_l2']:.5e}  interp {r['err_interp']:.5e}  "
              f"iters {r['outer']}({round(r['minres_avg'])})  min theta {r['min_theta']:.3g}")
    return all(r["converged"] for r in rows)


def _cmd_denoise(m):
    problem = BenchmarkProblem(alpha=m.config.alpha, beta=m.config.beta, p_index=m.p_index,
                               seed=m.config.seed)
    res = run_denoise_full(problem, m.config.method, m.levels[-1], m.config)
    tag = f"p{m.p_index}_{m.config.method}"
    row = {"p_index": str(m.p_index), "method": m.config.method,
           "outer": res.report.outer_iterations, "minres_avg": res.report.average_minres,
           "warmstart_outer": res.warmstart.outer_iterations if res.warmstart else 0,
           "converged": res.report.converged}
    reports, labels = [res.report], [m.config.method]
    if res.warmstart:
        reports.insert(0, res.warmstart)
        labels.insert(0, "warmstart")
    _emit(m, f"denoise_{tag}", [row], list(row), reports, labels)
    if "pgm" in m.emit:
        write_pgm(res.noisy_image, m.out / f"noisy_p{m.p_index}_seed{m.config.seed}.pgm")
        write_pgm(res.image, m.out / f"denoised_{tag}_seed{m.config.seed}.pgm")
    print(f"p={m.p_index} {m.config.method}: {res.report.summary()} "
          f"converged={res.report.converged}")
    return res.report.converged


def _cmd_proptest(m):
    results = checks.run_all()
    for r in results:
        print(r.line())
    if "csv" in m.emit and m.out:
        write_csv([{"check": r.name, "passed": r.passed, "value": r.value,
                    "threshold": r.threshold} for r in results], m.out / "proptest.csv")
    return all(r.passed for r in results)


COMMANDS = {
    "convergence": _cmd_convergence,
    "robustness": _cmd_robustness,
    "disk": _cmd_disk,
    "denoise": _cmd_denoise,
    "proptest": _cmd_proptest,
}


def _emit(m, stem, rows, cols, reports, labels):
    if "csv" in m.emit:
        write_csv(rows, m.out / f"{stem}.csv", cols)
    if "history" in m.emit:
        hist = [h for rep, lab in zip(reports, labels) for h in history_rows(rep, lab)]
        write_csv(hist, m.out / f"{stem}_history.csv",
                  ["run", "step", "residual", "relative_residual", "minres", "theta"])


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        manifest = manifest_from_args(args)
    except ValueError as exc:
        print(f"tvnewton: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        manifest.out.mkdir(parents=True, exist_ok=True)
        ok = COMMANDS[args.command](manifest)
    except OSError as exc:
        print(f"tvnewton: I/O error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if not ok:
        print("tvnewton: solver did not converge", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
