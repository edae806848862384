"""Command-line experiment runner for the seven bundled example problems.

Every table is written with a ``#`` metadata header (config hash, ``h``,
grids, term caps) followed by a CSV header row and data rows, or as one
JSON document with the same content.  Floats are printed with 9
significant digits, and nothing time- or host-dependent is emitted, so
identical configurations produce byte-identical files.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from . import fvm
from .aham import DEFAULT_TERM_CAP, ProblemSpec, SeriesSolution, iterate, solution_moment
from .analytic import exact_moments, get_exact
from .expoly import AlgebraError, ExpPoly
from .hopt import HOptReport, ResidualGrid, optimize_h
from .kernels import BreakageSpec, SeparableKernel, builtin_kernel
from .pbe_ops import OperatorSplit

log = logging.getLogger("ahampbe")

__all__ = [
    "ExampleSetup",
    "EXAMPLES",
    "RunConfig",
    "ErrorGrid",
    "error_norm",
    "build_problem",
    "run_example",
    "main",
]


@dataclass(frozen=True)
class ExampleSetup:
    id: str
    title: str
    kernel: str
    c0_terms: tuple  # (coeff, power, rate)
    t_max: float
    times: tuple
    breakage: Optional[tuple] = None  # (eta, i, j, sigma)
    exact_id: Optional[str] = None
    reference: str = "exact"  # exact | fvm | fine
    residual_s_min: float = 0.0

    def c0(self) -> ExpPoly:
        return ExpPoly(list(self.c0_terms))

    def split(self) -> OperatorSplit:
        brk = BreakageSpec(*self.breakage) if self.breakage else None
        return OperatorSplit(builtin_kernel(self.kernel), brk)


EXAMPLES = {
    "4.1": ExampleSetup("4.1", "constant kernel, exponential start", "constant", ((1.0, 0, 1),), 3.0,
                        (0.5, 1.0, 1.5, 2.0, 2.5, 3.0), exact_id="constant_exp"),
    "4.2": ExampleSetup("4.2", "sum kernel, exponential start", "sum", ((1.0, 0, 1),), 1.0,
                        (0.25, 0.5, 0.75, 1.0), exact_id="sum_exp"),
    "4.3": ExampleSetup("4.3", "product kernel, exponential start (pre-gelation)", "product", ((1.0, 0, 1),), 1.0,
                        (0.25, 0.5, 0.75, 1.0), exact_id="product_exp"),
    "4.4": ExampleSetup("4.4", "sum kernel, gamma start", "sum", ((4.0, 1, 2),), 1.0,
                        (0.25, 0.5, 0.75, 1.0), reference="fvm"),
    "4.5": ExampleSetup("4.5", "free-molecular Brownian kernel, gamma start", "brownian", ((4.0, 1, 2),), 0.2,
                        (0.05, 0.1, 0.2), reference="fvm", residual_s_min=0.05),
    "4.6": ExampleSetup("4.6", "constant aggregation with binary breakage, S(s) = s/2", "constant", ((4.0, 1, 2),),
                        2.0, (0.5, 1.0, 1.5, 2.0), breakage=(2, 1, 1, 0.5), reference="fine"),
    "4.7": ExampleSetup("4.7", "constant aggregation with binary breakage, S(s) = 2s", "constant", ((32.0, 1, 4),),
                        1.0, (0.25, 0.5, 0.75, 1.0), breakage=(2, 1, 1, 2.0), reference="fine"),
}


@dataclass(frozen=True)
class ErrorGrid:
    """Uniform partition of ``[0, s_max]`` into ``K`` cells; errors use the midpoints."""

    K: int = 1000
    s_max: float = 10.0

    def __post_init__(self):
        if self.K < 1 or self.s_max <= 0:
            raise ValueError("error grid needs K >= 1 and s_max > 0")

    @property
    def width(self) -> float:
        return self.s_max / self.K

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.K) + 0.5) * self.width


def error_norm(approx: Callable, reference: Callable, grid: ErrorGrid = ErrorGrid()) -> float:
    """``sum_j |approx(s_j) - reference(s_j)| * h_j`` over the cell midpoints."""
    s = grid.midpoints
    diff = np.asarray(approx(s), dtype=float) - np.asarray(reference(s), dtype=float)
    return float(np.sum(np.abs(diff)) * grid.width)


@dataclass
class RunConfig:
    example: str
    terms: int = 3
    h: Optional[float] = -1.0
    optimize: bool = False
    h_bracket: tuple = (-2.0, -1e-3)
    residual_grid: Optional[tuple] = None  # (K, s_max, t_max)
    error_grid: tuple = (1000, 10.0)
    fmt: str = "csv"
    out: str = "."
    fvm_cells: int = 400
    mode: str = "aham"
    term_cap: int = DEFAULT_TERM_CAP
    problem: Optional[dict] = None  # inline problem instead of an example id

    def setup(self) -> ExampleSetup:
        if self.problem is not None:
            return _setup_from_dict(self.problem)
        try:
            return EXAMPLES[self.example]
        except KeyError:
            raise ValueError(f"unknown example {self.example!r}; choose from {', '.join(EXAMPLES)}") from None

    def resolved_residual_grid(self, ex: ExampleSetup) -> tuple:
        if self.residual_grid is not None:
            return tuple(self.residual_grid)
        return (20, 10.0, ex.t_max)

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("out")
        d["h_bracket"] = list(d["h_bracket"])
        d["error_grid"] = list(d["error_grid"])
        if d["residual_grid"] is not None:
            d["residual_grid"] = list(d["residual_grid"])
        return d

    def digest(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _setup_from_dict(d: dict) -> ExampleSetup:
    kernel = d["kernel"]
    if isinstance(kernel, dict):
        raise ValueError("inline problems use a builtin kernel name (constant, sum, product, brownian)")
    brk = d.get("breakage")
    if isinstance(brk, dict):
        brk = (brk["eta"], brk["i"], brk["j"], brk["sigma_s"])
    return ExampleSetup(
        d.get("id", "inline"), d.get("title", "inline problem"), kernel,
        tuple(tuple(t) for t in d["c0"]), float(d["t_max"]),
        tuple(d.get("times", [d["t_max"]])), tuple(brk) if brk else None,
        d.get("exact_id"), d.get("reference", "exact" if d.get("exact_id") else "fine" if brk else "fvm"),
        float(d.get("residual_s_min", 0.0)),
    )


def build_problem(ex: ExampleSetup) -> ProblemSpec:
    return ProblemSpec(ex.c0(), ex.split(), ex.t_max, ex.id)


# ---------------------------------------------------------------------------
# references
# ---------------------------------------------------------------------------


def _reference(ex: ExampleSetup, cfg: RunConfig):
    """Return ``(ref(s, tau), moment(j, tau), description)``."""
    if ex.reference == "exact":
        sol = get_exact(ex.exact_id)
        return sol.evaluator, (lambda j, t: exact_moments(ex.exact_id, j, t)), f"exact:{ex.exact_id}"
    c0 = ex.c0()
    if ex.reference == "fine":
        mids = ErrorGrid(*cfg.error_grid)
        ref = fvm.fine_reference(builtin_kernel(ex.kernel), c0, ex.times,
                                 BreakageSpec(*ex.breakage) if ex.breakage else None,
                                 s_max=max(30.0, 3.0 * mids.s_max))

        def mom(j, t):
            v = ref.values[min(ref.values, key=lambda x: abs(x - t))]
            return float(integrate.simpson(ref.s**j * v, x=ref.s))

        return ref, mom, f"fine-mol:ds={ref.meta['ds']},s_max={ref.meta['s_max']},richardson"
    if ex.reference == "fvm":
        if ex.breakage:
            raise ValueError("the sectional FVM reference covers pure aggregation; use reference 'fine'")
        grid = fvm.build_grid(1e-3, 60.0, cfg.fvm_cells, "geometric")
        sols = {t: fvm.fvm_solve(builtin_kernel(ex.kernel), c0, grid, t) for t in ex.times}

        def ref_fn(s, t):
            cs = sols[min(sols, key=lambda x: abs(x - t))]
            return np.interp(np.asarray(s, dtype=float), cs.points, cs.values)

        return ref_fn, (lambda j, t: sols[min(sols, key=lambda x: abs(x - t))].moment(j)), \
            f"fvm:{cfg.fvm_cells} geometric cells on [1e-3, 60],backend={fvm.BACKEND}"
    raise ValueError(f"unknown reference kind {ex.reference!r}")


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.9g}"


def _write_table(path: Path, meta: dict, columns: Sequence[str], rows, fmt: str) -> Path:
    if fmt == "csv":
        lines = [f"# {k}: {meta[k]}" for k in meta]
        lines.append(",".join(columns))
        lines += [",".join(_fmt(v) for v in r) for r in rows]
        path = path.with_name(path.name + ".csv")
        path.write_text("\n".join(lines) + "\n")
    else:
        doc = {"meta": meta, "columns": list(columns),
               "rows": [[v if isinstance(v, str) else float(_fmt(v)) if not isinstance(v, (int, np.integer))
                         else int(v) for v in r] for r in rows]}
        path = path.with_name(path.name + ".json")
        path.write_text(json.dumps(doc, indent=1) + "\n")
    return path


@dataclass
class RunResult:
    files: list = field(default_factory=list)
    h: float = -1.0
    solution: Optional[SeriesSolution] = None
    hopt: Optional[HOptReport] = None
    errors: dict = field(default_factory=dict)


def run_example(cfg: RunConfig) -> RunResult:
    """Solve one example and write its density, moment, error-norm (and h-report) tables."""
    ex = cfg.setup()
    if cfg.terms < 1:
        raise ValueError("--terms must be >= 1")
    problem = build_problem(ex)
    rgrid_t = cfg.resolved_residual_grid(ex)
    rK, rsmax, rtmax = int(rgrid_t[0]), float(rgrid_t[1]), float(rgrid_t[2])
    rgrid = ResidualGrid(np.linspace(ex.residual_s_min, rsmax, rK + 1), np.linspace(0.0, rtmax, rK + 1))
    report = None
    if cfg.optimize:
        report = optimize_h(problem, rgrid, cfg.terms, cfg.h_bracket, mode=cfg.mode)
        h = report.h_star
    else:
        if cfg.h is None:
            raise ValueError("either --h or --optimize-h is required")
        h = float(cfg.h)
    sol = iterate(problem, h, cfg.terms, cfg.mode, cfg.term_cap)
    psi = sol.partial_sum()
    ref, ref_moment, ref_desc = _reference(ex, cfg)
    egrid = ErrorGrid(*cfg.error_grid)

    meta = {
        "example": ex.id,
        "title": ex.title,
        "config_hash": cfg.digest(),
        "mode": cfg.mode,
        "terms": cfg.terms,
        "h": _fmt(h),
        "h_source": "optimized" if cfg.optimize else "fixed",
        "residual_grid": f"K={rK},s=[{_fmt(ex.residual_s_min)},{_fmt(rsmax)}],tau=[0,{_fmt(rtmax)}]",
        "error_grid": f"K={egrid.K},s=[0,{_fmt(egrid.s_max)}],width={_fmt(egrid.width)}",
        "term_cap": cfg.term_cap,
        "max_terms_per_coefficient": psi.max_terms_per_coefficient(),
        "reference": ref_desc,
    }
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"example_{ex.id}"
    res = RunResult(h=h, solution=sol, hopt=report)

    s_vals = np.linspace(0.0, egrid.s_max, 21)
    if ex.residual_s_min > 0:  # singular kernels give negative powers at higher orders
        s_vals[0] = ex.residual_s_min
    rows = []
    for t in ex.times:
        approx = np.asarray(psi.evaluate(s_vals, t), dtype=float)
        refv = np.asarray(ref(s_vals, t), dtype=float)
        rows += [(s, t, a, r, abs(a - r)) for s, a, r in zip(s_vals, approx, refv)]
    res.files.append(_write_table(out / f"{stem}_density", meta, ["s", "tau", "approx", "reference", "abs_error"],
                                  rows, cfg.fmt))

    rows = []
    for t in ex.times:
        for j in (0, 1, 2):
            rows.append((t, j, solution_moment(sol, j, t), ref_moment(j, t)))
    res.files.append(_write_table(out / f"{stem}_moments", meta, ["tau", "j", "approx", "reference"], rows, cfg.fmt))

    rows = []
    for t in ex.times:
        e = error_norm(lambda s: psi.evaluate(s, t), lambda s: ref(s, t), egrid)
        res.errors[t] = e
        rows.append((t, cfg.terms, h, e))
    res.files.append(_write_table(out / f"{stem}_error_norm", meta, ["tau", "terms", "h", "error"], rows, cfg.fmt))

    if report is not None:
        rows = [("scan", hh, ee) for hh, ee in report.candidates] + [("refine", hh, ee) for hh, ee in report.refinement]
        hmeta = dict(meta, h_star=_fmt(report.h_star), E_star=_fmt(report.e_star),
                     bracket=f"[{_fmt(report.bracket[0])},{_fmt(report.bracket[1])}]",
                     h_below_minus_one=report.outside_safe_region)
        res.files.append(_write_table(out / f"{stem}_hopt", hmeta, ["stage", "h", "E"], rows, cfg.fmt))
    return res


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _floats(text: str, n: int, what: str) -> tuple:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != n:
        raise argparse.ArgumentTypeError(f"{what} needs {n} comma-separated values")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{what}: could not parse {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ahampbe", description=__doc__.split("\n")[0])
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--example", nargs="+", metavar="ID", help="example id(s): " + ", ".join(EXAMPLES))
    src.add_argument("--config", type=Path, help="JSON file describing an inline problem")
    src.add_argument("--list", action="store_true", help="list the bundled examples and exit")
    p.add_argument("--terms", type=int, default=3, help="truncation order K (iterates mu_0..mu_K), default 3")
    hg = p.add_mutually_exclusive_group()
    hg.add_argument("--h", type=float, default=None, help="fixed convergence-control parameter (default -1)")
    hg.add_argument("--optimize-h", action="store_true", help="minimize the discrete squared residual over h")
    p.add_argument("--h-bracket", type=lambda t: _floats(t, 2, "--h-bracket"), default=(-2.0, -1e-3),
                   metavar="A,B")
    p.add_argument("--residual-grid", type=lambda t: _floats(t, 3, "--residual-grid"), default=None,
                   metavar="K,SMAX,TMAX", help="default 20,10,<example horizon>")
    p.add_argument("--error-grid", type=lambda t: _floats(t, 2, "--error-grid"), default=(1000, 10.0),
                   metavar="K,SMAX")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--fvm-cells", type=int, default=400)
    p.add_argument("--mode", choices=("aham", "classic"), default="aham")
    p.add_argument("--jobs", type=int, default=1, help="run several examples in parallel processes")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _configs(args) -> list[RunConfig]:
    common = dict(
        terms=args.terms, h=-1.0 if args.h is None else args.h, optimize=args.optimize_h,
        h_bracket=tuple(args.h_bracket),
        residual_grid=None if args.residual_grid is None else
        (int(args.residual_grid[0]), args.residual_grid[1], args.residual_grid[2]),
        error_grid=(int(args.error_grid[0]), float(args.error_grid[1])),
        fmt=args.format, out=args.out, fvm_cells=args.fvm_cells, mode=args.mode,
    )
    if args.config is not None:
        problem = json.loads(args.config.read_text())
        return [RunConfig(example=problem.get("id", "inline"), problem=problem, **common)]
    return [RunConfig(example=e, **common) for e in args.example]


def _run_one(cfg: RunConfig) -> list[str]:
    return [str(f) for f in run_example(cfg).files]


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.list:
        for ex in EXAMPLES.values():
            print(f"{ex.id}  {ex.title}  (t_max={ex.t_max}, reference={ex.reference})")
        return 0
    if args.example:
        bad = [e for e in args.example if e not in EXAMPLES]
        if bad:
            parser.error(f"unknown example(s): {', '.join(bad)}")
    cfgs = _configs(args)
    try:
        if args.jobs > 1 and len(cfgs) > 1:
            with ProcessPoolExecutor(args.jobs) as pool:
                results = list(pool.map(_run_one, cfgs))
        else:
            results = [_run_one(c) for c in cfgs]
    except AlgebraError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, fvm.FVMStepError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for files in results:
        for f in files:
            print(f)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
