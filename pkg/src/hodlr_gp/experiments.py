"""Benchmark and regression experiments behind the command-line tool.

Each ``cmd_*`` function returns an :class:`ExperimentResult`: a list of
flat row dicts (the CSV body) and a summary dict (the JSON document).
Timing columns all start with ``t_``; every other column is a pure function
of the configuration and seed.
"""

from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import dense_ref, gp, hodlr
from .geometry import kd_sort, load_points_csv, uniform_points
from .kernels import Family, KernelSpec, parse_family

# noise variance on the benchmark diagonals, per kernel family
DEFAULT_NOISE = {
    Family.GAUSSIAN: 2.0,
    Family.MULTIQUADRIC: 1.0,
    Family.EXPONENTIAL: 1.0,
    Family.INVERSE_MULTIQUADRIC: 1.0,
    Family.BIHARMONIC: 2.0,
}
MEDIAN_OF_3_MAX_N = 100_000
EXACT_RHS_MAX_N = 20_000
RMSE_N = 1024
RMSE_NOISE_STD = 1.0


@dataclass
class ExperimentConfig:
    kernel: str = "gaussian"
    params: dict = field(default_factory=dict)
    noise: float | None = None
    n_list: list[int] = field(default_factory=lambda: [10_000])
    dim: int = 1
    dims: list[int] = field(default_factory=lambda: [1, 2, 4, 8, 16, 32, 64])
    box: str = "unit"  # "unit": [-3, 3]^d; "scaled": [-3/sqrt(d), 3/sqrt(d)]^d
    eps: float = hodlr.DEFAULT_EPS
    eps_list: list[float] = field(default_factory=lambda: [1e-2, 1e-4, 1e-6, 1e-8, 1e-10, 1e-12])
    p_max: int = hodlr.DEFAULT_P_MAX
    seed: int = 0
    engine: str = "hodlr"
    dense_backend: str = "naive"
    repeats: int | None = None  # None: median of 3 up to MEDIAN_OF_3_MAX_N, else 1
    points_csv: str | None = None

    def __post_init__(self) -> None:
        if list(self.n_list) != sorted(self.n_list) or any(n < 1 for n in self.n_list):
            raise ValueError(f"n list must be ascending positive integers, got {self.n_list}")
        if self.box not in ("unit", "scaled"):
            raise ValueError(f"box must be 'unit' or 'scaled', got {self.box!r}")
        if self.engine not in gp.ENGINES:
            raise ValueError(f"engine must be one of {gp.ENGINES}, got {self.engine!r}")
        if not 0 < self.eps < 1:
            raise ValueError(f"eps must be in (0, 1), got {self.eps}")
        if self.p_max < 1:
            raise ValueError(f"p_max must be >= 1, got {self.p_max}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")

    def kernel_spec(self) -> KernelSpec:
        name = self.kernel.lower()
        params = dict(self.params)
        if name == "zero":
            name = "gaussian"
            params["amplitude"] = 0.0
        family = parse_family(name)
        noise = self.noise if self.noise is not None else DEFAULT_NOISE.get(family, 1.0)
        return KernelSpec(family, params, noise)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["kernel_spec"] = self.kernel_spec().to_dict()
        return d


@dataclass
class ExperimentResult:
    name: str
    rows: list[dict]
    summary: dict

    def columns(self) -> list[str]:
        cols: list[str] = []
        for row in self.rows:
            cols += [c for c in row if c not in cols]
        return cols


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """PCG64 stream keyed on the seed plus experiment coordinates."""
    return np.random.default_rng([seed, *key])


def make_points(cfg: ExperimentConfig, n: int, dim: int, box: str | None = None) -> np.ndarray:
    if cfg.points_csv:
        pts = load_points_csv(cfg.points_csv)
        return pts[:n]
    return uniform_points(n, dim, rng_for(cfg.seed, n, dim), scaled=(box or cfg.box) == "scaled")


def _repeats(cfg: ExperimentConfig, n: int) -> int:
    if cfg.repeats is not None:
        return cfg.repeats
    return 3 if n <= MEDIAN_OF_3_MAX_N else 1


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def _run_once(spec: KernelSpec, x: np.ndarray, b: np.ndarray, cfg: ExperimentConfig) -> dict:
    if cfg.engine == "hodlr":
        tree, t_asm = _timed(lambda: hodlr.assemble(spec, kd_sort(x, cfg.p_max), cfg.eps, cfg.p_max))
        fact, t_fac = _timed(lambda: hodlr.factorize(tree))
        info = {"kappa": tree.kappa, "max_rank": max(tree.max_rank_by_level(), default=0),
                "dense_fallbacks": tree.dense_fallbacks}
    else:
        mat, t_asm = _timed(lambda: dense_ref.dense_assemble(spec, x))
        fact, t_fac = _timed(lambda: dense_ref.DenseFactorization(mat, backend=cfg.dense_backend))
        info = {"kappa": 0, "max_rank": x.shape[0], "dense_fallbacks": 0}
    sol, t_solve = _timed(lambda: fact.solve(b))
    (sign, logdet), t_det = _timed(fact.slogdet)
    return {"fact": fact, "sol": sol, "sign": sign, "logdet": logdet, "info": info,
            "t_assemble": t_asm, "t_factor": t_fac, "t_solve": t_solve, "t_det": t_det}


def bench_point(spec: KernelSpec, x: np.ndarray, cfg: ExperimentConfig, rhs_seed_key=()) -> dict:
    """One table row: timings, log-determinant and manufactured-solution error."""
    n, dim = x.shape
    if cfg.engine == "dense" and n > dense_ref.MAX_DENSE_N:
        raise dense_ref.DenseSizeError(f"dense engine refuses n={n} > {dense_ref.MAX_DENSE_N}")
    x0 = rng_for(cfg.seed, n, dim, 1, *rhs_seed_key).standard_normal(n)
    exact_rhs = n <= EXACT_RHS_MAX_N or cfg.engine == "dense"
    b = dense_ref.dense_matvec(spec, x, x0) if exact_rhs else None
    runs = []
    for _ in range(_repeats(cfg, n)):
        if b is None:
            # too large for an exact product: manufacture b with the compressed matrix
            tree = hodlr.assemble(spec, kd_sort(x, cfg.p_max), cfg.eps, cfg.p_max)
            b = tree.matvec(x0)
        runs.append(_run_once(spec, x, b, cfg))
    last = runs[-1]
    err = float(np.linalg.norm(last["sol"] - x0) / np.linalg.norm(x0))
    row = {"n": n, "dim": dim, "engine": cfg.engine, **last["info"],
           "logdet": last["logdet"], "sign": last["sign"], "error": err,
           "rhs": "exact" if exact_rhs else "hodlr"}
    for col in ("t_assemble", "t_factor", "t_solve", "t_det"):
        row[col] = statistics.median(r[col] for r in runs)
    return row


def cmd_bench(cfg: ExperimentConfig) -> ExperimentResult:
    spec = cfg.kernel_spec()
    rows = [bench_point(spec, make_points(cfg, n, cfg.dim), cfg) for n in cfg.n_list]
    return ExperimentResult("bench", rows, {"config": cfg.to_dict(),
                                            "max_error": max(r["error"] for r in rows)})


def loglog_slope(ns, ts) -> float:
    """Least-squares slope of log t against log n."""
    return float(np.polyfit(np.log(np.asarray(ns, float)), np.log(np.asarray(ts, float)), 1)[0])


def cmd_scaling(cfg: ExperimentConfig) -> ExperimentResult:
    if len(cfg.n_list) < 4:
        raise ValueError("scaling needs at least 4 values of n")
    res = cmd_bench(cfg)
    ns = [r["n"] for r in res.rows]
    slopes = {col: loglog_slope(ns, [max(r[col], 1e-9) for r in res.rows])
              for col in ("t_assemble", "t_factor", "t_solve", "t_det")}
    res.name = "scaling"
    res.summary["slopes"] = slopes
    return res


def cmd_highdim(cfg: ExperimentConfig, boxes: tuple[str, ...] = ("unit", "scaled")) -> ExperimentResult:
    spec = cfg.kernel_spec()
    n = cfg.n_list[0]
    rows = []
    for box in boxes:
        for d in cfg.dims:
            row = bench_point(spec, make_points(cfg, n, d, box), cfg)
            rows.append({"box": box, **row})
    return ExperimentResult("highdim", rows, {"config": cfg.to_dict(), "n": n})


def rmse_data(seed: int, n: int = RMSE_N, noise_std: float = RMSE_NOISE_STD):
    """Synthetic regression data y = sin(2x) + exp(x)/8 + noise, x uniform in (-3, 3)."""
    rng = rng_for(seed, n, 24)
    x = rng.uniform(-3.0, 3.0, n)
    y = np.sin(2 * x) + np.exp(x) / 8 + noise_std * rng.standard_normal(n)
    return x[:, None], y


def regression_rmse(model: gp.GpModel, y: np.ndarray) -> float:
    """RMSE of the smoother K (noise I + K)^{-1} y against the data y."""
    # K alpha = (C - noise I) alpha = y - noise * alpha
    yhat = y - model.spec.noise_variance * model.alpha
    return float(np.linalg.norm(y - yhat) / math.sqrt(y.size))


def cmd_rmse_sweep(cfg: ExperimentConfig) -> ExperimentResult:
    x, y = rmse_data(cfg.seed)
    spec = KernelSpec(Family.GAUSSIAN, {}, RMSE_NOISE_STD**2)
    dense = gp.fit(spec, x, y, engine="dense", dense_backend=cfg.dense_backend)
    rmse_dense = regression_rmse(dense, y)
    rows = []
    for eps in cfg.eps_list:
        model = gp.fit(spec, x, y, eps=eps, p_max=cfg.p_max, engine="hodlr")
        rmse_h = regression_rmse(model, y)
        rows.append({"eps": eps, "rmse_dense": rmse_dense, "rmse_hodlr": rmse_h,
                     "delta_rmse": abs(rmse_h - rmse_dense)})
    return ExperimentResult("rmse-sweep", rows, {"config": cfg.to_dict(), "n": RMSE_N,
                                                 "rmse_dense": rmse_dense})


def _training_data(cfg: ExperimentConfig, targets_csv: str | None):
    if cfg.points_csv:
        x = load_points_csv(cfg.points_csv)
        if targets_csv is None:
            raise ValueError("--targets-csv is required with --points-csv")
        y = np.loadtxt(targets_csv, delimiter=",", ndmin=1, dtype=float).ravel()
        return x, y
    return rmse_data(cfg.seed, cfg.n_list[0])


def cmd_predict(cfg: ExperimentConfig, targets_csv: str | None = None,
                query_csv: str | None = None, n_query: int = 101) -> ExperimentResult:
    x, y = _training_data(cfg, targets_csv)
    spec = cfg.kernel_spec()
    model = gp.fit(spec, x, y, cfg.eps, cfg.p_max, cfg.engine, cfg.dense_backend)
    if query_csv:
        xq = load_points_csv(query_csv)
    else:
        lo, hi = x.min(axis=0), x.max(axis=0)
        t = np.linspace(0.0, 1.0, n_query)[:, None]
        xq = lo + t * (hi - lo)
    mean, var = model.predict(xq)
    rows = []
    for q, m_, v_ in zip(xq, mean, var):
        row = {f"x{k}": float(c) for k, c in enumerate(q)}
        row.update(mean=float(m_), variance=float(v_))
        rows.append(row)
    return ExperimentResult("predict", rows, {
        "config": cfg.to_dict(), "n_train": int(x.shape[0]),
        "log_marginal_likelihood": model.log_marginal_likelihood()})


def cmd_loglik_scan(cfg: ExperimentConfig, param: str, grid: list[float],
                    targets_csv: str | None = None) -> ExperimentResult:
    x, y = _training_data(cfg, targets_csv)
    scan = gp.loglik_grid_scan(x, y, cfg.kernel_spec(), param, grid, cfg.eps, cfg.p_max,
                               cfg.engine, cfg.dense_backend)
    rows = [{param: v, "loglik": ll} for v, ll in scan]
    best = gp.scan_argmax(scan)
    return ExperimentResult("loglik-scan", rows, {"config": cfg.to_dict(), "param": param,
                                                  "argmax": best[0], "max_loglik": best[1]})


def cmd_solve(cfg: ExperimentConfig, rhs_csv: str | None = None) -> ExperimentResult:
    """Solve C x = b for a user rhs, or for a manufactured one when none is given."""
    spec = cfg.kernel_spec()
    x = make_points(cfg, cfg.n_list[0], cfg.dim)
    n = x.shape[0]
    if rhs_csv is None:
        row = bench_point(spec, x, replace(cfg, repeats=1))
        return ExperimentResult("solve", [row], {"config": cfg.to_dict(), **row})
    b = np.loadtxt(rhs_csv, delimiter=",", ndmin=1, dtype=float).ravel()
    if b.shape != (n,):
        raise ValueError(f"rhs has {b.size} entries, expected {n}")
    run = _run_once(spec, x, b, cfg)
    summary = {"config": cfg.to_dict(), "n": n, "logdet": run["logdet"], "sign": run["sign"],
               **run["info"], **{c: run[c] for c in ("t_assemble", "t_factor", "t_solve", "t_det")}}
    if n <= EXACT_RHS_MAX_N:
        r = dense_ref.dense_matvec(spec, x, run["sol"]) - b
        summary["residual"] = float(np.linalg.norm(r) / np.linalg.norm(b))
    rows = [{"i": i, "x": float(v)} for i, v in enumerate(run["sol"])]
    return ExperimentResult("solve", rows, summary)


def write_outputs(result: ExperimentResult, out_dir: str | Path) -> dict[str, Path]:
    """Write ``<name>.csv`` and ``<name>.json`` into ``out_dir``."""
    import csv
    import json

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = result.name.replace("-", "_")
    csv_path = out / f"{stem}.csv"
    with csv_path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=result.columns(), lineterminator="\n")
        w.writeheader()
        for row in result.rows:
            w.writerow({k: _fmt(v) for k, v in row.items()})
    json_path = out / f"{stem}.json"
    json_path.write_text(json.dumps({"experiment": result.name, "summary": result.summary,
                                     "rows": result.rows}, indent=2, default=_json_default) + "\n")
    return {"csv": csv_path, "json": json_path}


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, Path):
        return str(o)
    if isinstance(o, dict):
        return dict(o)
    raise TypeError(f"not JSON serializable: {type(o)}")


def format_table(result: ExperimentResult) -> str:
    """Aligned plain-text table of all columns."""
    cols = result.columns()
    cells = [[_cell(row.get(c, "")) for c in cols] for row in result.rows]
    widths = [max([len(c)] + [len(r[i]) for r in cells]) for i, c in enumerate(cols)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(cols, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in cells]
    return "\n".join(lines)


def _cell(v) -> str:
    if isinstance(v, float):
        if v == 0 or not math.isfinite(v):
            return str(v)
        return f"{v:.4g}" if 1e-3 <= abs(v) < 1e5 else f"{v:.2e}"
    return str(v)
