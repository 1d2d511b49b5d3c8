"""Batch command-line front end.

Modes:

* ``analytic``  density and CDF on a tau grid, overall and per case
* ``simulate``  ECDF of a seeded simulation on the same grid
* ``compare``   KS distances, case-frequency z-scores and mean error with pass flags
* ``sweep``     percentiles and mean over one parameter
* ``reproduce`` every data file of a named figure (``fig4`` .. ``fig10``)

Every output embeds its resolved configuration as a ``# config:`` metadata
line; ``--config FILE`` reloads it, so a file regenerates from its own header.
Exit codes: 0 success, 1 a compare check failed, 2 bad configuration or I/O.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import md1, mm1, numerics, sim
from .model import CASES, TandemParams, UnstableParametersError

OUT_DIR_ENV = "PAOI_OUT_DIR"
MODES = ("analytic", "simulate", "compare", "sweep", "reproduce")
SWEEP_PARAMS = ("lambda", "mu1", "mu2", "service_d")
FIGURES = tuple(f"fig{k}" for k in range(4, 11))

# compare-mode thresholds at 1e6 samples; loosened to the 99.9% DKW radius for smaller runs
KS_OVERALL = 0.005
KS_CASE = 0.01
Z_MAX = 4.0
MEAN_REL = 0.01

DEFAULT_LAMBDAS = tuple(round(0.05 * k, 2) for k in range(1, 20))


class ConfigError(ValueError):
    """Invalid experiment configuration (exit code 2)."""


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "analytic"
    tandem: str = "md1"
    lam: float = 0.5
    mu1: float = 1.0
    mu2: float = 1.25
    service_d: float = 0.8
    packets: int = 10_000_000
    warmup: int = 1000
    seed: int = 0
    tau_min: float = 0.0
    tau_max: float = 30.0
    tau_points: int = 301
    sweep_param: str = "lambda"
    sweep_values: tuple[float, ...] = DEFAULT_LAMBDAS
    percentiles: tuple[float, ...] = (0.95, 0.99, 0.999)
    fmt: str = "csv"
    figure: str | None = None
    sim_lam: float | None = None
    note: str = ""
    out: str | None = field(default=None, compare=False)
    raw: str | None = field(default=None, compare=False)

    def validate(self) -> "ExperimentConfig":
        def bad(name, msg):
            raise ConfigError(f"{name}: {msg}")

        if self.mode not in MODES:
            bad("mode", f"must be one of {MODES}")
        if self.tandem not in ("md1", "mm1"):
            bad("tandem", "must be 'md1' or 'mm1'")
        for name in ("lam", "mu1", "mu2", "service_d"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                bad(name, f"must be a positive finite number, got {v}")
        if self.sim_lam is not None and not (math.isfinite(self.sim_lam) and self.sim_lam > 0):
            bad("sim_lam", "must be positive")
        if self.warmup < 0:
            bad("warmup", "must be >= 0")
        if self.packets <= self.warmup:
            bad("packets", f"must exceed warmup ({self.warmup})")
        if not 0 <= self.seed < 2**64:
            bad("seed", "must be a 64-bit unsigned integer")
        if self.tau_points < 2:
            bad("tau_points", "must be >= 2")
        if not (math.isfinite(self.tau_min) and math.isfinite(self.tau_max) and self.tau_min < self.tau_max):
            bad("tau_min/tau_max", "need finite tau_min < tau_max")
        if self.sweep_param not in SWEEP_PARAMS:
            bad("sweep_param", f"must be one of {SWEEP_PARAMS}")
        if not self.sweep_values:
            bad("sweep_values", "must be nonempty")
        if any(not (math.isfinite(v) and v > 0) for v in self.sweep_values):
            bad("sweep_values", "all values must be positive")
        if not self.percentiles or any(not 0 < q < 1 for q in self.percentiles):
            bad("percentiles", "need values in (0, 1)")
        if self.fmt not in ("csv", "json"):
            bad("format", "must be 'csv' or 'json'")
        if self.mode == "reproduce" and self.figure not in FIGURES:
            bad("figure", f"unknown figure {self.figure!r}; choose from {FIGURES}")
        return self

    def params(self, lam: float | None = None) -> TandemParams:
        lam = self.lam if lam is None else lam
        if self.tandem == "md1":
            return TandemParams.md1(lam, self.mu1, self.service_d)
        return TandemParams.mm1(lam, self.mu1, self.mu2)

    def with_param(self, name: str, value: float) -> "ExperimentConfig":
        return dataclasses.replace(self, **{"lam" if name == "lambda" else name: value})

    def to_dict(self) -> dict:
        """Everything that determines the file content (output paths excluded)."""
        d = dataclasses.asdict(self)
        d.pop("out")
        d.pop("raw")
        d["sweep_values"] = list(self.sweep_values)
        d["percentiles"] = list(self.percentiles)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        for key in ("sweep_values", "percentiles"):
            if key in d:
                d[key] = tuple(float(v) for v in d[key])
        return cls(**d)

    def tau_grid(self) -> np.ndarray:
        return np.linspace(self.tau_min, self.tau_max, self.tau_points)


# --- tables and writers --------------------------------------------------------


@dataclass
class Table:
    columns: list[str]
    rows: list[list]
    meta: dict


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _jsonable(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v) if math.isfinite(v) else None
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def render(table: Table, fmt: str) -> str:
    if fmt == "json":
        doc = {"metadata": _jsonable(table.meta), "columns": table.columns, "rows": _jsonable(table.rows)}
        return json.dumps(doc, indent=1, allow_nan=False) + "\n"
    lines = [f"# {k}: {json.dumps(_jsonable(v), allow_nan=False)}" for k, v in table.meta.items()]
    lines.append(",".join(table.columns))
    lines.extend(",".join(_cell(v) for v in row) for row in table.rows)
    return "\n".join(lines) + "\n"


def write_table(table: Table, path: Path, fmt: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(render(table, fmt))
    return path


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    """Configuration embedded in a file written by this tool."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        d = json.loads(text)["metadata"]["config"]
    else:
        for line in text.splitlines():
            if line.startswith("# config: "):
                d = json.loads(line[len("# config: "):])
                break
        else:
            raise ConfigError(f"{path}: no '# config:' metadata line")
    return ExperimentConfig.from_dict(d)


def _base_meta(cfg: ExperimentConfig) -> dict:
    return {"config": cfg.to_dict()}


# --- modes -----------------------------------------------------------------------


def _distribution(params: TandemParams, case=None):
    if params.kind == "md1":
        return md1.paoi_distribution_md1(params, case)
    return mm1.paoi_distribution_mm1(params, case)


def _probabilities(params: TandemParams):
    if params.kind == "md1":
        return md1.case_probabilities_md1(params)
    return mm1.case_probabilities_mm1(params)


def _stable_params(cfg: ExperimentConfig, lam: float | None = None) -> TandemParams:
    p = cfg.params(lam)
    try:
        return p.require_stable()
    except UnstableParametersError as exc:
        raise ConfigError(f"parameters: {exc}") from exc


def run_analytic(cfg: ExperimentConfig) -> Table:
    p = _stable_params(cfg)
    tau = cfg.tau_grid()
    dist = _distribution(p)
    cols = {"tau": tau, "pdf_total": dist.pdf(tau), "cdf_total": numerics.cdf_from_density(dist, tau)}
    for c in CASES:
        dc = _distribution(p, c)
        cols[f"pdf_{c.value}"] = dc.pdf(tau)
    for c in CASES:
        cols[f"cdf_{c.value}"] = numerics.cdf_from_density(_distribution(p, c), tau)
    meta = _base_meta(cfg)
    meta["case_probabilities"] = dict(zip((c.value for c in CASES), _probabilities(p)))
    meta["support_lower"] = dist.support_lower
    meta["mean"] = numerics.mean(dist)
    return Table(list(cols), [list(r) for r in zip(*cols.values())], meta)


def _simulate(cfg: ExperimentConfig, params: TandemParams) -> tuple[np.ndarray, np.ndarray, list[str]]:
    config = sim.SimConfig(params, cfg.packets, cfg.warmup, cfg.seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", sim.UnstableSimulationWarning)
        if cfg.raw:
            Path(cfg.raw).parent.mkdir(parents=True, exist_ok=True)
            with open(cfg.raw, "w", encoding="utf-8", newline="") as fh:
                delta, codes = sim.collect_paoi(config, raw=fh)
        else:
            delta, codes = sim.collect_paoi(config)
    notes = [str(w.message) for w in caught if issubclass(w.category, sim.UnstableSimulationWarning)]
    return delta, codes, notes


def run_simulate(cfg: ExperimentConfig) -> Table:
    p = cfg.params(cfg.sim_lam)
    delta, codes, notes = _simulate(cfg, p)
    meta = _base_meta(cfg)
    if notes:
        meta["warning"] = notes[0]
    columns = ["tau", "ecdf_total", *(f"ecdf_{c.value}" for c in CASES)]
    meta["n_samples"] = int(delta.size)
    if delta.size == 0:
        meta["notice"] = "no peak-age samples: the first packet has no predecessor and the rest were warm-up"
        return Table(columns, [], meta)
    emp = sim.empirical_from_arrays(delta, codes)
    tau = cfg.tau_grid()
    cols = [tau, emp.overall.ecdf(tau)]
    for c in CASES:
        sub = emp.by_case[c]
        cols.append(sub.ecdf(tau) if sub is not None else np.full(tau.size, np.nan))
    meta["case_counts"] = {c.value: emp.counts[c] for c in CASES}
    meta["mean"] = emp.overall.mean()
    return Table(columns, [list(r) for r in zip(*cols)], meta)


def _ks_threshold(fixed: float, n: int) -> float:
    return max(fixed, numerics.dkw_bound(n, 0.999)) if n > 0 else fixed


def run_compare(cfg: ExperimentConfig) -> Table:
    p = _stable_params(cfg)
    delta, codes, notes = _simulate(cfg, cfg.params(cfg.sim_lam))
    meta = _base_meta(cfg)
    if notes:
        meta["warning"] = notes[0]
    rows: list[list] = []

    def check(metric, value, threshold, ok):
        rows.append([metric, value, threshold, "pass" if ok else "fail"])

    if delta.size == 0:
        check("n_samples", 0, 1, False)
    else:
        emp = sim.empirical_from_arrays(delta, codes)
        dist = _distribution(p)
        ks = numerics.ks_distance(lambda x: numerics.cdf_from_density(dist, x), emp.overall)
        thr = _ks_threshold(KS_OVERALL, emp.n)
        check("ks_total", ks, thr, ks < thr)
        for c in CASES:
            sub = emp.by_case[c]
            if sub is None:
                check(f"ks_{c.value}", math.nan, KS_CASE, False)
                continue
            dc = _distribution(p, c)
            ks_c = numerics.ks_distance(lambda x, dc=dc: numerics.cdf_from_density(dc, x), sub)
            thr_c = _ks_threshold(KS_CASE, sub.n)
            check(f"ks_{c.value}", ks_c, thr_c, ks_c < thr_c)
        for c, prob in zip(CASES, _probabilities(p)):
            z = numerics.binomial_z(emp.counts[c], emp.n, prob)
            check(f"z_{c.value}", z, Z_MAX, abs(z) <= Z_MAX)
        m_an = numerics.mean(dist)
        m_emp = emp.overall.mean()
        rel = abs(m_emp - m_an) / m_an
        se = float(np.std(emp.overall.samples)) / math.sqrt(emp.n)
        thr_m = max(MEAN_REL, Z_MAX * se / m_an)
        check("mean_rel_error", rel, thr_m, rel <= thr_m)
        meta["mean_analytic"] = m_an
        meta["mean_simulated"] = m_emp
        meta["n_samples"] = emp.n
    meta["passed"] = all(r[3] == "pass" for r in rows)
    return Table(["metric", "value", "threshold", "result"], rows, meta)


def _pct_name(q: float) -> str:
    return f"p{100 * q:g}"


def run_sweep(cfg: ExperimentConfig) -> Table:
    columns = ["value", "status", *(_pct_name(q) for q in cfg.percentiles), "mean"]
    rows = []
    for v in cfg.sweep_values:
        p = cfg.with_param(cfg.sweep_param, v).params()
        if not p.is_stable:
            rows.append([v, "unstable", *([math.nan] * (len(cfg.percentiles) + 1))])
            continue
        dist = _distribution(p)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", md1.PrecisionWarning)
            qs = [numerics.quantile(dist, q) for q in cfg.percentiles]
            rows.append([v, "ok", *qs, numerics.mean(dist)])
    return Table(columns, rows, _base_meta(cfg))


# --- figures -----------------------------------------------------------------------


def _figure_runs(cfg: ExperimentConfig) -> list[tuple[str, ExperimentConfig]]:
    """Named sub-runs of a figure, each a complete configuration."""
    base = dataclasses.replace(cfg, figure=None, raw=None, out=None, sim_lam=None)
    md = dataclasses.replace(base, tandem="md1", lam=0.5, mu1=1.0, service_d=0.8)
    mm = dataclasses.replace(base, tandem="mm1", lam=0.5, mu1=1.0, mu2=1.25)
    runs: list[tuple[str, ExperimentConfig]] = []

    def curve(name, c, note, simulate=True):
        runs.append((f"{name}_analytic", dataclasses.replace(c, mode="analytic", note=note)))
        if simulate:
            runs.append((f"{name}_simulated", dataclasses.replace(c, mode="simulate", note=note)))

    def sweep(name, c, param, values, note):
        runs.append((name, dataclasses.replace(c, mode="sweep", sweep_param=param, sweep_values=tuple(values), note=note)))

    fig = cfg.figure
    if fig == "fig4":
        curve("fig4_md1_cases", md, "M/M/1-M/D/1 per-case CDFs at the default parameters")
    elif fig == "fig5":
        for lam in (0.25, 0.5, 0.75):
            curve(f"fig5a_md1_lambda{lam:g}", dataclasses.replace(md, lam=lam), "M/M/1-M/D/1 CDF for several lambda")
        swap = "bottleneck rate 1 with the other link at 1.2 or 1.6, each in both positions (pairing inferred)"
        for other in (1.2, 1.6):
            curve(f"fig5b_md1_mu1_1_D{1 / other:.4g}", dataclasses.replace(md, mu1=1.0, service_d=1.0 / other), swap)
            curve(f"fig5b_md1_mu1_{other:g}_D1", dataclasses.replace(md, mu1=other, service_d=1.0), swap)
    elif fig == "fig6":
        curve("fig6_mm1_cases", dataclasses.replace(mm, mu2=1.2), "M/M/1-M/M/1 per-case CDFs, mu2 = 1.2")
    elif fig == "fig7":
        for lam in (0.25, 0.5, 0.75):
            curve(f"fig7a_mm1_lambda{lam:g}", dataclasses.replace(mm, lam=lam), "M/M/1-M/M/1 CDF for several lambda")
        swap = "bottleneck rate 1 with the other link at 1.2 or 1.6, each in both positions"
        for other in (1.2, 1.6):
            curve(f"fig7b_mm1_mu1_1_mu2_{other:g}", dataclasses.replace(mm, mu1=1.0, mu2=other), swap)
            curve(f"fig7b_mm1_mu1_{other:g}_mu2_1", dataclasses.replace(mm, mu1=other, mu2=1.0), swap)
    elif fig == "fig8":
        sweep("fig8a_md1_percentiles_lambda", md, "lambda", DEFAULT_LAMBDAS, "M/M/1-M/D/1 percentiles vs lambda, D = 0.8")
        ds = tuple(round(0.1 * k, 1) for k in range(1, 16))
        sweep("fig8b_md1_percentiles_D", md, "service_d", ds, "M/M/1-M/D/1 percentiles vs D at lambda = 0.5 (optimum at D = 0.8)")
    elif fig == "fig9":
        pairs = ((1.0, 1.0), (0.8, 1.25), (0.5, 2.0))
        for d, mu2 in pairs:
            note = "analytic comparison of the two tandems, mu1 = 1; second server D vs rate 1/D"
            curve(f"fig9_md1_D{d:g}", dataclasses.replace(md, service_d=d), note, simulate=False)
            curve(f"fig9_mm1_mu2_{mu2:g}", dataclasses.replace(mm, mu2=mu2), note, simulate=False)
    elif fig == "fig10":
        sweep("fig10a_mm1_percentiles_lambda", mm, "lambda", DEFAULT_LAMBDAS, "M/M/1-M/M/1 percentiles vs lambda, mu2 = 1.25")
        mu2s = tuple(round(1.0 / (0.1 * k), 6) for k in range(1, 16))
        sweep("fig10b_mm1_percentiles_mu2", mm, "mu2", mu2s, "M/M/1-M/M/1 percentiles vs mu2 = 1/D at lambda = 0.5")
        sweep("fig10c_mean_md1", md, "lambda", DEFAULT_LAMBDAS, "mean peak age vs lambda, M/M/1-M/D/1, D = 0.8")
        sweep("fig10c_mean_mm1", mm, "lambda", DEFAULT_LAMBDAS, "mean peak age vs lambda, M/M/1-M/M/1, mu2 = 1.25")
    else:
        raise ConfigError(f"figure: unknown figure {fig!r}")
    return runs


RUNNERS = {"analytic": run_analytic, "simulate": run_simulate, "compare": run_compare, "sweep": run_sweep}


def run_reproduce(cfg: ExperimentConfig, out_dir: Path) -> list[Path]:
    paths = []
    for name, sub in _figure_runs(cfg):
        sub = sub.validate()
        paths.append(write_table(RUNNERS[sub.mode](sub), out_dir / f"{name}.{sub.fmt}", sub.fmt))
    return paths


# --- argument handling -----------------------------------------------------------


def _floats(text: str) -> tuple[float, ...]:
    """Comma list ``a,b,c`` or inclusive range ``start:stop:step``."""
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            if step <= 0:
                raise ValueError
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            return tuple(round(start + k * step, 12) for k in range(n))
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'a,b,c' or 'start:stop:step', got {text!r}") from None


_FLAG_TO_FIELD = {
    "lambda_": "lam",
    "service_d": "service_d",
    "format": "fmt",
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="tandem-paoi",
        description="Peak-age distributions of M/M/1-M/D/1 and M/M/1-M/M/1 tandems: analytic curves, simulation, comparison.",
        argument_default=argparse.SUPPRESS,
    )
    ap.add_argument("--mode", choices=MODES)
    ap.add_argument("--tandem", choices=("md1", "mm1"))
    ap.add_argument("--lambda", dest="lambda_", type=float, help="generation rate")
    ap.add_argument("--mu1", type=float, help="first server rate")
    ap.add_argument("--mu2", type=float, help="second server rate (mm1)")
    ap.add_argument("--service-d", dest="service_d", type=float, help="second server service time (md1)")
    ap.add_argument("--sim-lambda", dest="sim_lam", type=float, help="simulate with a different rate (compare sensitivity check)")
    ap.add_argument("--packets", type=int, help="packets generated, warm-up included")
    ap.add_argument("--warmup", type=int, help="initial packets discarded")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--tau-min", dest="tau_min", type=float)
    ap.add_argument("--tau-max", dest="tau_max", type=float)
    ap.add_argument("--tau-points", dest="tau_points", type=int)
    ap.add_argument("--sweep-param", dest="sweep_param", choices=SWEEP_PARAMS)
    ap.add_argument("--sweep-values", dest="sweep_values", type=_floats)
    ap.add_argument("--percentiles", type=_floats)
    ap.add_argument("--figure", choices=FIGURES)
    ap.add_argument("--format", choices=("csv", "json"))
    ap.add_argument("--out", help=f"output file (directory for reproduce); default under ${OUT_DIR_ENV} or the current directory")
    ap.add_argument("--raw", help="also dump every simulated packet to this CSV file")
    ap.add_argument("--config", dest="config_file", help="start from the configuration embedded in an output file")
    return ap


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    given = vars(ns).copy()
    source = given.pop("config_file", None)
    base = load_config(source) if source else ExperimentConfig()
    updates = {_FLAG_TO_FIELD.get(k, k): v for k, v in given.items()}
    try:
        cfg = dataclasses.replace(base, **updates)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def _output_path(cfg: ExperimentConfig) -> Path:
    if cfg.out:
        return Path(cfg.out)
    root = Path(os.environ.get(OUT_DIR_ENV, "."))
    if cfg.mode == "reproduce":
        return root / cfg.figure
    return root / f"{cfg.mode}.{cfg.fmt}"


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = config_from_args(ns)
        out = _output_path(cfg)
        if cfg.mode == "reproduce":
            for path in run_reproduce(cfg, out):
                print(path)
            return 0
        table = RUNNERS[cfg.mode](cfg)
        write_table(table, out, cfg.fmt)
        print(out)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if cfg.mode == "compare":
        for metric, value, threshold, result in table.rows:
            print(f"{metric:>16} {value:.6g} (threshold {threshold:.6g}) {result}")
        return 0 if table.meta["passed"] else 1
    return 0
