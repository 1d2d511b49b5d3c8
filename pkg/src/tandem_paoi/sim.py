"""Seeded Monte Carlo simulation of the two FCFS tandems.

The simulator runs the per-packet recursion on relative quantities, which
keeps the magnitudes bounded however long the run is:

    Omega_1 = T_{i-1,1} - Y_i            W_1 = max(Omega_1, 0)   T_1 = W_1 + S_1
    Y_{i,2} = S_1 + max(-Omega_1, 0)
    Omega_2 = T_{i-1,2} - Y_{i,2}        W_2 = max(Omega_2, 0)   T_2 = W_2 + S_2
    Delta   = Y_i + T_1 + T_2

Random numbers are drawn packet by packet (interarrival, first service,
second service when exponential) from a PCG64 stream in fixed-size chunks,
so a seed fully determines the output.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

from .model import CASES, CaseLabel, DomainError, PacketRecord, TandemParams
from .numerics import EmpiricalDistribution

CHUNK = 1 << 16
RAW_FIELDS = ("index", "g", "y", "s1", "s2", "omega1", "omega2", "t1", "t2", "delta", "case")


class UnstableSimulationWarning(RuntimeWarning):
    """The simulated tandem is overloaded; queues grow without bound."""


@dataclass(frozen=True)
class SimConfig:
    """``n_packets`` packets are generated; the first ``n_warmup`` are discarded.

    Packet 1 has no predecessor and never produces a peak age, so at most
    ``n_packets - max(n_warmup, 1)`` records are emitted.
    """

    params: TandemParams
    n_packets: int
    n_warmup: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.n_warmup < 0:
            raise ValueError("n_warmup must be >= 0")
        if self.n_packets <= self.n_warmup:
            raise ValueError(f"n_packets ({self.n_packets}) must exceed n_warmup ({self.n_warmup})")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def n_emitted(self) -> int:
        return max(self.n_packets - max(self.n_warmup, 1), 0)


class RngStream:
    """PCG64 uniforms on ``(0, 1]`` and inverse-CDF exponentials."""

    def __init__(self, seed: int):
        self._gen = np.random.Generator(np.random.PCG64(seed))

    def uniform(self, size) -> np.ndarray:
        # random() is on [0, 1); reflecting excludes 0 so -log(u) stays finite
        return 1.0 - self._gen.random(size)

    def exponential(self, rate: float, size) -> np.ndarray:
        return -np.log(self.uniform(size)) / rate


@dataclass(frozen=True)
class Draws:
    """Explicit interarrival and service sequences, one entry per packet."""

    y: Sequence[float]
    s1: Sequence[float]
    s2: Sequence[float]

    def __post_init__(self):
        if not len(self.y) == len(self.s1) == len(self.s2):
            raise ValueError("injected sequences must have equal length")


def _draw_chunks(config: SimConfig) -> Iterator[tuple[list, list, list]]:
    p = config.params
    rng = RngStream(config.seed)
    exp2 = p.kind == "mm1"
    cols = 3 if exp2 else 2
    left = config.n_packets
    while left > 0:
        n = min(CHUNK, left)
        u = -np.log(rng.uniform((n, cols)))
        y = (u[:, 0] / p.lam).tolist()
        s1 = (u[:, 1] / p.mu1).tolist()
        s2 = (u[:, 2] / p.mu2).tolist() if exp2 else [p.D] * n
        yield y, s1, s2
        left -= n


def _injected_chunks(draws: Draws) -> Iterator[tuple[list, list, list]]:
    yield list(map(float, draws.y)), list(map(float, draws.s1)), list(map(float, draws.s2))


_CASE_CODE = {c: i for i, c in enumerate(CASES)}


@dataclass(frozen=True, eq=False)
class SimArrays:
    """Column-oriented simulation output; ``case`` holds codes 0..3 for A..D."""

    index: np.ndarray
    g: np.ndarray
    y: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    omega1: np.ndarray
    omega2: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    delta: np.ndarray
    case: np.ndarray

    def __len__(self) -> int:
        return int(self.index.size)

    def records(self) -> Iterator[PacketRecord]:
        cols = [getattr(self, f).tolist() for f in _ARRAY_FIELDS[:-1]]
        for row, code in zip(zip(*cols), self.case.tolist()):
            yield PacketRecord(*row, CASES[code])

    @classmethod
    def concat(cls, parts: Sequence["SimArrays"]) -> "SimArrays":
        if not parts:
            return cls(*[np.empty(0, dtype=np.int64 if f in ("index",) else np.int8 if f == "case" else float)
                         for f in _ARRAY_FIELDS])
        return cls(*[np.concatenate([getattr(p, f) for p in parts]) for f in _ARRAY_FIELDS])


_ARRAY_FIELDS = ("index", "g", "y", "s1", "s2", "omega1", "omega2", "w1", "w2", "t1", "t2", "delta", "case")


def _run(config: SimConfig, draws: Draws | None = None) -> Iterator[SimArrays]:
    p = config.params
    if not p.is_stable:
        warnings.warn(
            f"simulating an unstable tandem (rho1={p.rho1:.4g}, rho2={p.rho2:.4g})",
            UnstableSimulationWarning,
            stacklevel=3,
        )
    if draws is not None and len(draws.y) != config.n_packets:
        raise ValueError("injected sequences must have n_packets entries")
    chunks = _injected_chunks(draws) if draws is not None else _draw_chunks(config)
    first_kept = max(config.n_warmup, 1) + 1
    # state: previous per-system times and generation instant; the system starts empty at time 0
    t1p = t2p = 0.0
    g = 0.0
    i = 0
    for ys, s1s, s2s in chunks:
        out = {f: [] for f in _ARRAY_FIELDS}
        for y, s1, s2 in zip(ys, s1s, s2s):
            i += 1
            g_prev = g
            g = g_prev + y
            om1 = t1p - y
            w1 = om1 if om1 > 0.0 else 0.0
            t1 = w1 + s1
            y2 = s1 - om1 if om1 < 0.0 else s1
            om2 = t2p - y2
            w2 = om2 if om2 > 0.0 else 0.0
            t2 = w2 + s2
            t1p, t2p = t1, t2
            if i < first_kept:
                continue
            code = (0 if om2 > 0.0 else 1) if om1 > 0.0 else (2 if om2 > 0.0 else 3)
            out["index"].append(i)
            out["g"].append(g)
            out["y"].append(y)
            out["s1"].append(s1)
            out["s2"].append(s2)
            out["omega1"].append(om1)
            out["omega2"].append(om2)
            out["w1"].append(w1)
            out["w2"].append(w2)
            out["t1"].append(t1)
            out["t2"].append(t2)
            out["delta"].append(y + t1 + t2)
            out["case"].append(code)
        if not math.isfinite(g) or not math.isfinite(t1p + t2p):
            raise OverflowError("simulated clock left the representable range")
        if out["index"]:
            yield SimArrays(
                *[
                    np.asarray(out[f], dtype=np.int64 if f == "index" else np.int8 if f == "case" else float)
                    for f in _ARRAY_FIELDS
                ]
            )


def simulate_tandem(config: SimConfig, draws: Draws | None = None) -> Iterator[PacketRecord]:
    """Stream of post-warm-up ``PacketRecord`` objects (memory use is one chunk)."""
    for part in _run(config, draws):
        yield from part.records()


def simulate_arrays(config: SimConfig, draws: Draws | None = None) -> SimArrays:
    """Whole run as column arrays; same values as ``simulate_tandem``."""
    return SimArrays.concat(list(_run(config, draws)))


def collect_paoi(config: SimConfig, raw: IO[str] | None = None, draws: Draws | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Peak ages and case codes of a run, keeping only those two columns in memory.

    With ``raw`` set, every record is also written there as in ``write_raw_csv``.
    """
    deltas, codes = [], []
    writer = None
    if raw is not None:
        writer = csv.writer(raw, lineterminator="\n")
        writer.writerow(RAW_FIELDS)
    for part in _run(config, draws):
        deltas.append(part.delta)
        codes.append(part.case)
        if writer is not None:
            _write_rows(writer, part.records())
    if not deltas:
        return np.empty(0), np.empty(0, dtype=np.int8)
    return np.concatenate(deltas), np.concatenate(codes)


# --- empirical summaries -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EmpiricalPaoi:
    overall: EmpiricalDistribution
    by_case: dict[CaseLabel, EmpiricalDistribution | None]
    counts: dict[CaseLabel, int]

    @property
    def n(self) -> int:
        return self.overall.n

    def frequencies(self) -> dict[CaseLabel, float]:
        return {c: self.counts[c] / self.n for c in CASES}


def empirical_from_records(records: SimArrays | Iterable[PacketRecord]) -> EmpiricalPaoi:
    """Sorted peak ages overall and split by case."""
    if isinstance(records, SimArrays):
        delta, codes = records.delta, records.case
    else:
        rows = [(r.delta, _CASE_CODE[r.case]) for r in records]
        delta = np.array([d for d, _ in rows], dtype=float)
        codes = np.array([c for _, c in rows], dtype=np.int8)
    return empirical_from_arrays(delta, codes)


def empirical_from_arrays(delta: np.ndarray, codes: np.ndarray) -> EmpiricalPaoi:
    """As ``empirical_from_records`` for peak ages with case codes 0..3."""
    delta = np.asarray(delta, dtype=float)
    codes = np.asarray(codes)
    if delta.size == 0:
        raise DomainError("no records to summarise")
    by_case, counts = {}, {}
    for code, c in enumerate(CASES):
        sel = delta[codes == code]
        counts[c] = int(sel.size)
        by_case[c] = EmpiricalDistribution.from_samples(sel) if sel.size else None
    return EmpiricalPaoi(EmpiricalDistribution.from_samples(delta), by_case, counts)


# --- standalone M/D/1 queue ------------------------------------------------------


def simulate_md1_queue(lam: float, D: float, n: int, seed: int = 0, n_warmup: int = 1000) -> tuple[np.ndarray, np.ndarray]:
    """Waiting times and peak ages of ``n`` post-warm-up packets of a single M/D/1 queue."""
    if n <= 0 or n_warmup < 0:
        raise ValueError("need n > 0 and n_warmup >= 0")
    rng = RngStream(seed)
    total = n + n_warmup + 1
    y = rng.exponential(lam, total).tolist()
    waits = np.empty(n)
    ages = np.empty(n)
    w_prev = 0.0
    k = 0
    for i in range(1, total):
        w = w_prev + D - y[i]
        w = w if w > 0.0 else 0.0
        if i > n_warmup:
            waits[k] = w
            ages[k] = y[i] + w + D
            k += 1
        w_prev = w
    return waits, ages


# --- raw dump ------------------------------------------------------------------


def write_raw_csv(records: SimArrays | Iterable[PacketRecord], fh: IO[str]) -> int:
    """One line per packet, columns ``RAW_FIELDS``; floats in shortest round-trip form."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(RAW_FIELDS)
    return _write_rows(w, records.records() if isinstance(records, SimArrays) else records)


def _write_rows(writer, records: Iterable[PacketRecord]) -> int:
    n = 0
    for r in records:
        writer.writerow([r.index, repr(r.g), repr(r.y), repr(r.s1), repr(r.s2), repr(r.omega1), repr(r.omega2),
                         repr(r.t1), repr(r.t2), repr(r.delta), r.case.value])
        n += 1
    return n
