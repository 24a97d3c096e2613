"""Birkhoff sums along the shift, iterated-logarithm statistics and the
classical Monte Carlo baseline."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _streams
from .product_space import (
    Law,
    Observable,
    ShiftKind,
    ShiftSystem,
    coordinate_windows,
    evaluate,
    shift_apply,
)

DEFAULT_CHUNK = 1 << 16


class EvaluationError(RuntimeError):
    """Raised when an observable fails (or returns a non-finite value) at some shift step."""

    def __init__(self, step: int, message: str):
        super().__init__(f"observable failed at step {step}: {message}")
        self.step = step


@dataclass
class ErgodicRunStats:
    """Outcome of one streaming Birkhoff sum ``S_N = sum_{n=0}^N (f - mean) o tau^n``."""

    N: int
    sum: float
    mean: float
    lil_trace: list[tuple[int, float]] = field(default_factory=list)
    sum_trace: list[tuple[int, float]] = field(default_factory=list)
    wall_time: float = 0.0
    lil_max: float | None = None
    seed: int | None = None

    @property
    def mean_estimate(self) -> float:
        return self.sum / self.N

    @property
    def average(self) -> float:
        """The ergodic estimate of ``E f`` from the ``N + 1`` evaluations."""
        return self.mean + self.sum / (self.N + 1)


@dataclass(frozen=True)
class RateEstimate:
    N: int
    replications: int
    value: float
    stderr: float


def geometric_checkpoints(N: int, start: float = 10.0, ratio: float = 1.25) -> list[int]:
    """Strictly increasing ``ceil(start * ratio^j)`` up to ``N``, always ending at ``N``."""
    out: list[int] = []
    j = 0
    while True:
        c = math.ceil(start * ratio**j)
        if c >= N:
            break
        if not out or c > out[-1]:
            out.append(c)
        j += 1
    out.append(N)
    return out


def lil_statistic(S_N, N):
    """``|S_N| / sqrt(2 N log log N)`` with natural logarithms.  Requires ``N >= 3``."""
    N_arr = np.asarray(N, dtype=float)
    if np.any(N_arr < 3):
        raise ValueError("the iterated-logarithm normalization needs N >= 3")
    out = np.abs(S_N) / np.sqrt(2.0 * N_arr * np.log(np.log(N_arr)))
    return float(out) if np.ndim(out) == 0 else out


def birkhoff_sum(
    system: ShiftSystem,
    f: Observable,
    N: int,
    mean: float,
    *,
    checkpoints: Sequence[int] | None = None,
    lil_window: tuple[int, int] | None = None,
    chunk: int = DEFAULT_CHUNK,
) -> ErgodicRunStats:
    """Stream ``f o tau^n`` for ``n = 0..N`` and accumulate the centered sum.

    ``mean`` must be the true (or independently estimated) ``E f``.  The LIL
    statistic is recorded at ``checkpoints`` (geometric by default); when
    ``lil_window = (lo, hi)`` is given, the running maximum of the statistic
    over every ``N'`` in ``[lo, hi]`` is also kept.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    t0 = time.perf_counter()
    cps = list(checkpoints) if checkpoints is not None else geometric_checkpoints(N)
    cps = [c for c in cps if 3 <= c <= N]
    trace: list[tuple[int, float]] = []
    sums: list[tuple[int, float]] = []
    lil_max = None
    if lil_window is not None:
        lil_lo, lil_hi = max(3, lil_window[0]), min(N, lil_window[1])
        lil_max = 0.0

    if system.kind is ShiftKind.WIENER_SCALING or f.window is None:
        values = np.empty(N + 1)
        for n in range(N + 1):
            try:
                values[n] = evaluate(shift_apply(system, n), f) - mean
            except Exception as exc:  # noqa: BLE001
                raise EvaluationError(n, str(exc)) from exc
            if not np.isfinite(values[n]):
                raise EvaluationError(n, "non-finite value")
        partial = np.cumsum(values)
        for c in cps:
            trace.append((c, lil_statistic(partial[c], c)))
            sums.append((c, float(partial[c])))
        if lil_max is not None and lil_hi >= lil_lo:
            ns = np.arange(lil_lo, lil_hi + 1)
            lil_max = float(np.max(lil_statistic(partial[ns], ns)))
        total = float(partial[-1])
    else:
        total = 0.0
        cp_iter = iter(cps)
        next_cp = next(cp_iter, None)
        for n0 in range(0, N + 1, chunk):
            n1 = min(N + 1, n0 + chunk)
            w = coordinate_windows(system, f.window, n0, n1)
            vals = np.asarray(f.func(w), dtype=float) - mean
            bad = ~np.isfinite(vals)
            if bad.any():
                raise EvaluationError(n0 + int(np.argmax(bad)), "non-finite value")
            partial = total + np.cumsum(vals)
            while next_cp is not None and next_cp < n1:
                trace.append((next_cp, lil_statistic(partial[next_cp - n0], next_cp)))
                sums.append((next_cp, float(partial[next_cp - n0])))
                next_cp = next(cp_iter, None)
            if lil_max is not None:
                a, b = max(n0, lil_lo), min(n1 - 1, lil_hi)
                if a <= b:
                    ns = np.arange(a, b + 1)
                    lil_max = max(lil_max, float(np.max(lil_statistic(partial[ns - n0], ns))))
            total = float(partial[-1])

    return ErgodicRunStats(
        N=N,
        sum=total,
        mean=mean,
        lil_trace=trace,
        sum_trace=sums,
        wall_time=time.perf_counter() - t0,
        lil_max=lil_max,
        seed=getattr(system.space, "seed", None),
    )


def rate_estimate(
    system_factory: Callable[[int], ShiftSystem],
    f: Observable,
    N: int,
    reps: int,
    *,
    mean: float,
    seed: int = 0,
) -> RateEstimate:
    """Root-mean-square of ``S_N / sqrt(N)`` over independent replications."""
    if reps < 2:
        raise ValueError("reps must be >= 2")
    seeds = _streams.spawn_seeds(seed, reps)
    sq = np.array([birkhoff_sum(system_factory(int(s)), f, N, mean, checkpoints=[]).sum ** 2
                   for s in seeds]) / N
    value = math.sqrt(sq.mean())
    # delta method on the square root of the mean square
    stderr = 0.0 if value == 0.0 else float(sq.std(ddof=1) / math.sqrt(reps) / (2.0 * value))
    return RateEstimate(N=N, replications=reps, value=value, stderr=stderr)


def classical_mc(
    f: Observable,
    N: int,
    seed: int,
    *,
    law: Law | str = Law.UNIFORM,
    dim: int = 1,
) -> tuple[float, float]:
    """Plain Monte Carlo: every draw resamples the whole coordinate window."""
    if N < 2:
        raise ValueError("N must be >= 2")
    if f.window is None:
        raise ValueError("classical_mc needs a coordinate observable")
    from .product_space import _DRAW

    draw = _DRAW[Law(law)]
    vals = np.empty(N)
    step = max(1, DEFAULT_CHUNK // max(1, f.window * dim))
    for i0 in range(0, N, step):
        i1 = min(N, i0 + step)
        x = draw(seed, _streams.CLASSICAL,
                 np.arange(i0, i1)[:, None, None],
                 np.arange(f.window)[None, :, None],
                 np.arange(dim)[None, None, :])
        vals[i0:i1] = f.func(x)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(N))


def pilot_mean(f: Observable, N: int, seed: int, *, law: Law | str = Law.UNIFORM,
               dim: int = 1) -> float:
    """Estimate ``E f`` from a stream disjoint from any shift run."""
    return classical_mc(f, N, seed, law=law, dim=dim)[0]


RUN_RECORD_COLUMNS = ("seed", "N", "S_N", "mean_estimate", "lil_statistic", "wall_time")


def run_records(stats: ErgodicRunStats) -> list[dict]:
    """One CSV row per LIL checkpoint of a run."""
    rows = []
    for (n, lil), (_, s) in zip(stats.lil_trace, stats.sum_trace):
        rows.append({
            "seed": stats.seed,
            "N": n,
            "S_N": repr(s),
            "mean_estimate": repr(s / n),
            "lil_statistic": repr(float(lil)),
            "wall_time": f"{stats.wall_time:.6f}" if n == stats.N else "",
        })
    return rows


def write_run_records(path, runs: Iterable[ErgodicRunStats], *, include_time: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RUN_RECORD_COLUMNS, lineterminator="\n")
        w.writeheader()
        for stats in runs:
            for row in run_records(stats):
                if not include_time:
                    row["wall_time"] = ""
                w.writerow(row)
