"""Functionals of Lipschitz SDEs driven by the scaling-shift Brownian motion.

The driving path comes from :class:`~ergoshift.wiener_core.DyadicPathStore`,
so ``f o tau^n`` is simply ``f`` computed on the shifted store.  For
``f = h(X_t)`` the transfer operator acts by

    T^n f = (P_{t - delta} h)(X_delta) o tau^n,   delta = 2^{-n},

with ``P`` the transition semigroup: the path is fixed up to time ``delta``
and the rest is averaged out.  :func:`holder_decay_diagnostic` estimates
``Var[T^n f]`` by nested Monte Carlo and fits its geometric decay.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .wiener_core import DyadicPathStore, brownian_paths, scaling_shift


class SimulationError(RuntimeError):
    def __init__(self, step: int, message: str = "non-finite state"):
        super().__init__(f"{message} at step {step}")
        self.step = step


def _lipschitz_violation(sde: "SdeSpec", samples: int = 64, seed: int = 0) -> str | None:
    rng = np.random.default_rng(seed)
    x = rng.uniform(-3, 3, (samples, sde.m))
    y = x + rng.normal(0, 0.5, (samples, sde.m))
    s = rng.uniform(0, 1, samples)
    for xs, ys, ss in zip(x, y, s):
        dsig = np.linalg.norm(np.asarray(sde.sigma(xs[None], ss))[0] - np.asarray(sde.sigma(ys[None], ss))[0])
        db = np.linalg.norm(np.asarray(sde.b(xs[None], ss))[0] - np.asarray(sde.b(ys[None], ss))[0])
        dist = np.linalg.norm(xs - ys)
        if dsig + db > sde.lipschitz * dist * (1 + 1e-9) + 1e-12:
            return f"constant {sde.lipschitz} violated between {xs} and {ys}"
    return None


@dataclass(frozen=True)
class SdeSpec:
    """``dX = sigma(X, s) dB + b(X, s) ds`` in ``R^m`` driven by ``d`` Brownian motions.

    ``sigma`` maps states ``(batch, m)`` and a time to ``(batch, m, d)``;
    ``b`` maps them to ``(batch, m)``.  The declared Lipschitz constant is
    fuzz-checked on random pairs of points at construction.
    """

    m: int
    d: int
    sigma: Callable
    b: Callable
    lipschitz: float
    x0: np.ndarray = field(default_factory=lambda: np.zeros(1))
    check: bool = True

    def __post_init__(self):
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if x0.shape != (self.m,):
            raise ValueError(f"x0 must have shape ({self.m},)")
        object.__setattr__(self, "x0", x0)
        if self.check:
            msg = _lipschitz_violation(self)
            if msg:
                raise ValueError(msg)


def ornstein_uhlenbeck(x0: float = 0.0, theta: float = 1.0, vol: float = 1.0) -> SdeSpec:
    """``dX = vol dB - theta X ds`` in one dimension."""
    return SdeSpec(1, 1, lambda x, s: np.full((x.shape[0], 1, 1), vol),
                   lambda x, s: -theta * x, abs(theta), np.array([x0]))


def geometric_brownian(x0: float = 1.0, vol: float = 1.0, drift: float = 0.0) -> SdeSpec:
    """``dX = vol X dB + drift X ds``."""
    return SdeSpec(1, 1, lambda x, s: vol * x[:, :, None], lambda x, s: drift * x,
                   abs(vol) + abs(drift), np.array([x0]))


def em_integrate(sde: SdeSpec, x0: np.ndarray, times: np.ndarray, dW: np.ndarray,
                 *, keep: bool = False) -> np.ndarray:
    """Explicit Euler-Maruyama for a batch of states.

    ``x0`` is ``(batch, m)``, ``times`` the grid ``(steps + 1,)`` and ``dW``
    the Brownian increments ``(batch, steps, d)``.  Returns the final states,
    or the whole trajectory ``(batch, steps + 1, m)`` with ``keep=True``.
    """
    x = np.array(x0, dtype=float, copy=True)
    traj = [x.copy()] if keep else None
    for j in range(times.size - 1):
        s, dt = times[j], times[j + 1] - times[j]
        sig = np.asarray(sde.sigma(x, s), dtype=float)
        drift = np.asarray(sde.b(x, s), dtype=float)
        x = x + np.einsum("bmd,bd->bm", sig, dW[:, j, :]) + drift * dt
        if not np.all(np.isfinite(x)):
            raise SimulationError(j + 1)
        if keep:
            traj.append(x.copy())
    return np.stack(traj, axis=1) if keep else x


def path_increments(seeds, times: np.ndarray, *, d: int = 1, offset: int = 0,
                    depth: int = 16, K: int = 40) -> np.ndarray:
    """Increments of the stored paths over ``times`` (which start at 0): ``(batch, steps, d)``."""
    if times[0] != 0.0:
        raise ValueError("the grid must start at 0")
    B = brownian_paths(seeds, times[1:], d=d, offset=offset, depth=depth, K=K)
    B = np.concatenate([np.zeros((B.shape[0], 1, d)), B], axis=1)
    return np.diff(B, axis=1)


def euler_maruyama(sde: SdeSpec, path: DyadicPathStore, steps: int, t_end: float = 1.0,
                   x0=None) -> np.ndarray:
    """Trajectory ``(steps + 1, m)`` at the uniform grid of ``[0, t_end]`` along ``path``."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not 0 < t_end <= 1:
        raise ValueError("t_end must lie in (0, 1]")
    if path.d != sde.d:
        raise ValueError("path dimension does not match the SDE")
    times = t_end * np.arange(steps + 1) / steps
    dW = path_increments([path.seed], times, d=sde.d, offset=path.offset,
                         depth=path.depth, K=path.K)
    start = sde.x0 if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float))
    return em_integrate(sde, start[None, :], times, dW, keep=True)[0]


def step_halving_error(sde: SdeSpec, path: DyadicPathStore, steps: int, t_end: float = 1.0) -> dict:
    """Terminal states at ``steps`` and ``2 steps`` on the same path and their difference."""
    coarse = euler_maruyama(sde, path, steps, t_end)[-1]
    fine = euler_maruyama(sde, path, 2 * steps, t_end)[-1]
    return {"coarse": coarse, "fine": fine, "error": float(np.linalg.norm(fine - coarse)),
            "richardson": 2 * fine - coarse}


# -------------------------------------------------------------------- transfer operator

@dataclass(frozen=True)
class NestedMC:
    """Budget for nested estimates of ``T^n f``.

    ``n_inner=None`` uses ``ceil(sqrt(n_outer))`` inner paths; ``step`` is the
    target time step, with at least ``min_steps`` steps on ``[0, delta]``.
    """

    n_outer: int = 10_000
    n_inner: int | None = None
    step: float = 1.0 / 256
    min_steps: int = 64
    seed: int = 0

    def inner(self) -> int:
        return self.n_inner if self.n_inner is not None else math.ceil(math.sqrt(self.n_outer))


def _grid(t0: float, t1: float, step: float, min_steps: int = 1) -> np.ndarray:
    k = max(min_steps, math.ceil((t1 - t0) / step - 1e-9))
    return t0 + (t1 - t0) * np.arange(k + 1) / k


def _tn_samples(sde: SdeSpec, h: Callable, t: float, n: int, seeds, mc: NestedMC,
                rng: np.random.Generator, offset: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Inner means and inner variances of ``T^n f`` for each outer seed.

    The outer paths are the stores ``seeds`` shifted ``offset + n`` times.
    """
    delta = 2.0**-n
    seeds = np.asarray(seeds)
    B = seeds.size
    if delta >= t:
        # f depends on the path up to t <= delta only: T^n f = f o tau^n
        times = _grid(0.0, t, mc.step, 1)
        dW = path_increments(seeds, times, d=sde.d, offset=offset + n)
        x = em_integrate(sde, np.broadcast_to(sde.x0, (B, sde.m)), times, dW)
        return np.asarray(h(x), dtype=float), np.zeros(B)
    times = _grid(0.0, delta, mc.step, mc.min_steps)
    dW = path_increments(seeds, times, d=sde.d, offset=offset + n)
    x_delta = em_integrate(sde, np.broadcast_to(sde.x0, (B, sde.m)), times, dW)
    J = mc.inner()
    inner_times = _grid(delta, t, mc.step, 1)
    steps = inner_times.size - 1
    means = np.empty(B)
    variances = np.empty(B)
    chunk = max(1, (1 << 22) // max(1, J * steps))
    for i0 in range(0, B, chunk):
        i1 = min(B, i0 + chunk)
        x = np.repeat(x_delta[i0:i1], J, axis=0)
        dt = np.diff(inner_times)
        noise = rng.standard_normal((x.shape[0], steps, sde.d)) * np.sqrt(dt)[None, :, None]
        xt = em_integrate(sde, x, inner_times, noise)
        vals = np.asarray(h(xt), dtype=float).reshape(i1 - i0, J)
        means[i0:i1] = vals.mean(axis=1)
        variances[i0:i1] = vals.var(axis=1, ddof=1) if J > 1 else 0.0
    return means, variances


def tn_functional(sde: SdeSpec, h: Callable, t: float, n: int, path: DyadicPathStore,
                  mc: NestedMC = NestedMC()) -> tuple[float, float]:
    """One sample of ``T^n f`` for ``f = h(X_t)`` along ``path``, with its inner Monte Carlo error.

    The path is shifted ``n`` times and followed up to ``delta = 2^{-n}``;
    from there ``n_inner`` fresh continuations estimate ``P_{t - delta} h``.
    """
    if not 0 < t <= 1:
        raise ValueError("t must lie in (0, 1]")
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = np.random.default_rng([mc.seed, n, path.seed & 0xFFFFFFFF, 0x7E])
    means, var = _tn_samples(sde, h, t, n, [path.seed], mc, rng, offset=path.offset)
    J = mc.inner() if 2.0**-n < t else 1
    return float(means[0]), float(math.sqrt(var[0] / J))


@dataclass
class DecayDiagnostic:
    """Per-level estimates of ``Var[T^n f]`` and the fitted geometric decay ``c 2^{-n lambda}``."""

    levels: np.ndarray
    variance: np.ndarray
    stderr: np.ndarray
    target: float
    lam_hat: float
    lam_stderr: float
    fit_levels: np.ndarray
    bound: float
    certified: bool
    degenerate: bool

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "var_estimate", "stderr"])
        for n, v, s in zip(self.levels, self.variance, self.stderr):
            w.writerow([int(n), repr(float(v)), repr(float(s))])
        return buf.getvalue()

    def summary(self) -> dict:
        fin = lambda x: float(x) if math.isfinite(x) else None  # noqa: E731
        return {"lambda_hat": fin(self.lam_hat), "lambda_stderr": fin(self.lam_stderr),
                "target_lambda": self.target, "fit_levels": [int(n) for n in self.fit_levels],
                "bound": fin(self.bound), "certified": self.certified, "degenerate": self.degenerate}

    def to_json(self) -> str:
        return json.dumps(self.summary())


def fit_decay(levels, variance, stderr) -> tuple[float, float, float]:
    """Weighted fit of ``log2 Var_n = c - lambda n``; returns ``(lambda, stderr, c)``."""
    levels = np.asarray(levels, dtype=float)
    variance = np.asarray(variance, dtype=float)
    stderr = np.asarray(stderr, dtype=float)
    keep = variance > 0
    if keep.sum() < 2:
        return math.nan, math.nan, math.nan
    x, v, s = levels[keep], variance[keep], stderr[keep]
    y = np.log2(v)
    sy = np.where(s > 0, s / (v * math.log(2)), 1.0)
    w = 1.0 / sy**2
    A = np.vstack([np.ones_like(x), -x]).T
    cov = np.linalg.inv(A.T @ (A * w[:, None]))
    coef = cov @ (A.T @ (w * y))
    resid = y - A @ coef
    dof = x.size - 2
    # inflate by the residual scatter when it exceeds the stated errors
    scale = max(1.0, float(np.sum(w * resid**2) / dof)) if dof > 0 else 1.0
    return float(coef[1]), float(math.sqrt(cov[1, 1] * scale)), float(coef[0])


def holder_decay_diagnostic(sde: SdeSpec, h: Callable, lam: float, t: float, n_max: int,
                            mc: NestedMC = NestedMC(), *, fit_from: int | None = None) -> DecayDiagnostic:
    """Estimate ``Var[T^n f]`` for ``n = 0..n_max`` and fit its decay exponent.

    Each level uses fresh outer paths.  With inner means ``Y_i`` and inner
    variances ``W_i`` from ``J`` continuations, the statistic
    ``Z_i = (Y_i - mean Y)^2 N / (N - 1) - W_i / J`` is unbiased for the
    variance of the conditional mean, and its standard error is ``sd(Z)/sqrt(N)``.
    The fit uses levels ``n >= fit_from`` (default ``n_max // 2``), where the
    asymptotic regime has set in.
    """
    if not 0 < lam <= 1:
        raise ValueError("lambda must lie in (0, 1]")
    if not 0 < t <= 1:
        raise ValueError("t must lie in (0, 1]")
    N = mc.n_outer
    if N < 2:
        raise ValueError("need at least two outer samples")
    levels = np.arange(n_max + 1)
    var = np.empty(n_max + 1)
    se = np.empty(n_max + 1)
    for n in levels:
        seeds = np.random.SeedSequence([mc.seed, int(n), 0x0D]).generate_state(N, np.uint64)
        rng = np.random.default_rng([mc.seed, int(n), 0x1E])
        Y, W = _tn_samples(sde, h, t, int(n), seeds, mc, rng)
        J = mc.inner() if 2.0**-n < t else 1
        Z = (Y - Y.mean()) ** 2 * N / (N - 1) - W / J
        var[n] = Z.mean()
        se[n] = Z.std(ddof=1) / math.sqrt(N)
    degenerate = bool(np.all(np.abs(var) <= 1e-300) and np.all(se <= 1e-300))
    start = n_max // 2 if fit_from is None else fit_from
    fit_levels = levels[start:]
    if degenerate:
        return DecayDiagnostic(levels, np.maximum(var, 0.0), se, lam, math.nan, math.nan,
                               fit_levels, 0.0, True, True)
    lam_hat, lam_se, _ = fit_decay(fit_levels, var[start:], se[start:])
    certified = math.isfinite(lam_hat) and lam_hat - 2 * lam_se > 0
    if certified:
        r = 2.0 ** (-(lam_hat - 2 * lam_se) / 2.0)
        roots = np.sqrt(np.maximum(var, 0.0) + 2 * se)
        bound = float(roots.sum() + roots[-1] * r / (1 - r))
    else:
        bound = math.inf
    return DecayDiagnostic(levels, var, se, lam, lam_hat, lam_se, fit_levels, bound, certified, False)


def ou_tn_variance(t: float, n: int, theta: float = 1.0, vol: float = 1.0) -> float:
    """Exact ``Var[T^n f]`` for ``f = X_t`` of an Ornstein-Uhlenbeck process started at a point."""
    delta = 2.0**-n
    if delta >= t:
        return vol**2 * (1 - math.exp(-2 * theta * t)) / (2 * theta)
    return math.exp(-2 * theta * (t - delta)) * vol**2 * (1 - math.exp(-2 * theta * delta)) / (2 * theta)


# -------------------------------------------------------------------- measure functionals

def measure_functional_batch(sde: SdeSpec, g: Callable, atoms: Sequence[tuple[float, float, float]],
                             seeds, steps: int, *, offset: int = 0) -> np.ndarray:
    """``sum_j w_j g(X^{x_j}_{s_j})`` on each seeded path.

    ``atoms`` are point masses ``(s_j, x_j, w_j)``; one trajectory per
    distinct starting point ``x_j`` runs over the shared path, on the uniform
    grid of ``steps`` steps refined to contain every ``s_j``.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if sde.m != 1 and any(np.ndim(x) == 0 for _, x, _ in atoms):
        raise ValueError("starting points must be vectors for m > 1")
    for s, _, _ in atoms:
        if not 0 < s <= 1:
            raise ValueError(f"atom time {s} outside (0, 1]")
    seeds = np.atleast_1d(np.asarray(seeds))
    times = np.union1d(np.arange(steps + 1) / steps, [a[0] for a in atoms])
    dW = path_increments(seeds, times, d=sde.d, offset=offset)
    starts: dict[tuple, int] = {}
    for _, x, _ in atoms:
        starts.setdefault(tuple(np.atleast_1d(np.asarray(x, dtype=float))), len(starts))
    total = np.zeros(seeds.size)
    for x, _ in starts.items():
        traj = em_integrate(sde, np.broadcast_to(np.asarray(x), (seeds.size, sde.m)), times, dW, keep=True)
        for s, xa, w in atoms:
            if tuple(np.atleast_1d(np.asarray(xa, dtype=float))) != x:
                continue
            j = int(np.searchsorted(times, s))
            total += w * np.asarray(g(traj[:, j, :]), dtype=float)
    return total


def measure_functional(sde: SdeSpec, g: Callable, atoms, path: DyadicPathStore, steps: int) -> float:
    """:func:`measure_functional_batch` on one stored path."""
    return float(measure_functional_batch(sde, g, atoms, [path.seed], steps, offset=path.offset)[0])
