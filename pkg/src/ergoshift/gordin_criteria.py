"""Sufficient criteria for Gordin-class membership and bounds on the norm of
the martingale part ``g~`` of the decomposition ``f - E f = g~ + h o tau^{-1} - h``.

The calculators take norm sequences (known in closed form or estimated by
Monte Carlo) and return a :class:`CriterionVerdict`.  Deciding whether an
infinite series converges from finitely many terms is impossible in general,
so every verdict goes through one policy (:func:`series_verdict`):

* an explicit bound on the remainder of the series settles it;
* a closed-form ``rule`` is summed to double precision (direct sum plus an
  Euler-Maclaurin tail) once its asymptotic decay exponent exceeds one;
* raw data is accepted only if it ends in an exact zero (a terminated
  series) or decays geometrically over its last tenth, and is otherwise
  undecided, with a "divergent trend" note when a power-law fit of the tail
  gives exponent <= 1.05.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .product_space import Law, Observable, ShiftSystem, _DRAW

SATISFIED = "satisfied"
DIVERGENT = "divergent"
UNDECIDED = "undecided"

GEOMETRIC_RATIO_MAX = 0.99
DIRECT_TERMS = 4096
DIVERGENT_EXPONENT = 1.05


@dataclass(frozen=True)
class NormSequence:
    """Non-negative summands indexed from 0.

    ``rule`` optionally gives the closed-form term for any real index
    ``k >= 0``; ``values`` then holds its first few terms as evidence.
    """

    values: np.ndarray
    provenance: str = "analytic"
    stderr: np.ndarray | None = None
    rule: Callable[[float], float] | None = field(default=None, compare=False)
    truncated: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("values must be one-dimensional")
        if np.any(v < 0) and self.provenance == "analytic":
            raise ValueError("norm sequences are non-negative")
        object.__setattr__(self, "values", v)
        if self.stderr is not None:
            object.__setattr__(self, "stderr", np.asarray(self.stderr, dtype=float))
        if self.provenance not in ("analytic", "monte_carlo"):
            raise ValueError(f"unknown provenance {self.provenance!r}")

    @classmethod
    def from_rule(cls, rule: Callable[[float], float], n: int = 64) -> "NormSequence":
        return cls(np.array([rule(k) for k in range(n)]), rule=rule)

    def conservative(self) -> np.ndarray:
        """Values used for verdicts: ``value + 2 stderr`` for Monte Carlo input."""
        v = np.maximum(self.values, 0.0)
        if self.provenance == "monte_carlo" and self.stderr is not None:
            v = v + 2.0 * self.stderr
        return v

    def to_json(self) -> str:
        d = {"provenance": self.provenance, "values": self.values.tolist()}
        if self.stderr is not None:
            d["stderr"] = self.stderr.tolist()
        if self.truncated:
            d["truncated"] = True
        return json.dumps(d)

    @classmethod
    def from_json(cls, text: str) -> "NormSequence":
        d = json.loads(text)
        if isinstance(d, list):
            return cls(np.asarray(d, dtype=float))
        return cls(np.asarray(d["values"], dtype=float), d.get("provenance", "analytic"),
                   None if d.get("stderr") is None else np.asarray(d["stderr"], dtype=float),
                   truncated=bool(d.get("truncated", False)))


@dataclass(frozen=True)
class CriterionVerdict:
    satisfied: bool
    bound_on_g_tilde: float
    partial_sums: np.ndarray
    status: str = UNDECIDED
    note: str = ""

    def __post_init__(self):
        if self.satisfied and not math.isfinite(self.bound_on_g_tilde):
            raise ValueError("a satisfied criterion needs a finite bound")

    def to_dict(self) -> dict:
        return {
            "satisfied": self.satisfied,
            "status": self.status,
            "bound_on_g_tilde": self.bound_on_g_tilde if math.isfinite(self.bound_on_g_tilde) else None,
            "partial_sums": [float(x) for x in self.partial_sums],
            "note": self.note,
        }


MEMBER = "member"
NON_MEMBER = "non-member"


@dataclass(frozen=True)
class GordinReport:
    """Membership verdict with the resulting bound on ``||g~||`` and its evidence."""

    verdict: str
    bound: float
    trace: np.ndarray
    note: str = ""
    details: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.verdict not in (MEMBER, NON_MEMBER, UNDECIDED):
            raise ValueError(f"unknown verdict {self.verdict!r}")
        object.__setattr__(self, "trace", np.asarray(self.trace, dtype=float))

    @property
    def member(self) -> bool:
        return self.verdict == MEMBER

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "bound": self.bound if math.isfinite(self.bound) else None,
            "trace": [float(x) for x in self.trace],
            "note": self.note,
            **{k: v for k, v in self.details.items() if isinstance(v, (int, float, str, bool, list))},
        }


# --------------------------------------------------------------------------
# series policy

def _fit_slope(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares slope and residual RMS."""
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return float(coef[0]), float(np.sqrt(np.mean(resid**2)))


def rule_decay_exponent(rule: Callable[[float], float]) -> float:
    """Asymptotic exponent ``p`` with ``rule(k) ~ k^{-p}``; ``inf`` for faster-than-power decay."""
    ks = 2.0 ** np.arange(16, 21)
    vals = np.array([abs(rule(k)) for k in ks])
    if not np.all(np.isfinite(vals)):
        return -math.inf
    if np.any(vals < 1e-280):
        return math.inf
    slope, _ = _fit_slope(np.log(ks), np.log(vals))
    return -slope


def _tail_integral(f: Callable[[float], float], K: float, p: float = math.inf,
                   epsrel: float = 1e-11) -> float:
    """``int_K^inf f`` for ``f ~ x^{-p}`` via ``x = K / s`` and ``s = w^q``.

    ``q = 1 / (p - 1)`` (at least one) turns the endpoint behaviour
    ``s^{p-2}`` into a bounded integrand, which keeps the adaptive rule at
    full accuracy for slowly decaying terms.  Beyond the largest ``x`` at
    which ``f`` still evaluates to a finite positive number the remainder
    is the pure power tail with the local slope there.
    """
    q = 1.0 / (p - 1.0) if 1.0 < p < 2.0 else 1.0

    def safe(x: float) -> float:
        try:
            return float(f(x))
        except (OverflowError, ZeroDivisionError):
            return math.nan

    fK = safe(K)
    if 0.0 < abs(fK) < 1e-250:
        # deep in the asymptotic regime: the pure power tail
        return fK * K / (p - 1.0) if p > 1.0 else math.inf
    x_cap, tail = math.inf, 0.0
    if q > 1.0:
        x_cap = K * 1e280
        while x_cap > 2 * K:
            f1, f2 = safe(x_cap / 2), safe(x_cap)
            # stay clear of subnormal values, where quadrature loses its error estimate
            if 1e-250 < f2 < f1 and math.isfinite(f1 * x_cap):
                break
            x_cap /= 1e10
        f1, f2 = safe(x_cap / 2), safe(x_cap)
        if 1e-250 < f2 < f1 and x_cap > 2 * K:
            slope = math.log2(f1 / f2)
            if slope <= 1.0:
                return math.inf
            tail = f2 * x_cap / (slope - 1.0)
        else:
            x_cap = math.inf
    w0 = (K / x_cap) ** (1.0 / q)
    # order-one integrand values keep quadrature away from underflow
    scale = abs(fK) * K
    if not (math.isfinite(scale) and scale > 0.0):
        scale = 1.0

    def g(w: float) -> float:
        if w <= 0.0:
            return 0.0
        x = K / w**q
        return f(x) / scale * x * q / w

    val, _ = integrate.quad(g, w0, 1.0, limit=400, epsabs=0.0, epsrel=epsrel)
    return val * scale + tail


def sum_rule(rule: Callable[[float], float], start: int = 0, direct: int = DIRECT_TERMS,
             p: float | None = None, epsrel: float = 1e-11) -> float:
    """``sum_{k >= start} rule(k)``: direct terms plus an Euler-Maclaurin tail."""
    K = start + direct
    head = math.fsum(rule(k) for k in range(start, K))
    fK = rule(K)
    if fK == 0.0:
        return head
    integral = _tail_integral(rule, K, rule_decay_exponent(rule) if p is None else p, epsrel)
    deriv = (rule(K + 1.0) - rule(K - 1.0)) / 2.0
    return head + integral + fK / 2.0 - deriv / 12.0


def series_verdict(
    terms: np.ndarray,
    *,
    rule: Callable[[float], float] | None = None,
    tail: float | None = None,
    label: str = "series",
    epsrel: float = 1e-11,
) -> CriterionVerdict:
    """Decide finiteness of ``sum_k terms[k]`` under the module policy.

    ``epsrel`` is the quadrature tolerance for a closed-form tail; rules
    that are themselves quadrature results need a looser one.
    """
    terms = np.asarray(terms, dtype=float)
    partial = np.cumsum(terms) if terms.size else np.zeros(0)
    head = float(partial[-1]) if terms.size else 0.0

    if tail is not None:
        if not math.isfinite(tail) or tail < 0:
            return CriterionVerdict(False, math.inf, partial, DIVERGENT, f"{label}: infinite tail")
        return CriterionVerdict(True, head + float(tail), partial, SATISFIED,
                                f"{label}: data plus supplied tail bound")

    if rule is not None:
        p = rule_decay_exponent(rule)
        if p <= 1.0:
            return CriterionVerdict(False, math.inf, partial, DIVERGENT,
                                    f"{label}: closed-form terms decay like k^-{p:.3g}")
        return CriterionVerdict(True, sum_rule(rule, p=p, epsrel=epsrel), partial, SATISFIED,
                                f"{label}: closed-form sum, decay exponent {p:.3g}")

    n = terms.size
    if n == 0 or terms[-1] == 0.0:
        # an exact trailing zero marks a terminated series
        return CriterionVerdict(True, head, partial, SATISFIED, f"{label}: terms vanish")
    if n < 3:
        return CriterionVerdict(False, math.inf, partial, UNDECIDED, f"{label}: too few terms")
    w = min(max(10, n // 10), n)
    idx = np.arange(n - w, n)
    last = terms[idx]
    pos = last > 0
    if pos.sum() < 3:
        return CriterionVerdict(False, math.inf, partial, UNDECIDED, f"{label}: sparse tail")
    k, y = idx[pos].astype(float), np.log(last[pos])
    g_slope, g_res = _fit_slope(k, y)
    p_slope, p_res = _fit_slope(np.log(k + 1.0), y)
    ratio = math.exp(g_slope)
    if g_res <= p_res and ratio < GEOMETRIC_RATIO_MAX:
        extra = float(terms[-1]) * ratio / (1.0 - ratio)
        return CriterionVerdict(True, head + extra, partial, SATISFIED,
                                f"{label}: geometric decay, fitted ratio {ratio:.4g}")
    if -p_slope <= DIVERGENT_EXPONENT:
        return CriterionVerdict(False, math.inf, partial, UNDECIDED,
                                f"{label}: divergent trend, terms ~ k^-{-p_slope:.3g}")
    return CriterionVerdict(False, math.inf, partial, UNDECIDED,
                            f"{label}: power-law decay k^-{-p_slope:.3g}, not decidable from data")


def _tail_sums(values: np.ndarray, extra: float = 0.0) -> np.ndarray:
    """``sum_{i >= k} values[i] + extra`` for every ``k``."""
    return np.cumsum(values[::-1])[::-1] + extra


def _rule_tail(sq_rule: Callable[[float], float]) -> Callable[[float], float]:
    """``x -> sum_{j >= 0} sq_rule(x + j)`` for real ``x`` (Euler-Maclaurin beyond a short head)."""
    p = rule_decay_exponent(sq_rule)

    def tail(x: float) -> float:
        if p <= 1.0:
            return math.inf
        head = math.fsum(sq_rule(x + j) for j in range(64))
        X = x + 64
        fX = sq_rule(X)
        if fX == 0.0:
            return head
        integral = _tail_integral(sq_rule, X, p)
        deriv = (sq_rule(X + 1.0) - sq_rule(X - 1.0)) / 2.0
        return head + integral + fX / 2.0 - deriv / 12.0
    return tail


def root_tail_series(
    seq: NormSequence,
    *,
    squared: bool,
    inner_tail: float | None = None,
    tail: float | None = None,
    label: str,
) -> CriterionVerdict:
    """Verdict on ``sum_k sqrt(sum_{i >= k} x_i)`` with ``x_i = seq_i^2`` or ``seq_i``."""
    base = seq.conservative()
    x = base**2 if squared else base
    if seq.rule is not None and tail is None:
        r = seq.rule
        sq = (lambda k: r(k) ** 2) if squared else r
        inner = _rule_tail(sq)
        derived = lambda k: math.sqrt(max(inner(k), 0.0))  # noqa: E731
        terms = np.array([derived(k) for k in range(len(x))])
        # the derived rule carries the inner quadrature error
        return series_verdict(terms, rule=derived, label=label, epsrel=1e-9)
    terms = np.sqrt(np.maximum(_tail_sums(x, inner_tail or 0.0), 0.0))
    return series_verdict(terms, tail=tail, label=label)


def _scaled_rule(seq: NormSequence, weight: Callable[[float], float]):
    if seq.rule is None:
        return None
    r = seq.rule
    return lambda k: weight(k) * r(k)


# --------------------------------------------------------------------------
# the calculators

def conditional_mean_bound(s: NormSequence, horizon: int | None = None, *,
                           tail: float | None = None) -> CriterionVerdict:
    """Membership from ``sum_n ||E f - E(f | F_n^inf)|| < inf``; the sum bounds ``||g~||``."""
    v = s.conservative()
    if horizon is not None:
        if horizon > v.size and s.rule is None and tail is None:
            raise ValueError("horizon exceeds the supplied data")
        v = v[: horizon + 1] if horizon < v.size else v
    return series_verdict(v, rule=s.rule, tail=tail, label="conditional-mean series")


def martingale_increment_bounds(
    f_norms: NormSequence,
    *,
    inner_tail: float | None = None,
    tail_b: float | None = None,
    tail_c: float | None = None,
) -> tuple[float, float]:
    """The two sufficient bounds from the martingale-increment norms ``||f_m||``.

    Returns ``(sum_m sqrt(sum_{k>=m} ||f_k||^2), sum_m sqrt(m) ||f_m||)``;
    either is ``inf`` when its series is not certified finite.
    """
    vb, vc = martingale_increment_verdicts(f_norms, inner_tail=inner_tail,
                                           tail_b=tail_b, tail_c=tail_c)
    return vb.bound_on_g_tilde, vc.bound_on_g_tilde


def martingale_increment_verdicts(
    f_norms: NormSequence,
    *,
    inner_tail: float | None = None,
    tail_b: float | None = None,
    tail_c: float | None = None,
) -> tuple[CriterionVerdict, CriterionVerdict]:
    vb = root_tail_series(f_norms, squared=True, inner_tail=inner_tail, tail=tail_b,
                          label="tail-root series")
    v = f_norms.conservative()
    terms_c = np.sqrt(np.arange(v.size)) * v
    vc = series_verdict(terms_c, rule=_scaled_rule(f_norms, math.sqrt) if tail_c is None else None,
                        tail=tail_c, label="sqrt-weighted series")
    return vb, vc


def adapted_series_bound(increment_norms: NormSequence, *, gate_tail: float | None = None,
                         tail: float | None = None) -> CriterionVerdict:
    """Membership for ``f = sum_k f_k`` with ``f_k`` adapted to the first ``k + 1`` coordinates.

    The gate is ``sum_k k ||f_k - E f_k|| < inf``; the bound is
    ``sum_k sqrt(k + 1) ||f_k - E f_k||``.
    """
    v = increment_norms.conservative()
    k = np.arange(v.size, dtype=float)
    gate = series_verdict(k * v, rule=_scaled_rule(increment_norms, lambda x: x) if gate_tail is None else None,
                          tail=gate_tail, label="gate series")
    bound = series_verdict(np.sqrt(k + 1.0) * v,
                           rule=_scaled_rule(increment_norms, lambda x: math.sqrt(x + 1.0)) if tail is None else None,
                           tail=tail, label="bound series")
    if not gate.satisfied:
        return CriterionVerdict(False, math.inf, bound.partial_sums, gate.status,
                                "gate not certified: " + gate.note)
    if not bound.satisfied:
        return CriterionVerdict(False, math.inf, bound.partial_sums, bound.status, bound.note)
    return CriterionVerdict(True, bound.bound_on_g_tilde, bound.partial_sums, SATISFIED,
                            f"gate sum {gate.bound_on_g_tilde:.12g}")


def stopping_time_bound(weighted_norm: float) -> float:
    """``(sqrt 6 / pi) ||f (T + 1)^{3/2}||``, the LIL bound for stopped functionals."""
    if weighted_norm < 0:
        raise ValueError("weighted norm must be non-negative")
    return math.sqrt(6.0) / math.pi * weighted_norm


def stopping_time_gate(mass_by_time: NormSequence, alpha: float = 1.5) -> CriterionVerdict:
    """Check ``E[f^2 T^3 log^alpha T] < inf`` from ``E[f^2; T = k]``, ``k = 0, 1, ...``."""
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    v = mass_by_time.conservative()
    k = np.arange(v.size, dtype=float)
    w = np.where(k >= 2, k**3 * np.log(np.maximum(k, 2.0)) ** alpha, k**3)
    r = mass_by_time.rule
    rule = None if r is None else (lambda x: x**3 * math.log(max(x, 2.0)) ** alpha * r(x))
    return series_verdict(w * v, rule=rule, label="stopping-time moment")


def stopped_weighted_norm(f_values: np.ndarray, stop_times: np.ndarray) -> tuple[float, float]:
    """Monte Carlo ``||f (T + 1)^{3/2}||`` with a delta-method standard error."""
    z = np.asarray(f_values, dtype=float) ** 2 * (np.asarray(stop_times, dtype=float) + 1.0) ** 3
    m = z.mean()
    se = z.std(ddof=1) / math.sqrt(z.size)
    val = math.sqrt(m)
    return val, (se / (2 * val) if val > 0 else 0.0)


def finite_window_lil_bound(d: int, centered_norm: float) -> float:
    """``sqrt(d) ||f - E f||``: the LIL constant bound for ``f`` reading ``d`` consecutive coordinates."""
    if d < 1:
        raise ValueError("d must be >= 1")
    if centered_norm < 0:
        raise ValueError("norm must be non-negative")
    return math.sqrt(d) * centered_norm


# --------------------------------------------------------------------------
# Monte Carlo estimation of the conditional-mean norms

@dataclass(frozen=True)
class MCParams:
    n_outer: int = 4000
    n_inner: int = 64
    seed: int = 0
    max_evals: int | None = None


def estimate_conditional_norms(system: ShiftSystem, f: Observable, n_max: int,
                               mc: MCParams = MCParams()) -> NormSequence:
    """Nested Monte Carlo estimate of ``||E f - E(f | F_n^inf)||`` for ``n = 0..n_max``.

    For each ``n`` the coordinates with index ``>= n`` are drawn once per
    outer sample and those below ``n`` are redrawn ``n_inner`` times.  The
    variance of the inner means is debiased by the mean inner variance over
    ``n_inner``, which makes the estimate of ``||.||^2`` unbiased.
    """
    if f.window is None:
        raise ValueError("needs a coordinate observable")
    seq = system.space
    draw_law = Law(seq.law)
    d, dim = f.window, seq.dim
    values, errs = [], []
    evals = 0
    truncated = False
    rng = np.random.default_rng([mc.seed, 0xC0])

    def draw(shape):
        if draw_law is Law.UNIFORM:
            return rng.random(shape)
        if draw_law is Law.GAUSSIAN:
            return rng.standard_normal(shape)
        return rng.integers(0, 2, shape).astype(float)

    for n in range(n_max + 1):
        inner = 1 if n == 0 else mc.n_inner
        cost = mc.n_outer * inner
        if mc.max_evals is not None and evals + cost > mc.max_evals:
            truncated = True
            break
        evals += cost
        if n >= d:
            # f is independent of F_n^inf: the conditional mean is constant
            values.append(0.0)
            errs.append(0.0)
            continue
        if n == 0:
            fx = f.func(draw((mc.n_outer, d, dim)))
            V = fx.var(ddof=1)
            z = (fx - fx.mean()) ** 2
            se = z.std(ddof=1) / math.sqrt(mc.n_outer)
        else:
            outer = draw((mc.n_outer, 1, d - n, dim))
            near = draw((mc.n_outer, inner, n, dim))
            x = np.concatenate([near, np.broadcast_to(outer, (mc.n_outer, inner, d - n, dim))], axis=2)
            fx = f.func(x.reshape(-1, d, dim)).reshape(mc.n_outer, inner)
            means = fx.mean(axis=1)
            within = fx.var(axis=1, ddof=1)
            z = (means - means.mean()) ** 2 * mc.n_outer / (mc.n_outer - 1) - within / inner
            V = z.mean()
            se = z.std(ddof=1) / math.sqrt(mc.n_outer)
        norm = math.sqrt(max(V, 0.0))
        values.append(norm)
        # one-sigma upward move through the square root; stays finite as V -> 0
        errs.append(math.sqrt(max(V, 0.0) + se) - norm)
    return NormSequence(np.array(values), "monte_carlo", np.array(errs), truncated=truncated)


# --------------------------------------------------------------------------
# Exact decomposition for finite-window observables

def _marginal_rule(law: Law | str, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    law = Law(law)
    if law is Law.UNIFORM:
        x, w = np.polynomial.legendre.leggauss(nodes)
        return (x + 1.0) / 2.0, w / 2.0
    if law is Law.GAUSSIAN:
        x, w = np.polynomial.hermite_e.hermegauss(nodes)
        return x, w / math.sqrt(2.0 * math.pi)
    return np.array([0.0, 1.0]), np.array([0.5, 0.5])


def martingale_increment_part(f: Observable, law: Law | str = Law.UNIFORM, dim: int = 1, *,
                              nodes: int = 12, max_points: int = 1 << 22) -> Callable[[np.ndarray], np.ndarray]:
    """The martingale increment ``g~`` of a finite-window observable on iid coordinates.

    With ``E_j = E(f | X_j, X_{j+1}, ...)`` and ``d`` the window,
    ``g~ = sum_{j<d} (E_j - E_{j+1}) o tau^j``, a function of ``X_0..X_{d-1}``
    that satisfies ``E(g~ | X_1, X_2, ...) = 0``.  Conditional expectations
    use tensor Gauss rules for the coordinate law, exact for polynomial ``f``
    of degree below ``2 * nodes`` (every rule is exact for the bit law).
    """
    if f.window is None:
        raise ValueError("needs a coordinate observable")
    d = f.window
    x, w = _marginal_rule(law, nodes)
    if len(x) ** ((d - 1) * dim) > max_points:
        raise ValueError("window too wide for tensor quadrature")

    def cond(j: int, tail: np.ndarray) -> np.ndarray:
        # E(f | coordinates j..d-1 = tail), tail of shape (B, d - j, dim)
        B = tail.shape[0]
        if j == 0:
            return f.func(tail)
        grids = np.meshgrid(*([np.arange(len(x))] * (j * dim)), indexing="ij")
        idx = np.stack([g.ravel() for g in grids], -1)
        pts = x[idx].reshape(-1, j, dim)
        wt = np.prod(w[idx], axis=1)
        P = len(wt)
        full = np.concatenate([np.broadcast_to(pts[None], (B, P, j, dim)),
                               np.broadcast_to(tail[:, None], (B, P, d - j, dim))], axis=2)
        vals = f.func(full.reshape(B * P, d, dim)).reshape(B, P)
        return vals @ wt

    def g_tilde(win: np.ndarray) -> np.ndarray:
        win = np.asarray(win, dtype=float)
        out = np.zeros(win.shape[0])
        for j in range(d):
            out += cond(j, win[:, : d - j])
            out -= cond(j + 1, win[:, 1: d - j]) if j + 1 < d else cond(d, win[:, :0])
        return out

    return g_tilde
