"""The Wiener space as a product space, and Haar/Schauder coordinates.

Brownian motion on ``[0, 1]`` is assembled from independent standard Wiener
pieces ``X_k`` on ``[0, 1]``, one per dyadic interval ``(2^{-(k+1)}, 2^{-k}]``:

    B_t = sum_{n > k} X_n(1) / 2^{(n+1)/2} + X_k(u) / 2^{(k+1)/2},
    u = 2^{k+1} t - 1.

Relabelling the pieces ``X_k -> X_{k-1}`` is the scaling shift
``B_t o tau = B_{2t} / sqrt 2``.  Pieces beyond the truncation level ``K``
are replaced by one Gaussian carrying their exact total variance, and each
piece is a Levy-Ciesielski sum truncated at a fixed dyadic depth, so values
at dyadic times of that depth are exact and refining never changes them.

The second half of the module handles the Schauder expansion of paths that
vanish at 0 and 1, the shift on the flat coefficient sequence and the
derivative-energy (Dirichlet form) membership criterion.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import _streams
from .gordin_criteria import (
    CriterionVerdict,
    NormSequence,
    root_tail_series,
    series_verdict,
)

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class DyadicPathStore:
    """A Brownian path on ``[0, 1]`` in ``R^d`` determined by ``seed``.

    ``depth`` is the dyadic resolution of each piece and ``K`` the last
    explicitly sampled piece; ``offset`` counts applied scaling shifts.
    """

    seed: int
    d: int = 1
    depth: int = 16
    K: int = 40
    offset: int = 0

    def __post_init__(self):
        if self.d < 1 or self.depth < 0 or self.K < 0:
            raise ValueError("need d >= 1, depth >= 0 and K >= 0")

    def __call__(self, t):
        return brownian_eval(self, t)


def scaling_shift(store: DyadicPathStore, k: int = 1) -> DyadicPathStore:
    """Apply the scaling shift ``k`` times: ``B_t o tau^k = B_{2^k t} / 2^{k/2}``."""
    return replace(store, offset=store.offset + int(k))


def _piece_index(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Piece ``k`` with ``t`` in ``(2^{-(k+1)}, 2^{-k}]`` and the local time ``u`` in ``(0, 1]``."""
    mant, e = np.frexp(t)
    k = -e.astype(np.int64)
    on_edge = mant == 0.5
    k = np.where(on_edge, k + 1, k)
    u = np.ldexp(t, (k + 1).astype(np.int64)) - 1.0
    return k, u


def _piece_values(seeds, pieces: np.ndarray, u: np.ndarray, comp: np.ndarray, depth: int) -> np.ndarray:
    """``X_piece(u)`` by a Levy-Ciesielski sum truncated at ``depth`` levels.

    ``seeds``, ``pieces`` and ``u`` broadcast together with ``comp`` on the last axis.
    """
    val = u * _streams.normals(seeds, _streams.PIECE_END, pieces, comp)
    for j in range(depth):
        scale = float(1 << j)
        i = np.minimum(np.floor(u * scale), scale - 1.0)
        x = u * scale - i
        hat = np.minimum(x, 1.0 - x) * 2.0 ** (-j / 2.0)
        flat = (1 << j) + i.astype(np.int64)
        val = val + hat * _streams.normals(seeds, _streams.PIECE_LEVEL, pieces, flat, comp)
    return val


def brownian_paths(seeds, t, *, d: int = 1, depth: int = 16, K: int = 40, offset: int = 0) -> np.ndarray:
    """Vectorized ``B_t`` for many seeds: result shape ``(len(seeds), len(t), d)``."""
    seeds = np.atleast_1d(np.asarray(seeds)).astype(np.uint64)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t <= 0) or np.any(t > 1):
        raise ValueError("t must lie in (0, 1]")
    Keff = K + offset
    if Keff < 0:
        raise ValueError("the truncation level is below zero after negative shifts")
    S = seeds[:, None, None]
    comp = np.arange(d, dtype=np.int64)[None, None, :]

    # endpoints of every explicit piece n = 0..Keff, read from original piece n - offset
    ns = np.arange(Keff + 1, dtype=np.int64)
    ends = _streams.normals(S, _streams.PIECE_END, (ns - offset)[None, :, None], comp)
    weights = 2.0 ** (-(ns + 1) / 2.0)
    tail = (2.0 ** (-offset / 2.0) * 2.0 ** (-(K + 1) / 2.0)
            * _streams.normals(S, _streams.PIECE_TAIL, 0, comp))
    # above[n] = sum_{m > n} X_m(1) 2^{-(m+1)/2} + tail, summed from the top down
    contrib = ends * weights[None, :, None]
    above = np.concatenate([np.cumsum(contrib[:, ::-1], axis=1)[:, ::-1][:, 1:],
                            np.zeros_like(contrib[:, :1])], axis=1) + tail

    k, u = _piece_index(t)
    out = np.empty((seeds.size, t.size, d))
    deep = k > Keff
    if np.any(deep):
        # below the truncation: linear interpolation of B from 0 to the tail value
        frac = np.ldexp(t[deep], Keff + 1)
        out[:, deep, :] = frac[None, :, None] * tail
    shallow = ~deep
    if np.any(shallow):
        ks, us = k[shallow], u[shallow]
        piece = _piece_values(S, (ks - offset)[None, :, None], us[None, :, None], comp, depth)
        out[:, shallow, :] = above[:, ks, :] + piece * (2.0 ** (-(ks + 1) / 2.0))[None, :, None]
    return out


def brownian_eval(store: DyadicPathStore, t) -> np.ndarray:
    """``B_t`` of the stored path: shape ``(d,)`` for scalar ``t``, ``(len(t), d)`` otherwise."""
    scalar = np.ndim(t) == 0
    out = brownian_paths([store.seed], t, d=store.d, depth=store.depth, K=store.K,
                         offset=store.offset)[0]
    return out[0] if scalar else out


def brownian_grid(store: DyadicPathStore, steps: int, t_end: float = 1.0) -> np.ndarray:
    """``B`` at ``t_end * j / steps`` for ``j = 0..steps`` (row 0 is ``B_0 = 0``)."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    t = t_end * np.arange(1, steps + 1) / steps
    return np.vstack([np.zeros((1, store.d)), brownian_eval(store, t)])


# -------------------------------------------------------------------- Schauder basis

def flat_index(m: int, k: int) -> int:
    if m < 0 or not 0 <= k < (1 << m):
        raise ValueError("need m >= 0 and 0 <= k < 2^m")
    return (1 << m) + k


def level_of(n: int) -> tuple[int, int]:
    """Inverse of :func:`flat_index` for ``n >= 1``."""
    if n < 1:
        raise ValueError("flat indices of the bridge basis start at 1")
    m = n.bit_length() - 1
    return m, n - (1 << m)


@dataclass(frozen=True)
class SchauderCoefficients:
    """Coefficients ``a_n`` in the flat numbering ``n = 2^m + k``, ``0 <= m < M``.

    Slot 0 holds the coefficient of ``phi_0(t) = t``, the primitive of the
    constant function completing the Haar system; it is zero for paths that
    vanish at 1.
    """

    a: np.ndarray
    M: int

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if a.shape != (1 << self.M,):
            raise ValueError(f"expected {1 << self.M} flat coefficients for M = {self.M}")
        object.__setattr__(self, "a", a)

    @classmethod
    def zeros(cls, M: int) -> "SchauderCoefficients":
        return cls(np.zeros(1 << M), M)

    def level(self, m: int) -> np.ndarray:
        return self.a[1 << m: 1 << (m + 1)]

    def __getitem__(self, mk: tuple[int, int]) -> float:
        return float(self.a[flat_index(*mk)])

    def to_json(self) -> str:
        return json.dumps({"M": self.M, "a": self.a.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "SchauderCoefficients":
        d = json.loads(text)
        return cls(np.asarray(d["a"], dtype=float), int(d["M"]))


def schauder_phi(n: int, t) -> np.ndarray:
    """``phi_n(t) = int_0^t chi_n``: ``t`` for ``n = 0``, else a hat of height ``2^{-m/2-1}``."""
    t = np.asarray(t, dtype=float)
    if n == 0:
        return t.copy()
    m, k = level_of(n)
    x = t * (1 << m) - k
    return np.clip(np.minimum(x, 1.0 - x), 0.0, None) * 2.0 ** (-m / 2.0)


def schauder_synthesize(c: SchauderCoefficients, t) -> np.ndarray:
    """``sum_n a_n phi_n(t)`` over the stored levels, vectorized in ``t``."""
    t = np.asarray(t, dtype=float)
    if np.any((t < 0) | (t > 1)):
        raise ValueError("t must lie in [0, 1]")
    out = c.a[0] * t
    for m in range(c.M):
        scale = float(1 << m)
        i = np.minimum(np.floor(t * scale), scale - 1.0)
        x = t * scale - i
        hat = np.minimum(x, 1.0 - x) * 2.0 ** (-m / 2.0)
        out = out + hat * c.a[(1 << m) + i.astype(np.int64)]
    return out


def schauder_coefficients(f: Callable | np.ndarray, M: int, *, atol: float = 0.0) -> SchauderCoefficients:
    """Second-difference coefficients of a path vanishing at 0 and 1.

    ``f`` is a callable on ``[0, 1]`` or its samples at ``j / 2^M``,
    ``j = 0..2^M``.  Raises ``ValueError`` when ``f(0)`` or ``f(1)`` is nonzero.
    """
    grid = np.arange((1 << M) + 1) / float(1 << M)
    vals = np.asarray(f(grid) if callable(f) else f, dtype=float)
    if vals.shape != grid.shape:
        raise ValueError(f"expected {grid.size} samples on the dyadic grid of depth {M}")
    if abs(vals[0]) > atol or abs(vals[-1]) > atol:
        raise ValueError("the path must vanish at 0 and 1")
    a = np.zeros(1 << M)
    for m in range(M):
        step = 1 << (M - m)
        left = vals[0:-1:step]
        right = vals[step::step]
        mid = vals[step // 2::step]
        a[1 << m: 1 << (m + 1)] = (2.0 * mid - left - right) * 2.0 ** (m / 2.0)
    return SchauderCoefficients(a, M)


def coefficient_shift(c: SchauderCoefficients, k: int = 1, *, fill: np.ndarray | None = None
                      ) -> SchauderCoefficients:
    """Shift the flat sequence: the new ``a_n`` is the old ``a_{n+k}``.

    The ``k`` slots freed at the top are zero unless ``fill`` supplies them.
    """
    if k < 0:
        raise ValueError("the coefficient shift is one-sided; k must be >= 0")
    a = np.zeros_like(c.a)
    n = c.a.size
    if k < n:
        a[: n - k] = c.a[k:]
    if fill is not None:
        fill = np.asarray(fill, dtype=float)
        a[max(0, n - k):] = fill[: min(k, n)]
    return SchauderCoefficients(a, c.M)


# -------------------------------------------------------------------- derivative energies

def dirichlet_criterion(e: NormSequence, *, inner_tail: float | None = None,
                        tail: float | None = None) -> CriterionVerdict:
    """Membership from ``sum_k (sum_{i >= k} E[F_i'^2])^{1/2} < inf``.

    ``e`` holds the derivative energies ``E[F_i'^2]``; ``inner_tail`` bounds
    ``sum_{i >= len(e)} E[F_i'^2]`` and ``tail`` bounds the remainder of the
    outer series.  The sum bounds ``||g~||``.
    """
    return root_tail_series(e, squared=False, inner_tail=inner_tail, tail=tail,
                            label="derivative-energy series")


def derivative_weight_gate(e: NormSequence, alpha: float) -> CriterionVerdict:
    """Check ``sum_{i >= 2} i^2 log^alpha(i) E[F_i'^2] < inf``, which implies the tail criterion."""
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    v = e.conservative()
    i = np.arange(v.size, dtype=float)
    w = np.where(i >= 2, i**2 * np.log(np.maximum(i, 2.0)) ** alpha, 0.0)
    r = e.rule
    rule = None if r is None else (lambda x: x * x * math.log(max(x, 2.0)) ** alpha * r(x))
    terms = w * v
    if rule is None and v.size > 2 and np.all(v[2:] == 0):
        terms = np.zeros_like(v)
    return series_verdict(terms, rule=rule, label="weighted derivative series")


def quadratic_functional_energies(t: float, M: int) -> tuple[NormSequence, float, float]:
    """Energies of ``F = sum_n (n+1)^{-1} sqrt(phi_n(t)) a_n^2`` on Gaussian coefficients.

    ``F_i' = 2 sqrt(phi_i(t)) a_i / (i+1)`` so ``E[F_i'^2] = 4 phi_i(t) / (i+1)^2``.
    Returns the energies for ``i < 2^M`` together with bounds for the
    remaining inner sum and for the remainder of the outer series.

    Only one hat per level is nonzero at ``t`` and it is at most
    ``2^{-m/2-1}`` with ``i + 1 > 2^m``, so level ``m`` contributes at most
    ``2^{1-5m/2}`` to the energies and the bounds are geometric.
    """
    if not 0 <= t <= 1:
        raise ValueError("t must lie in [0, 1]")
    n = 1 << M
    i = np.arange(n)
    phi = np.array([float(schauder_phi(int(j), t)) for j in i])
    energies = 4.0 * phi / (i + 1.0) ** 2
    r = 2.0 ** -2.5
    inner = 2.0 * 2.0 ** (-2.5 * M) / (1.0 - r)
    # each outer term with k in level m >= M is at most sqrt(2 / (1 - r)) 2^{-5m/4},
    # and a level holds 2^m of them
    outer = math.sqrt(2.0 / (1.0 - r)) * 2.0 ** (-0.25 * M) / (1.0 - 2.0**-0.25)
    return NormSequence(energies), inner, outer
