"""Transfer-operator calculus for the binary-digit shift on the torus ``T^s``.

The shift acts on functions of the ``y`` half through the transfer
(Perron-Frobenius) operator

    T^n f(y) = 2^{-ns} sum_{k in {0..2^n-1}^s} f((k + y) / 2^n),

which on Fourier coefficients is ``a_q -> a_{2^n q}``.  Nonzero frequencies
split into dyadic orbits ``{2^n q : n >= 0}`` with ``q`` having an odd
coordinate; summing the coefficients along each orbit decides membership in
the Gordin class and gives ``||g~||``.

Spectra are finite sums of three kinds of pieces with disjoint supports, so
every orbit sum, tail and norm is available in closed form:

* finitely many explicit coefficients;
* geometric orbits ``a_{2^n r} = g rho^n`` (``|rho| < 1``), at most one per dyadic orbit;
* for ``s = 1`` only, a power law ``a_m = C |m|^{-p}`` on every ``m != 0``
  (``p > 1/2``), which then must be the only piece.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import zeta

from .gordin_criteria import MEMBER, GordinReport, NormSequence, series_verdict

GRID_CAP = 1 << 24

Freq = tuple[int, ...]


@dataclass(frozen=True)
class GeometricOrbit:
    """Coefficients ``a_{2^n root} = first * ratio^n`` for ``n >= 0``."""

    root: Freq
    first: complex
    ratio: complex

    def __post_init__(self):
        object.__setattr__(self, "root", tuple(int(v) for v in self.root))
        object.__setattr__(self, "first", complex(self.first))
        object.__setattr__(self, "ratio", complex(self.ratio))
        if not any(self.root):
            raise ValueError("orbit root must be nonzero")
        if abs(self.ratio) >= 1:
            raise ValueError("orbit ratio must satisfy |ratio| < 1")


@dataclass(frozen=True)
class PowerLaw:
    """``a_m = scale * |m|^{-exponent}`` for every ``m != 0`` (one-dimensional)."""

    scale: float
    exponent: float

    def __post_init__(self):
        if self.exponent <= 0.5:
            raise ValueError("exponent must exceed 1/2 for a square-summable spectrum")


def orbit_root(m: Freq) -> tuple[Freq, int]:
    """``(q, v)`` with ``m = 2^v q`` and ``q`` having an odd coordinate."""
    if not any(m):
        raise ValueError("the zero frequency has no orbit")
    v = 0
    while all(c % 2 == 0 for c in m):
        m = tuple(c // 2 for c in m)
        v += 1
    return m, v


def _scale(m: Freq, k: int) -> Freq:
    return tuple(c << k for c in m)


@dataclass(frozen=True)
class FourierObservable:
    """A function ``f(y) = sum_m a_m exp(2 i pi <m, y>)`` on ``T^s``.

    ``coeffs`` maps nonzero frequencies to complex coefficients and ``mean``
    is ``a_0``.  With ``real=True`` Hermitian symmetry is enforced.
    """

    s: int
    coeffs: dict = field(default_factory=dict)
    mean: float = 0.0
    orbits: tuple = ()
    power_law: PowerLaw | None = None
    real: bool = True

    def __post_init__(self):
        if self.s < 1:
            raise ValueError("s must be >= 1")
        clean = {}
        for m, a in self.coeffs.items():
            key = (int(m),) if np.ndim(m) == 0 else tuple(int(c) for c in m)
            if len(key) != self.s:
                raise ValueError(f"frequency {key} is not in Z^{self.s}")
            if not any(key):
                raise ValueError("put the zero-frequency coefficient in mean")
            if a != 0:
                clean[key] = complex(a)
        object.__setattr__(self, "coeffs", clean)
        object.__setattr__(self, "orbits", tuple(self.orbits))
        seen = {}
        for o in self.orbits:
            if len(o.root) != self.s:
                raise ValueError(f"orbit root {o.root} is not in Z^{self.s}")
            q, v = orbit_root(o.root)
            if q in seen:
                raise ValueError(f"two geometric pieces on the orbit of {q}")
            seen[q] = v
        for m in clean:
            q, v = orbit_root(m)
            if q in seen and v >= seen[q]:
                raise ValueError(f"coefficient at {m} overlaps a geometric orbit")
        if self.power_law is not None and (self.s != 1 or clean or self.orbits):
            raise ValueError("a power-law spectrum must be one-dimensional and stand alone")
        if self.real:
            for m, a in clean.items():
                neg = tuple(-c for c in m)
                if abs(clean.get(neg, 0) - a.conjugate()) > 1e-12 * max(1.0, abs(a)):
                    raise ValueError(f"coefficients at {m} and {neg} are not conjugate")
            by_root = {o.root: o for o in self.orbits}
            for o in self.orbits:
                twin = by_root.get(tuple(-c for c in o.root))
                if twin is None or abs(twin.first - o.first.conjugate()) > 1e-12 or \
                        abs(twin.ratio - o.ratio.conjugate()) > 1e-12:
                    raise ValueError(f"geometric orbit at {o.root} lacks its conjugate")

    # ---------------------------------------------------------------- builders
    @classmethod
    def from_terms(cls, s: int, terms: dict, mean: float = 0.0) -> "FourierObservable":
        return cls(s, dict(terms), mean)

    @classmethod
    def cosine_series(cls, root: int | Freq, amplitude: float, ratio: float,
                      mean: float = 0.0) -> "FourierObservable":
        """``sum_n amplitude ratio^n cos(2 pi <2^n root, y>)``."""
        r = (root,) if isinstance(root, int) else tuple(root)
        neg = tuple(-c for c in r)
        return cls(len(r), {}, mean, (GeometricOrbit(r, amplitude / 2, ratio),
                                      GeometricOrbit(neg, amplitude / 2, ratio)))

    # ---------------------------------------------------------------- access
    def coefficient(self, m) -> complex:
        key = (int(m),) if np.ndim(m) == 0 else tuple(int(c) for c in m)
        if not any(key):
            return complex(self.mean)
        if self.power_law is not None:
            return complex(self.power_law.scale * abs(key[0]) ** -self.power_law.exponent)
        if key in self.coeffs:
            return self.coeffs[key]
        q, v = orbit_root(key)
        for o in self.orbits:
            oq, ov = orbit_root(o.root)
            if oq == q and v >= ov:
                return o.first * o.ratio ** (v - ov)
        return 0j

    def centered_norm_sq(self) -> float:
        """``||f - E f||^2 = sum_{m != 0} |a_m|^2``."""
        return sobolev_norm(self, 0.0) ** 2

    def centered_norm(self) -> float:
        return math.sqrt(self.centered_norm_sq())

    def explicit_terms(self, level_cap: int = 64, tol: float = 0.0) -> dict:
        """All coefficients of the finite and geometric pieces up to orbit level ``level_cap``."""
        if self.power_law is not None:
            raise ValueError("a power-law spectrum has infinitely many terms")
        out = dict(self.coeffs)
        for o in self.orbits:
            for n in range(level_cap + 1):
                a = o.first * o.ratio**n
                if abs(a) <= tol:
                    break
                out[_scale(o.root, n)] = a
        return out

    # ---------------------------------------------------------------- serialization
    def to_json(self) -> str:
        d = {"s": self.s, "mean": self.mean,
             "coeffs": [{"m": list(m), "re": a.real, "im": a.imag} for m, a in sorted(self.coeffs.items())]}
        if self.orbits:
            d["orbits"] = [{"root": list(o.root), "first": [o.first.real, o.first.imag],
                            "ratio": [o.ratio.real, o.ratio.imag]} for o in self.orbits]
        if self.power_law is not None:
            d["power_law"] = {"scale": self.power_law.scale, "exponent": self.power_law.exponent}
        if not self.real:
            d["real"] = False
        return json.dumps(d)

    @classmethod
    def from_json(cls, text: str) -> "FourierObservable":
        d = json.loads(text)
        coeffs = {tuple(c["m"]): complex(c["re"], c.get("im", 0.0)) for c in d.get("coeffs", [])}
        orbits = tuple(GeometricOrbit(tuple(o["root"]), complex(*o["first"]), complex(*o["ratio"]))
                       for o in d.get("orbits", []))
        pl = d.get("power_law")
        return cls(int(d["s"]), coeffs, float(d.get("mean", 0.0)), orbits,
                   None if pl is None else PowerLaw(pl["scale"], pl["exponent"]),
                   bool(d.get("real", True)))


# -------------------------------------------------------------------- evaluation

def evaluate(f: FourierObservable, y, *, power_law_terms: int = 1 << 14) -> np.ndarray:
    """Point values of ``f`` at ``y`` of shape ``(..., s)`` (or scalars when ``s = 1``).

    Geometric orbits are summed until terms drop below 1e-18; a power-law
    spectrum is truncated at ``|m| <= power_law_terms``.
    """
    y = np.asarray(y, dtype=float)
    if f.s == 1 and (y.ndim == 0 or y.shape[-1] != 1):
        y = y[..., None]
    if f.power_law is not None:
        m = np.arange(1, power_law_terms + 1, dtype=float)
        a = f.power_law.scale * m ** -f.power_law.exponent
        val = f.mean + 2.0 * np.cos(2 * np.pi * y[..., 0:1] * m) @ a
        return val
    terms = f.explicit_terms(level_cap=200, tol=1e-18)
    out = np.full(y.shape[:-1], complex(f.mean))
    for m, a in terms.items():
        out = out + a * np.exp(2j * np.pi * (y @ np.asarray(m, dtype=float)))
    return out.real if f.real else out


def as_function(f: FourierObservable) -> Callable[[np.ndarray], np.ndarray]:
    """``f`` as a callable on arrays of points ``(batch, s)``."""
    return lambda y: evaluate(f, y)


# -------------------------------------------------------------------- operator

def pf_apply_fourier(f: FourierObservable, n: int) -> FourierObservable:
    """``T^n f`` on the spectrum: the new coefficient at ``q`` is ``a_{2^n q}``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return f
    div = 1 << n
    coeffs = {tuple(c // div for c in m): a for m, a in f.coeffs.items() if all(c % div == 0 for c in m)}
    orbits = []
    for o in f.orbits:
        q, v = orbit_root(o.root)
        if v >= n:
            orbits.append(GeometricOrbit(tuple(c // div for c in o.root), o.first, o.ratio))
        else:
            orbits.append(GeometricOrbit(q, o.first * o.ratio ** (n - v), o.ratio))
    pl = None
    if f.power_law is not None:
        pl = PowerLaw(f.power_law.scale * 2.0 ** (-n * f.power_law.exponent), f.power_law.exponent)
    return FourierObservable(f.s, coeffs, f.mean, tuple(orbits), pl, f.real)


def pf_apply_grid(g: Callable[[np.ndarray], np.ndarray], n: int, y, s: int = 1,
                  *, cap: int = GRID_CAP) -> np.ndarray:
    """``T^n g(y)`` as the literal average of ``g`` over the ``2^{ns}`` preimages.

    ``g`` maps points ``(batch, s)`` to ``(batch,)``; ``y`` is one point or a
    batch ``(B, s)``.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    count = 1 << (n * s)
    if count > cap:
        raise ValueError(f"2^(n s) = 2^{n * s} preimages exceeds the cap {cap}")
    y = np.asarray(y, dtype=float)
    single = y.ndim == 0 or (y.ndim == 1 and y.shape[0] == s)
    y = y.reshape(-1, s)
    side = 1 << n
    grid = np.stack(np.meshgrid(*[np.arange(side, dtype=float)] * s, indexing="ij"), -1).reshape(-1, s)
    out = np.empty(y.shape[0])
    for i, yi in enumerate(y):
        out[i] = np.mean(g((grid + yi) / side))
    return out[0] if single else out


# -------------------------------------------------------------------- orbit sums

@dataclass(frozen=True)
class OrbitReport:
    """Orbit-by-orbit evidence for the membership test.

    ``partial_sums[q]`` holds ``sum_{n <= N} a_{2^n q}`` for ``N = 0..horizon``
    and ``limits[q]`` the exact orbit sum ``b_q``.  ``total`` is the sum of
    ``|b_q|^2`` over orbit roots, ``all_frequency_total`` the same sum taken
    over every nonzero ``q`` and ``sup_over_N`` the largest
    ``sum_q |partial_N(q)|^2`` seen for ``N <= horizon`` (and in the limit).
    Power-law spectra list only their first few roots.
    """

    roots: tuple
    partial_sums: dict
    limits: dict
    total: float
    all_frequency_total: float
    sup_over_N: float
    sup_trace: np.ndarray


class _Orbit:
    """Coefficients along one dyadic orbit: explicit levels then an optional geometric tail."""

    def __init__(self, explicit: dict[int, complex], geo: tuple[complex, complex, int] | None):
        self.explicit = explicit
        self.geo = geo  # (first, ratio, start level)

    def coef(self, n: int) -> complex:
        a = self.explicit.get(n, 0j)
        if self.geo is not None and n >= self.geo[2]:
            a += self.geo[0] * self.geo[1] ** (n - self.geo[2])
        return a

    def last_explicit(self) -> int:
        top = max(self.explicit, default=0)
        return max(top, self.geo[2] if self.geo else 0)

    def tail_after(self, L: int) -> complex:
        """``sum_{n > L} a_n``, assuming ``L`` is past every explicit level."""
        if self.geo is None:
            return 0j
        g, r, j0 = self.geo
        return g * r ** (L + 1 - j0) / (1 - r)

    def all_level_total(self, L: int, limit: complex) -> float:
        """``sum_{j >= 0} |sum_{n >= j} a_n|^2``."""
        acc = 0.0
        rem = limit
        for j in range(L + 1):
            acc += abs(rem) ** 2
            rem -= self.coef(j)
        if self.geo is not None:
            g, r, j0 = self.geo
            # rem at level j > L equals g r^{j - j0} / (1 - r)
            D = g / (1 - r)
            acc += abs(D) ** 2 * abs(r) ** (2 * (L + 1 - j0)) / (1 - abs(r) ** 2)
        return acc


def _orbits_of(f: FourierObservable) -> dict:
    groups: dict[Freq, dict] = {}
    geos: dict[Freq, tuple] = {}
    for m, a in f.coeffs.items():
        q, v = orbit_root(m)
        groups.setdefault(q, {})[v] = a
    for o in f.orbits:
        q, v = orbit_root(o.root)
        geos[q] = (o.first, o.ratio, v)
        groups.setdefault(q, {})
    return {q: _Orbit(groups[q], geos.get(q)) for q in groups}


def _power_law_totals(pl: PowerLaw) -> tuple[float, float, float]:
    """Orbit-sum totals over odd roots and over all ``q``, and ``sum_{m != 0} |a_m|^2``."""
    p, C = pl.exponent, pl.scale
    z = zeta(2 * p)
    geo = 1.0 / (1 - 2.0**-p)
    norm_sq = 2 * C * C * z
    return norm_sq * (1 - 2.0 ** (-2 * p)) * geo**2, norm_sq * geo**2, norm_sq


def gordin_check_fourier(f: FourierObservable, horizon: int = 32,
                         *, listed_roots: int = 4) -> tuple[GordinReport, OrbitReport]:
    """Membership test through dyadic orbit sums.

    The reported bound is the exact ``||g~|| = (sum over orbit roots |b_q|^2)^{1/2}``;
    the larger sum over all nonzero ``q`` is kept in ``details`` and in the
    orbit report.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    Ns = np.arange(horizon + 1)
    if f.power_law is not None:
        pl = f.power_law
        odd_total, all_total, _ = _power_law_totals(pl)
        fac = 1.0 / (1 - 2.0**-pl.exponent)
        roots = tuple((q,) for k in range(listed_roots) for q in (2 * k + 1, -(2 * k + 1)))
        partial, limits = {}, {}
        for q in roots:
            terms = pl.scale * (abs(q[0]) * 2.0**Ns) ** -pl.exponent
            partial[q] = np.cumsum(terms).astype(complex)
            limits[q] = complex(pl.scale * abs(q[0]) ** -pl.exponent * fac)
        # partial sums grow monotonically, so every orbit scales by the same factor
        trace = odd_total * (1 - 2.0 ** (-pl.exponent * (Ns + 1))) ** 2
        sup = float(max(trace.max(), odd_total))
        orep = OrbitReport(roots, partial, limits, float(odd_total), float(all_total), sup, trace)
    else:
        orbits = _orbits_of(f)
        L = max([o.last_explicit() for o in orbits.values()] + [horizon])
        partial, limits = {}, {}
        odd_total = all_total = 0.0
        trace = np.zeros(horizon + 1)
        for q, o in orbits.items():
            coefs = np.array([o.coef(n) for n in range(L + 1)])
            cs = np.cumsum(coefs)
            b = cs[-1] + o.tail_after(L)
            partial[q] = cs[: horizon + 1]
            limits[q] = complex(b)
            odd_total += abs(b) ** 2
            all_total += o.all_level_total(L, b)
            trace += np.abs(cs[: horizon + 1]) ** 2
        sup = float(max(trace.max(initial=0.0), odd_total))
        orep = OrbitReport(tuple(sorted(orbits)), partial, limits, float(odd_total),
                           float(all_total), sup, trace)
    report = GordinReport(
        MEMBER, math.sqrt(orep.total), orep.sup_trace,
        note="orbit sums converge in closed form",
        details={"all_frequency_bound": math.sqrt(orep.all_frequency_total),
                 "sup_over_N": orep.sup_over_N, "horizon": horizon},
    )
    return report, orep


# -------------------------------------------------------------------- norms and bounds

def sobolev_norm(f: FourierObservable, alpha: float) -> float:
    """``(sum_{p != 0} |a_p|^2 |p|^{2 alpha})^{1/2}``; ``inf`` when the series diverges."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if f.power_law is not None:
        e = 2 * f.power_law.exponent - 2 * alpha
        if e <= 1:
            return math.inf
        return math.sqrt(2 * f.power_law.scale**2 * zeta(e))
    acc = math.fsum(abs(a) ** 2 * sum(c * c for c in m) ** alpha for m, a in f.coeffs.items())
    for o in f.orbits:
        growth = abs(o.ratio) ** 2 * 4.0**alpha
        if growth >= 1:
            return math.inf
        acc += abs(o.first) ** 2 * sum(c * c for c in o.root) ** alpha / (1 - growth)
    return math.sqrt(acc)


class DominationError(ValueError):
    def __init__(self, n: int, m: Freq, lhs: float, rhs: float):
        super().__init__(f"|a_(2^{n} m)| = {lhs:.6g} exceeds c_{n} |a_m| = {rhs:.6g} at m = {m}")
        self.n = n
        self.m = m


def domination_bound(f: FourierObservable, c: NormSequence, *, levels: int = 64) -> float:
    """``||f - E f|| sum_n c_n`` under ``|a_{2^n m}| <= c_n |a_m|`` for all ``m, n``.

    The hypothesis is checked on the explicit support (orbit levels up to
    ``levels``) and raises :class:`DominationError` naming the first
    offending ``(n, m)``.  Entries beyond the supplied ``c`` count as zero
    unless ``c`` carries a closed-form rule.
    """
    def c_at(n: int) -> float:
        if n < c.values.size:
            return float(c.values[n])
        return float(c.rule(n)) if c.rule is not None else 0.0

    if f.power_law is not None:
        for n in range(levels + 1):
            need = 2.0 ** (-n * f.power_law.exponent)
            if need > c_at(n) * (1 + 1e-12):
                raise DominationError(n, (1,), need * f.power_law.scale, c_at(n) * f.power_law.scale)
    else:
        terms = f.explicit_terms(level_cap=levels)
        for p, ap in sorted(terms.items()):
            _, v = orbit_root(p)
            for n in range(1, v + 1):
                m = tuple(x >> n for x in p)
                am = terms.get(m, 0j)
                if abs(ap) > c_at(n) * abs(am) * (1 + 1e-12) + 1e-300:
                    raise DominationError(n, m, abs(ap), c_at(n) * abs(am))
        if terms and c_at(0) < 1 - 1e-12:
            raise DominationError(0, next(iter(terms)), 1.0, c_at(0))
    vals = c.conservative() if c.rule is not None else np.append(c.conservative(), 0.0)
    verdict = series_verdict(vals, rule=c.rule, label="domination series")
    if not verdict.satisfied:
        return math.inf
    return f.centered_norm() * verdict.bound_on_g_tilde
