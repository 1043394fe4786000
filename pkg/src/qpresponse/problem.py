"""Problem instances: Fourier-Taylor forcings, homogeneous leading maps, validation.

The model equation is ``x' = x^l + h(omega t, x) + eps f(omega t, x)`` (or
``phi(x)`` in place of ``x^l`` when the state is n-dimensional, and
``x'' + delta x'`` on the left for the oscillator variant).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, TruncationMismatch
from .fourier import FourierSeries, average, k_dot_omega, mode_grid, oscillatory_part

MODES = ("response", "zero_average", "oscillator", "monodromy")


class FourierTaylor:
    """Polynomial in the state with Fourier-polynomial coefficients.

    ``F(theta, x) = sum_j c_j(theta) x^j`` where every ``c_j`` is a finite
    Fourier sum. For ``n > 1`` the dependence is componentwise:
    ``F_i(theta, x) = sum_j c_{j,i}(theta) x_i^j``, so a term's coefficient is an
    n-vector.

    Args:
        terms: iterable of ``(degree, mode, coefficient)``; repeated keys add up.
        d: torus dimension.
        n: state dimension.
    """

    def __init__(self, terms: Iterable = (), d: int = 1, n: int = 1):
        self.d = int(d)
        self.n = int(n)
        store: dict[tuple[int, tuple[int, ...]], np.ndarray] = {}
        for j, k, c in terms:
            if int(j) != j or j < 0:
                raise ConfigError(f"term degree must be a nonnegative integer, got {j}")
            k = (int(k),) if np.isscalar(k) else tuple(int(i) for i in k)
            if len(k) != self.d:
                raise ConfigError(f"term mode {k} does not have d={self.d} entries")
            key = (int(j), k)
            val = np.broadcast_to(np.asarray(c, dtype=complex), (self.n,)).copy()
            store[key] = store.get(key, 0) + val
        self._terms = {key: val for key, val in sorted(store.items()) if np.any(val)}

    @property
    def terms(self) -> dict:
        return dict(self._terms)

    @property
    def degrees(self) -> list[int]:
        return sorted({j for j, _ in self._terms})

    @property
    def max_degree(self) -> int:
        return max(self.degrees, default=0)

    @property
    def max_mode(self) -> int:
        return max((max(abs(i) for i in k) for _, k in self._terms), default=0)

    @property
    def real(self) -> bool:
        for (j, k), c in self._terms.items():
            other = self._terms.get((j, tuple(-i for i in k)))
            if other is None or np.abs(other - c.conj()).max() > 1e-13 * max(np.abs(c).max(), 1e-300):
                return False
        return True

    def is_zero(self) -> bool:
        return not self._terms

    def slice(self, j: int, K: int) -> FourierSeries:
        """The coefficient ``c_j(theta)`` as a series truncated at K."""
        modes = {k: c for (jj, k), c in self._terms.items() if jj == j}
        return FourierSeries.from_modes(modes, self.d, K, self.n, real=self.real)

    def restrict(self, min_degree: int = 0, max_degree: int | None = None) -> "FourierTaylor":
        hi = self.max_degree if max_degree is None else max_degree
        return FourierTaylor(
            ((j, k, c) for (j, k), c in self._terms.items() if min_degree <= j <= hi), self.d, self.n
        )

    def __add__(self, other: "FourierTaylor") -> "FourierTaylor":
        if (other.d, other.n) != (self.d, self.n):
            raise ConfigError("cannot add Fourier-Taylor polynomials of different shapes")
        both = itertools.chain(self._terms.items(), other._terms.items())
        return FourierTaylor(((j, k, c) for (j, k), c in both), self.d, self.n)

    def scale(self, s: complex) -> "FourierTaylor":
        return FourierTaylor(((j, k, s * c) for (j, k), c in self._terms.items()), self.d, self.n)

    def same_terms(self, other: "FourierTaylor", atol: float = 0.0) -> bool:
        keys = set(self._terms) | set(other._terms)
        zero = np.zeros(self.n, dtype=complex)
        return all(
            np.abs(self._terms.get(key, zero) - other._terms.get(key, zero)).max() <= atol for key in keys
        )

    def coefficient_values(self, thetas: np.ndarray) -> dict[int, np.ndarray]:
        """``{j: c_j(theta)}`` at points ``thetas`` of shape ``(d, ...)``; values shape ``(n, ...)``."""
        thetas = np.asarray(thetas, dtype=float)
        out: dict[int, np.ndarray] = {}
        for (j, k), c in self._terms.items():
            phase = np.exp(1j * np.tensordot(np.asarray(k, dtype=float), thetas, axes=1))
            val = c.reshape((self.n,) + (1,) * phase.ndim) * phase[None]
            out[j] = out[j] + val if j in out else val
        return out

    def evaluate(self, thetas: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Pointwise ``F(theta, x)``; ``x`` has shape ``(n, ...)`` matching ``thetas[0]``."""
        x = np.asarray(x, dtype=complex)
        out = np.zeros(np.broadcast(x, np.empty((self.n,) + np.shape(thetas)[1:])).shape, dtype=complex)
        for j, cj in self.coefficient_values(thetas).items():
            out = out + cj * x**j
        return out

    def __repr__(self):
        return f"FourierTaylor(d={self.d}, n={self.n}, terms={len(self._terms)}, max_degree={self.max_degree})"


class HomogeneousMap:
    """Vector of homogeneous polynomials of exact degree ``l`` in n variables.

    Args:
        n: number of variables / components.
        l: common degree.
        monomials: iterable of ``(component, exponents, coefficient)``.
    """

    def __init__(self, n: int, l: int, monomials: Iterable):
        self.n = int(n)
        self.l = int(l)
        mons = []
        for comp, exps, coef in monomials:
            exps = tuple(int(e) for e in exps)
            if len(exps) != self.n or not 0 <= comp < self.n:
                raise ConfigError(f"monomial ({comp}, {exps}) does not fit n={self.n}")
            if any(e < 0 for e in exps) or sum(exps) != self.l:
                raise ConfigError(f"monomial exponents {exps} do not have total degree {self.l}")
            mons.append((int(comp), exps, complex(coef)))
        if not mons:
            raise ConfigError("homogeneous map has no monomials")
        self.monomials = tuple(mons)

    @classmethod
    def diagonal_power(cls, n: int, l: int) -> "HomogeneousMap":
        """``(x_1^l, ..., x_n^l)``."""
        return cls(n, l, [(i, tuple(l if s == i else 0 for s in range(n)), 1.0) for i in range(n)])

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        out = np.zeros_like(x)
        for comp, exps, coef in self.monomials:
            term = coef
            for s, e in enumerate(exps):
                if e:
                    term = term * x[s] ** e
            out[comp] = out[comp] + term
        return out

    def jacobian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        J = np.zeros((self.n, self.n), dtype=complex)
        for comp, exps, coef in self.monomials:
            for s, e in enumerate(exps):
                if e == 0:
                    continue
                term = coef * e
                for q, eq in enumerate(exps):
                    p = eq - 1 if q == s else eq
                    if p:
                        term *= x[q] ** p
                J[comp, s] += term
        return J

    def expand(self, a, V: FourierSeries, min_order: int = 0) -> FourierSeries:
        """Terms of ``phi(a + V)`` of order at least ``min_order`` in V.

        ``min_order=2`` is the Taylor remainder ``phi(a+V) - phi(a) - Dphi(a) V``,
        computed without the cancelling subtraction.
        """
        a = np.asarray(a, dtype=complex)
        comps = [V.component(s) for s in range(self.n)]
        pow_cache: dict[tuple[int, int], FourierSeries] = {}

        def vpow(s, j):
            if (s, j) not in pow_cache:
                pow_cache[(s, j)] = comps[s] if j == 1 else vpow(s, j - 1) * comps[s]
            return pow_cache[(s, j)]

        out = [FourierSeries.zeros(V.d, V.K) for _ in range(self.n)]
        for comp, exps, coef in self.monomials:
            for js in itertools.product(*(range(e + 1) for e in exps)):
                if sum(js) < min_order:
                    continue
                c = coef
                for s, (e, j) in enumerate(zip(exps, js)):
                    c *= comb(e, j) * a[s] ** (e - j)
                if c == 0:
                    continue
                term = None
                for s, j in enumerate(js):
                    if j:
                        term = vpow(s, j) if term is None else term * vpow(s, j)
                out[comp] = out[comp] + (c if term is None else term * c)
        return FourierSeries.stack(out)

    def __repr__(self):
        return f"HomogeneousMap(n={self.n}, l={self.l}, monomials={len(self.monomials)})"


@dataclass
class ProblemSpec:
    """A full problem instance.

    ``branch`` and ``real_only`` select the leading-term root; ``a0_guess`` seeds
    the Newton solve for n > 1.
    """

    l: int
    omega: Sequence[float]
    epsilon: complex
    f: FourierTaylor
    h: FourierTaylor | None = None
    delta: float | None = None
    phi: HomogeneousMap | None = None
    mode: str = "response"
    branch: int = 0
    real_only: bool = True
    a0_guess: Sequence[float] | None = None
    label: str = ""
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if int(self.l) != self.l or self.l < 2:
            raise ConfigError(f"degeneracy order l must be an integer >= 2, got {self.l}")
        self.l = int(self.l)
        self.omega = tuple(float(w) for w in np.atleast_1d(self.omega))
        self.epsilon = complex(self.epsilon)
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.f.d != len(self.omega):
            raise ConfigError(f"forcing has d={self.f.d} but omega has {len(self.omega)} entries")
        if self.h is None:
            self.h = FourierTaylor((), self.f.d, self.f.n)
        if (self.h.d, self.h.n) != (self.f.d, self.f.n):
            raise ConfigError("f and h must share d and n")
        if self.mode == "oscillator" and (self.n != 1 or self.delta is None):
            raise ConfigError("oscillator mode requires n = 1 and a damping delta")
        if self.delta is not None and self.delta < 0:
            raise ConfigError("delta must be nonnegative")

    @property
    def d(self) -> int:
        return self.f.d

    @property
    def n(self) -> int:
        return self.f.n

    def with_epsilon(self, epsilon: complex) -> "ProblemSpec":
        from dataclasses import replace

        return replace(self, epsilon=complex(epsilon))

    def max_mode(self) -> int:
        return max(self.f.max_mode, self.h.max_mode)


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""
    witness: object = None


@dataclass
class ValidationReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def summary(self) -> str:
        return "; ".join(f"{c.name}: {c.detail}" for c in self.failures()) or "all checks passed"


def _canonical(k: tuple[int, ...]) -> tuple[int, ...]:
    for i in k:
        if i:
            return k if i > 0 else tuple(-j for j in k)
    return k


def resonance_witness(omega: Sequence[float], K: int, rel_tol: float = 1e-14):
    """Smallest-|k| resonant mode with ``0 < |k|_inf <= K``, or None.

    A mode is resonant when ``|k.omega| < rel_tol |k| |omega|``.
    """
    omega = np.asarray(omega, dtype=float)
    d = omega.size
    kw = np.abs(k_dot_omega(d, K, omega))
    kn = np.sqrt((mode_grid(d, K).astype(float) ** 2).sum(axis=0))
    bad = (kw < rel_tol * kn * np.linalg.norm(omega)) & (kn > 0)
    if not bad.any():
        return None
    idx = np.argwhere(bad)
    cands = sorted({_canonical(tuple(int(i) - K for i in row)) for row in idx}, key=lambda k: (sum(i * i for i in k), k[::-1]))
    k = cands[0]
    return k, float(abs(np.dot(k, omega)))


def validate(p: ProblemSpec, K: int) -> ValidationReport:
    """Check the structural hypotheses for truncation ``K``; never raises."""
    rep = ValidationReport()
    w = resonance_witness(p.omega, 2 * K)
    if w is None:
        rep.checks.append(Check("non_resonance", True, f"k.omega != 0 for 0 < |k| <= {2 * K}"))
    else:
        rep.checks.append(Check("non_resonance", False, f"resonant mode k={w[0]} (|k.omega|={w[1]:.3e})", w[0]))

    mm = p.max_mode()
    rep.checks.append(Check("forcing_modes", mm <= K, f"forcing modes up to |k|={mm}, truncation K={K}", mm))

    low = [j for j in p.h.degrees if j <= p.l]
    rep.checks.append(
        Check(
            "h_vanishing_order",
            not low,
            f"h must vanish to order l+1={p.l + 1}" + (f"; has degree(s) {low}" if low else ""),
            low or None,
        )
    )

    fbar = np.atleast_1d(f_bar0(p))
    scale = max(1.0, float(np.abs(p.f.slice(0, max(K, mm)).coeffs).max()))
    if p.mode == "zero_average":
        ok = bool(np.all(np.abs(fbar) <= 1e-14 * scale))
        rep.checks.append(Check("average_zero", ok, f"average of f(.,0) = {fbar}", fbar))
    else:
        ok = bool(np.all(np.abs(fbar) > 1e-14 * scale))
        rep.checks.append(Check("average_nonzero", ok, f"average of f(.,0) = {fbar} (checked componentwise)", fbar))

    if p.n > 1:
        ok = p.phi is not None and p.phi.n == p.n and p.phi.l == p.l
        rep.checks.append(Check("homogeneous_map", ok, "n > 1 needs phi with matching n and degree l"))
        if p.mode in ("oscillator", "zero_average", "monodromy"):
            rep.checks.append(Check("mode_dimension", False, f"mode {p.mode} requires n = 1"))
    elif p.phi is not None:
        rep.checks.append(Check("homogeneous_map", False, "phi given for a scalar problem"))

    if p.mode == "oscillator":
        rep.checks.append(Check("oscillator_damping", p.delta is not None and p.delta >= 0, f"delta={p.delta}"))
    return rep


# ---------------------------------------------------------------------------
# decompositions


def f_bar0(p: ProblemSpec):
    """Average of ``f(theta, 0)``."""
    c = p.f.terms.get((0, (0,) * p.d), np.zeros(p.n, dtype=complex))
    return complex(c[0]) if p.n == 1 else np.array(c)


def f_tilde0(p: ProblemSpec, K: int) -> FourierSeries:
    """Oscillatory part of ``f(theta, 0)``."""
    return oscillatory_part(p.f.slice(0, K))


def split_g(p: ProblemSpec, K: int) -> tuple[FourierSeries, FourierTaylor]:
    """``g(theta, x) = f(theta, x) - f(theta, 0) = g1(theta) x + g_>(theta, x)``."""
    if p.n != 1:
        raise ConfigError("split_g is defined for scalar problems")
    return p.f.slice(1, K), p.f.restrict(min_degree=2)


def eval_taylor(F: FourierTaylor, a, V: FourierSeries) -> FourierSeries:
    """Composition ``F(theta, a + V(theta))`` on the truncated space of V."""
    K = V.K
    if F.max_mode > K:
        raise TruncationMismatch(f"forcing has modes up to {F.max_mode} beyond truncation K={K}")
    if F.n != V.n:
        raise ConfigError(f"forcing has n={F.n} but the series has n={V.n}")
    out = FourierSeries.zeros(V.d, K, V.n)
    degrees = F.degrees
    if not degrees:
        return out
    W = V + FourierSeries.constant(a, V.d, K, V.n)
    comps = [W.component(i) for i in range(V.n)]
    powers = [c for c in comps]
    parts = [FourierSeries.zeros(V.d, K) for _ in range(V.n)]
    for j in range(0, max(degrees) + 1):
        if j >= 2:
            powers = [pw * c for pw, c in zip(powers, comps)]
        if j not in degrees:
            continue
        cj = F.slice(j, K)
        for i in range(V.n):
            ci = cj.component(i)
            parts[i] = parts[i] + (ci if j == 0 else ci * powers[i])
    return FourierSeries.stack(parts)


def S_remainder(l: int, a: complex, V: FourierSeries) -> FourierSeries:
    """``(a+V)^l - a^l - l a^{l-1} V`` as ``sum_{j>=2} C(l,j) a^{l-j} V^j``."""
    if V.n != 1:
        raise ConfigError("S_remainder is defined for scalar series")
    out = FourierSeries.zeros(V.d, V.K)
    Vj = V
    for j in range(2, l + 1):
        Vj = Vj * V
        out = out + Vj * (comb(l, j) * complex(a) ** (l - j))
    return out
