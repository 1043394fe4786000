"""Fourier-diagonal linear operators and small-divisor solvers."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConeViolation,
    ConfigError,
    NonZeroAverage,
    OscillatorConditionViolated,
    ResonantMode,
    SpectrumOnAxis,
    TruncationMismatch,
    ZeroBeta,
)
from .fourier import (
    FourierSeries,
    average,
    k_dot_omega,
    mode_euclidean_norm,
    mode_grid,
    multiply,
    omega_derivative,
    sup_norm_estimate,
)
from .problem import HomogeneousMap

log = logging.getLogger(__name__)

CONE_REL_TOL = 1e-14
SPECTRUM_TOL = 1e-10
RESONANCE_TOL = 1e-14
BLOCK_COND_MAX = 1e12


def _mode_tuple(idx, K: int) -> tuple[int, ...]:
    return tuple(int(i) - K for i in idx)


@dataclass
class DiagonalOperator:
    """Operator acting on each Fourier mode by a scalar or an n x n block.

    Exactly one of ``multipliers`` (shape ``(2K+1,)*d``) and ``blocks`` (shape
    ``(2K+1,)*d + (n, n)``) is set.
    """

    d: int
    K: int
    omega: tuple
    multipliers: np.ndarray | None = None
    blocks: np.ndarray | None = None
    operator_norm_bound: float | None = None
    margin: float | None = None
    name: str = ""
    _inv_blocks: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if (self.multipliers is None) == (self.blocks is None):
            raise ValueError("give exactly one of multipliers or blocks")
        if self.multipliers is not None:
            mod = np.abs(self.multipliers)
            if not np.all(mod > 0):
                idx = np.unravel_index(np.argmin(mod), mod.shape)
                raise ResonantMode(_mode_tuple(idx, self.K), 0.0)
        else:
            cond = np.linalg.cond(self.blocks)
            if not np.all(np.isfinite(cond)) or cond.max() >= BLOCK_COND_MAX:
                raise SpectrumOnAxis(f"block multiplier is near singular (condition {cond.max():.3e})")
            self._inv_blocks = np.linalg.inv(self.blocks)

    @property
    def n(self) -> int:
        return 1 if self.blocks is None else self.blocks.shape[-1]

    def _check(self, v: FourierSeries):
        if v.d != self.d or v.K != self.K:
            raise TruncationMismatch(f"operator on (d={self.d}, K={self.K}) applied to (d={v.d}, K={v.K})")
        if v.n != self.n:
            raise TruncationMismatch(f"operator acts on n={self.n}, series has n={v.n}")

    def apply(self, v: FourierSeries) -> FourierSeries:
        self._check(v)
        if self.blocks is None:
            return FourierSeries(v.coeffs * self.multipliers[None])
        c = np.moveaxis(v.coeffs, 0, -1)[..., None]
        return FourierSeries(np.moveaxis((self.blocks @ c)[..., 0], -1, 0))

    def apply_inverse(self, v: FourierSeries) -> FourierSeries:
        self._check(v)
        if self.blocks is None:
            return FourierSeries(v.coeffs / self.multipliers[None])
        c = np.moveaxis(v.coeffs, 0, -1)[..., None]
        return FourierSeries(np.moveaxis((self._inv_blocks @ c)[..., 0], -1, 0))

    def inverse_modulus(self) -> np.ndarray:
        """Per-mode norm of the inverse multiplier (spectral norm for blocks)."""
        if self.blocks is None:
            return 1.0 / np.abs(self.multipliers)
        return np.linalg.norm(self._inv_blocks, ord=2, axis=(-2, -1))

    def inverse_norm(self) -> float:
        """Exact norm of the inverse on the truncated space (any ``H^{rho,m}``)."""
        return float(self.inverse_modulus().max())

    def inverse_norm_argmax(self) -> tuple[int, ...]:
        m = self.inverse_modulus()
        return _mode_tuple(np.unravel_index(np.argmax(m), m.shape), self.K)

    def min_modulus(self) -> float:
        if self.blocks is not None:
            return 1.0 / self.inverse_norm()
        return float(np.abs(self.multipliers).min())


# ---------------------------------------------------------------------------
# constructors


def make_L_a(omega, l: int, a: complex, K: int) -> DiagonalOperator:
    """``omega . d/dtheta - l a^{l-1}``.

    Raises:
        ConeViolation: if ``l a^{l-1}`` sits (numerically) on the imaginary axis.
    """
    omega = tuple(float(w) for w in np.atleast_1d(omega))
    d = len(omega)
    la = l * complex(a) ** (l - 1)
    margin = abs(la.real)
    if margin < CONE_REL_TOL * abs(la) or la == 0:
        raise ConeViolation(f"l a^(l-1) = {la:.6g} is on the imaginary axis; a lies in an excluded cone")
    mult = 1j * k_dot_omega(d, K, omega) - la
    return DiagonalOperator(d, K, omega, multipliers=mult, operator_norm_bound=1.0 / margin, margin=margin, name="L_a")


def make_L_a_nd(omega, phi: HomogeneousMap, a, K: int) -> DiagonalOperator:
    """Block operator ``omega . d/dtheta - Dphi(a)``.

    Raises:
        SpectrumOnAxis: if an eigenvalue of ``Dphi(a)`` is within 1e-10 of the
            imaginary axis.
    """
    omega = tuple(float(w) for w in np.atleast_1d(omega))
    d = len(omega)
    J = phi.jacobian(a)
    eig = np.linalg.eigvals(J)
    margin = float(np.abs(eig.real).min())
    if margin <= SPECTRUM_TOL:
        raise SpectrumOnAxis(f"Dphi(a) has eigenvalues {eig} within {SPECTRUM_TOL} of the imaginary axis")
    kw = k_dot_omega(d, K, omega)
    eye = np.eye(phi.n)
    blocks = 1j * kw[..., None, None] * eye - J
    return DiagonalOperator(d, K, omega, blocks=blocks, margin=margin, name="L_a_nd")


def make_shift_op(omega, beta: complex, K: int) -> DiagonalOperator:
    """``omega . d/dtheta + beta``."""
    omega = tuple(float(w) for w in np.atleast_1d(omega))
    mult = 1j * k_dot_omega(len(omega), K, omega) + complex(beta)
    return DiagonalOperator(len(omega), K, omega, multipliers=mult, name="shift")


def make_oscillator_op(omega, l: int, a: complex, delta: float, K: int) -> DiagonalOperator:
    """``(omega . d/dtheta)^2 + delta omega . d/dtheta - l a^{l-1}``.

    Mode k is multiplied by ``-(k.omega)^2 + i delta (k.omega) - l a^{l-1}``.
    When ``delta^2 + 2 l a^{l-1} >= 0`` every multiplier has modulus at least
    ``|l a^{l-1}|``; ``operator_norm_bound`` records ``1/|l a^{l-1}|``.

    Raises:
        OscillatorConditionViolated: if ``l a^{l-1}`` is not real or the damping
            condition fails.
    """
    omega = tuple(float(w) for w in np.atleast_1d(omega))
    d = len(omega)
    la = l * complex(a) ** (l - 1)
    if abs(la.imag) > CONE_REL_TOL * abs(la):
        raise OscillatorConditionViolated(f"l a^(l-1) = {la:.6g} is not real; only real leading terms are supported")
    la = la.real
    if la == 0:
        raise OscillatorConditionViolated("l a^(l-1) vanishes")
    if delta**2 + 2 * la < 0:
        raise OscillatorConditionViolated(f"delta^2 + 2 l a^(l-1) = {delta**2 + 2 * la:.6g} < 0")
    t = k_dot_omega(d, K, omega)
    mult = -(t**2) + 1j * delta * t - la
    return DiagonalOperator(d, K, omega, multipliers=mult, operator_norm_bound=1.0 / abs(la), margin=abs(la), name="oscillator")


# ---------------------------------------------------------------------------
# cohomology equations


def small_divisor_minimum(omega, K: int) -> tuple[float, tuple[int, ...]]:
    """``min |k.omega|`` over ``0 < |k|_inf <= K`` and a minimizing mode."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    d = omega.size
    kw = np.abs(k_dot_omega(d, K, omega))
    kw[(K,) * d] = np.inf
    idx = np.unravel_index(np.argmin(kw), kw.shape)
    if kw[idx] < RESONANCE_TOL:
        # among (numerically) resonant modes report the shortest one
        kn = np.where(kw < RESONANCE_TOL, mode_euclidean_norm(d, K), np.inf)
        idx = np.unravel_index(np.argmin(kn), kn.shape)
    k = _mode_tuple(idx, K)
    if next((i for i in k if i), 0) < 0:
        k = tuple(-i for i in k)
    return float(kw[idx]), k


def _check_zero_average(f: FourierSeries, what: str):
    avg = np.atleast_1d(average(f))
    scale = max(1.0, float(np.abs(f.coeffs).max()))
    if np.abs(avg).max() > 1e-13 * scale:
        raise NonZeroAverage(f"{what} has average {avg}, expected zero")


def solve_cohomology(omega, f: FourierSeries) -> FourierSeries:
    """Zero-average solution of ``omega . d/dtheta V = f``.

    Raises:
        NonZeroAverage: if ``f`` does not have zero average.
        ResonantMode: if some ``|k.omega| < 1e-14`` within the truncation.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    _check_zero_average(f, "right-hand side")
    smallest, k = small_divisor_minimum(omega, f.K)
    if smallest < RESONANCE_TOL:
        raise ResonantMode(k, smallest)
    log.debug("cohomology: smallest divisor %.3e at k=%s", smallest, k)
    kw = 1j * k_dot_omega(f.d, f.K, omega)
    kw[(f.K,) * f.d] = 1.0
    c = f.coeffs / kw[None]
    c[(slice(None),) + (f.K,) * f.d] = 0
    return FourierSeries(c, real=f.real)


def exp_series(g: FourierSeries, cutoff: float = 1e-16, max_terms: int = 400) -> FourierSeries:
    """``exp(g)`` in the truncated algebra, summing the power series.

    Terms are added until a term's l^1 norm drops below ``cutoff`` times the
    partial sum's.
    """
    if g.n != 1:
        raise TruncationMismatch("exp_series needs a scalar series")
    total = FourierSeries.constant(1.0, g.d, g.K)
    term = total
    for j in range(1, max_terms):
        term = multiply(term, g) / j
        total = total + term
        if sup_norm_estimate(term) <= cutoff * sup_norm_estimate(total):
            return total
    raise ConfigError(f"exponential series did not reach cutoff in {max_terms} terms (||g||_1 = {sup_norm_estimate(g):.3g})")


def apply_twisted(omega, beta: complex, w: FourierSeries, V: FourierSeries) -> FourierSeries:
    """``(omega . d/dtheta + beta + w) V`` on the truncated space."""
    return omega_derivative(V, omega) + V * complex(beta) + multiply(w, V)


class TwistedInverse:
    """Inverse of ``omega . d/dtheta + beta + w`` on a fixed truncation.

    With ``Gamma`` the zero-average solution of ``omega . d/dtheta Gamma = w``,
    the inverse is ``exp(-Gamma) (omega . d/dtheta + beta)^{-1} exp(Gamma)``.
    The exponentials and products are formed on a doubled truncation and up to
    ``refine`` defect-correction sweeps remove what the truncation loses, so
    the truncated operator reproduces the right-hand side.

    Raises:
        ZeroBeta: if ``|beta| <= 1e-14``.
        NonZeroAverage: if ``w`` has nonzero average.
    """

    def __init__(self, omega, beta: complex, w: FourierSeries, refine: int = 8):
        beta = complex(beta)
        if abs(beta) <= 1e-14:
            raise ZeroBeta("beta = 0: the integrating-factor formula needs extra hypotheses")
        _check_zero_average(w, "twist w")
        self.omega = np.atleast_1d(np.asarray(omega, dtype=float))
        self.beta = beta
        self.w = w
        self.K = w.K
        self.refine = refine
        K2 = 2 * w.K
        self.gamma = solve_cohomology(self.omega, w.with_truncation(K2))
        self._e_plus = exp_series(self.gamma)
        self._e_minus = exp_series(-self.gamma)
        self._shift = make_shift_op(self.omega, beta, K2)

    def _approx(self, rhs: FourierSeries) -> FourierSeries:
        big = rhs.with_truncation(2 * self.K)
        return multiply(self._e_minus, self._shift.apply_inverse(multiply(big, self._e_plus))).with_truncation(self.K)

    def apply(self, V: FourierSeries) -> FourierSeries:
        return apply_twisted(self.omega, self.beta, self.w, V)

    def solve(self, f: FourierSeries) -> FourierSeries:
        if f.K != self.K or f.d != self.w.d:
            raise TruncationMismatch("w and f must share the truncation")
        V = self._approx(f)
        f_size = sup_norm_estimate(f)
        for _ in range(self.refine):
            r = f - self.apply(V)
            if sup_norm_estimate(r) <= 1e-15 * max(f_size, 1e-300):
                break
            V = V + self._approx(r)
        return V


def solve_twisted_cohomology(omega, beta: complex, w: FourierSeries, f: FourierSeries) -> FourierSeries:
    """Solve ``(omega . d/dtheta + beta + w) V = f``; see :class:`TwistedInverse`."""
    return TwistedInverse(omega, beta, w).solve(f)


# ---------------------------------------------------------------------------
# Diophantine constants


@dataclass(frozen=True)
class DiophantineParams:
    """Constants of ``|k.omega| >= gamma exp(-eta |k|)`` or ``>= gamma |k|^-tau``."""

    gamma: float
    eta: float | None = None
    tau: float | None = None

    def __post_init__(self):
        if not self.gamma > 0:
            raise ConfigError("gamma must be positive")
        if (self.eta is None) == (self.tau is None):
            raise ConfigError("give exactly one of eta and tau")
        if self.eta is not None and not self.eta > 0:
            raise ConfigError("eta must be positive")

    def check_tau(self, d: int, m: float | None = None) -> None:
        """Polynomial form needs ``d - 1 < tau`` (and ``tau < m`` when m is given)."""
        if self.tau is None:
            return
        if not self.tau > d - 1 or (m is not None and not self.tau < m):
            raise ConfigError(f"tau={self.tau} outside ({d - 1}, {m if m is not None else 'inf'})")


@dataclass
class DiophantineTable:
    """Rows ``(kind, parameter, gamma, argmin mode)`` with ``kind`` in {'eta', 'tau'}."""

    omega: tuple
    K: int
    rows: list = field(default_factory=list)

    def gamma(self, kind: str, value: float) -> float:
        for r in self.rows:
            if r[0] == kind and r[1] == value:
                return r[2]
        raise KeyError((kind, value))

    def write(self, fh) -> None:
        fh.write(f"# certificate for 0 < |k|_inf <= {self.K} only\n")
        fh.write("kind,eta_or_tau,gamma,argmin_k\n")
        for kind, val, g, k in self.rows:
            fh.write(f"{kind},{val:.17g},{g:.17g},{' '.join(str(i) for i in k)}\n")


def estimate_diophantine(omega, K: int, eta_grid=(), tau_grid=()) -> DiophantineTable:
    """Realized Diophantine constants over ``0 < |k|_inf <= K``.

    ``gamma(eta) = min |k.omega| exp(eta |k|)`` and ``gamma(tau) = min |k.omega| |k|^tau``
    with Euclidean ``|k|``.

    Raises:
        ResonantMode: if some mode in range has ``|k.omega| < 1e-14``.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    d = omega.size
    smallest, k = small_divisor_minimum(omega, K)
    if smallest < RESONANCE_TOL:
        raise ResonantMode(k, smallest)
    kw = np.abs(k_dot_omega(d, K, omega))
    kn = mode_euclidean_norm(d, K)
    nonzero = kn > 0
    table = DiophantineTable(tuple(omega), K)

    def best(vals, kind, param):
        vals = np.where(nonzero, vals, np.inf)
        idx = np.unravel_index(np.argmin(vals), vals.shape)
        kk = _mode_tuple(idx, K)
        if next((i for i in kk if i), 0) < 0:
            kk = tuple(-i for i in kk)
        table.rows.append((kind, float(param), float(vals[idx]), kk))

    for eta in eta_grid:
        best(kw * np.exp(eta * kn), "eta", eta)
    for tau in tau_grid:
        best(kw * np.where(nonzero, kn, 1.0) ** tau, "tau", tau)
    return table


