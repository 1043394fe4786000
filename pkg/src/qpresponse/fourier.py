"""Truncated Fourier series on the d-torus.

A :class:`FourierSeries` holds the coefficients of a (possibly vector valued)
function ``V(theta) = sum_k V_k exp(i k.theta)`` for all modes with
``|k|_inf <= K``. Storage is a dense complex array of shape
``(n, 2K+1, ..., 2K+1)``; mode ``k`` lives at index ``k + K`` along each axis.

Products are computed by exact linear convolution and then truncated back to
``|k|_inf <= K``; the discarded tail can be measured with ``multiply(...,
tail_norm=params)``.
"""

from __future__ import annotations

import functools
import io
import itertools
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np
from scipy import signal

from .errors import ConfigError, TruncationMismatch

# direct convolution below this many complex multiply-adds, FFT above
_DIRECT_CONV_LIMIT = 2_000_000


@dataclass(frozen=True)
class NormParams:
    """Weights of the ``H^{rho,m}`` norm.

    ``rho`` is the half-width of the analyticity strip and ``m`` the Sobolev
    index. ``rho = 0`` gives the plain Sobolev norm ``H^m``.
    """

    rho: float = 0.0
    m: float = 0.0

    def __post_init__(self):
        if not (self.rho >= 0.0 and self.m >= 0.0):
            raise ConfigError(f"norm parameters must be nonnegative, got rho={self.rho}, m={self.m}")

    def regime(self, d: int) -> str | None:
        """Return ``'analytic'``, ``'sobolev'`` or None if neither algebra condition holds."""
        if self.rho > 0 and self.m > d:
            return "analytic"
        if self.rho == 0 and self.m > d / 2:
            return "sobolev"
        return None

    def check_algebra(self, d: int) -> None:
        if self.regime(d) is None:
            raise ConfigError(
                f"(rho={self.rho}, m={self.m}) is not a Banach algebra for d={d}: "
                "need rho > 0 and m > d, or rho = 0 and m > d/2"
            )


# ---------------------------------------------------------------------------
# mode bookkeeping (cached, read-only arrays)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@functools.lru_cache(maxsize=64)
def mode_grid(d: int, K: int) -> np.ndarray:
    """Integer array of shape ``(d, 2K+1, ..., 2K+1)`` holding each mode's k."""
    r = np.arange(-K, K + 1)
    return _readonly(np.stack(np.meshgrid(*([r] * d), indexing="ij")))


@functools.lru_cache(maxsize=64)
def mode_list(d: int, K: int) -> np.ndarray:
    """All modes as rows of a ``((2K+1)^d, d)`` array in lexicographic order."""
    return _readonly(mode_grid(d, K).reshape(d, -1).T.copy())


@functools.lru_cache(maxsize=64)
def mode_euclidean_norm(d: int, K: int) -> np.ndarray:
    return _readonly(np.sqrt((mode_grid(d, K).astype(float) ** 2).sum(axis=0)))


def k_dot_omega(d: int, K: int, omega) -> np.ndarray:
    omega = np.asarray(omega, dtype=float).reshape(d)
    return np.tensordot(omega, mode_grid(d, K).astype(float), axes=1)


@functools.lru_cache(maxsize=128)
def norm_weights(d: int, K: int, rho: float, m: float) -> np.ndarray:
    """``exp(2 rho |k|) (|k|^2 + 1)^m`` on the mode grid (squared weights)."""
    kn = mode_euclidean_norm(d, K)
    return _readonly(np.exp(2.0 * rho * kn) * (kn**2 + 1.0) ** m)


def _as_mode(k, d: int) -> tuple[int, ...]:
    if np.isscalar(k):
        k = (k,)
    k = tuple(int(i) for i in k)
    if len(k) != d:
        raise ConfigError(f"mode {k} does not have {d} entries")
    return k


# ---------------------------------------------------------------------------


class FourierSeries:
    """Immutable truncated Fourier series with values in ``C^n``.

    Args:
        coeffs: complex array of shape ``(n, 2K+1, ..., 2K+1)`` (``d`` mode axes).
        real: flag asserting the series is real valued on the real torus, i.e.
            ``coeff(-k) == conj(coeff(k))``. The flag is propagated by the
            algebra; it is not re-verified on every operation.
    """

    __slots__ = ("coeffs", "d", "n", "K", "real")

    def __init__(self, coeffs: np.ndarray, real: bool = False):
        c = np.array(coeffs, dtype=complex, copy=True)
        if c.ndim < 2:
            raise ValueError("coeffs needs a target axis and at least one mode axis")
        M = c.shape[1]
        if M % 2 != 1 or any(s != M for s in c.shape[1:]):
            raise ValueError(f"mode axes must all have odd length 2K+1, got {c.shape[1:]}")
        c.flags.writeable = False
        self.coeffs = c
        self.n = c.shape[0]
        self.d = c.ndim - 1
        self.K = (M - 1) // 2
        self.real = bool(real)

    # -- constructors -------------------------------------------------------

    @classmethod
    def zeros(cls, d: int, K: int, n: int = 1) -> "FourierSeries":
        return cls(np.zeros((n,) + (2 * K + 1,) * d, dtype=complex), real=True)

    @classmethod
    def constant(cls, value, d: int, K: int, n: int | None = None) -> "FourierSeries":
        value = np.atleast_1d(np.asarray(value, dtype=complex))
        if n is not None and value.size == 1 and n > 1:
            value = np.full(n, value[0])
        c = np.zeros((value.size,) + (2 * K + 1,) * d, dtype=complex)
        c[(slice(None),) + (K,) * d] = value
        return cls(c, real=bool(np.all(value.imag == 0)))

    @classmethod
    def from_modes(
        cls, modes: Mapping, d: int, K: int, n: int = 1, real: bool = False
    ) -> "FourierSeries":
        """Build from ``{k: coefficient}``; ``k`` may be an int when ``d == 1``.

        Raises:
            ConfigError: if a mode lies outside the truncation.
        """
        c = np.zeros((n,) + (2 * K + 1,) * d, dtype=complex)
        for k, val in modes.items():
            k = _as_mode(k, d)
            if max(abs(i) for i in k) > K:
                raise ConfigError(f"mode {k} exceeds truncation K={K}")
            c[(slice(None),) + tuple(i + K for i in k)] += np.broadcast_to(
                np.asarray(val, dtype=complex), (n,)
            )
        return cls(c, real=real)

    @classmethod
    def stack(cls, parts: Sequence["FourierSeries"]) -> "FourierSeries":
        _check_compatible(*parts)
        return cls(np.concatenate([p.coeffs for p in parts]), real=all(p.real for p in parts))

    # -- access -------------------------------------------------------------

    def _index(self, k) -> tuple:
        k = _as_mode(k, self.d)
        if max(abs(i) for i in k) > self.K:
            return None
        return (slice(None),) + tuple(i + self.K for i in k)

    def coeff(self, k):
        """Coefficient at mode ``k`` (zero outside the truncation).

        Returns a complex scalar for ``n == 1`` and an ``(n,)`` array otherwise.
        """
        idx = self._index(k)
        val = np.zeros(self.n, dtype=complex) if idx is None else self.coeffs[idx].copy()
        return complex(val[0]) if self.n == 1 else val

    def items(self, atol: float = 0.0) -> Iterator[tuple[tuple[int, ...], np.ndarray]]:
        """Yield ``(k, coefficient vector)`` for stored (nonzero) modes, lexicographically."""
        mag = np.abs(self.coeffs).max(axis=0).reshape(-1)
        flat = self.coeffs.reshape(self.n, -1)
        modes = mode_list(self.d, self.K)
        for j in np.flatnonzero(mag > atol):
            yield tuple(int(i) for i in modes[j]), flat[:, j]

    def component(self, i: int) -> "FourierSeries":
        return FourierSeries(self.coeffs[i : i + 1], real=self.real)

    def with_truncation(self, K: int) -> "FourierSeries":
        """Zero-pad or cut to a different truncation."""
        if K == self.K:
            return self
        c = np.zeros((self.n,) + (2 * K + 1,) * self.d, dtype=complex)
        m = min(K, self.K)
        src = (slice(None),) + (slice(self.K - m, self.K + m + 1),) * self.d
        dst = (slice(None),) + (slice(K - m, K + m + 1),) * self.d
        c[dst] = self.coeffs[src]
        return FourierSeries(c, real=self.real)

    def conjugate_symmetry_defect(self) -> float:
        """Max over k of ``|c(-k) - conj(c(k))|`` relative to the largest coefficient."""
        flipped = self.coeffs[(slice(None),) + (slice(None, None, -1),) * self.d]
        scale = np.abs(self.coeffs).max()
        if scale == 0:
            return 0.0
        return float(np.abs(flipped - self.coeffs.conj()).max() / scale)

    def is_constant(self) -> bool:
        c = self.coeffs.copy()
        c[(slice(None),) + (self.K,) * self.d] = 0
        return not np.any(c)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, FourierSeries):
            _check_compatible(self, other)
            return FourierSeries(self.coeffs + other.coeffs, real=self.real and other.real)
        return self + FourierSeries.constant(other, self.d, self.K, self.n)

    __radd__ = __add__

    def __neg__(self):
        return FourierSeries(-self.coeffs, real=self.real)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, FourierSeries):
            return multiply(self, other)
        other = complex(other)
        return FourierSeries(self.coeffs * other, real=self.real and other.imag == 0)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * (1.0 / complex(other))

    def __pow__(self, p: int):
        return power(self, p)

    def __repr__(self):
        nz = sum(1 for _ in self.items())
        return f"FourierSeries(d={self.d}, n={self.n}, K={self.K}, stored_modes={nz}, real={self.real})"


def _check_compatible(*series: FourierSeries) -> None:
    first = series[0]
    for s in series[1:]:
        if s.d != first.d or s.K != first.K:
            raise TruncationMismatch(
                f"operands differ: (d={first.d}, K={first.K}) vs (d={s.d}, K={s.K})"
            )
        if s.n != first.n:
            raise TruncationMismatch(f"target dimensions differ: {first.n} vs {s.n}")


# ---------------------------------------------------------------------------
# operations


def average(v: FourierSeries):
    """The k = 0 coefficient (complex for n == 1, else an n-vector)."""
    return v.coeff((0,) * v.d)


def oscillatory_part(v: FourierSeries) -> FourierSeries:
    c = v.coeffs.copy()
    c[(slice(None),) + (v.K,) * v.d] = 0
    return FourierSeries(c, real=v.real)


def multiply(u: FourierSeries, v: FourierSeries, *, tail_norm: NormParams | None = None):
    """Truncated pointwise product.

    One of the operands must be scalar valued (n == 1). With ``tail_norm`` the
    return value is ``(product, tail)`` where ``tail`` is the ``H^{rho,m}`` norm
    of the modes ``K < |k|_inf <= 2K`` discarded by the truncation.
    """
    if u.d != v.d or u.K != v.K:
        raise TruncationMismatch(f"operands differ: (d={u.d}, K={u.K}) vs (d={v.d}, K={v.K})")
    if u.n != 1 and v.n != 1:
        raise TruncationMismatch("multiply needs at least one scalar operand")
    d, K = u.d, u.K
    real = u.real and v.real
    if tail_norm is None:
        if u.is_constant():
            return FourierSeries(v.coeffs * u.coeffs[(slice(None),) + (K,) * d].reshape((u.n,) + (1,) * d), real=real)
        if v.is_constant():
            return FourierSeries(u.coeffs * v.coeffs[(slice(None),) + (K,) * d].reshape((v.n,) + (1,) * d), real=real)
    M = 2 * K + 1
    method = "direct" if M ** (2 * d) <= _DIRECT_CONV_LIMIT else "fft"
    n = max(u.n, v.n)
    full = np.empty((n,) + (2 * M - 1,) * d, dtype=complex)
    for i in range(n):
        a = u.coeffs[0 if u.n == 1 else i]
        b = v.coeffs[0 if v.n == 1 else i]
        full[i] = signal.convolve(a, b, mode="full", method=method)
    # full index j corresponds to mode j - 2K
    center = (slice(None),) + (slice(K, 3 * K + 1),) * d
    prod = FourierSeries(full[center], real=real)
    if tail_norm is None:
        return prod
    tail = full.copy()
    tail[center] = 0
    w = norm_weights(d, 2 * K, tail_norm.rho, tail_norm.m)
    return prod, float(np.sqrt((np.abs(tail) ** 2 * w).sum()))


def power(v: FourierSeries, p: int) -> FourierSeries:
    """``v`` multiplied by itself ``p`` times, truncating after each product."""
    if int(p) != p or p < 1:
        raise ValueError(f"power needs a positive integer exponent, got {p}")
    if v.n != 1:
        raise TruncationMismatch("power is defined for scalar series")
    out = v
    for _ in range(int(p) - 1):
        out = multiply(out, v)
    return out


def omega_derivative(v: FourierSeries, omega) -> FourierSeries:
    """Directional derivative ``omega . d/dtheta``: multiplies mode k by ``i k.omega``."""
    omega = np.asarray(omega, dtype=float)
    mult = 1j * k_dot_omega(v.d, v.K, omega)
    return FourierSeries(v.coeffs * mult[None], real=v.real)


def sobolev_norm(v: FourierSeries, params: NormParams) -> float:
    """``||v||_{H^{rho,m}}`` with the Euclidean |k| in both weights."""
    w = norm_weights(v.d, v.K, float(params.rho), float(params.m))
    return float(np.sqrt((np.abs(v.coeffs) ** 2 * w[None]).sum()))


def sup_norm_estimate(v: FourierSeries) -> float:
    """l^1 norm of the coefficients; an upper bound for ``sup |v|`` on the real torus."""
    return float(np.sqrt((np.abs(v.coeffs) ** 2).sum(axis=0)).sum())


def evaluate_at(v: FourierSeries, theta):
    """Value ``sum_k v_k exp(i k.theta)`` at a single point of the torus."""
    theta = np.asarray(theta, dtype=float).reshape(v.d)
    r = np.arange(-v.K, v.K + 1)
    out = v.coeffs
    for th in theta:
        # contract the leading mode axis each time
        out = np.tensordot(out, np.exp(1j * r * th), axes=([1], [0]))
    return complex(out[0]) if v.n == 1 else out


def evaluate_grid(v: FourierSeries, N: int) -> np.ndarray:
    """Values on the uniform grid ``theta_j = 2 pi j / N`` in every direction.

    Returns an array of shape ``(n, N, ..., N)``.
    """
    r = np.arange(-v.K, v.K + 1)
    E = np.exp(1j * np.outer(r, 2 * np.pi * np.arange(N) / N))  # (M, N)
    out = v.coeffs
    for axis in range(1, v.d + 1):
        out = np.moveaxis(np.tensordot(out, E, axes=([axis], [0])), -1, axis)
    return out


def evaluate_points(v: FourierSeries, thetas, chunk: int = 4096) -> np.ndarray:
    """Values at many points; ``thetas`` has shape ``(P, d)``. Returns ``(n, P)``."""
    thetas = np.asarray(thetas, dtype=float).reshape(-1, v.d)
    modes = mode_list(v.d, v.K).astype(float)
    flat = v.coeffs.reshape(v.n, -1)
    keep = np.abs(flat).max(axis=0) > 0
    modes, flat = modes[keep], flat[:, keep]
    out = np.zeros((v.n, thetas.shape[0]), dtype=complex)
    for s in range(0, thetas.shape[0], chunk):
        ph = np.exp(1j * thetas[s : s + chunk] @ modes.T)
        out[:, s : s + chunk] = flat @ ph.T
    return out


def grid_points(d: int, N: int) -> np.ndarray:
    """The uniform grid used by :func:`evaluate_grid`, shape ``(d, N, ..., N)``."""
    t = 2 * np.pi * np.arange(N) / N
    return np.stack(np.meshgrid(*([t] * d), indexing="ij"))


# ---------------------------------------------------------------------------
# coefficient dump


def write_coefficients(v: FourierSeries, fh) -> None:
    """Write stored modes as comma-delimited text.

    Each line is ``k_1,...,k_d,re_1,im_1,...,re_n,im_n`` with 17 significant
    digits. Header lines start with ``#``.
    """
    fh.write(f"# d={v.d} n={v.n} K={v.K} real={int(v.real)}\n")
    cols = [f"k{i + 1}" for i in range(v.d)]
    for j in range(v.n):
        cols += [f"re{j + 1}", f"im{j + 1}"]
    fh.write("# " + ",".join(cols) + "\n")
    for k, c in v.items():
        fields = [str(i) for i in k]
        for z in c:
            fields += [f"{z.real:.17g}", f"{z.imag:.17g}"]
        fh.write(",".join(fields) + "\n")


def read_coefficients(fh) -> FourierSeries:
    if isinstance(fh, str):
        fh = io.StringIO(fh)
    header = fh.readline()
    if not header.startswith("#"):
        raise ConfigError("coefficient dump: missing header line")
    meta = dict(tok.split("=") for tok in header[1:].split())
    d, n, K = int(meta["d"]), int(meta["n"]), int(meta["K"])
    real = bool(int(meta.get("real", 0)))
    c = np.zeros((n,) + (2 * K + 1,) * d, dtype=complex)
    for lineno, line in enumerate(fh, start=2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != d + 2 * n:
            raise ConfigError(f"coefficient dump line {lineno}: expected {d + 2 * n} fields")
        k = tuple(int(p) + K for p in parts[:d])
        vals = np.array([float(p) for p in parts[d:]])
        c[(slice(None),) + k] = vals[0::2] + 1j * vals[1::2]
    return FourierSeries(c, real=real)


def all_modes_up_to(d: int, K: int) -> Iterator[tuple[int, ...]]:
    """Nonzero modes with ``|k|_inf <= K`` in lexicographic order."""
    for k in itertools.product(range(-K, K + 1), repeat=d):
        if any(k):
            yield k
