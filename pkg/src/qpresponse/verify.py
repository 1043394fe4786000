"""Independent checks: grid residuals, manufactured solutions, RK4 shadowing, scaling fits."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, SolverError, StepTooLarge
from .fourier import (
    FourierSeries,
    NormParams,
    average,
    evaluate_grid,
    evaluate_points,
    grid_points,
    omega_derivative,
    power,
)
from .problem import FourierTaylor, ProblemSpec


@dataclass
class ResidualReport:
    sup: float
    l2: float
    samples: int
    variant: str

    def to_dict(self) -> dict:
        return {"sup": self.sup, "l2": self.l2, "samples": self.samples, "variant": self.variant}


def residual_norm(p: ProblemSpec, a, V: FourierSeries, grid_size: int = 256) -> ResidualReport:
    """Residual of the equation along ``x = a + V`` sampled on a uniform grid.

    The derivatives of V are taken spectrally; the nonlinearity and forcing are
    applied pointwise on the grid, so truncation errors in the products show up.
    For zero-average problems pass ``a = 0`` and ``V = eps V + U``.
    """
    if grid_size**p.d < 64:
        raise ConfigError(f"residual grid needs at least 64 samples, got {grid_size}^{p.d}")
    thetas = grid_points(p.d, grid_size)
    a = np.asarray(a, dtype=complex).reshape((-1,) + (1,) * p.d)
    x = a + evaluate_grid(V, grid_size)
    dV = omega_derivative(V, p.omega)
    if p.mode == "oscillator":
        lhs = evaluate_grid(omega_derivative(dV, p.omega), grid_size) + p.delta * evaluate_grid(dV, grid_size)
        variant = "second-order"
    else:
        lhs = evaluate_grid(dV, grid_size)
        variant = "n-dim" if p.n > 1 else "first-order"
    lead = p.phi(x) if p.n > 1 else x**p.l
    rhs = lead + p.h.evaluate(thetas, x) + p.epsilon * p.f.evaluate(thetas, x)
    R = np.sqrt((np.abs(lhs - rhs) ** 2).sum(axis=0))
    return ResidualReport(float(R.max()), float(np.sqrt((R**2).mean())), int(R.size), variant)


def manufacture(l: int, omega, a_star: float, V_star: FourierSeries, delta: float | None = None) -> ProblemSpec:
    """Problem with ``eps = 1`` whose exact response solution is ``a_star + V_star``.

    With ``delta`` given the problem is the damped oscillator and the
    derivative term is replaced by ``(omega.d/dtheta)^2 + delta omega.d/dtheta``.

    ``f(theta, x) = F(theta) + c (x - a_star - V_star(theta))`` with
    ``F = omega.d/dtheta V_star - (a_star + V_star)^l`` and the constant ``c``
    chosen so that the average of ``f(., 0)`` is ``-a_star^l``; the leading-term
    equation then returns ``a_star`` on the real branch.
    """
    a_star = float(a_star)
    if a_star == 0:
        raise ConfigError("a_star must be nonzero (otherwise fbar(0) = 0)")
    if V_star.n != 1:
        raise ConfigError("manufacture needs a scalar V_star")
    omega = tuple(float(w) for w in np.atleast_1d(omega))
    # exact products: no truncation for a degree-l polynomial in V_star
    big = V_star.with_truncation(l * V_star.K)
    X = big + a_star
    dV = omega_derivative(big, omega)
    if delta is not None:
        dV = omega_derivative(dV, omega) + dV * float(delta)
    F = dV - power(X, l)
    base = a_star + complex(average(big)).real
    if base == 0:
        raise ConfigError("a_star + mean(V_star) must be nonzero")
    excess = complex(average(F)) + a_star**l
    c = excess / base
    deg0 = F - big * c - c * a_star
    terms = [(0, k, val[0]) for k, val in deg0.items(atol=0.0)]
    if c != 0:
        terms.append((1, (0,) * len(omega), c))
    f = FourierTaylor(terms, d=len(omega))
    branch = 0
    if l % 2 == 0 and a_star < 0:
        branch = 1
    mode = "response" if delta is None else "oscillator"
    return ProblemSpec(
        l=l, omega=omega, epsilon=1.0, f=f, delta=delta, mode=mode, branch=branch, real_only=True, label="manufactured"
    )


@dataclass
class ShadowReport:
    max_error: float
    direction: str
    steps: int
    dt: float
    local_error_estimate: float


def rk4_shadow(
    p: ProblemSpec, a, V: FourierSeries, t_span: float, dt: float, error_checks: int = 10
) -> ShadowReport:
    """Integrate the ODE with classical RK4 from ``x(0) = a + V(0)`` and measure
    ``sup_t |x_num(t) - a - V(omega t)|``.

    The integration runs in the direction in which the response solution
    attracts: backward when ``Re(l a^{l-1}) > 0`` and forward otherwise.

    Raises:
        StepTooLarge: if a step-doubling estimate of the local error exceeds 1e-8.
    """
    if p.n != 1 or p.mode == "oscillator":
        raise ConfigError("rk4_shadow handles scalar first-order problems")
    a = complex(a)
    l = p.l
    sign = -1.0 if (l * a ** (l - 1)).real > 0 else 1.0
    N = int(round(t_span / dt))
    h = sign * dt
    omega = np.asarray(p.omega)
    eps = p.epsilon
    forcing = p.h + p.f.scale(eps)
    degrees = forcing.degrees

    def coeffs_at(times):
        vals = forcing.coefficient_values(np.outer(omega, times))
        return np.array([vals[j][0] for j in degrees]).reshape(len(degrees), -1)

    half_times = np.arange(2 * N + 1) * (h / 2)
    C = coeffs_at(half_times)
    rows = [C[i] for i in range(len(degrees))]

    def F(x, idx):
        s = x**l
        for j, row in zip(degrees, rows):
            s += row[idx] * x**j
        return s

    def rk4(x, i):
        k1 = F(x, 2 * i)
        k2 = F(x + 0.5 * h * k1, 2 * i + 1)
        k3 = F(x + 0.5 * h * k2, 2 * i + 1)
        k4 = F(x + h * k3, 2 * i + 2)
        return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    def F_direct(x, t):
        c = coeffs_at(np.array([t]))[:, 0]
        s = x**l
        for j, cj in zip(degrees, c):
            s += cj * x**j
        return s

    def rk4_direct(x, t, hh):
        k1 = F_direct(x, t)
        k2 = F_direct(x + 0.5 * hh * k1, t + hh / 2)
        k3 = F_direct(x + 0.5 * hh * k2, t + hh / 2)
        k4 = F_direct(x + hh * k3, t + hh)
        return x + hh / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    node_times = np.arange(N + 1) * h
    exact = a + evaluate_points(V, np.outer(node_times, omega))[0]
    check_at = set(np.linspace(0, max(N - 1, 0), num=max(error_checks, 1), dtype=int).tolist())
    x = exact[0]
    worst = 0.0
    local_est = 0.0
    for i in range(N):
        if i in check_at:
            t = node_times[i]
            one = rk4_direct(x, t, h)
            two = rk4_direct(rk4_direct(x, t, h / 2), t + h / 2, h / 2)
            local_est = max(local_est, abs(one - two) * 16 / 15)
            if local_est > 1e-8:
                raise StepTooLarge(f"local error estimate {local_est:.3e} > 1e-8 at t={t:.4g}; reduce dt")
        x = rk4(x, i)
        worst = max(worst, abs(x - exact[i + 1]))
    return ShadowReport(float(worst), "backward" if sign < 0 else "forward", N, dt, float(local_est))


@dataclass
class ScalingReport:
    rows: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)
    max_deviation: dict = field(default_factory=dict)
    complete: bool = True
    error: str | None = None

    def write_table(self, fh) -> None:
        fh.write("epsilon,abs_a,op_norm,norm_V,residual\n")
        for eps, aa, op, nv, res in self.rows:
            fh.write(f"{eps:.17g},{aa:.17g},{op:.17g},{nv:.17g},{res:.17g}\n")

    def write_fit(self, fh) -> None:
        fh.write("quantity,slope,max_deviation\n")
        for key in ("abs_a", "op_norm", "norm_V"):
            if key in self.slopes:
                fh.write(f"{key},{self.slopes[key]:.17g},{self.max_deviation[key]:.17g}\n")


def scaling_study(
    family: Callable[[float], ProblemSpec] | ProblemSpec,
    epsilons: Sequence[float],
    K: int,
    norm: NormParams,
    cfg=None,
    grid_size: int = 256,
) -> ScalingReport:
    """Least-squares slopes of ``log|a|``, ``log ||L_a^{-1}||`` and ``log ||V||`` against ``log|eps|``.

    A solve failure stops the sweep and returns the rows gathered so far with
    ``complete = False``.
    """
    from .solver import solve_response

    eps = [float(e) for e in epsilons]
    if len(eps) < 3:
        raise ConfigError("scaling study needs at least 3 epsilon values")
    logs = np.log10(np.abs(eps))
    if logs.max() - logs.min() < 2 - 1e-12:
        raise ConfigError("epsilon values must span at least two decades")
    make = family if callable(family) else family.with_epsilon
    rep = ScalingReport()
    for e in eps:
        try:
            r = solve_response(make(e), K, norm, cfg, grid_size)
        except SolverError as exc:
            rep.complete = False
            rep.error = f"eps={e:g}: {type(exc).__name__}: {exc}"
            break
        rep.reports.append(r)
        rep.rows.append((e, float(np.linalg.norm(np.atleast_1d(r.a))), r.op_norm, r.norm_V, r.residual.sup))
    if len(rep.rows) >= 2:
        x = np.log(np.abs([row[0] for row in rep.rows]))
        for col, key in ((1, "abs_a"), (2, "op_norm"), (3, "norm_V")):
            vals = np.array([row[col] for row in rep.rows], dtype=float)
            if np.any(vals <= 0):
                continue
            y = np.log(vals)
            slope, icpt = np.polyfit(x, y, 1)
            rep.slopes[key] = float(slope)
            rep.max_deviation[key] = float(np.abs(y - (slope * x + icpt)).max())
    return rep

