"""Leading-term selection, contraction driver and the solution pipelines."""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from . import verify
from .errors import (
    ConfigError,
    G1Degenerate,
    MaxIterExceeded,
    NewtonDiverged,
    NoContraction,
    NoRealBranch,
    RootTrackingAmbiguous,
    SolverError,
    SpectrumOnAxis,
)
from .fourier import FourierSeries, NormParams, average, oscillatory_part, power, sobolev_norm
from .linear_ops import (
    DiagonalOperator,
    TwistedInverse,
    make_L_a,
    make_L_a_nd,
    make_oscillator_op,
    solve_cohomology,
)
from .problem import (
    HomogeneousMap,
    ProblemSpec,
    S_remainder,
    eval_taylor,
    f_bar0,
    f_tilde0,
    split_g,
    validate,
)

log = logging.getLogger(__name__)


@dataclass
class LeadingTerm:
    a: complex | np.ndarray
    branch_index: int
    mode_margin: float


@dataclass
class ContractionConfig:
    ball_factor: float = 0.5
    tol_step: float = 1e-12
    max_iter: int = 200
    retry_halvings: int = 6

    def __post_init__(self):
        if not 0 < self.ball_factor <= 1:
            raise ConfigError(f"ball_factor must lie in (0, 1], got {self.ball_factor}")
        if not self.tol_step > 0:
            raise ConfigError("tol_step must be positive")
        if self.max_iter < 1 or self.retry_halvings < 0:
            raise ConfigError("max_iter must be >= 1 and retry_halvings >= 0")


@dataclass
class ContractionResult:
    V: FourierSeries
    iterations: int
    step_norms: list
    lambda_hat: float
    radius: float
    ball_factor: float
    attempts: int
    in_ball: bool
    notes: list = field(default_factory=list)


@dataclass
class SolveReport:
    """Outcome of one solve; ``V`` (and ``U`` in zero-average mode) hold the correction."""

    mode: str
    a: complex | np.ndarray | None
    V: FourierSeries
    U: FourierSeries | None = None
    branch_index: int | None = None
    mode_margin: float | None = None
    iterations: int = 0
    step_norms: list = field(default_factory=list)
    lambda_hat: float = 0.0
    radius: float = 0.0
    ball_factor: float = 0.0
    attempts: int = 1
    norm_V: float = 0.0
    norm_U: float | None = None
    op_norm: float | None = None
    op_norm_bound: float | None = None
    fixed_point_defect: float = 0.0
    truncation_tail: float = 0.0
    residual: "verify.ResidualReport | None" = None
    warnings: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def solution(self) -> FourierSeries:
        """``x - a`` as a series: ``V`` normally, ``eps V + U`` in zero-average mode."""
        if self.U is None:
            return self.V
        return self.V * self.extra["epsilon"] + self.U

    def to_dict(self) -> dict:
        def num(z):
            if z is None:
                return None
            z = np.asarray(z, dtype=complex)
            if z.ndim == 0:
                return {"re": float(z.real), "im": float(z.imag)}
            return [{"re": float(c.real), "im": float(c.imag)} for c in z]

        out = {
            "mode": self.mode,
            "a": num(self.a),
            "branch_index": self.branch_index,
            "mode_margin": self.mode_margin,
            "iterations": self.iterations,
            "attempts": self.attempts,
            "lambda_hat": self.lambda_hat,
            "ball_radius": self.radius,
            "ball_factor": self.ball_factor,
            "norm_V": self.norm_V,
            "norm_U": self.norm_U,
            "op_norm": self.op_norm,
            "op_norm_bound": self.op_norm_bound,
            "fixed_point_defect": self.fixed_point_defect,
            "truncation_tail": self.truncation_tail,
            "step_norms": list(self.step_norms),
            "warnings": list(self.warnings),
        }
        if self.residual is not None:
            out["residual"] = self.residual.to_dict()
        for key, val in self.extra.items():
            out[key] = num(val) if isinstance(val, (complex, np.ndarray)) else val
        return out


# ---------------------------------------------------------------------------
# leading term


def _real_root(r: float, l: int) -> float:
    """Correctly rounded positive real l-th root of ``r > 0``."""
    x = r ** (1.0 / l)
    x = x - (x**l - r) / (l * x ** (l - 1))
    target = Fraction(r)
    cands = [x, math.nextafter(x, 0.0), math.nextafter(x, math.inf)]
    return min(cands, key=lambda c: abs(Fraction(c) ** l - target))


def leading_term(l: int, epsilon: complex, fbar0: complex, branch: int = 0, real_only: bool = False) -> LeadingTerm:
    """Root ``a`` of ``a^l + eps fbar0 = 0``.

    Complex branches are ``|eps fbar0|^{1/l} exp(i (Arg(-eps fbar0) + 2 pi branch) / l)``.
    With ``real_only`` the real roots are listed in branch order and ``branch``
    indexes that list.

    Raises:
        NoRealBranch: ``real_only`` and no real root exists (l even and
            ``eps fbar0 > 0``).
    """
    c = -complex(epsilon) * complex(fbar0)
    if c == 0:
        raise ConfigError("leading term needs eps != 0 and fbar0 != 0")
    r = abs(c)
    mag = _real_root(r, l)
    if real_only:
        if complex(epsilon).imag != 0 or complex(fbar0).imag != 0:
            raise ConfigError("real_only needs real eps and fbar0")
        if c.real > 0:
            roots = [(0, mag)] + ([(l // 2, -mag)] if l % 2 == 0 else [])
        elif l % 2:
            roots = [((l - 1) // 2, -mag)]
        else:
            raise NoRealBranch(f"l={l} is even and eps*fbar0 = {-c.real:.6g} > 0: no real leading term")
        if not 0 <= branch < len(roots):
            raise ConfigError(f"real branch {branch} out of range; {len(roots)} real root(s)")
        idx, a = roots[branch]
        a = complex(a)
    else:
        idx = branch % l
        a = mag * cmath.exp(1j * (cmath.phase(c) + 2 * math.pi * idx) / l)
    return LeadingTerm(a, idx, abs((l * a ** (l - 1)).real))


def leading_term_nd(
    phi: HomogeneousMap, epsilon: float, fbar0, a0_guess=None, tol: float = 1e-12, max_steps: int = 50
) -> LeadingTerm:
    """Solve ``phi(a0) = -sign(eps) fbar0`` by damped Newton and scale ``a = |eps|^{1/l} a0``.

    Raises:
        NewtonDiverged: no convergence to ``tol`` within ``max_steps``.
        SpectrumOnAxis: ``Dphi(a0)`` has an eigenvalue on the imaginary axis.
    """
    eps = complex(epsilon)
    if eps.imag != 0 or eps.real == 0:
        raise ConfigError("n-dimensional leading term needs real nonzero eps")
    s = math.copysign(1.0, eps.real)
    target = -s * np.asarray(fbar0, dtype=complex)
    if a0_guess is None:
        t = target.real
        a0 = np.sign(t) * np.abs(t) ** (1.0 / phi.l)
    else:
        a0 = np.asarray(a0_guess, dtype=float)
    a0 = a0.astype(complex)
    scale = max(1.0, float(np.abs(target).max()))

    def res(x):
        return phi(x) - target

    F = res(a0)
    for _ in range(max_steps):
        if np.linalg.norm(F) <= tol * scale:
            break
        J = phi.jacobian(a0)
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError as exc:
            raise NewtonDiverged(f"singular Jacobian at a0={a0}") from exc
        lam = 1.0
        while lam > 1e-6:
            trial = a0 + lam * step
            Ft = res(trial)
            if np.linalg.norm(Ft) < (1 - 0.5 * lam) * np.linalg.norm(F) or np.linalg.norm(Ft) <= tol * scale:
                break
            lam *= 0.5
        a0, F = trial, Ft
    else:
        if np.linalg.norm(F) > tol * scale:
            raise NewtonDiverged(f"Newton residual {np.linalg.norm(F):.3e} after {max_steps} steps")
    if np.linalg.norm(F) > tol * scale:
        raise NewtonDiverged(f"Newton residual {np.linalg.norm(F):.3e}")
    if np.all(np.abs(a0.imag) == 0) or np.abs(a0.imag).max() < 1e-14:
        a0 = a0.real.astype(complex)
    eig0 = np.linalg.eigvals(phi.jacobian(a0))
    if np.abs(eig0.real).min() <= 1e-10:
        raise SpectrumOnAxis(f"Dphi(a0) eigenvalues {eig0} touch the imaginary axis")
    a = _real_root(abs(eps), phi.l) * a0
    margin = float(np.abs(np.linalg.eigvals(phi.jacobian(a)).real).min())
    return LeadingTerm(a, 0, margin)


# ---------------------------------------------------------------------------
# contraction driver


def contraction_solve(
    T: Callable[[FourierSeries], FourierSeries],
    V0: FourierSeries,
    r0: float,
    cfg: ContractionConfig,
    norm: NormParams,
) -> ContractionResult:
    """Iterate ``V <- T(V)`` from ``V0`` inside the ball of radius ``ball_factor * r0``.

    Success when the step norm falls below ``tol_step`` times the iterate norm
    with every iterate inside the ball. If an iterate leaves the ball or the
    steps grow three times in a row, the ball factor is halved and the
    iteration restarts from zero (up to ``retry_halvings`` times).

    Raises:
        NoContraction: every attempt failed.
        MaxIterExceeded: ``max_iter`` steps without meeting the tolerance.
    """
    zero = FourierSeries.zeros(V0.d, V0.K, V0.n)
    A = cfg.ball_factor
    reasons = []
    for attempt in range(cfg.retry_halvings + 1):
        r = A * r0
        V = V0 if attempt == 0 else zero
        steps: list[float] = []
        failure = None
        for it in range(1, cfg.max_iter + 1):
            TV = T(V)
            s = sobolev_norm(TV - V, norm)
            V = TV
            nv = sobolev_norm(V, norm)
            steps.append(s)
            if not (math.isfinite(s) and math.isfinite(nv)):
                failure = f"non-finite iterate at step {it}"
                break
            if nv > r:
                failure = f"iterate {it} left the ball: norm {nv:.3e} > r = {r:.3e}"
                break
            if s <= cfg.tol_step * nv or s == 0.0:
                return ContractionResult(V, it, steps, _lambda_hat(steps), r, A, attempt + 1, True)
            if len(steps) >= 6 and steps[-1] > steps[-2] > steps[-3] > steps[-4]:
                failure = f"steps growing at iteration {it} (ratio {steps[-1] / steps[-2]:.3f})"
                break
        else:
            raise MaxIterExceeded(
                f"no convergence in {cfg.max_iter} iterations (last relative step {steps[-1] / max(nv, 1e-300):.3e})"
            )
        reasons.append(failure)
        log.debug("contraction attempt %d failed: %s", attempt + 1, failure)
        A *= 0.5
    raise NoContraction("; ".join(reasons[-2:]) + f" (after {cfg.retry_halvings} halvings)")


def _lambda_hat(steps: list[float]) -> float:
    ratios = [b / a for a, b in zip(steps, steps[1:]) if a > 0]
    late = ratios[2:]
    use = late if late else ratios
    return float(max(use)) if use else 0.0


# ---------------------------------------------------------------------------
# pipelines


def _require_valid(p: ProblemSpec, K: int):
    rep = validate(p, K)
    if not rep.ok:
        raise ConfigError(rep.summary())
    return rep


def _response_map(p: ProblemSpec, a, K: int, op: DiagonalOperator, epsilon=None):
    """The map ``V -> op^{-1}(S(a,V) + h(a+V) + eps f~(.,0) + eps g(a+V))`` and its right side."""
    eps = p.epsilon if epsilon is None else complex(epsilon)
    forcing = f_tilde0(p, K) * eps
    g = p.f.restrict(min_degree=1)
    h = p.h

    if p.n == 1:
        a = complex(a)

        def rhs(V):
            out = S_remainder(p.l, a, V) + forcing
            if not h.is_zero():
                out = out + eval_taylor(h, a, V)
            if not g.is_zero():
                out = out + eval_taylor(g, a, V) * eps
            return out

    else:

        def rhs(V):
            out = p.phi.expand(a, V, min_order=2) + forcing
            if not h.is_zero():
                out = out + eval_taylor(h, a, V)
            if not g.is_zero():
                out = out + eval_taylor(g, a, V) * eps
            return out

    def T(V):
        return op.apply_inverse(rhs(V))

    return T, rhs


def _tail_norm(rhs_at: Callable[[int], Callable], V: FourierSeries, norm: NormParams) -> float:
    """Norm of the right-hand side's modes ``K < |k|_inf <= 2K`` at the solution."""
    K = V.K
    big = rhs_at(2 * K)(V.with_truncation(2 * K))
    inner = big.with_truncation(K).with_truncation(2 * K)
    return sobolev_norm(big - inner, norm)


def _finish(report: SolveReport, res: ContractionResult, T, norm: NormParams):
    report.iterations = res.iterations
    report.step_norms = res.step_norms
    report.lambda_hat = res.lambda_hat
    report.radius = res.radius
    report.ball_factor = res.ball_factor
    report.attempts = res.attempts
    report.fixed_point_defect = sobolev_norm(T(res.V) - res.V, norm)
    if res.lambda_hat >= 1:
        report.warnings.append(f"empirical contraction factor {res.lambda_hat:.3f} >= 1")


def solve_response(
    p: ProblemSpec,
    K: int,
    norm: NormParams,
    cfg: ContractionConfig | None = None,
    grid_size: int = 256,
    V0: FourierSeries | None = None,
) -> SolveReport:
    """Response solution ``x = a + V(omega t)`` for first-order problems with nonzero average forcing."""
    cfg = cfg or ContractionConfig()
    _require_valid(p, K)
    fbar = f_bar0(p)
    warnings = []
    ft = f_tilde0(p, K)
    ratio = sobolev_norm(ft, norm) / float(np.linalg.norm(np.atleast_1d(fbar)))
    if ratio > 1:
        warnings.append(f"SmallnessViolated: ||f~(.,0)|| / |fbar(0)| = {ratio:.3g} > 1")
    if p.n == 1:
        lt = leading_term(p.l, p.epsilon, fbar, p.branch, p.real_only)
        op_at = lambda KK: make_L_a(p.omega, p.l, lt.a, KK)  # noqa: E731
    else:
        lt = leading_term_nd(p.phi, p.epsilon, fbar, p.a0_guess)
        op_at = lambda KK: make_L_a_nd(p.omega, p.phi, lt.a, KK)  # noqa: E731
    op = op_at(K)
    T, _ = _response_map(p, lt.a, K, op)
    r0 = float(np.linalg.norm(np.atleast_1d(lt.a)))
    start = V0 if V0 is not None else FourierSeries.zeros(p.d, K, p.n)
    res = contraction_solve(T, start, r0, cfg, norm)
    report = SolveReport(
        p.mode if p.mode != "monodromy" else "response",
        lt.a,
        res.V,
        branch_index=lt.branch_index,
        mode_margin=lt.mode_margin,
        norm_V=sobolev_norm(res.V, norm),
        op_norm=op.inverse_norm(),
        op_norm_bound=op.operator_norm_bound,
        warnings=warnings,
    )
    _finish(report, res, T, norm)
    report.truncation_tail = _tail_norm(lambda KK: _response_map(p, lt.a, KK, op_at(KK))[1], res.V, norm)
    report.residual = verify.residual_norm(p, lt.a, res.V, grid_size)
    return report


def solve_oscillator(
    p: ProblemSpec, K: int, norm: NormParams, cfg: ContractionConfig | None = None, grid_size: int = 256
) -> SolveReport:
    """Response solution of ``x'' + delta x' = x^l + h + eps f``."""
    cfg = cfg or ContractionConfig()
    if p.n != 1 or p.delta is None:
        raise ConfigError("oscillator solve needs n = 1 and delta")
    _require_valid(p, K)
    fbar = f_bar0(p)
    warnings = []
    ratio = sobolev_norm(f_tilde0(p, K), norm) / abs(fbar)
    if ratio > 1:
        warnings.append(f"SmallnessViolated: ||f~(.,0)|| / |fbar(0)| = {ratio:.3g} > 1")
    lt = leading_term(p.l, p.epsilon, fbar, p.branch, p.real_only)
    op = make_oscillator_op(p.omega, p.l, lt.a, p.delta, K)
    T, _ = _response_map(p, lt.a, K, op)
    res = contraction_solve(T, FourierSeries.zeros(p.d, K), abs(lt.a), cfg, norm)
    report = SolveReport(
        "oscillator",
        lt.a,
        res.V,
        branch_index=lt.branch_index,
        mode_margin=lt.mode_margin,
        norm_V=sobolev_norm(res.V, norm),
        op_norm=op.inverse_norm(),
        op_norm_bound=op.operator_norm_bound,
        warnings=warnings,
    )
    report.extra["multiplier_min"] = op.min_modulus()
    _finish(report, res, T, norm)
    report.truncation_tail = _tail_norm(
        lambda KK: _response_map(p, lt.a, KK, make_oscillator_op(p.omega, p.l, lt.a, p.delta, KK))[1], res.V, norm
    )
    report.residual = verify.residual_norm(p, lt.a, res.V, grid_size)
    return report


def choose_mean_l2(g1bar: complex) -> complex:
    """Constant added to V when l = 2 so that ``|g1bar + 2 Vbar| >= max(1, |g1bar|)``."""
    target = max(1.0, abs(g1bar))
    if abs(g1bar) >= target:
        return 0.0
    s = g1bar / abs(g1bar) if g1bar != 0 else 1.0
    return (s * target - g1bar) / 2


def balance_mean_l2(V: FourierSeries, g1: FourierSeries) -> complex | None:
    """Mean of V that cancels the order-eps^2 average of the l = 2 equation.

    Solves ``Vbar^2 + g1bar Vbar + mean(V~^2 + g1~ V~) = 0`` for ``V = Vbar + V~``;
    the root may be complex (then no real response solution of this form
    exists). Returns None when the two roots coincide.
    """
    Vt = oscillatory_part(V)
    g1bar = average(g1)
    q = average(Vt * Vt + oscillatory_part(g1) * Vt)
    disc = g1bar**2 - 4 * q
    if abs(disc) <= 1e-10 * max(1.0, abs(g1bar) ** 2):
        return None
    root = cmath.sqrt(disc)
    if abs(disc.imag) <= 1e-15 * abs(disc):
        root = cmath.sqrt(disc.real)
    Vbar = (-g1bar + root) / 2
    return complex(Vbar.real) if Vbar.imag == 0 else Vbar


def _zero_average_map(p: ProblemSpec, K: int, V: FourierSeries, g1: FourierSeries, epsilon):
    eps = complex(epsilon)
    g_hi = p.f.restrict(min_degree=2)
    h = p.h
    l = p.l
    g1V = g1 * V * eps**2

    def common(U):
        X = U + V * eps
        out = g1V
        if not h.is_zero():
            out = out + eval_taylor(h, 0.0, X)
        if not g_hi.is_zero():
            out = out + eval_taylor(g_hi, 0.0, X) * eps
        return X, out

    if l > 2:

        def rhs(U):
            X, out = common(U)
            return out + power(X, l)

    else:
        V2 = V * V * eps**2

        def rhs(U):
            _, out = common(U)
            return out + U * U + V2

    return rhs


def solve_zero_average(
    p: ProblemSpec,
    K: int,
    norm: NormParams,
    cfg: ContractionConfig | None = None,
    grid_size: int = 256,
    l2_mean: str = "balance",
) -> SolveReport:
    """Solution ``x = eps V + U`` when the forcing has zero average at x = 0.

    ``V`` solves ``omega . d/dtheta V = f~(theta, 0)``; ``U`` is the fixed point of
    the inverse twisted operator applied to the remaining terms.

    For ``l = 2`` the free mean of V is fixed by ``l2_mean``: ``"balance"``
    (default) uses :func:`balance_mean_l2`, falling back to ``"minimal"``
    (:func:`choose_mean_l2`) when the balance is degenerate.

    Raises:
        G1Degenerate: ``l > 2`` and the average of ``g1`` vanishes.
    """
    cfg = cfg or ContractionConfig()
    if p.n != 1:
        raise ConfigError("zero-average solve needs n = 1")
    _require_valid(p, K)
    eps = p.epsilon
    V = solve_cohomology(p.omega, f_tilde0(p, K))
    g1, _ = split_g(p, K)
    g1bar = average(g1)
    g1t = oscillatory_part(g1)
    extra = {"epsilon": eps, "g1_average": g1bar}
    warnings = []
    if l2_mean not in ("balance", "minimal"):
        raise ConfigError(f"unknown l2_mean policy {l2_mean!r}")
    if p.l > 2:
        if abs(g1bar) <= 1e-10:
            raise G1Degenerate(f"average of g1 is {g1bar:.3e}; l > 2 needs it nonzero")
        beta = -eps * g1bar
        w = g1t * (-eps)
        Vbar = 0.0
    else:
        Vbar = balance_mean_l2(V, g1) if l2_mean == "balance" else None
        if Vbar is None:
            Vbar = choose_mean_l2(g1bar)
        elif complex(Vbar).imag != 0:
            warnings.append("averaged balance has complex roots: the response solution is complex valued")
        V = V + Vbar
        beta = -eps * (g1bar + 2 * Vbar)
        w = (g1t + oscillatory_part(V) * 2) * (-eps)
    extra["V_mean"] = complex(Vbar)
    extra["beta"] = complex(beta)
    inv = TwistedInverse(p.omega, beta, w)
    rhs = _zero_average_map(p, K, V, g1, eps)

    def T(U):
        return inv.solve(rhs(U))

    r0 = abs(eps)
    if p.l == 2:
        # U = O(eps) here: the zero mode of N^{-1}(eps^2 V^2) is eps mean(V^2) / (g1bar + 2 Vbar)
        r0 *= max(1.0, sobolev_norm(V * V + g1 * V, norm) / abs(g1bar + 2 * Vbar))
    res = contraction_solve(T, FourierSeries.zeros(p.d, K), r0, cfg, norm)
    report = SolveReport(
        "zero_average",
        None,
        V,
        U=res.V,
        norm_V=sobolev_norm(V, norm),
        norm_U=sobolev_norm(res.V, norm),
        warnings=warnings,
        extra=extra,
    )
    _finish(report, res, T, norm)
    report.residual = verify.residual_norm(p, 0.0, report.solution, grid_size)
    return report


def solve(
    p: ProblemSpec,
    K: int,
    norm: NormParams,
    cfg: ContractionConfig | None = None,
    grid_size: int = 256,
    l2_mean: str = "balance",
) -> SolveReport:
    """Dispatch on ``p.mode``."""
    if p.mode == "zero_average":
        return solve_zero_average(p, K, norm, cfg, grid_size, l2_mean)
    if p.mode == "oscillator":
        return solve_oscillator(p, K, norm, cfg, grid_size)
    return solve_response(p, K, norm, cfg, grid_size)


# ---------------------------------------------------------------------------
# monodromy


@dataclass
class MonodromyStep:
    t: float
    epsilon: complex
    a: complex
    good: bool
    norm_V: float | None
    status: str


@dataclass
class MonodromyReport:
    steps: list
    ratio: complex
    step_size: float
    max_jump_excess: float
    jumps_checked: int

    def write_table(self, fh) -> None:
        fh.write("t,re_eps,im_eps,re_a,im_a,in_good_region,norm_V,status\n")
        for s in self.steps:
            nv = "untrusted" if s.norm_V is None else f"{s.norm_V:.17g}"
            fh.write(
                f"{s.t:.17g},{s.epsilon.real:.17g},{s.epsilon.imag:.17g},{s.a.real:.17g},{s.a.imag:.17g},"
                f"{int(s.good)},{nv},{s.status}\n"
            )
        fh.write(f"# ratio a(end)/a(start) = {self.ratio.real:.17g}{self.ratio.imag:+.17g}j\n")


def track_root(prev: complex, roots: np.ndarray, rel_tol: float = 1e-9) -> complex:
    """Root nearest to ``prev``; ambiguous if the two nearest are almost equidistant
    or the jump exceeds half the spacing between roots."""
    dist = np.abs(roots - prev)
    order = np.argsort(dist)
    scale = max(abs(prev), 1e-300)
    if len(roots) > 1:
        if dist[order[1]] - dist[order[0]] <= rel_tol * scale:
            raise RootTrackingAmbiguous(f"two roots nearly equidistant from {prev:.6g}")
        spacing = min(abs(roots[i] - roots[j]) for i in range(len(roots)) for j in range(i))
        if dist[order[0]] >= 0.5 * spacing:
            raise RootTrackingAmbiguous("continuation step too coarse for the root spacing")
    return complex(roots[order[0]])


def monodromy_continuation(
    p: ProblemSpec,
    alpha: float,
    loops: int,
    steps_per_loop: int,
    cone_constant: float = 0.5,
    K: int = 16,
    norm: NormParams = NormParams(0.1, 2.0),
    cfg: ContractionConfig | None = None,
) -> MonodromyReport:
    """Continue ``a`` (and ``V`` where trusted) along ``eps = alpha exp(2 pi i t)``, ``t in [0, loops]``.

    Inside the good region ``|Im eps| <= C |Re eps|`` the correction is re-solved
    by warm-started contraction; elsewhere only ``a`` is tracked.
    """
    cfg = cfg or ContractionConfig()
    if p.n != 1:
        raise ConfigError("monodromy continuation needs n = 1")
    if not alpha > 0:
        raise ConfigError("alpha must be positive")
    if steps_per_loop < 64:
        raise ConfigError(f"steps_per_loop must be >= 64, got {steps_per_loop}")
    if loops < 1:
        raise ConfigError("loops must be >= 1")
    _require_valid(p, K)
    fbar = f_bar0(p)
    nsteps = loops * steps_per_loop
    dt = 1.0 / steps_per_loop
    rows: list[MonodromyStep] = []
    a = None
    V_prev = None
    prev_good = False
    max_excess = -math.inf
    checked = 0
    for j in range(nsteps + 1):
        t = j * dt
        eps = alpha * cmath.exp(2j * math.pi * t)
        if j % steps_per_loop == 0:
            # snap to the exact real axis at loop boundaries
            eps = complex(alpha, 0.0)
        if a is None:
            a = leading_term(p.l, eps, fbar, p.branch, real_only=False).a
        else:
            c = -eps * fbar
            base = abs(c) ** (1.0 / p.l) * np.exp(1j * (cmath.phase(c) + 2 * np.pi * np.arange(p.l)) / p.l)
            a = track_root(a, base)
        good = abs(eps.imag) <= cone_constant * abs(eps.real)
        norm_V = None
        status = "excluded_cone"
        V = None
        if good:
            try:
                op = make_L_a(p.omega, p.l, a, K)
                T, _ = _response_map(p, a, K, op, epsilon=eps)
                start = V_prev if (prev_good and V_prev is not None) else FourierSeries.zeros(p.d, K)
                res = contraction_solve(T, start, abs(a), cfg, norm)
                V = res.V
                norm_V = sobolev_norm(V, norm)
                status = "ok"
                if prev_good and V_prev is not None:
                    jump = sobolev_norm(V - V_prev, norm)
                    allowed = 10 * dt * sobolev_norm(V_prev, norm) + 1e-8
                    max_excess = max(max_excess, jump - allowed)
                    checked += 1
            except SolverError as exc:
                status = f"failed:{type(exc).__name__}"
        rows.append(MonodromyStep(t, eps, a, good, norm_V, status))
        prev_good = V is not None
        V_prev = V
    ratio = rows[-1].a / rows[0].a
    return MonodromyReport(rows, ratio, dt, max_excess if checked else 0.0, checked)
