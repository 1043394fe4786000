import math

import numpy as np
import pytest

from qpresponse.errors import (
    ConeViolation,
    NonZeroAverage,
    OscillatorConditionViolated,
    ResonantMode,
    SpectrumOnAxis,
    ZeroBeta,
)
from qpresponse.fourier import FourierSeries, NormParams, omega_derivative, sobolev_norm
from qpresponse.linear_ops import (
    DiophantineParams,
    TwistedInverse,
    apply_twisted,
    estimate_diophantine,
    exp_series,
    make_L_a,
    make_L_a_nd,
    make_oscillator_op,
    make_shift_op,
    small_divisor_minimum,
    solve_cohomology,
    solve_twisted_cohomology,
)
from qpresponse.problem import HomogeneousMap

from .conftest import random_series

GOLDEN_INV = (math.sqrt(5) - 1) / 2


def test_L_a_inverse_on_single_mode():
    op = make_L_a((1.0,), 3, -0.1 + 0j, 4)
    e1 = FourierSeries.from_modes({1: 1.0}, d=1, K=4)
    assert op.apply_inverse(e1).coeff(1) == pytest.approx(1 / (1j - 0.03))
    op2 = make_L_a((1.0,), 2, 0.1, 4)
    assert op2.apply_inverse(e1).coeff(1) == pytest.approx(1 / (1j - 0.2))
    assert op2.inverse_norm() == pytest.approx(5.0)
    assert op2.operator_norm_bound == pytest.approx(5.0)


def test_L_a_apply_and_inverse_round_trip():
    rng = np.random.default_rng(0)
    op = make_L_a((1.0, GOLDEN_INV), 3, -0.2 + 0.05j, 6)
    v = random_series(rng, 2, 6)
    assert np.abs((op.apply(op.apply_inverse(v)) - v).coeffs).max() < 1e-13


def test_L_a_rejects_excluded_cone():
    # l = 3 and a on the ray where 3 a^2 is purely imaginary
    a = 0.1 * np.exp(1j * np.pi / 4)
    with pytest.raises(ConeViolation):
        make_L_a((1.0,), 3, a, 4)


def test_inverse_norm_bound_for_complex_a():
    # for complex a the bound is 1/|Re(l a^{l-1})| and the truncated norm never exceeds it
    rng = np.random.default_rng(1)
    for _ in range(20):
        a = complex(*rng.uniform(-0.5, 0.5, 2))
        op = make_L_a((1.0,), 3, a, 16)
        assert op.inverse_norm() <= op.operator_norm_bound * (1 + 1e-14)


def test_block_operator_matches_scalar_operator_for_diagonal_map():
    phi = HomogeneousMap.diagonal_power(2, 3)
    a = np.array([-0.1, -0.2])
    op = make_L_a_nd((1.0,), phi, a, 5)
    rng = np.random.default_rng(2)
    V = random_series(rng, 1, 5, n=2)
    got = op.apply_inverse(V)
    for i in range(2):
        scalar = make_L_a((1.0,), 3, a[i], 5).apply_inverse(V.component(i))
        assert np.allclose(got.component(i).coeffs, scalar.coeffs, atol=1e-14)
    assert op.inverse_norm() == pytest.approx(1 / (3 * 0.01))


def test_block_operator_rejects_spectrum_on_axis():
    phi = HomogeneousMap(2, 3, [(0, (0, 3), 1.0), (1, (3, 0), -1.0)])
    with pytest.raises(SpectrumOnAxis):
        make_L_a_nd((1.0,), phi, np.array([0.0, 0.0]), 4)


def test_oscillator_multiplier_minimum_is_l_a_power():
    for delta in (1.0, 2.0, 10.0):
        op = make_oscillator_op((1.0,), 3, -0.1, delta, 16)
        assert op.min_modulus() == pytest.approx(0.03, abs=1e-15)
    with pytest.raises(OscillatorConditionViolated):
        make_oscillator_op((1.0,), 2, -0.5, 0.1, 4)  # l a = -1 and delta^2 - 2 < 0
    with pytest.raises(OscillatorConditionViolated):
        make_oscillator_op((1.0,), 2, 0.1j, 1.0, 4)  # l a = 0.2i is not real


def test_cohomology_solution_has_zero_average_and_inverts_derivative():
    rng = np.random.default_rng(3)
    omega = (1.0, GOLDEN_INV)
    f = random_series(rng, 2, 8)
    f = f - f.coeffs[(0, 8, 8)]
    V = solve_cohomology(omega, f)
    assert V.coeff((0, 0)) == 0
    assert np.abs((omega_derivative(V, omega) - f).coeffs).max() < 1e-13


def test_cohomology_errors():
    with pytest.raises(NonZeroAverage):
        solve_cohomology((1.0,), FourierSeries.constant(1.0, 1, 3))
    f = FourierSeries.from_modes({(1, 0): 1.0, (-1, 0): 1.0}, d=2, K=2)
    with pytest.raises(ResonantMode) as exc:
        solve_cohomology((1.0, 1.0), f)
    assert "k=(1, -1)" in str(exc.value)


def test_exp_series_mean_matches_bessel_series():
    g = FourierSeries.from_modes({1: 0.15, -1: 0.15}, d=1, K=32, real=True)
    E = exp_series(g)
    # exp(0.3 cos t) = I_0(0.3) + 2 sum I_k(0.3) cos(k t); check the mean against the Bessel series
    i0 = sum((0.15**2) ** j / math.factorial(j) ** 2 for j in range(30))
    assert E.coeff(0) == pytest.approx(i0, rel=1e-15)


def test_twisted_solve_round_trip_and_constant_twist():
    rng = np.random.default_rng(4)
    omega = (1.0,)
    w = random_series(rng, 1, 16, decay=0.8, real=True)
    w = w - w.coeff(0)
    w = w * (0.4 / sobolev_norm(w, NormParams(0.2, 2)))
    f = random_series(rng, 1, 16)
    beta = 0.3
    V = solve_twisted_cohomology(omega, beta, w, f)
    assert np.abs((apply_twisted(omega, beta, w, V) - f).coeffs).max() < 1e-13
    # with w = 0 the solve is the diagonal inverse of omega.d + beta
    zero = FourierSeries.zeros(1, 16)
    V0 = TwistedInverse(omega, beta, zero).solve(f)
    assert np.allclose(V0.coeffs, make_shift_op(omega, beta, 16).apply_inverse(f).coeffs, atol=1e-15)


def test_twisted_solve_errors():
    w = FourierSeries.zeros(1, 4)
    with pytest.raises(ZeroBeta):
        TwistedInverse((1.0,), 0.0, w)
    with pytest.raises(NonZeroAverage):
        TwistedInverse((1.0,), 0.5, FourierSeries.constant(0.1, 1, 4))


def golden_min_divisor(K: int) -> float:
    """min over 0 < |k|_inf <= K of |k1 + k2 g| with g = (sqrt5 - 1)/2, via Fibonacci convergents."""
    best = math.inf
    fib = [1, 1]
    while fib[-1] <= K:
        fib.append(fib[-1] + fib[-2])
    # best approximations q g ~ p come from consecutive Fibonacci numbers
    for q, p in zip(fib[1:], fib[:-1]):
        if q <= K:
            best = min(best, abs(p - q * GOLDEN_INV))
    return best


def test_small_divisor_minimum_matches_continued_fraction_oracle():
    for K in (5, 13, 32):
        val, k = small_divisor_minimum((1.0, GOLDEN_INV), K)
        assert val == pytest.approx(golden_min_divisor(K), rel=1e-12)


def test_diophantine_table_monotone_and_positive():
    table = estimate_diophantine((1.0, GOLDEN_INV), 32, [0.05, 0.1, 0.2], [1.0, 2.0])
    etas = [r[2] for r in table.rows if r[0] == "eta"]
    assert all(b >= a for a, b in zip(etas, etas[1:]))
    assert table.gamma("tau", 1.0) > 0.3  # golden mean is badly approximable
    with pytest.raises(ResonantMode):
        estimate_diophantine((1.0, 1.0), 4, [0.1])


def test_diophantine_params_validation():
    DiophantineParams(gamma=0.1, tau=1.5).check_tau(2)
    with pytest.raises(ValueError):
        DiophantineParams(gamma=0.1, tau=0.5).check_tau(2)
