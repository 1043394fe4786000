import io

import numpy as np
import pytest

from qpresponse.errors import ConfigError, StepTooLarge
from qpresponse.fourier import FourierSeries, NormParams, sobolev_norm
from qpresponse.problem import FourierTaylor, ProblemSpec
from qpresponse.solver import solve_response
from qpresponse.verify import manufacture, residual_norm, rk4_shadow, scaling_study

from .conftest import cosine, standard_forcing, standard_problem

NORM = NormParams(0.1, 2.0)


def test_residual_of_trivial_pair_is_zero():
    p = ProblemSpec(l=3, omega=[1.0], epsilon=1.0, f=FourierTaylor((), d=1))
    rep = residual_norm(p, 0.0, FourierSeries.zeros(1, 4), 64)
    assert rep.sup == 0 and rep.l2 == 0 and rep.samples == 64


def test_residual_detects_a_wrong_solution():
    V_star = cosine(0.01)
    p = manufacture(3, [1.0], -0.1, V_star)
    assert residual_norm(p, -0.1, V_star).sup <= 1e-12
    assert residual_norm(p, -0.1, V_star * 1.01).sup > 1e-5
    with pytest.raises(ConfigError):
        residual_norm(p, -0.1, V_star, grid_size=4)


def test_manufactured_forcing_has_prescribed_average():
    for l, a_star in ((3, -0.1), (2, -0.1), (4, 0.2)):
        p = manufacture(l, [1.0], a_star, cosine(0.01))
        fbar = p.f.terms[(0, (0,))][0]
        assert fbar == pytest.approx(-(a_star**l), rel=1e-12)
        r = solve_response(p, 32, NORM)
        assert r.a == pytest.approx(a_star, abs=1e-15)


def test_manufacture_with_zero_correction_is_constant_forcing():
    p = manufacture(3, [1.0], -0.1, FourierSeries.zeros(1, 2))
    assert p.f.degrees == [0] and p.f.max_mode == 0
    r = solve_response(p, 16, NORM)
    assert sobolev_norm(r.V, NORM) == 0
    with pytest.raises(ConfigError):
        manufacture(3, [1.0], 0.0, cosine(0.01))


def test_shadow_direction_rule_and_equilibrium():
    f = FourierTaylor([(0, (0,), 1.0)], d=1)
    p = ProblemSpec(l=3, omega=[1.0], epsilon=1e-3, f=f)
    rep = rk4_shadow(p, -0.1, FourierSeries.zeros(1, 2), 10.0, 1e-2)
    assert rep.direction == "backward"
    assert rep.max_error <= 1e-14
    # l = 2, a = -0.1 gives l a^{l-1} = -0.2 < 0, so forward in time attracts
    p2 = ProblemSpec(l=2, omega=[1.0], epsilon=-0.01, f=f, branch=1)
    assert rk4_shadow(p2, -0.1, FourierSeries.zeros(1, 2), 1.0, 1e-2).direction == "forward"


def test_shadow_follows_converged_solution():
    r = solve_response(standard_problem(1e-3), 32, NORM)
    rep = rk4_shadow(standard_problem(1e-3), r.a, r.V, 20.0, 1e-2)
    assert rep.max_error <= 1e-9


def test_shadow_rejects_large_steps_and_vector_problems():
    V = cosine(0.02)
    p = manufacture(3, [20.0], -0.1, V)
    with pytest.raises(StepTooLarge):
        rk4_shadow(p, -0.1, V, 1.0, 0.2)
    vec = ProblemSpec(l=3, omega=[1.0], epsilon=1e-3, f=FourierTaylor([(0, (0,), 1.0)], d=1, n=2))
    with pytest.raises(ConfigError):
        rk4_shadow(vec, np.array([-0.1, -0.1]), FourierSeries.zeros(1, 2, 2), 1.0, 0.1)


def test_scaling_study_slopes():
    rep = scaling_study(standard_problem(), [1e-2, 1e-3, 1e-4], 32, NORM)
    assert rep.complete and len(rep.rows) == 3
    assert rep.slopes["abs_a"] == pytest.approx(1 / 3, abs=1e-10)
    assert rep.slopes["op_norm"] == pytest.approx(-2 / 3, abs=1e-6)
    assert rep.slopes["norm_V"] >= 0.9
    buf = io.StringIO()
    rep.write_table(buf)
    assert len(buf.getvalue().splitlines()) == 4
    buf = io.StringIO()
    rep.write_fit(buf)
    assert buf.getvalue().startswith("quantity,slope,max_deviation")


def test_scaling_study_preconditions_and_partial_failure():
    with pytest.raises(ConfigError):
        scaling_study(standard_problem(), [1e-2, 1e-3], 32, NORM)
    with pytest.raises(ConfigError):
        scaling_study(standard_problem(), [1e-2, 2e-3, 1e-3], 32, NORM)

    def family(e):
        return ProblemSpec(l=2, omega=[1.0], epsilon=e, f=standard_forcing(), branch=1)

    rep = scaling_study(family, [-1e-2, -1e-3, 1e-4], 32, NORM)
    assert not rep.complete and len(rep.rows) == 2
    assert "NoRealBranch" in rep.error
