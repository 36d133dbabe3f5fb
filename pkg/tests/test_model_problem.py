import numpy as np
import pytest

from adesign.criterion import DesignProblem, objective
from adesign.errors import RootNotBracketed
from adesign.linalg import rng_stream
from adesign.model_problem import (
    ModelProblem,
    analytic_condition_number,
    empirical_condition_number,
    reduced_derivatives,
    reduced_objective,
)


class TestReducedObjective:
    def test_alpha_one_half_weight(self):
        assert reduced_objective(ModelProblem(1.0), 0.5) == pytest.approx(4.0 / 3.0, rel=1e-15)

    def test_alpha_one_zero_weight(self):
        assert reduced_objective(ModelProblem(1.0), 0.0) == pytest.approx(1.5, rel=1e-15)

    def test_symmetry(self):
        rng = rng_stream(60)
        for _ in range(30):
            mp = ModelProblem(float(10.0 ** rng.uniform(-4, 0)))
            w = float(rng.uniform(0.0, 1.0))
            assert reduced_objective(mp, w) == pytest.approx(
                reduced_objective(mp, 1.0 - w), rel=1e-14
            )

    def test_preconditioned_value(self):
        assert reduced_objective(ModelProblem(1.0, preconditioned=True), 0.5) == pytest.approx(
            -9.0 / 16.0, rel=1e-15
        )

    def test_domain_check(self):
        with pytest.raises(ValueError):
            reduced_objective(ModelProblem(1.0), 1.2)

    def test_matches_criterion_module(self):
        rng = rng_stream(61)
        for _ in range(20):
            alpha = float(10.0 ** rng.uniform(-3, 0))
            w = float(rng.uniform(0.0, 1.0))
            for pre in (False, True):
                mp = ModelProblem(alpha, preconditioned=pre)
                dp = DesignProblem(
                    jacobian=np.eye(2), prior_alpha=alpha, m_max=1, preconditioned=pre
                )
                assert reduced_objective(mp, w) == pytest.approx(
                    objective(dp, [w, 1.0 - w]), rel=1e-12
                )


class TestReducedDerivatives:
    def test_stationary_at_half(self):
        for alpha in [1e-4, 1e-2, 0.5, 1.0]:
            for pre in (False, True):
                d1, _ = reduced_derivatives(ModelProblem(alpha, preconditioned=pre), 0.5)
                assert abs(d1) <= 1e-14 * (1.0 + alpha ** 2)

    def test_curvature_at_half_alpha_one(self):
        _, d2 = reduced_derivatives(ModelProblem(1.0), 0.5)
        assert d2 == pytest.approx(4.0 / 3.375, rel=1e-14)

    def test_matches_central_differences(self):
        rng = rng_stream(62)
        for _ in range(20):
            alpha = float(10.0 ** rng.uniform(-2, 0))
            w = float(rng.uniform(0.1, 0.9))
            for pre in (False, True):
                mp = ModelProblem(alpha, preconditioned=pre)
                d1, d2 = reduced_derivatives(mp, w)
                h = 1e-6
                fd1 = (reduced_objective(mp, w + h) - reduced_objective(mp, w - h)) / (2 * h)
                # differencing cannot resolve below eps*|objective|/(2h)
                floor = 100.0 * 2.3e-16 * abs(reduced_objective(mp, w)) / (2.0 * h)
                assert d1 == pytest.approx(fd1, rel=1e-7, abs=floor)
                h2 = 1e-4  # second differences need the balanced larger step
                fd2 = (
                    reduced_objective(mp, w + h2)
                    - 2 * reduced_objective(mp, w)
                    + reduced_objective(mp, w - h2)
                ) / h2 ** 2
                assert d2 == pytest.approx(fd2, rel=1e-3, abs=1e-9)

    def test_shared_minimizer_on_grid(self):
        # argmin invariance of the monotone transform, checked by evaluation
        grid = np.linspace(0.0, 1.0, 101)
        for alpha in [1e-3, 0.1, 1.0]:
            for pre in (False, True):
                mp = ModelProblem(alpha, preconditioned=pre)
                values = [reduced_objective(mp, w) for w in grid]
                assert grid[int(np.argmin(values))] == pytest.approx(0.5)


class TestAnalyticConditionNumber:
    def test_alpha_one(self):
        assert analytic_condition_number(ModelProblem(1.0)) == pytest.approx(1.6875, rel=1e-15)

    def test_alpha_tenth(self):
        assert analytic_condition_number(ModelProblem(0.1)) == pytest.approx(
            578.8125, rel=1e-12
        )

    def test_preconditioned_always_two(self):
        for alpha in 10.0 ** np.linspace(-4, 0, 9):
            assert analytic_condition_number(ModelProblem(float(alpha), True)) == 2.0

    def test_small_alpha_scaling_law(self):
        # kappa * alpha^3 -> 1/2 as the prior quality improves
        kappa = analytic_condition_number(ModelProblem(1e-6))
        assert kappa * (1e-6) ** 3 == pytest.approx(0.5, rel=1e-3)


class TestEmpiricalConditionNumber:
    def test_alpha_one_explicit_eps(self):
        est = empirical_condition_number(ModelProblem(1.0), eps=1e-8)
        assert est == pytest.approx(1.6875, rel=1e-3)

    def test_small_alpha_matches_formula(self):
        mp = ModelProblem(1e-3)
        est = empirical_condition_number(mp)
        assert est == pytest.approx(analytic_condition_number(mp), rel=1e-2)

    def test_preconditioned_grid(self):
        for alpha in 10.0 ** np.linspace(-4, 0, 9):
            mp = ModelProblem(float(alpha), preconditioned=True)
            assert empirical_condition_number(mp) == pytest.approx(2.0, rel=1e-3)

    def test_both_variants_within_one_percent(self):
        for alpha in 10.0 ** np.linspace(-4, 0, 9):
            for pre in (False, True):
                mp = ModelProblem(float(alpha), preconditioned=pre)
                assert empirical_condition_number(mp) == pytest.approx(
                    analytic_condition_number(mp), rel=1e-2
                )

    def test_oversized_eps_not_bracketed(self):
        with pytest.raises(RootNotBracketed):
            empirical_condition_number(ModelProblem(1e-4), eps=1.0)

    def test_alpha_validation(self):
        with pytest.raises(ValueError):
            ModelProblem(0.0)
