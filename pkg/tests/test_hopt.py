import math

import numpy as np
import pytest

from ahampbe.aham import ProblemSpec, iterate_aham
from ahampbe.expoly import ExpPoly
from ahampbe.hopt import ResidualGrid, e_of_h, optimize_h, residual, residual_field
from ahampbe.kernels import SeparableKernel
from ahampbe.pbe_ops import OperatorSplit


@pytest.fixture(scope="module")
def grid41():
    return ResidualGrid.uniform(K=20, s_max=10.0, t_max=2.0)


class TestResidual:
    def test_initial_guess_vanishes_at_two(self, problems):
        sol = iterate_aham(problems["4.1"], -1.0, 1)
        for tau in (0.0, 0.7, 2.5):
            assert residual(problems["4.1"], sol, 2.0, tau, n_terms=1) == pytest.approx(0.0, abs=1e-15)

    def test_initial_guess_at_origin(self, problems):
        sol = iterate_aham(problems["4.1"], -1.0, 1)
        assert residual(problems["4.1"], sol, 0.0, 1.0, n_terms=1) == pytest.approx(1.0, rel=1e-15)

    def test_residual_vanishes_at_time_zero_for_full_series(self, problems):
        """At tau = 0 the first iterate's derivative cancels the operator applied to c0 when h = -1."""
        sol = iterate_aham(problems["4.1"], -1.0, 3)
        s = np.linspace(0, 10, 11)
        np.testing.assert_allclose(residual(problems["4.1"], sol, s, 0.0), 0.0, atol=1e-14)


class TestEofH:
    def test_nonnegative(self, problems, grid41):
        for h in (-1.9, -1.0, -0.3):
            assert e_of_h(problems["4.1"], grid41, 2, h) >= 0.0

    def test_matches_naive_double_sum(self, problems, grid41):
        p, h = problems["4.2"], -0.75
        sol = iterate_aham(p, h, 2)
        R = residual_field(p, sol)
        naive = 0.0
        for s in grid41.s_nodes:
            for t in grid41.t_nodes:
                naive += float(R(s, t)) ** 2
        naive /= grid41.K**2
        assert e_of_h(p, grid41, 2, h) == pytest.approx(naive, rel=1e-12)

    def test_zero_operator_problem(self):
        p = ProblemSpec(ExpPoly([(1.0, 0, 1)]), OperatorSplit(SeparableKernel(((0.0, 0, 0),))), 1.0)
        g = ResidualGrid.uniform(10, 5.0, 1.0)
        for h in (-1.5, -0.5):
            assert e_of_h(p, g, 2, h) == 0.0

    def test_h_zero_rejected(self, problems, grid41):
        with pytest.raises(ValueError):
            e_of_h(problems["4.1"], grid41, 2, 0.0)


class TestGrid:
    def test_unequal_lengths(self):
        with pytest.raises(ValueError):
            ResidualGrid(np.linspace(0, 1, 5), np.linspace(0, 1, 6))

    def test_not_increasing(self):
        with pytest.raises(ValueError):
            ResidualGrid(np.array([0.0, 2.0, 1.0]), np.array([0.0, 1.0, 2.0]))

    def test_uniform(self):
        g = ResidualGrid.uniform(20, 10.0, 2.0)
        assert g.K == 20 and g.s_nodes[1] == pytest.approx(0.5) and g.t_nodes[-1] == 2.0


class TestOptimizer:
    def test_beats_scan(self, problems, grid41):
        rep = optimize_h(problems["4.1"], grid41, 2)
        assert rep.e_star <= min(e for _, e in rep.candidates)

    def test_refinement_monotone(self, problems, grid41):
        rep = optimize_h(problems["4.1"], grid41, 2)
        es = [e for _, e in rep.refinement]
        assert all(b <= a for a, b in zip(es, es[1:]))

    def test_refinement_tolerance(self, problems, grid41):
        rep = optimize_h(problems["4.1"], grid41, 3)
        step = (rep.bracket[1] - rep.bracket[0]) / 40
        assert len(rep.refinement) >= math.ceil(math.log(2 * step / 1e-4) / math.log(1 / 0.618034)) - 1

    def test_beats_minus_one(self, problems, grid41):
        rep = optimize_h(problems["4.1"], grid41, 3)
        assert rep.e_star <= e_of_h(problems["4.1"], grid41, 3, -1.0)

    def test_deterministic(self, problems, grid41):
        a = optimize_h(problems["4.6"], grid41, 2)
        b = optimize_h(problems["4.6"], grid41, 2)
        assert (a.h_star, a.e_star) == (b.h_star, b.e_star)
        assert a.to_dict() == b.to_dict()

    def test_ties_prefer_small_h(self):
        p = ProblemSpec(ExpPoly([(1.0, 0, 1)]), OperatorSplit(SeparableKernel(((0.0, 0, 0),))), 1.0)
        rep = optimize_h(p, ResidualGrid.uniform(10, 5.0, 1.0), 2)
        assert rep.e_star == 0.0 and rep.h_star == pytest.approx(-1e-3)

    def test_degenerate_bracket(self, problems, grid41):
        with pytest.raises(ValueError):
            optimize_h(problems["4.1"], grid41, 2, bracket=(-0.5, -0.5))

    def test_report_flags_unsafe_region(self, problems, grid41):
        rep = optimize_h(problems["4.1"], grid41, 2, bracket=(-2.0, -1.2))
        assert rep.outside_safe_region and rep.to_dict()["h_below_minus_one"]
