import numpy as np
import pytest
from scipy import integrate

from ahampbe.aham import (
    HePolynomialLedger,
    ProblemSpec,
    accelerated_he,
    evaluate_solution,
    iterate,
    iterate_aham,
    iterate_classic,
    solution_from_json,
    solution_moment,
    solution_to_json,
)
from ahampbe.expoly import ExpPoly, TermCountError, TimeField, time_integrate
from ahampbe.hopt import ResidualGrid, optimize_h
from ahampbe.kernels import builtin_kernel
from ahampbe.pbe_ops import OperatorSplit, aggregation_M


def mu2_example_41(s, tau, h):
    return h * tau * np.exp(-s) * (
        1 - s / 2 + h - h * s / 2
        + h * tau * (-3 * s / 4 + 3 / 4 + s**2 / 8)
        + h**2 * tau**2 * (1 / 6 - s / 4 + s**2 / 12 - s**3 / 144)
    )


def mu2_example_43(s, tau, h):
    return -(1 / 544320) * h * tau * np.exp(-s) * s * (
        h**2 * tau**2 * (s**4 - 144 * s**2 + 3024) * s**4
        - 756 * h * (s * (tau * (s**4 - 60 * s**2 + 360) - 60 * s) + 720)
        + 45360 * (s**2 - 12)
    )


class TestFirstIterates:
    def test_example_41(self, problems):
        mu1 = iterate_aham(problems["4.1"], 1.0, 1).iterates[1]
        assert mu1.degrees == [1]
        ref = ExpPoly([(1.0, 0, 1), (-0.5, 1, 1)])
        assert mu1.coefficient(1).equals(ref, rtol=1e-14)

    def test_example_44(self, problems):
        mu1 = iterate_aham(problems["4.4"], 1.0, 1).iterates[1]
        ref = ExpPoly([(4.0, 2, 2), (4.0, 1, 2), (-4 / 3, 4, 2)])
        assert mu1.coefficient(1).equals(ref, rtol=1e-14)

    def test_example_46(self, problems):
        mu1 = iterate_aham(problems["4.6"], 1.0, 1).iterates[1]
        ref = ExpPoly([(-4 / 3, 3, 2), (2.0, 2, 2), (2.0, 1, 2), (-1.0, 0, 2)])
        assert mu1.coefficient(1).equals(ref, rtol=1e-14)

    def test_linear_in_h(self, problems):
        a = iterate_aham(problems["4.2"], 1.0, 1).iterates[1]
        b = iterate_aham(problems["4.2"], -0.37, 1).iterates[1]
        assert (a * -0.37).equals(b, rtol=1e-15)


class TestSecondIterates:
    def test_example_41_formula(self, problems, rng):
        for s, tau, h in zip(rng.uniform(0, 10, 10), rng.uniform(0, 3, 10), rng.uniform(-2, -0.05, 10)):
            mu2 = iterate_aham(problems["4.1"], h, 2).iterates[2]
            assert mu2(s, tau) == pytest.approx(mu2_example_41(s, tau, h), rel=1e-10, abs=1e-300)

    def test_example_43_formula(self, problems, rng):
        """The printed second iterate is reproduced; it follows from M[e^-s] = s(1 - s^2/12) e^-s."""
        for s, tau, h in zip(rng.uniform(0.1, 8, 10), rng.uniform(0.05, 1, 10), rng.uniform(-1.5, -0.1, 10)):
            mu2 = iterate_aham(problems["4.3"], h, 2).iterates[2]
            assert mu2(s, tau) == pytest.approx(mu2_example_43(s, tau, h), rel=1e-10)

    def test_he_spot_check(self, problems):
        mu2 = iterate_aham(problems["4.1"], -1.0, 2).iterates[2]
        assert mu2(1.0, 0.5) == pytest.approx(mu2_example_41(1.0, 0.5, -1.0), rel=1e-12)


class TestClassic:
    def test_first_iterates_coincide(self, problems):
        a = iterate_aham(problems["4.1"], -1.0, 1)
        c = iterate_classic(problems["4.1"], -1.0, 1)
        assert a.iterates[1].equals(c.iterates[1])

    def test_adomian_second_term(self, problems):
        p = problems["4.1"]
        c = iterate_classic(p, -1.0, 2)
        mu0, mu1 = c.iterates[:2]
        oracle = time_integrate(aggregation_M(p.split, mu0, mu1) * -2.0)
        assert (c.iterates[2] - oracle).equals(TimeField.zero()) or all(
            f.max_abs_coeff() < 1e-14 for _, f in (c.iterates[2] - oracle).coeffs)

    def test_difference_to_accelerated(self, problems):
        p, h = problems["4.2"], -0.8
        a = iterate_aham(p, h, 2)
        c = iterate_classic(p, h, 2)
        mu1 = a.iterates[1]
        expected = time_integrate(aggregation_M(p.split, mu1) * -h)
        diff = c.iterates[2] - a.iterates[2] - expected
        assert all(f.max_abs_coeff() < 1e-13 for _, f in diff.coeffs)

    def test_table_taylor_value(self, problems):
        sol = iterate_classic(problems["4.1"], -1.0, 3)
        assert evaluate_solution(sol, 5.0, 0.5) == pytest.approx(1.16686e-2, rel=1e-5)


class TestStructure:
    def test_zero_initial_part(self, problems):
        sol = iterate_aham(problems["4.6"], -0.8, 3)
        assert sol.iterates[0].degrees == [0]
        for mu in sol.iterates[1:]:
            assert 0 not in mu.degrees

    def test_ledger_telescopes(self, problems):
        p = problems["4.2"]
        sol = iterate_aham(p, -0.9, 3)
        ledger = HePolynomialLedger()
        for k in range(3):
            accelerated_he(p.split, sol.iterates, ledger)
            psi = sol.partial_sum(k + 1)
            diff = ledger.cumulative - aggregation_M(p.split, psi)
            assert all(f.max_abs_coeff() < 1e-13 for _, f in diff.coeffs)

    def test_ledger_needs_iterates(self, problems):
        p = problems["4.1"]
        with pytest.raises(ValueError):
            accelerated_he(p.split, [TimeField.lift(p.c0)], HePolynomialLedger([TimeField.zero()]))

    def test_single_term_is_initial_condition(self, problems):
        sol = iterate_aham(problems["4.1"], -0.7, 2)
        s = np.linspace(0, 5, 6)
        np.testing.assert_allclose(evaluate_solution(sol, s, 1.3, n_terms=1), np.exp(-s), rtol=1e-15)

    @pytest.mark.parametrize("n_terms", [1, 2, 3, 4])
    def test_mass_conserved(self, problems, n_terms):
        sol = iterate_aham(problems["4.1"], -0.9, 3)
        assert solution_moment(sol, 1, 2.0, n_terms) == pytest.approx(1.0, abs=1e-12)

    def test_bad_arguments(self, problems):
        with pytest.raises(ValueError):
            iterate(problems["4.1"], 0.0, 2)
        with pytest.raises(ValueError):
            iterate(problems["4.1"], -1.0, 0)
        with pytest.raises(ValueError):
            iterate(problems["4.1"], -1.0, 2, mode="adomian")
        with pytest.raises(ValueError):
            ProblemSpec(problems["4.1"].c0, problems["4.1"].split, 0.0)

    def test_term_cap(self, problems):
        with pytest.raises(TermCountError, match="iterate"):
            iterate(problems["4.2"], -1.0, 4, term_cap=5)

    def test_json_roundtrip(self, problems):
        sol = iterate_aham(problems["4.5"], -0.8, 2)
        back = solution_from_json(solution_to_json(sol))
        assert back.h == sol.h and back.K == sol.K and back.mode == sol.mode
        for a, b in zip(sol.iterates, back.iterates):
            assert a.equals(b)

    def test_deterministic(self, problems):
        a = iterate_aham(problems["4.6"], -0.83, 3)
        b = iterate_aham(problems["4.6"], -0.83, 3)
        assert solution_to_json(a) == solution_to_json(b)


class TestConvergence:
    def test_successive_terms_shrink(self, problems):
        """Consecutive iterates decrease in L1 at tau = 0.5 for the breakage example."""
        p = problems["4.6"]
        h = optimize_h(p, ResidualGrid.uniform(20, 10.0, 0.5), 4).h_star
        sol = iterate_aham(p, h, 4)

        def l1(mu):
            return integrate.quad(lambda s: abs(float(mu(s, 0.5))), 0, 40, limit=200)[0]

        norms = [l1(mu) for mu in sol.iterates[1:]]
        assert all(b < a for a, b in zip(norms, norms[1:])), norms

    def test_no_aggregation_leaves_initial_condition(self):
        zero_kernel = OperatorSplit(builtin_kernel("constant").__class__(((0.0, 0, 0),)))
        p = ProblemSpec(ExpPoly([(1.0, 0, 1)]), zero_kernel, 1.0)
        sol = iterate_aham(p, -0.5, 3)
        for mu in sol.iterates[1:]:
            assert all(f.max_abs_coeff() == 0.0 for _, f in mu.coeffs)
