import importlib
import math

import numpy as np
import pytest
from scipy.integrate import simpson

from ahampbe import _fvm_py, fvm
from ahampbe.aham import iterate_aham
from ahampbe.analytic import exact_constant, exact_sum
from ahampbe.kernels import BreakageSpec, SeparableKernel, builtin_kernel


def exp_ic(s):
    return np.exp(-s)


@pytest.fixture(scope="module")
def constant_runs():
    out = {}
    for n in (400, 800):
        g = fvm.build_grid(1e-3, 60.0, n)
        out[n] = fvm.fvm_solve(builtin_kernel("constant"), exp_ic, g, 2.0)
    return out


class TestGrid:
    def test_uniform_widths(self):
        g = fvm.build_grid(0.01, 10.01, 1000, "uniform")
        np.testing.assert_allclose(g.widths, 0.01, rtol=1e-9)

    def test_geometric_ratio(self):
        g = fvm.build_grid(1e-3, 10.0, 100)
        np.testing.assert_allclose(g.edges[1:-1] / g.edges[:-2], 1e4 ** (1 / 100), rtol=1e-12)
        assert g.edges[-1] == 10.0

    def test_points_are_geometric_means(self):
        g = fvm.build_grid(1e-3, 10.0, 20)
        np.testing.assert_allclose(g.points, np.sqrt(g.edges[1:] * g.edges[:-1]))

    @pytest.mark.parametrize("args", [(1e-3, 10.0, 8), (0.0, 10.0, 100), (5.0, 1.0, 100)])
    def test_bad_arguments(self, args):
        with pytest.raises(ValueError):
            fvm.build_grid(*args)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            fvm.build_grid(1e-3, 10.0, 20, "chebyshev")


class TestConstantKernel:
    def test_l1_error(self, constant_runs):
        assert fvm.l1_distance(constant_runs[400], exact_constant) <= 1e-2

    def test_refinement(self, constant_runs):
        e400 = fvm.l1_distance(constant_runs[400], exact_constant)
        e800 = fvm.l1_distance(constant_runs[800], exact_constant)
        assert e400 / e800 >= 1.5

    def test_mass(self, constant_runs):
        sol = constant_runs[400]
        n1 = sol.moment(1)
        assert abs(n1 - sol.mass_initial) / sol.mass_initial <= 1e-8

    def test_count_follows_exact(self, constant_runs):
        assert constant_runs[800].moment(0) == pytest.approx(0.5, rel=1e-2)

    def test_nonnegative(self, constant_runs):
        assert np.all(constant_runs[400].values >= -1e-12)


class TestOtherKernels:
    def test_sum_kernel(self):
        g = fvm.build_grid(1e-3, 60.0, 400)
        sol = fvm.fvm_solve(builtin_kernel("sum"), exp_ic, g, 1.0)
        assert fvm.l1_distance(sol, exact_sum) <= 2e-2
        # mass that leaves the truncated domain is accounted for
        balance = sol.moment(1) + sol.mass_leak - sol.mass_initial
        assert abs(balance) / sol.mass_initial <= 1e-8
        assert sol.mass_leak > 0

    def test_brownian_agrees_with_series(self, problems):
        g = fvm.build_grid(1e-3, 60.0, 400)
        sol = fvm.fvm_solve(builtin_kernel("brownian"), lambda s: 4 * s * np.exp(-2 * s), g, 0.1)
        series = iterate_aham(problems["4.5"], -1.0, 2).partial_sum()
        l1 = np.sum(np.abs(series(g.points, 0.1) - sol.values) * g.widths)
        assert l1 <= 5e-2

    def test_callable_kernel(self):
        g = fvm.build_grid(1e-3, 60.0, 64)
        a = fvm.fvm_solve(builtin_kernel("constant"), exp_ic, g, 0.5)
        b = fvm.fvm_solve(lambda s, x: np.ones(np.broadcast(s, x).shape), exp_ic, g, 0.5)
        np.testing.assert_allclose(a.values, b.values, rtol=1e-14)

    def test_blow_up_detected(self):
        g = fvm.build_grid(1e-3, 60.0, 32)
        bad = SeparableKernel(((-50.0, 0, 0),))
        with pytest.raises(fvm.FVMStepError):
            fvm.fvm_solve(bad, exp_ic, g, 50.0, dt_cfl=0.05)

    def test_step_budget(self):
        g = fvm.build_grid(1e-3, 60.0, 32)
        with pytest.raises(fvm.FVMStepError):
            fvm.fvm_solve(SeparableKernel(((1e9, 0, 0),)), exp_ic, g, 1.0)

    def test_bad_horizon(self):
        with pytest.raises(ValueError):
            fvm.fvm_solve(builtin_kernel("constant"), exp_ic, fvm.build_grid(1e-3, 60.0, 32), 0.0)


class TestBackends:
    def _inputs(self, n=48):
        g = fvm.build_grid(1e-3, 60.0, n)
        x = g.points
        W = np.ascontiguousarray(builtin_kernel("sum")(x[:, None], x[None, :]))
        born = x[:, None] + x[None, :]
        target = np.searchsorted(g.edges, born, side="right") - 1
        target[born >= g.edges[-1]] = -1
        mass = fvm._cell_masses(g, exp_ic)
        return mass, x, W, np.ascontiguousarray(target, dtype=np.int64)

    def test_python_backend_conserves(self):
        mass, x, W, target = self._inputs()
        out = np.empty(len(x))
        leak = _fvm_py.pair_mass_rates(mass, x, W, target, out)
        assert abs(out.sum() + leak) <= 1e-12 * np.abs(out).sum()

    def test_compiled_matches_python(self):
        core = pytest.importorskip("ahampbe._fvm_core")
        mass, x, W, target = self._inputs()
        a, b = np.empty(len(x)), np.empty(len(x))
        la = _fvm_py.pair_mass_rates(mass, x, W, target, a)
        lb = core.pair_mass_rates(mass, x, W, target, b)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-16)
        assert la == pytest.approx(lb, rel=1e-12)

    def test_forced_fallback(self, monkeypatch):
        monkeypatch.setenv("AHAMPBE_PURE_PYTHON", "1")
        mod = importlib.reload(fvm)
        try:
            assert mod.BACKEND == "python"
        finally:
            monkeypatch.delenv("AHAMPBE_PURE_PYTHON")
            importlib.reload(fvm)


class TestExport:
    def test_csv(self):
        g = fvm.build_grid(1e-3, 60.0, 16)
        sol = fvm.fvm_solve(builtin_kernel("constant"), exp_ic, g, 0.1)
        lines = sol.to_csv().splitlines()
        assert lines[0] == "s,density" and len(lines) == 17
        s, c = map(float, lines[1].split(","))
        assert s == pytest.approx(g.points[0], rel=1e-8)


@pytest.fixture(scope="module")
def ref():
    return fvm.fine_reference(builtin_kernel("constant"), exp_ic, [1.0, 2.0], s_max=80.0)


class TestFineReference:
    def test_matches_exact(self, ref):
        s = ref.s[ref.s <= 10]
        for t in (1.0, 2.0):
            err = np.max(np.abs(ref.values[t][: len(s)] - exact_constant(s, t)))
            assert err <= 1e-10

    def test_evaluator(self, ref):
        mid = 0.005 + 0.01 * np.arange(100)
        np.testing.assert_allclose(ref(mid, 1.0), exact_constant(mid, 1.0), atol=1e-10)
        with pytest.raises(KeyError):
            ref(mid, 1.5)

    def test_breakage_conserves_mass(self):
        r = fvm.fine_reference(builtin_kernel("constant"), lambda s: 4 * s * np.exp(-2 * s), [1.0],
                               BreakageSpec(2, 1, 1, 0.5), s_max=30.0)
        v = r.values[1.0]
        # breakage leaves c(0) > 0, so trapezoid moments would carry an O(ds^2) error
        assert simpson(r.s * v, x=r.s) == pytest.approx(1.0, abs=1e-8)
        # binary breakage with S = s/2 balances aggregation in the particle count here
        assert simpson(v, x=r.s) == pytest.approx(1.0, abs=1e-8)

    def test_singular_kernel_rejected(self):
        with pytest.raises(ValueError):
            fvm.fine_reference(builtin_kernel("brownian"), exp_ic, [0.1])
