import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracsteklov.kernel import (
    KernelSpec,
    QuadratureControl,
    QuadratureError,
    bbm_constant,
    disjoint_order,
    gauss_jacobi,
    kernel_tail_mass,
    singular_double_integral,
)


class TestKernelSpec:
    def test_exponent(self):
        spec = KernelSpec(0.5, 2.0)
        assert spec.exponent == -2.0
        assert spec.sp == 1.0
        assert spec(0.0, 2.0) == pytest.approx(0.25)

    @pytest.mark.parametrize("s,p,n", [(0.0, 2, 1), (1.0, 2, 1), (0.5, 1.0, 1), (0.5, math.inf, 1), (0.5, 2, 0)])
    def test_invalid(self, s, p, n):
        with pytest.raises(ValueError):
            KernelSpec(s, p, n)

    def test_control_bounds(self):
        with pytest.raises(ValueError):
            QuadratureControl(levels=41)
        with pytest.raises(ValueError):
            QuadratureControl(order=1)
        with pytest.raises(ValueError):
            QuadratureControl(rtol=0.0)


class TestBBMConstant:
    def test_values(self):
        assert abs(bbm_constant(1, 2) - 1.0) <= 1e-14
        assert bbm_constant(2, 2) == pytest.approx(2 / math.pi, rel=1e-12)
        assert bbm_constant(1, 3) == pytest.approx(1.5, rel=1e-14)

    def test_large_arguments_do_not_overflow(self):
        # the Gamma values alone overflow a double here
        val = bbm_constant(200, 150.0)
        assert math.isfinite(val)
        assert math.log(val) == pytest.approx(
            math.log(150) + math.lgamma(175) - math.log(2) - 99.5 * math.log(math.pi) - math.lgamma(75.5), rel=1e-12
        )

    @pytest.mark.parametrize("n,p", [(1, 1.0), (0, 2.0), (1, 0.5)])
    def test_domain(self, n, p):
        with pytest.raises(ValueError):
            bbm_constant(n, p)


class TestTailMass:
    def test_values(self):
        assert kernel_tail_mass(1.0, KernelSpec(0.5, 2)) == pytest.approx(2.0)
        assert kernel_tail_mass(4.0, KernelSpec(0.5, 2)) == pytest.approx(0.5)
        assert kernel_tail_mass(1.0, KernelSpec(0.9, 2)) == pytest.approx(2 / 1.8)

    def test_domain(self):
        with pytest.raises(ValueError):
            kernel_tail_mass(0.0, KernelSpec(0.5, 2))

    def test_monotone(self):
        spec = KernelSpec(0.6, 2)
        Rs = [1.5, 2.0, 4.0, 8.0]
        vals = [kernel_tail_mass(R, spec) for R in Rs]
        assert all(b < a for a, b in zip(vals, vals[1:]))
        ss = [0.3, 0.5, 0.7, 0.9]
        vals = [kernel_tail_mass(2.0, KernelSpec(s, 2)) for s in ss]
        assert all(b < a for a, b in zip(vals, vals[1:]))


class TestSingularIntegral:
    @pytest.mark.parametrize("s", [0.3, 0.5, 0.7, 0.9, 0.99])
    def test_diagonal_closed_form(self, s):
        g = lambda x, y: (x - y) ** 2  # noqa: E731
        val = singular_double_integral((0, 1), (0, 1), -(1 + 2 * s), g, diag_order=2)
        assert val == pytest.approx(2 / ((2 - 2 * s) * (3 - 2 * s)), rel=1e-9)

    def test_half_order_quadratic(self):
        g = lambda x, y: np.abs(x - y) ** 2  # noqa: E731
        assert singular_double_integral((0, 1), (0, 1), -2.0, g, diag_order=2) == pytest.approx(1.0, rel=1e-9)

    def test_disjoint_log(self):
        val = singular_double_integral((0, 1), (2, 3), -2.0, 1.0)
        assert val == pytest.approx(math.log(4 / 3), rel=1e-12)

    def test_zero_integrand(self):
        assert singular_double_integral((0, 1), (0, 1), -1.5, 0.0, diag_order=2) == 0.0

    def test_touching_closed_form(self):
        # int_0^1 int_1^2 (y - x)^(-1/2) = (4/3)(2^(3/2) - 2)
        val = singular_double_integral((0, 1), (1, 2), -0.5, 1.0)
        assert val == pytest.approx(4 / 3 * (2**1.5 - 2), rel=1e-9)

    def test_overlap_split_consistency(self):
        g = lambda x, y: (x - y) ** 2 * (1 + x * y)  # noqa: E731
        whole = singular_double_integral((0, 1), (0.25, 1.5), -1.8, g, diag_order=2)
        parts = singular_double_integral((0, 0.25), (0.25, 1.5), -1.8, g, diag_order=2) + singular_double_integral(
            (0.25, 1), (0.25, 1.5), -1.8, g, diag_order=2
        )
        assert whole == pytest.approx(parts, rel=1e-9)

    def test_symmetry(self):
        g = lambda x, y: np.cos(x - y) * (x - y) ** 2  # noqa: E731
        ab = singular_double_integral((0, 1), (0.5, 2), -2.2, g, diag_order=2)
        ba = singular_double_integral((0.5, 2), (0, 1), -2.2, g, diag_order=2)
        assert ab == pytest.approx(ba, rel=1e-9)

    def test_nonintegrable(self):
        with pytest.raises(ValueError):
            singular_double_integral((0, 1), (0, 1), -1.6, 1.0)

    def test_degenerate_cell(self):
        with pytest.raises(ValueError):
            singular_double_integral((0, 0), (0, 1), -1.0, 1.0)

    def test_non_convergence(self):
        g = lambda x, y: np.sin(1e4 * x) * (x - y) ** 2  # noqa: E731
        with pytest.raises(QuadratureError):
            singular_double_integral((0, 1), (0, 1), -1.5, g, QuadratureControl(order=2, levels=2, rtol=1e-14), 2)

    def test_disjoint_order_doubling_stable(self):
        g = lambda x, y: np.exp(x + y)  # noqa: E731
        lo = singular_double_integral((0, 1), (1.5, 2.5), -1.5, g, QuadratureControl(order=4))
        hi = singular_double_integral((0, 1), (1.5, 2.5), -1.5, g, QuadratureControl(order=16))
        assert lo == pytest.approx(hi, rel=1e-10)


class TestRules:
    def test_jacobi_moments(self):
        x, w = gauss_jacobi(6, -0.7, 2.0)
        for k in range(6):
            exact = 2.0 ** (k + 0.3) / (k + 0.3)
            assert np.dot(w, x**k) == pytest.approx(exact, rel=1e-12)

    def test_disjoint_order_monotone(self):
        n = disjoint_order(np.array([0.01, 0.1, 1.0, 10.0]), 1.0, 1e-10)
        assert np.all(np.diff(n) <= 0)
        assert n.min() >= 2 and n.max() <= 64


@settings(max_examples=25, deadline=None)
@given(
    lo=st.floats(-2, 2),
    len_a=st.floats(0.1, 2),
    gap=st.floats(0.05, 3),
    len_b=st.floats(0.1, 2),
    s=st.floats(0.1, 0.95),
)
def test_disjoint_pair_symmetric(lo, len_a, gap, len_b, s):
    a = (lo, lo + len_a)
    b = (a[1] + gap, a[1] + gap + len_b)
    g = lambda x, y: 1 + (x - y) ** 2  # noqa: E731
    ab = singular_double_integral(a, b, -(1 + 2 * s), g)
    ba = singular_double_integral(b, a, -(1 + 2 * s), g)
    assert ab == pytest.approx(ba, rel=1e-9)
