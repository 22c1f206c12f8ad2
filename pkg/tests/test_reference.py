import json
import math

import numpy as np
import pytest

from fracsteklov.reference import (
    ReferenceCache,
    SteklovRef,
    shooting_trajectory,
    steklov_linear,
    steklov_p_fem,
    steklov_p_shooting,
    steklov_reference,
)

TANH_HALF = math.tanh(0.5)


class TestLinear:
    def test_values(self):
        lam1, lam2 = steklov_linear(1.0)
        assert lam1 == pytest.approx(0.4621171573, abs=1e-10)
        assert lam1 == pytest.approx(TANH_HALF, abs=1e-12)
        assert lam2 == pytest.approx(2.1639534137, abs=1e-10)

    def test_direct_check(self):
        # cosh(x - 1/2) solves -u'' + u = 0 and u'/u at x = 1 is the eigenvalue
        x = 1.0
        assert math.sinh(x - 0.5) / math.cosh(x - 0.5) == pytest.approx(steklov_linear(1.0, 1)[0], rel=1e-15)

    def test_monotone_in_length(self):
        vals = [steklov_linear(L, 1)[0] for L in (0.5, 1, 2, 4, 8, 16, 32)]
        assert all(b > a for a, b in zip(vals, vals[1:]))
        assert vals[-1] == pytest.approx(1.0, abs=1e-6)

    def test_errors(self):
        with pytest.raises(ValueError):
            steklov_linear(0.0)
        with pytest.raises(ValueError):
            steklov_linear(1.0, k=3)


class TestShooting:
    def test_linear_case(self):
        assert steklov_p_shooting(2.0) == pytest.approx(TANH_HALF, abs=1e-8)

    def test_other_length(self):
        assert steklov_p_shooting(2.0, L=3.0) == pytest.approx(math.tanh(1.5), abs=1e-8)

    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0])
    def test_first_integral_conserved(self, p):
        sol = shooting_trajectory(p, ode_tol=1e-12)
        u, w = sol.y
        du = np.abs(w) ** (1 / (p - 1))
        first = (p - 1) * du**p - np.abs(u) ** p
        np.testing.assert_allclose(first, -1.0, atol=1e-9)

    def test_symmetric_start(self):
        sol = shooting_trajectory(3.0)
        # the series start has w ~ xi, so the flux vanishes at the midpoint
        assert sol.y[1, 0] == pytest.approx(sol.t[0], rel=1e-3)
        assert sol.t[0] <= 1e-4
        assert sol.y[0, 0] == pytest.approx(1.0, abs=1e-5)

    def test_errors(self):
        with pytest.raises(ValueError):
            steklov_p_shooting(1.0)
        with pytest.raises(ValueError):
            steklov_p_shooting(2.0, L=-1.0)


class TestFem:
    def test_linear_case(self):
        assert steklov_p_fem(2.0, h=1e-3) == pytest.approx(TANH_HALF, abs=1e-5)

    @pytest.mark.parametrize("p", [1.5, 3.0, 4.0])
    def test_cross_method(self, p):
        fem = steklov_p_fem(p, h=1e-3)
        assert fem == pytest.approx(steklov_p_shooting(p), abs=1e-4)
        assert 0 < fem < 0.5

    def test_refinement(self):
        vals = [steklov_p_fem(3.0, h=h) for h in (0.01, 0.005, 0.0025)]
        d1, d2 = abs(vals[1] - vals[0]), abs(vals[2] - vals[1])
        assert d1 < 4 * d2

    def test_upper_bound_from_constants(self):
        # coarse meshes still stay below the constant-function value 0.5
        assert steklov_p_fem(3.0, h=0.2) < 0.5

    def test_errors(self):
        with pytest.raises(ValueError):
            steklov_p_fem(1.0)
        with pytest.raises(ValueError):
            steklov_p_fem(2.0, h=0.3)


class TestReference:
    def test_closed_form(self):
        ref = steklov_reference(2.0)
        assert ref.method == "closed-form"
        assert ref.value == TANH_HALF
        assert ref.discrepancy < 1e-8

    def test_fem_with_cross_check(self):
        ref = steklov_reference(3.0)
        assert ref.method == "local-fem"
        assert ref.discrepancy < 1e-4

    def test_positive(self):
        with pytest.raises(ValueError):
            SteklovRef(2.0, 1.0, -0.1, "closed-form", 0.0)

    def test_cache(self, tmp_path):
        path = tmp_path / "refs.json"
        cache = ReferenceCache(str(path))
        first = cache.get(2.0)
        stored = json.loads(path.read_text())
        assert list(stored) == [ReferenceCache.key(2.0, 1.0)]
        again = ReferenceCache(str(path)).get(2.0)
        assert again == first

    def test_memory_cache(self):
        cache = ReferenceCache()
        assert cache.get(2.0, 2.0).value == pytest.approx(math.tanh(1.0))
