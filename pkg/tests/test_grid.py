import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from viscous_hj.grid import (
    Domain,
    ShapeMismatchError,
    gradient_components,
    gradient_magnitude,
    laplacian,
    max_min,
    oscillation,
    q_norm,
    sup_norm,
)

from conftest import cos_mode

finite = st.floats(-1e3, 1e3, allow_nan=False)


class TestDomain:
    def test_derived_quantities(self):
        d = Domain.rectangle((3.0, 4.0), (31, 41))
        assert d.dimension == 2
        assert d.shape == (31, 41)
        assert d.size == 31 * 41
        assert d.spacing == pytest.approx((0.1, 0.1))
        assert d.diameter == pytest.approx(5.0)
        assert d.volume == pytest.approx(12.0)

    @pytest.mark.parametrize(
        "lengths, cells",
        [((0.0,), (10,)), ((-1.0,), (10,)), ((1.0,), (2,)), ((1.0, 1.0, 1.0), (5, 5, 5)), ((1.0,), (5, 5))],
    )
    def test_rejects_bad_geometry(self, lengths, cells):
        with pytest.raises(ValueError):
            Domain(lengths, cells)

    @pytest.mark.parametrize("d", [Domain.interval(2.0, 17), Domain.rectangle((2.0, 0.5), (9, 13))])
    def test_weights_sum_to_volume(self, d):
        assert d.weights.sum() == pytest.approx(d.volume, rel=1e-14)

    def test_check_rejects_wrong_shape(self, line):
        with pytest.raises(ShapeMismatchError):
            line.check(np.zeros(10))


class TestLaplacian:
    @pytest.mark.parametrize("c", [0.0, 3.5, -1e6])
    def test_constant_is_harmonic_exactly(self, square, c):
        assert np.array_equal(laplacian(np.full(square.shape, c), square), np.zeros(square.shape))

    def test_cosine_mode_second_order(self):
        # analytic Laplacian of the first Neumann eigenfunction on [0, 2]
        errs = []
        for n in (33, 65, 129):
            d = Domain.interval(2.0, n)
            f = cos_mode(d)
            errs.append(sup_norm(laplacian(f, d) + (np.pi / 2.0) ** 2 * f))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.02)
        assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.02)

    def test_quadratic_interior_exact(self):
        d = Domain.interval(1.0, 11)
        (x,) = d.mesh()
        lap = laplacian(x**2, d)
        assert np.allclose(lap[1:-1], 2.0, rtol=0, atol=1e-11)

    def test_mirror_boundary_row(self):
        d = Domain.interval(1.0, 5)
        f = np.array([1.0, 2.0, 0.0, 5.0, 3.0])
        h2 = d.spacing[0] ** 2
        lap = laplacian(f, d)
        assert lap[0] == pytest.approx(2 * (f[1] - f[0]) / h2)
        assert lap[-1] == pytest.approx(2 * (f[-2] - f[-1]) / h2)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (9, 7), elements=finite))
    def test_weighted_sum_vanishes(self, f):
        d = Domain.rectangle((1.0, 0.75), (9, 7))
        lap = laplacian(f, d)
        scale = max(sup_norm(lap), 1.0)
        assert abs(np.sum(d.weights * lap)) <= 1e-12 * scale * d.size

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, (8, 6), elements=finite), arrays(np.float64, (8, 6), elements=finite))
    def test_self_adjoint_under_weights(self, f, g):
        d = Domain.rectangle((1.0, 1.0), (8, 6))
        lhs = np.sum(d.weights * f * laplacian(g, d))
        rhs = np.sum(d.weights * g * laplacian(f, d))
        h2 = min(d.spacing) ** 2
        scale = sup_norm(f) * sup_norm(g) * d.volume / h2 + 1.0
        assert abs(lhs - rhs) <= 1e-13 * scale


class TestGradient:
    def test_constant_gives_zero(self, square):
        assert np.array_equal(gradient_magnitude(np.full(square.shape, 2.0), square), np.zeros(square.shape))

    @pytest.mark.parametrize("alpha", [1.0, -3.0, 0.25])
    def test_linear_interior_exact(self, line, alpha):
        (x,) = line.mesh()
        g = gradient_magnitude(alpha * x, line)
        assert np.allclose(g[1:-1], abs(alpha), rtol=1e-12)
        # the normal component is dropped on the faces
        assert g[0] == 0.0 and g[-1] == 0.0

    def test_cosine_second_order(self):
        errs = []
        for n in (33, 65, 129):
            d = Domain.interval(1.0, n)
            (x,) = d.mesh()
            errs.append(sup_norm(gradient_magnitude(np.cos(np.pi * x), d) - np.pi * np.abs(np.sin(np.pi * x))))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)
        assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.05)

    def test_tangential_component_kept_on_faces(self):
        d = Domain.rectangle((1.0, 1.0), (9, 9))
        x, y = d.mesh()
        gx, gy = gradient_components(x + 2 * y, d)
        assert np.allclose(gy[0, 1:-1], 2.0) and np.all(gx[0, :] == 0.0)

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, (7, 5), elements=finite))
    def test_nonnegative_and_zero_iff_constant(self, f):
        d = Domain.rectangle((1.0, 1.0), (7, 5))
        g = gradient_magnitude(f, d)
        assert np.all(g >= 0)
        if oscillation(f) == 0:
            assert np.all(g == 0)


class TestNorms:
    @pytest.mark.parametrize("c", [0.0, -2.0, 5.0])
    @pytest.mark.parametrize("q", [1.0, 2.0, 3.5])
    def test_constant(self, rect, c, q):
        f = np.full(rect.shape, c)
        assert sup_norm(f) == abs(c)
        assert q_norm(f, q, rect) == pytest.approx(abs(c) * rect.volume ** (1 / q), rel=1e-14)

    def test_unit_on_length_two(self):
        d = Domain.interval(2.0, 21)
        assert q_norm(np.ones(d.shape), 2.0, d) == pytest.approx(np.sqrt(2.0), rel=1e-14)

    def test_q_below_one_rejected(self, line):
        with pytest.raises(ValueError):
            q_norm(np.ones(line.shape), 0.5, line)

    def test_large_q_no_overflow(self, line):
        f = np.full(line.shape, 1e200)
        assert q_norm(f, 50.0, line) == pytest.approx(1e200, rel=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (6, 4), elements=finite), st.floats(1.0, 10.0))
    def test_q_norm_below_scaled_sup(self, f, q):
        d = Domain.rectangle((1.5, 0.5), (6, 4))
        assert q_norm(f, q, d) <= sup_norm(f) * d.volume ** (1 / q) * (1 + 1e-12)

    def test_max_min_and_oscillation(self):
        f = np.array([-1.0, 0.0, 3.0])
        assert max_min(f) == (3.0, -1.0)
        assert oscillation(f) == 4.0

    def test_cosine_oscillation_exactly_two(self, line):
        assert oscillation(cos_mode(line)) == 2.0

    @pytest.mark.parametrize("fn", [sup_norm, max_min, oscillation])
    def test_empty_field_rejected(self, fn):
        with pytest.raises(ValueError):
            fn(np.array([]))
