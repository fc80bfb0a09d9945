"""Neighborhood construction and the whole filter family.

Hand-evaluated oracles: the two-element strip sensitivity filter, the
3x3 checkerboard density filter center value, and neighborhood counts
enumerated from grid-center distances.
"""

import math

import numpy as np
import pytest

from topolab import (
    FilterSpec,
    apply_density_filter,
    build_filter_matrix,
    build_mesh,
    build_neighborhoods,
    density_filter_chain_rule,
    erode_dilate,
    erode_dilate_chain_rule,
    filter_matrix_invertibility_check,
    filter_sensitivities,
    heaviside_chain_rule,
    heaviside_project,
)
from topolab.filters import GAMMA_S


def table_for(nx, ny, h=1.0, **spec_kwargs):
    spec_kwargs.setdefault("kind", "density")
    spec_kwargs.setdefault("r", 1.5 * h)
    spec = FilterSpec(**spec_kwargs)
    return build_neighborhoods(build_mesh(nx, ny, h, "custom"), spec), spec


class TestFilterSpec:
    def test_defaults_are_inert(self):
        spec = FilterSpec()
        assert spec.kind == "none"
        assert spec.beta == 0.0

    @pytest.mark.parametrize(
        "kwargs, match",
        [
            ({"kind": "blur"}, "unknown filter kind"),
            ({"weighting": "gaussian"}, "unknown weighting"),
            ({"mean": "median"}, "unknown mean"),
            ({"kind": "density", "r": 0.0}, "radius must be positive"),
            ({"kind": "sensitivity", "r": -1.0}, "radius must be positive"),
            ({"beta": -0.5}, "sharpness"),
            ({"kind": "erode", "r": 1.5, "mean": "geometric", "epsilon": 0.0}, "epsilon"),
            ({"kind": "dilate", "r": 1.5, "mean": "harmonic", "epsilon": -1e-3}, "epsilon"),
        ],
    )
    def test_rejects_bad_parameters(self, kwargs, match):
        with pytest.raises(ValueError, match=match):
            FilterSpec(**kwargs)

    def test_epsilon_unused_by_arithmetic_mean(self):
        # the shift only matters for log/reciprocal means
        FilterSpec(kind="erode", r=1.5, mean="arithmetic", epsilon=0.0)

    def test_no_table_for_kind_none(self):
        mesh = build_mesh(4, 3, 1.0, "custom")
        with pytest.raises(ValueError, match="none"):
            build_neighborhoods(mesh, FilterSpec(kind="none"))


class TestNeighborhoods:
    def test_half_h_radius_is_singleton(self):
        table, _ = table_for(5, 4, r=0.5)
        assert np.array_equal(table.neighbor_counts(), np.ones(20, dtype=int))
        assert np.array_equal(table.indices, np.arange(20))

    def test_radius_h_counts(self):
        # membership is ||x_i - x_e|| <= r, so the 4 edge neighbors at
        # distance exactly h are included (with zero linear weight)
        table, _ = table_for(5, 4, r=1.0)
        counts = table.neighbor_counts().reshape(4, 5)
        assert counts[1, 2] == 5
        assert counts[0, 0] == 3
        assert counts[0, 2] == 4

    def test_radius_1p5h_counts(self):
        table, _ = table_for(5, 4, r=1.5)
        counts = table.neighbor_counts().reshape(4, 5)
        assert counts[1, 2] == 9
        assert counts[0, 0] == 4
        assert counts[0, 2] == 6

    def test_membership_is_symmetric(self):
        table, _ = table_for(4, 3, r=1.5)
        pairs = set(zip(table.rows.tolist(), table.indices.tolist()))
        assert pairs == {(i, e) for e, i in pairs}

    def test_linear_weights_peak_at_center(self):
        table, spec = table_for(5, 4, r=1.5)
        self_mask = table.rows == table.indices
        assert np.all(table.weights[self_mask] == spec.r)
        assert np.all(table.weights <= spec.r)
        assert np.all(table.weights >= 0.0)

    def test_weight_vanishes_exactly_at_radius(self):
        table, _ = table_for(5, 4, r=1.0)
        # per interior element: 4 axis neighbors at distance exactly r
        interior_zero = np.sum(table.weights == 0.0)
        assert interior_zero == np.sum(table.neighbor_counts()) - 20

    def test_constant_weighting_is_flat(self):
        table, _ = table_for(4, 3, r=1.5, weighting="constant")
        assert np.all(table.weights == 1.0)

    def test_radius_in_physical_units(self):
        # same stencil when r scales with h
        coarse, _ = table_for(5, 4, h=1.0, r=1.5)
        fine, _ = table_for(5, 4, h=0.25, r=1.5 * 0.25)
        assert np.array_equal(coarse.indices, fine.indices)
        assert np.array_equal(coarse.indptr, fine.indptr)


class TestSensitivityFilter:
    def test_singleton_neighborhood_is_identity(self):
        table, _ = table_for(5, 4, r=0.5, kind="sensitivity")
        rng = np.random.default_rng(3)
        rho = rng.uniform(0.1, 1.0, 20)
        grad = -rng.uniform(0.5, 2.0, 20)
        filtered = filter_sensitivities(table, rho, grad)
        np.testing.assert_allclose(filtered, grad, rtol=1e-14)

    def test_uniform_inputs_are_fixed_point(self):
        table, _ = table_for(5, 4, r=1.5, kind="sensitivity")
        filtered = filter_sensitivities(table, np.full(20, 0.6), np.full(20, -3.0))
        np.testing.assert_allclose(filtered, -3.0, rtol=1e-12)

    def test_two_element_strip_hand_value(self):
        # 2x1 strip, r = 1.5h: weights (1.5, 0.5) about each element.
        # filtered_0 = (1.5*1*(-2) + 0.5*0.5*(-4)) / (1 * 2) = -2 exactly
        table, _ = table_for(2, 1, r=1.5, kind="sensitivity")
        filtered = filter_sensitivities(
            table, np.array([1.0, 0.5]), np.array([-2.0, -4.0])
        )
        assert np.array_equal(filtered, [-2.0, -4.0])

    def test_gamma_floor_guards_void_elements(self):
        table, _ = table_for(2, 1, r=1.5, kind="sensitivity")
        rho = np.array([0.0, 1.0])
        grad = np.array([-2.0, -4.0])
        filtered = filter_sensitivities(table, rho, grad)
        # numerator 0.5*1*(-4) = -2, denominator gamma_s * 2
        np.testing.assert_allclose(filtered[0], -2.0 / (2.0 * GAMMA_S), rtol=1e-12)
        loose = filter_sensitivities(table, rho, grad, gamma=0.5)
        np.testing.assert_allclose(loose[0], -2.0 / 1.0, rtol=1e-12)

    def test_preserves_ascent_direction_and_input(self):
        table, _ = table_for(6, 4, r=1.5, kind="sensitivity")
        rng = np.random.default_rng(11)
        rho = rng.uniform(0.05, 1.0, 24)
        grad = -np.abs(rng.normal(size=24)) - 1e-3
        grad_before = grad.copy()
        filtered = filter_sensitivities(table, rho, grad)
        assert float(grad @ filtered) > 0.0
        assert np.all(filtered < 0.0)
        np.testing.assert_array_equal(grad, grad_before)

    def test_rejects_bad_inputs(self):
        table, _ = table_for(3, 2, r=1.5, kind="sensitivity")
        with pytest.raises(ValueError, match="one entry per element"):
            filter_sensitivities(table, np.ones(6), np.ones(5))
        with pytest.raises(ValueError, match="gamma"):
            filter_sensitivities(table, np.ones(6), np.ones(6), gamma=0.0)


class TestDensityFilter:
    def test_half_h_radius_gives_identity_matrix(self):
        table, _ = table_for(4, 3, r=0.5)
        A = build_filter_matrix(table)
        assert np.array_equal(A.toarray(), np.eye(12))

    def test_rows_stochastic_entries_nonnegative(self):
        table, _ = table_for(7, 5, r=2.5)
        A = build_filter_matrix(table)
        np.testing.assert_allclose(
            np.asarray(A.sum(axis=1)).ravel(), 1.0, atol=1e-12
        )
        assert np.all(A.data >= 0.0)

    def test_checkerboard_center_value(self):
        # 3x3 mesh, corners-and-center solid: the center row collects
        # weight 1.5 from itself and 1.5 - sqrt(2) from each diagonal
        table, _ = table_for(3, 3, r=1.5)
        rho = np.zeros(9)
        rho[[0, 2, 4, 6, 8]] = 1.0
        phys = apply_density_filter(build_filter_matrix(table), rho)
        w_diag = 1.5 - math.sqrt(2.0)
        expected = (1.5 + 4 * w_diag) / (1.5 + 4 * 0.5 + 4 * w_diag)
        assert abs(phys[4] - expected) < 1e-12
        assert abs(expected - 0.4795929871418925) < 1e-15

    def test_box_is_preserved(self):
        table, _ = table_for(6, 4, r=1.5)
        A = build_filter_matrix(table)
        rng = np.random.default_rng(7)
        for _ in range(5):
            phys = apply_density_filter(A, rng.uniform(0.0, 1.0, 24))
            assert np.all(phys >= 0.0) and np.all(phys <= 1.0)

    def test_uniform_field_is_fixed_point(self):
        table, _ = table_for(6, 4, r=1.5)
        A = build_filter_matrix(table)
        np.testing.assert_allclose(
            apply_density_filter(A, np.full(24, 0.37)), 0.37, atol=1e-12
        )

    def test_chain_rule_is_transpose(self):
        table, _ = table_for(5, 4, r=1.5)
        A = build_filter_matrix(table)
        rng = np.random.default_rng(5)
        g = rng.normal(size=20)
        np.testing.assert_array_equal(
            density_filter_chain_rule(A, g), A.T @ g
        )

    def test_chain_rule_matches_finite_differences(self):
        table, _ = table_for(5, 4, r=1.5)
        A = build_filter_matrix(table)
        rng = np.random.default_rng(9)
        rho = rng.uniform(0.2, 0.8, 20)

        def objective(x):
            y = A @ x
            return 0.5 * float(y @ y)

        grad = density_filter_chain_rule(A, A @ rho)
        delta = 1e-6
        for e in [0, 7, 13, 19]:
            probe = rho.copy()
            probe[e] = rho[e] + delta
            up = objective(probe)
            probe[e] = rho[e] - delta
            down = objective(probe)
            fd = (up - down) / (2 * delta)
            assert abs(fd - grad[e]) < 1e-6 * max(1.0, abs(grad[e]))


class TestHeaviside:
    def test_beta_zero_is_exact_identity(self):
        rng = np.random.default_rng(13)
        rho = rng.uniform(0.0, 1.0, 50)
        assert np.array_equal(heaviside_project(rho, 0.0), rho)

    @pytest.mark.parametrize("beta", [0.0, 1.0, 8.0, 64.0, 512.0])
    def test_endpoints_fixed_for_all_beta(self, beta):
        out = heaviside_project(np.array([0.0, 1.0]), beta)
        assert out[0] == 0.0
        assert abs(out[1] - 1.0) < 1e-15

    def test_monotone_and_in_box(self):
        grid = np.linspace(0.0, 1.0, 1000)
        out = heaviside_project(grid, 8.0)
        assert np.all(np.diff(out) >= 0.0)
        assert np.all((out >= 0.0) & (out <= 1.0))

    def test_sharp_limit_thresholds(self):
        out = heaviside_project(np.array([0.3]), 1e3)
        assert out[0] == 1.0

    def test_chain_rule_positive_multiplier(self):
        rho = np.linspace(0.0, 1.0, 11)
        pulled = heaviside_chain_rule(rho, 8.0, -np.ones(11))
        assert np.all(pulled < 0.0)

    def test_chain_rule_matches_finite_differences(self):
        rng = np.random.default_rng(17)
        rho = rng.uniform(0.05, 0.95, 15)
        g = rng.normal(size=15)
        beta = 4.0

        def objective(x):
            return float(g @ heaviside_project(x, beta))

        grad = heaviside_chain_rule(rho, beta, g)
        delta = 1e-6
        for e in [0, 6, 14]:
            probe = rho.copy()
            probe[e] = rho[e] + delta
            up = objective(probe)
            probe[e] = rho[e] - delta
            down = objective(probe)
            fd = (up - down) / (2 * delta)
            assert abs(fd - grad[e]) < 1e-8 * max(1.0, abs(grad[e]))

    def test_rejects_negative_beta_and_shape_mismatch(self):
        with pytest.raises(ValueError, match="sharpness"):
            heaviside_project(np.ones(3), -1.0)
        with pytest.raises(ValueError, match="sharpness"):
            heaviside_chain_rule(np.ones(3), -1.0, np.ones(3))
        with pytest.raises(ValueError, match="matching shapes"):
            heaviside_chain_rule(np.ones(3), 2.0, np.ones(4))


class TestErodeDilate:
    @pytest.mark.parametrize("kind", ["erode", "dilate"])
    @pytest.mark.parametrize("mean", ["arithmetic", "geometric", "harmonic"])
    def test_uniform_field_is_fixed_point(self, kind, mean):
        table, spec = table_for(4, 4, r=1.5, kind=kind, mean=mean)
        out = erode_dilate(table, np.full(16, 0.37), spec)
        np.testing.assert_allclose(out, 0.37, atol=1e-12)

    @pytest.mark.parametrize("mean", ["arithmetic", "geometric", "harmonic"])
    def test_saturated_fields_stay_saturated(self, mean):
        table, erode = table_for(4, 4, r=1.5, kind="erode", mean=mean)
        _, dilate = table_for(4, 4, r=1.5, kind="dilate", mean=mean)
        np.testing.assert_allclose(erode_dilate(table, np.ones(16), erode), 1.0, atol=1e-12)
        np.testing.assert_allclose(erode_dilate(table, np.zeros(16), dilate), 0.0, atol=1e-12)

    def test_harmonic_erosion_approaches_min(self):
        # every r=1.5h window of a checkerboard contains a void element,
        # so the small-epsilon harmonic mean collapses toward zero
        table, spec = table_for(5, 4, r=1.5, kind="erode", mean="harmonic", epsilon=1e-6)
        ex, ey = np.meshgrid(np.arange(5), np.arange(4))
        rho = ((ex + ey) % 2).astype(float).ravel()
        out = erode_dilate(table, rho, spec)
        assert np.all(out < 1e-5)

    @pytest.mark.parametrize("mean", ["arithmetic", "geometric", "harmonic"])
    def test_dilate_is_dual_of_erode(self, mean):
        table, dilate = table_for(5, 4, r=1.5, kind="dilate", mean=mean)
        _, erode = table_for(5, 4, r=1.5, kind="erode", mean=mean)
        rng = np.random.default_rng(19)
        rho = rng.uniform(0.0, 1.0, 20)
        np.testing.assert_allclose(
            erode_dilate(table, rho, dilate),
            1.0 - erode_dilate(table, 1.0 - rho, erode),
            atol=1e-12,
        )

    def test_dilation_spreads_solid(self):
        table, spec = table_for(5, 5, r=1.5, kind="dilate", mean="arithmetic")
        rho = np.zeros(25)
        rho[12] = 1.0
        out = erode_dilate(table, rho, spec)
        grown = out.reshape(5, 5)
        assert grown[2, 2] > grown[1, 2] > 0.0
        assert grown[0, 0] == 0.0

    @pytest.mark.parametrize("kind", ["erode", "dilate"])
    @pytest.mark.parametrize("mean", ["arithmetic", "geometric", "harmonic"])
    def test_chain_rule_matches_finite_differences(self, kind, mean):
        table, spec = table_for(5, 4, r=1.5, kind=kind, mean=mean)
        rng = np.random.default_rng(23)
        rho = rng.uniform(0.05, 0.95, 20)
        g = rng.normal(size=20)

        def objective(x):
            return float(g @ erode_dilate(table, x, spec))

        grad = erode_dilate_chain_rule(table, rho, spec, g)
        delta = 1e-6
        for e in [0, 7, 13, 19]:
            probe = rho.copy()
            probe[e] = rho[e] + delta
            up = objective(probe)
            probe[e] = rho[e] - delta
            down = objective(probe)
            fd = (up - down) / (2 * delta)
            assert abs(fd - grad[e]) < 1e-5 * max(1.0, abs(grad[e]))

    @pytest.mark.parametrize("mean", ["arithmetic", "geometric", "harmonic"])
    def test_dilate_midpoint_convexity_sample(self, mean):
        table, spec = table_for(4, 3, r=1.5, kind="dilate", mean=mean)
        rng = np.random.default_rng(29)
        for _ in range(20):
            a = rng.uniform(0.0, 1.0, 12)
            b = rng.uniform(0.0, 1.0, 12)
            mid = erode_dilate(table, 0.5 * (a + b), spec)
            avg = 0.5 * (erode_dilate(table, a, spec) + erode_dilate(table, b, spec))
            assert np.all(mid <= avg + 1e-10)

    def test_wrong_kind_raises(self):
        table, _ = table_for(3, 2, r=1.5)
        bad = FilterSpec(kind="density", r=1.5)
        with pytest.raises(ValueError, match="not erode or dilate"):
            erode_dilate(table, np.ones(6), bad)
        with pytest.raises(ValueError, match="not erode or dilate"):
            erode_dilate_chain_rule(table, np.ones(6), bad, np.ones(6))


class TestInvertibilityCheck:
    def test_identity_matrix_is_clean(self):
        table, _ = table_for(4, 3, r=0.5)
        report = filter_matrix_invertibility_check(build_filter_matrix(table))
        assert report.invertible
        assert report.rank == 12
        assert abs(report.min_singular_value - 1.0) < 1e-12
        assert report.duplicate_row_pairs == []

    def test_constant_weight_strip_shares_rows(self):
        # both elements of a 2x1 strip see the same neighborhood with the
        # same constant weights, so A has two identical rows
        table, _ = table_for(2, 1, r=1.5, weighting="constant")
        A = build_filter_matrix(table)
        assert np.array_equal(A.toarray(), np.full((2, 2), 0.5))
        report = filter_matrix_invertibility_check(A)
        assert not report.invertible
        assert report.rank == 1
        assert report.min_singular_value < 1e-12
        assert report.duplicate_row_pairs == [(0, 1)]

    def test_linear_weights_keep_moderate_mesh_invertible(self):
        table, _ = table_for(12, 6, r=1.5)
        report = filter_matrix_invertibility_check(build_filter_matrix(table))
        assert report.invertible
        assert report.rank == 72
        assert report.duplicate_row_pairs == []
