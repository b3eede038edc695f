"""Tests for latent-strength inference: kernel quadrature, profile
regression, sigmoid fitting, strength updates, and the EM loop."""

import itertools
import math

import numpy as np
import pytest
from scipy.integrate import trapezoid
from scipy.stats import norm

from benchlab.label_model import MasterMap
from benchlab.strength_inference import (
    THETA_BOUNDS,
    EmConfig,
    SigmoidParams,
    StrengthField,
    StrengthGrid,
    _kernel_regression_curve,
    fit_theta,
    init_strengths,
    kernel_weights,
    response_prob,
    run_em,
    sigmoid,
    sigmoid_curve,
    update_mu,
    update_strength,
)

from conftest import make_master, random_master

GRID = StrengthGrid()


def independent_ise(theta, mu_grid: np.ndarray, grid: StrengthGrid) -> float:
    # Recomputed from the sigmoid formula, not via the fitter's objective.
    chi = grid.values
    z = np.clip(theta[1] - theta[0] * chi, -500.0, 500.0)
    s = theta[2] / (1.0 + np.exp(z)) - theta[3]
    return float(trapezoid((s - mu_grid) ** 2, chi))


class TestSigmoid:
    def test_midpoint_exact(self):
        # offset/slope = 0.5 puts the inflection there: exp(0) = 1 exactly.
        theta = SigmoidParams(12.0, 6.0, 1.0, 0.0)
        assert sigmoid(0.5, theta) == 0.5

    def test_curve_matches_scalar(self):
        theta = SigmoidParams(9.0, 3.0, 0.9, 0.05)
        curve = sigmoid_curve(theta, GRID.values)
        for j, chi in enumerate(GRID.values):
            assert curve[j] == pytest.approx(sigmoid(float(chi), theta), abs=1e-15)

    def test_shift_and_scale(self):
        # Large slope saturates: high end -> scale - shift, low end -> -shift.
        theta = SigmoidParams(50.0, 25.0, 2.0, 0.5)
        assert sigmoid(1.0, theta) == pytest.approx(1.5, abs=1e-9)
        assert sigmoid(0.0, theta) == pytest.approx(-0.5, abs=1e-9)

    def test_rejects_negative_slope_or_scale(self):
        with pytest.raises(ValueError):
            SigmoidParams(-1.0, 0.0, 1.0, 0.0)
        with pytest.raises(ValueError):
            SigmoidParams(1.0, 0.0, -0.5, 0.0)


class TestStrengthGrid:
    def test_values_and_step(self):
        grid = StrengthGrid(size=11)
        assert grid.values[0] == 0.0
        assert grid.values[-1] == 1.0
        assert grid.step == pytest.approx(0.1, abs=1e-15)
        assert np.allclose(np.diff(grid.values), grid.step, atol=1e-15)

    def test_clamp(self):
        grid = StrengthGrid(epsilon=0.01)
        assert grid.clamp(0.0) == 0.01
        assert grid.clamp(1.0) == 0.99
        assert grid.clamp(0.5) == 0.5

    def test_validation(self):
        with pytest.raises(ValueError):
            StrengthGrid(size=1)
        with pytest.raises(ValueError):
            StrengthGrid(sigma=0.0)
        with pytest.raises(ValueError):
            StrengthGrid(epsilon=0.5)
        with pytest.raises(ValueError):
            StrengthGrid(epsilon=-0.1)


class TestKernelWeights:
    def test_riemann_sum_is_one(self):
        # Normalization target: plain grid sum times step equals 1, so a
        # constant integrates to itself.
        for x in [0.0, 0.013, 0.25, 0.5, 0.77, 1.0]:
            w = kernel_weights(x, GRID)
            assert abs(float(w.sum()) * GRID.step - 1.0) <= 1e-12

    def test_riemann_sum_is_one_other_grids(self):
        for grid in [StrengthGrid(size=51), StrengthGrid(size=11, sigma=0.05)]:
            for x in [0.0, 0.3, 1.0]:
                w = kernel_weights(x, grid)
                assert abs(float(w.sum()) * grid.step - 1.0) <= 1e-12

    def test_matches_normal_pdf(self):
        # Independent oracle: scipy's normal density, same truncation and
        # renormalization.
        rng = np.random.default_rng(7)
        for _ in range(20):
            x = float(rng.uniform(0.0, 1.0))
            raw = norm.pdf(GRID.values, loc=x, scale=GRID.sigma)
            expected = raw / (raw.sum() * GRID.step)
            assert np.allclose(kernel_weights(x, GRID), expected, atol=1e-12)

    def test_array_rows_match_scalar_calls(self):
        xs = np.array([0.0, 0.1, 0.5, 0.93, 1.0])
        batch = kernel_weights(xs, GRID)
        assert batch.shape == (5, GRID.size)
        for i, x in enumerate(xs):
            assert np.array_equal(batch[i], kernel_weights(float(x), GRID))

    def test_peak_at_x(self):
        for x in [0.2, 0.5, 0.8]:
            w = kernel_weights(x, GRID)
            peak = GRID.values[int(np.argmax(w))]
            assert abs(peak - x) <= GRID.step / 2 + 1e-12


class TestResponseProb:
    def test_constant_profile_identity(self):
        # A flat profile should pass through the soft vote unchanged.
        for c in [GRID.epsilon, 0.3, 0.7, 1.0 - GRID.epsilon]:
            mu = np.full(GRID.size, c)
            p = response_prob(1, mu, GRID.values, GRID)
            assert np.all(np.abs(p - c) <= 1e-6)

    def test_scalar_return_type(self):
        mu = np.full(GRID.size, 0.3)
        p = response_prob(1, mu, 0.5, GRID)
        assert isinstance(p, float)

    def test_complement_exact(self):
        rng = np.random.default_rng(11)
        mu = rng.uniform(0.0, 1.0, GRID.size)
        xs = rng.uniform(0.0, 1.0, 17)
        p1 = response_prob(1, mu, xs, GRID)
        p0 = response_prob(0, mu, xs, GRID)
        assert np.array_equal(p0, 1.0 - p1)
        x = 0.42
        assert response_prob(0, mu, x, GRID) == 1.0 - response_prob(1, mu, x, GRID)

    def test_pure_python_oracle(self):
        # Weighted grid average recomputed with plain floats: the
        # normalization cancels to sum(w*mu)/sum(w).
        rng = np.random.default_rng(23)
        for _ in range(10):
            mu = rng.uniform(0.0, 1.0, GRID.size)
            x = float(rng.uniform(0.0, 1.0))
            ws = [
                math.exp(-0.5 * ((x - float(chi)) / GRID.sigma) ** 2)
                for chi in GRID.values
            ]
            expected = sum(w * m for w, m in zip(ws, mu)) / sum(ws)
            expected = min(max(expected, GRID.epsilon), 1.0 - GRID.epsilon)
            assert response_prob(1, mu, x, GRID) == pytest.approx(expected, abs=1e-12)

    def test_clamped_at_extremes(self):
        zeros = np.zeros(GRID.size)
        ones = np.ones(GRID.size)
        assert response_prob(1, zeros, 0.5, GRID) == GRID.epsilon
        assert response_prob(0, ones, 0.5, GRID) == pytest.approx(GRID.epsilon, abs=1e-12)
        rng = np.random.default_rng(5)
        mu = rng.uniform(0.0, 1.0, GRID.size)
        p = response_prob(1, mu, rng.uniform(0.0, 1.0, 50), GRID)
        assert np.all(p >= GRID.epsilon) and np.all(p <= 1.0 - GRID.epsilon)

    def test_array_matches_scalar_calls(self):
        rng = np.random.default_rng(31)
        mu = rng.uniform(0.0, 1.0, GRID.size)
        xs = rng.uniform(0.0, 1.0, 9)
        batch = response_prob(1, mu, xs, GRID)
        for i, x in enumerate(xs):
            assert batch[i] == response_prob(1, mu, float(x), GRID)


class TestKernelRegression:
    def test_two_pixel_closed_form(self):
        # With one 0-response at 0.3 and one 1-response at 0.7 the estimate
        # is k2/(k1+k2) pointwise.
        x = np.array([0.3, 0.7])
        y = np.array([0, 1])
        curve = _kernel_regression_curve(x, y, GRID)
        for j, chi in enumerate(GRID.values):
            k1 = math.exp(-0.5 * ((float(chi) - 0.3) / GRID.sigma) ** 2)
            k2 = math.exp(-0.5 * ((float(chi) - 0.7) / GRID.sigma) ** 2)
            expected = min(max(k2 / (k1 + k2), GRID.epsilon), 1.0 - GRID.epsilon)
            assert curve[j] == pytest.approx(expected, abs=1e-12)

    def test_pixel_permutation_bit_exact(self):
        # Grid-valued strengths tie often; the canonical summation order
        # must make any input ordering produce identical bits.
        rng = np.random.default_rng(43)
        for _ in range(10):
            x = rng.choice(GRID.values, size=60)
            y = rng.integers(0, 2, size=60)
            base = _kernel_regression_curve(x, y, GRID)
            for _ in range(5):
                perm = rng.permutation(60)
                shuffled = _kernel_regression_curve(x[perm], y[perm], GRID)
                assert np.array_equal(base, shuffled)

    def test_constant_responses_hit_clamp(self):
        rng = np.random.default_rng(3)
        x = rng.uniform(0.0, 1.0, 25)
        ones = _kernel_regression_curve(x, np.ones(25, dtype=np.int8), GRID)
        zeros = _kernel_regression_curve(x, np.zeros(25, dtype=np.int8), GRID)
        assert np.all(ones == 1.0 - GRID.epsilon)
        assert np.all(zeros == GRID.epsilon)

    def test_far_grid_points_fall_back(self):
        # A very narrow kernel leaves distant grid points with no mass, so
        # they take the uninformative value (clamp leaves 0.5 alone).
        grid = StrengthGrid(size=101, sigma=0.01)
        curve = _kernel_regression_curve(
            np.array([0.0]), np.array([1]), grid
        )
        assert curve[-1] == 0.5
        assert curve[0] == 1.0 - grid.epsilon

    def test_update_mu_matches_direct_call(self, rng):
        master = random_master(rng, 40, 3)
        strengths = init_strengths(master)
        ids = [px.pixel_id for px in master.pixels]
        x = strengths.as_array(ids)
        for l in range(3):
            y = np.array([px.responses[l] for px in master.pixels], dtype=np.int8)
            direct = _kernel_regression_curve(x, y, GRID)
            assert np.array_equal(update_mu(strengths, l, master, GRID), direct)


class TestFitTheta:
    def test_recovers_generated_sigmoid(self):
        for true in [
            SigmoidParams(12.0, 6.0, 1.0, 0.0),
            SigmoidParams(8.0, 2.0, 0.9, 0.0),
            SigmoidParams(20.0, 10.0, 1.0, 0.1),
        ]:
            mu = sigmoid_curve(true, GRID.values)
            fit = fit_theta(mu, GRID)
            assert independent_ise(fit.as_tuple(), mu, GRID) <= 1e-6

    def test_within_bounds(self):
        rng = np.random.default_rng(17)
        for _ in range(3):
            mu = np.clip(rng.uniform(0.0, 1.0, GRID.size), 0.0, 1.0)
            fit = fit_theta(mu, GRID)
            for v, (lo, hi) in zip(fit.as_tuple(), THETA_BOUNDS):
                assert lo <= v <= hi

    def test_never_worse_than_seed_grid(self):
        # The fitter evaluates a fixed 4-per-axis mesh over the bounds; its
        # answer must beat the best mesh point we can find ourselves.
        rng = np.random.default_rng(29)
        mu = np.sort(rng.uniform(0.0, 1.0, GRID.size))
        fit = fit_theta(mu, GRID)
        axes = [np.linspace(lo, hi, 4) for lo, hi in THETA_BOUNDS]
        mesh_best = min(
            independent_ise(theta, mu, GRID)
            for theta in itertools.product(*axes)
        )
        assert independent_ise(fit.as_tuple(), mu, GRID) <= mesh_best + 1e-12

    def test_constant_curve(self):
        # slope 0 makes the sigmoid constant, so a flat curve fits exactly.
        mu = np.full(GRID.size, 0.3)
        fit = fit_theta(mu, GRID)
        assert independent_ise(fit.as_tuple(), mu, GRID) <= 1e-8

    def test_rejects_wrong_length(self):
        with pytest.raises(ValueError):
            fit_theta(np.zeros(GRID.size + 1), GRID)


def brute_strength(responses, profiles, grid: StrengthGrid) -> float:
    # Exhaustive scan with the same elementary log calls but independent
    # loop, tie (first strict max), and summation-order logic.
    best_chi = float(grid.values[0])
    best_ll = -math.inf
    for chi in grid.values:
        terms = []
        for l, mu in enumerate(profiles):
            p1 = response_prob(1, np.asarray(mu, dtype=float), float(chi), grid)
            if responses[l]:
                terms.append(float(np.log(p1)))
            else:
                terms.append(float(np.log1p(-p1)))
        terms.sort()
        ll = 0.0
        for t in terms:
            ll = ll + t
        if ll > best_ll:
            best_ll = ll
            best_chi = float(chi)
    return best_chi


class TestUpdateStrength:
    def test_matches_exhaustive_scan(self):
        rng = np.random.default_rng(61)
        for _ in range(30):
            n_labelers = int(rng.integers(2, 6))
            profiles = [
                np.asarray(GRID.clamp(np.sort(rng.uniform(0.0, 1.0, GRID.size))))
                for _ in range(n_labelers)
            ]
            responses = rng.integers(0, 2, n_labelers).tolist()
            got = update_strength(responses, profiles, GRID)
            assert got == brute_strength(responses, profiles, GRID)

    def test_strong_profile_pulls_strength_up(self):
        # One steep labeler marking the pixel should push the estimate
        # toward the high end.
        theta = SigmoidParams(12.0, 6.0, 1.0, 0.0)
        mu = np.asarray(GRID.clamp(sigmoid_curve(theta, GRID.values)))
        high = update_strength([1, 1, 1], [mu, mu, mu], GRID)
        low = update_strength([0, 0, 0], [mu, mu, mu], GRID)
        assert high > 0.5 > low

    def test_rejects_profile_count_mismatch(self):
        mu = np.full(GRID.size, 0.5)
        with pytest.raises(ValueError):
            update_strength([1, 0], [mu], GRID)


class TestEmConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            EmConfig(mu_mode="spline")
        with pytest.raises(ValueError):
            EmConfig(max_iters=0)

    def test_make_grid(self):
        grid = EmConfig(sigma=0.2, grid_size=51, epsilon=0.01).make_grid()
        assert grid.size == 51
        assert grid.sigma == 0.2
        assert grid.epsilon == 0.01


class TestStrengthField:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            StrengthField({0: 1.5})

    def test_ids_sorted_and_as_array(self):
        field = StrengthField({3: 0.3, 1: 0.1, 2: 0.2})
        assert field.ids() == [1, 2, 3]
        assert np.array_equal(field.as_array(), [0.1, 0.2, 0.3])
        assert np.array_equal(field.as_array([2, 1]), [0.2, 0.1])
        assert field[3] == 0.3
        assert len(field) == 3

    def test_init_strengths_mean_response(self):
        master = make_master(
            [(0, 0), (0, 1), (0, 2)],
            [(1, 1, 1, 1), (1, 1, 0, 0), (0, 1, 0, 0)],
        )
        init = init_strengths(master)
        assert init[0] == 1.0
        assert init[1] == 0.5
        assert init[2] == 0.25


class TestRunEm:
    def test_deterministic(self, rng):
        master = random_master(rng, 80, 4)
        config = EmConfig(max_iters=5)
        a = run_em(master, config)
        b = run_em(master, config)
        assert a.strengths.strengths == b.strengths.strengths
        assert a.history == b.history
        assert a.iterations_run == b.iterations_run
        for pa, pb in zip(a.profiles, b.profiles):
            assert pa.theta == pb.theta
            assert np.array_equal(pa.curve, pb.curve)

    def test_labeler_permutation_bit_exact(self, rng):
        master = random_master(rng, 60, 4)
        perm = [2, 0, 3, 1]
        permuted = make_master(
            [px.position for px in master.pixels],
            [tuple(px.responses[j] for j in perm) for px in master.pixels],
            width=master.width,
            height=master.height,
            labeler_ids=tuple(master.labeler_ids[j] for j in perm),
        )
        config = EmConfig(max_iters=4)
        base = run_em(master, config)
        swapped = run_em(permuted, config)
        assert base.strengths.strengths == swapped.strengths.strengths
        assert base.history == swapped.history
        for j_new, j_old in enumerate(perm):
            assert np.array_equal(
                swapped.profiles[j_new].curve, base.profiles[j_old].curve
            )
            assert swapped.profiles[j_new].labeler_id == base.profiles[j_old].labeler_id

    def test_pixel_order_bit_exact(self, rng):
        master = random_master(rng, 60, 3)
        reversed_master = make_master(
            [px.position for px in reversed(master.pixels)],
            [px.responses for px in reversed(master.pixels)],
            width=master.width,
            height=master.height,
        )
        # Pixel ids follow input order in the helper, so map via position.
        config = EmConfig(max_iters=4)
        base = run_em(master, config)
        flipped = run_em(reversed_master, config)
        by_pos_base = {
            px.position: base.strengths[px.pixel_id] for px in master.pixels
        }
        by_pos_flip = {
            px.position: flipped.strengths[px.pixel_id]
            for px in reversed_master.pixels
        }
        assert by_pos_base == by_pos_flip
        assert base.history == flipped.history

    def test_single_pattern_flagged_degenerate(self):
        master = make_master(
            [(0, 0), (0, 1), (0, 2)],
            [(1, 0), (1, 0), (1, 0)],
        )
        result = run_em(master, EmConfig(max_iters=3))
        assert result.degenerate
        values = set(result.strengths.strengths.values())
        assert len(values) == 1

    def test_varied_pattern_not_degenerate(self):
        master = make_master(
            [(0, 0), (0, 1)],
            [(1, 0), (0, 1)],
        )
        assert not run_em(master, EmConfig(max_iters=2)).degenerate

    def test_empty_master_rejected(self):
        master = MasterMap(
            image_id="img", width=4, height=4, labeler_ids=("a", "b"), pixels=()
        )
        with pytest.raises(ValueError):
            run_em(master)

    def test_raw_mode_runs(self, rng):
        master = random_master(rng, 40, 3)
        result = run_em(master, EmConfig(max_iters=3, mu_mode="raw"))
        arr = result.strengths.as_array()
        assert np.all(arr >= 0.0) and np.all(arr <= 1.0)
        assert len(result.profiles) == 3

    def test_huge_tol_stops_after_one_iteration(self, rng):
        master = random_master(rng, 40, 3)
        result = run_em(master, EmConfig(tol=1.1))
        assert result.iterations_run == 1
        assert len(result.history) == 1
        assert result.final_max_delta == result.history[0]

    def test_history_matches_iterations(self, rng):
        master = random_master(rng, 50, 3)
        result = run_em(master, EmConfig(max_iters=6))
        assert len(result.history) == result.iterations_run
        assert result.final_max_delta == result.history[-1]

    def test_separates_strong_and_weak(self):
        # Pixels everyone marks should land above pixels nobody but one
        # labeler marks.
        positions = [(i // 8, i % 8) for i in range(48)]
        responses = [(1, 1, 1) if i < 24 else (1, 0, 0) for i in range(48)]
        master = make_master(positions, responses, width=8, height=8)
        result = run_em(master, EmConfig())
        strong = [result.strengths[px.pixel_id] for px in master.pixels[:24]]
        weak = [result.strengths[px.pixel_id] for px in master.pixels[24:]]
        assert min(strong) > max(weak)
