import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinflow.ensembles import (
    EnsembleSpec,
    ScalingFits,
    WeightModel,
    assign_weights,
    build_banded_constant,
    build_banded_regular,
    build_banded_variable,
    build_regular,
    first_attempt_success,
    fit_affine,
    fit_scalings,
    fit_stretched_exponential,
    fit_weight_model,
    observable_for,
    reach_bandwidth,
    sample,
)
from spinflow.errors import InfeasibleGraphError, ValidationError
from spinflow.graph_analysis import (
    adjacency_of,
    band_violations,
    constant_bandwidth,
    degree_formula,
    degrees,
    structural_adjacency,
)
from spinflow.spin_model import LocalitySpec, build_observable, spectral_norm

FULL_FITS = ScalingFits((4, 5, 6, 7), (1.0, 0.0), (0.0, 0.0))
MODEL = WeightModel((0.2, 0.1), 0.5)


def full_band(N):
    return constant_bandwidth(N, N)


class TestBandedRegular:
    def test_complete_graph_on_four_nodes(self):
        g = build_banded_regular(4, 3, full_band(4), seed=0)
        assert np.all(degrees(g) == 3)
        assert g.edge_count == 6

    def test_paper_profile_degrees(self):
        # Fig.-7-style case: 16 nodes, degree 7, band from (L=4, n=2, d=1)
        obs = build_observable(4, "randomised", 5)
        band = reach_bandwidth(obs, 2, 1)
        g = build_banded_regular(16, 7, band, seed=3)
        assert np.all(degrees(g) == 7)
        assert band_violations(g, band) == 0

    def test_validation_harness(self):
        obs = build_observable(6, "randomised", 42)
        band = reach_bandwidth(obs, 2, 1)
        rho = degree_formula(6, 2, 1)
        successes = 0
        for s in range(120):
            g = build_banded_regular(64, rho, band, seed=s)
            degs = degrees(g)
            assert degs.min() == degs.max() == rho
            assert band_violations(g, band) == 0
            successes += first_attempt_success(64, rho, band, seed=s)
        assert successes / 120 >= 0.8

    def test_infeasible_band_rejected(self):
        with pytest.raises(InfeasibleGraphError):
            build_banded_regular(64, 9, constant_bandwidth(64, 4), seed=0)

    def test_determinism(self):
        obs = build_observable(5, "randomised", 1)
        band = reach_bandwidth(obs, 2, 1)
        g1 = build_banded_regular(32, 9, band, seed=7)
        g2 = build_banded_regular(32, 9, band, seed=7)
        assert np.array_equal(g1.indices, g2.indices)


class TestBandedVariable:
    def test_edge_count_and_variance(self):
        obs = build_observable(8, "randomised", 2)
        band = reach_bandwidth(obs, 2, 1)
        rho = degree_formula(8, 2, 1)
        g = build_banded_variable(256, rho, band, seed=4)
        assert g.edge_count == 256 * rho // 2
        degs = degrees(g)
        assert degs.mean() == pytest.approx(rho)
        assert degs.var() > 0
        assert band_violations(g, band) == 0

    def test_mean_degree_within_one(self):
        obs = build_observable(6, "randomised", 3)
        band = reach_bandwidth(obs, 2, 1)
        rho = degree_formula(6, 2, 1)
        for s in range(5):
            g = build_banded_variable(64, rho, band, seed=s)
            assert abs(degrees(g).mean() - rho) <= 1.0


class TestBandedConstant:
    def test_reduces_to_regular_with_huge_band(self):
        g = build_banded_constant(32, 5, bmax=32, seed=1)
        assert np.all(degrees(g) == 5)

    def test_offsets_bounded(self):
        for s in range(30):
            g = build_banded_constant(64, 7, bmax=11, seed=s)
            u, v = g.edge_arrays()
            assert int((v - u).max()) <= 11
            assert np.all(degrees(g) == 7)

    def test_too_narrow_rejected(self):
        with pytest.raises(InfeasibleGraphError):
            build_banded_constant(64, 10, bmax=5, seed=0)


class TestRegular:
    def test_two_regular_on_four_nodes_is_cycle(self):
        # the only simple 2-regular graph on 4 labeled nodes is a 4-cycle
        for s in range(25):
            g = build_regular(4, 2, seed=s)
            assert np.all(degrees(g) == 2)
            seen = {0}
            j = 0
            prev = -1
            for _ in range(3):
                nbrs = [int(k) for k in g.neighbors(j) if k != prev]
                prev, j = j, nbrs[0]
                seen.add(j)
            assert len(seen) == 4

    def test_degree_and_edge_count(self):
        g = build_regular(20, 7, seed=0)
        assert np.all(degrees(g) == 7)
        assert g.edge_count == 70

    def test_odd_product_rejected(self):
        with pytest.raises(ValidationError):
            build_regular(5, 3, seed=0)

    def test_high_degree_path(self):
        g = build_regular(64, 15, seed=0)
        assert np.all(degrees(g) == 15)

    def test_uniformity_coarse(self):
        # gross-bias check at reduced draws; the full 1e5-draw 5-sigma version
        # runs in the acceptance suite
        counts = {}
        for s in range(3000):
            g = build_regular(6, 3, seed=s)
            u, v = g.edge_arrays()
            counts[tuple(zip(u.tolist(), v.tolist()))] = counts.get(
                tuple(zip(u.tolist(), v.tolist())), 0) + 1
        freqs = np.array(list(counts.values()))
        assert len(counts) == 70
        expect = 3000 / 70
        sigma = np.sqrt(3000 * (1 / 70) * (1 - 1 / 70))
        assert np.abs(freqs - expect).max() <= 5 * sigma


class TestAssignWeights:
    def test_zero_offdiagonal_gives_diagonal_matrix(self):
        g = build_regular(16, 3, seed=2)
        H = assign_weights(g, WeightModel((1.0, 0.0), 0.0, complex_off=False),
                           L=4, seed=0)
        assert np.all(H.rows == H.cols)

    def test_entry_statistics(self):
        g = build_regular(64, 9, seed=1)
        model = WeightModel((0.3, 0.1), 0.7)
        diag, off_re, off_im = [], [], []
        for s in range(100):
            H = assign_weights(g, model, L=6, seed=s)
            on = H.rows == H.cols
            diag.append(H.vals[on].real)
            off_re.append(H.vals[~on].real)
            off_im.append(H.vals[~on].imag)
        sd = np.concatenate(diag).std()
        so = np.concatenate(off_re + off_im).std()
        n_d, n_o = 6400, 2 * 100 * 64 * 9 // 2
        assert abs(sd - model.sigma_diag(6)) < 3 * model.sigma_diag(6) / np.sqrt(2 * n_d)
        assert abs(so - 0.7) < 3 * 0.7 / np.sqrt(2 * n_o)

    def test_full_diagonal_always_present(self):
        g = build_regular(32, 5, seed=3)
        H = assign_weights(g, MODEL, L=5, seed=1)
        assert np.count_nonzero(H.rows == H.cols) == 32

    def test_nonpositive_sigma_rejected(self):
        with pytest.raises(ValidationError):
            assign_weights(build_regular(8, 3, 0),
                           WeightModel((-1.0, 0.0), 0.5), L=3, seed=0)


@pytest.fixture(scope="module")
def reference():
    return WeightModel((0.37, 0.12), 0.67), FULL_FITS


class TestSample:
    def test_exh_is_normalized_exact_hamiltonian(self, reference):
        spec = EnsembleSpec("exh", LocalitySpec(5, 2, 1), "randomised", 3)
        H = sample(spec, *reference)
        assert spectral_norm(H) == pytest.approx(1.0, abs=1e-8)

    def test_exa_keeps_exact_adjacency(self, reference):
        loc = LocalitySpec(6, 2, 1)
        spec = EnsembleSpec("exa", loc, "randomised", 4)
        H = sample(spec, *reference)
        g = adjacency_of(H)
        ref = structural_adjacency(loc, observable_for(spec))
        assert np.array_equal(g.indptr, ref.indptr)
        assert np.array_equal(g.indices, ref.indices)

    def test_reg_variant_regular(self, reference):
        loc = LocalitySpec(5, 2, 1)
        H = sample(EnsembleSpec("reg", loc, "randomised", 5), *reference)
        assert np.all(degrees(adjacency_of(H)) == degree_formula(5, 2, 1))

    def test_equal_nonzero_counts_across_variants(self, reference):
        loc = LocalitySpec(6, 2, 1)
        counts = set()
        for variant in ("exh", "exa", "brf", "bvf", "brc", "reg"):
            for seed in (0, 1, 2):
                H = sample(EnsembleSpec(variant, loc, "randomised", seed),
                           *reference)
                counts.add(H.nnz_full)
        assert len(counts) == 1

    def test_bitwise_determinism(self, reference):
        for variant in ("exh", "brf", "reg"):
            spec = EnsembleSpec(variant, LocalitySpec(5, 2, 1), "randomised", 8)
            H1 = sample(spec, *reference)
            H2 = sample(spec, *reference)
            assert np.array_equal(H1.vals, H2.vals)
            assert np.array_equal(H1.rows, H2.rows)

    def test_unknown_variant_rejected(self):
        with pytest.raises(ValidationError):
            EnsembleSpec("foo", LocalitySpec(4, 2, 1))

    def test_homogeneous_mode_runs(self, reference):
        spec = EnsembleSpec("brf", LocalitySpec(5, 2, 1), "homogeneous", 2)
        H = sample(spec, *reference)
        assert spectral_norm(H) == pytest.approx(1.0, abs=1e-8)


class TestFits:
    def test_affine_exact_recovery(self):
        xs = [4, 5, 6, 7]
        ys = [2 * x + 1 for x in xs]
        assert fit_affine(xs, ys) == pytest.approx((1.0, 2.0))

    def test_affine_degenerate_design(self):
        with pytest.raises(ValidationError):
            fit_affine([3, 3, 3], [1.0, 2.0, 3.0])

    def test_stretched_exponential_recovery(self):
        xs = np.array([4.0, 5, 6, 7, 8])
        ys = np.exp(0.3 * xs ** 0.5)
        a, b = fit_stretched_exponential(xs, ys)
        assert a == pytest.approx(0.3, abs=1e-6)
        assert b == pytest.approx(0.5, abs=1e-6)

    def test_stretched_exponential_decaying(self):
        xs = np.array([4.0, 5, 6, 7, 8])
        ys = np.exp(-0.7 * xs ** 0.4)
        a, b = fit_stretched_exponential(xs, ys)
        assert a == pytest.approx(-0.7, abs=1e-6)
        assert b == pytest.approx(0.4, abs=1e-6)

    def test_fit_scalings_needs_four_sizes(self):
        with pytest.raises(ValidationError):
            fit_scalings(LocalitySpec(6, 2, 1), (4, 5, 6), 5, 0)

    def test_fit_scalings_smoke(self):
        fits = fit_scalings(LocalitySpec(7, 2, 1), (4, 5, 6, 7), 6, 0)
        assert fits.norm_coeffs[1] > 0           # raw norm grows with L
        assert len(fits.norm_residuals) == 4
        assert fits.delta_at(6) > 0

    def test_weight_model_smoke(self):
        model = fit_weight_model(LocalitySpec(7, 2, 1), (4, 5, 6, 7), 6, 0)
        assert model.sigma_diag(7) > model.sigma_diag(4)
        assert model.sigma_off > 0

    @given(st.floats(min_value=0.05, max_value=3.0),
           st.floats(min_value=-2.0, max_value=2.0))
    @settings(max_examples=30, deadline=None)
    def test_affine_roundtrip(self, slope, intercept):
        xs = np.array([4.0, 6, 8, 10])
        c0, c1 = fit_affine(xs, intercept + slope * xs)
        assert c1 == pytest.approx(slope, rel=1e-9, abs=1e-9)
        assert c0 == pytest.approx(intercept, rel=1e-9, abs=1e-9)


@pytest.mark.slow
class TestSlowInvariants:
    def test_reg_uniformity_smoke(self):
        # full 1e5-draw uniformity check over the 70 labeled 3-regular graphs
        # on 6 nodes, against 5-sigma multinomial bounds
        import itertools

        all_edges = list(itertools.combinations(range(6), 2))
        index = {e: i for i, e in enumerate(all_edges)}
        targets = set()
        for combo in itertools.combinations(range(15), 9):
            deg = [0] * 6
            for i in combo:
                a, b = all_edges[i]
                deg[a] += 1
                deg[b] += 1
            if all(x == 3 for x in deg):
                targets.add(frozenset(combo))
        assert len(targets) == 70
        counts = {t: 0 for t in targets}
        draws = 100_000
        for s in range(draws):
            g = build_regular(6, 3, seed=s)
            u, v = g.edge_arrays()
            counts[frozenset(index[(int(a), int(b))]
                             for a, b in zip(u, v))] += 1
        freqs = np.array(list(counts.values()))
        p = 1 / 70
        sigma = np.sqrt(draws * p * (1 - p))
        assert np.abs(freqs - draws * p).max() <= 5 * sigma

    def test_nonzero_counts_match_reference_50_seeds(self):
        ref_fits = ScalingFits((4, 5, 6, 7), (1.0, 0.0), (0.0, 0.0))
        model = WeightModel((0.3, 0.1), 0.6)
        for L in (6, 8):
            counts = set()
            for variant in ("exh", "exa", "brf", "bvf", "brc", "reg"):
                for seed in range(50 if variant in ("exh", "brf") else 10):
                    H = sample(EnsembleSpec(variant, LocalitySpec(L, 2, 1),
                                            "randomised", seed),
                               model, ref_fits)
                    counts.add(H.nnz_full)
            assert len(counts) == 1

    def test_scaling_fit_quality_noninteracting(self):
        # raw-norm and band-statistic fits over L = 4..10 with 100 samples:
        # residual-to-mean ratios stay below 5%
        fits = fit_scalings(LocalitySpec(10, 1, 1), (4, 5, 6, 7, 8, 9, 10),
                            100, 3)
        for means, resid in ((fits.norm_means, fits.norm_residuals),
                             (fits.delta_means, fits.delta_residuals)):
            ratios = np.abs(np.array(resid)) / np.array(means)
            assert ratios.max() < 0.05

    def test_normalized_norm_at_L10(self):
        obs = build_observable(10, "randomised", 0)
        from spinflow.spin_model import exact_hamiltonian
        H = exact_hamiltonian(LocalitySpec(10, 2, 1), obs, 0)
        assert spectral_norm(H) == pytest.approx(1.0, abs=1e-8)
