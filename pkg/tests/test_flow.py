import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinflow.errors import ValidationError
from spinflow.flow import (
    CapacityGraph,
    brute_force_min_cut,
    capacity_graph,
    correlate,
    extrapolate_teq,
    fit_teq_vs_fmax,
    max_flow,
    max_flow_with_assignment,
)
from spinflow.graph_analysis import degree_formula
from spinflow.spin_model import (
    LocalitySpec,
    SparseHermitian,
    build_observable,
    exact_hamiltonian,
)


def random_graph(rng, N=None, p=0.5):
    N = N or int(rng.integers(4, 13))
    pairs = [(i, j) for i in range(N) for j in range(i + 1, N)
             if rng.random() < p]
    if not pairs:
        pairs = [(0, 1)]
    u = np.array([a for a, _ in pairs])
    v = np.array([b for _, b in pairs])
    cap = rng.uniform(0.01, 5.0, len(pairs))
    return CapacityGraph(N, u, v, cap, 0, N - 1)


class TestCapacityGraph:
    def test_capacities_are_entry_magnitudes(self):
        H = SparseHermitian.from_upper(2, [0, 0], [0, 1], [1.0, 3 - 4j])
        g = capacity_graph(H, 0, 1)
        assert len(g.cap) == 1
        assert g.cap[0] == pytest.approx(5.0)

    def test_diagonal_matrix_gives_no_edges(self):
        H = SparseHermitian.from_upper(3, [0, 1], [0, 1], [1.0, 2.0])
        g = capacity_graph(H, 0, 2)
        assert len(g.u) == 0
        assert max_flow(g) == 0.0

    def test_exact_sample_edge_count(self):
        obs = build_observable(8, "randomised", 1)
        H = exact_hamiltonian(LocalitySpec(8, 2, 1), obs, 1)
        g = capacity_graph(H, 255, 0)
        assert len(g.u) == degree_formula(8, 2, 1) * 256 // 2

    def test_source_sink_validation(self):
        H = SparseHermitian.from_upper(2, [0], [1], [1.0 + 0j])
        with pytest.raises(ValidationError):
            capacity_graph(H, 0, 0)
        with pytest.raises(ValidationError):
            capacity_graph(H, 0, 5)


class TestMaxFlow:
    def test_path_bottleneck(self):
        g = CapacityGraph(3, np.array([0, 1]), np.array([1, 2]),
                          np.array([3.0, 1.0]), 0, 2)
        assert max_flow(g) == pytest.approx(1.0)

    def test_disconnected(self):
        g = CapacityGraph(4, np.array([0]), np.array([1]), np.array([2.0]), 0, 3)
        assert max_flow(g) == 0.0

    def test_matches_exhaustive_min_cut(self):
        rng = np.random.default_rng(0)
        for _ in range(60):
            g = random_graph(rng, p=float(rng.uniform(0.15, 0.9)))
            assert max_flow(g) == pytest.approx(brute_force_min_cut(g), abs=1e-9)

    def test_flow_assignment_valid(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            g = random_graph(rng)
            value, flows = max_flow_with_assignment(g)
            assert np.all(np.abs(flows) <= g.cap + 1e-9)
            net = np.zeros(g.dim)
            np.subtract.at(net, g.u, flows)
            np.add.at(net, g.v, flows)
            interior = np.ones(g.dim, bool)
            interior[[g.source, g.sink]] = False
            assert np.abs(net[interior]).max() < 1e-9
            assert net[g.sink] == pytest.approx(value, abs=1e-9)

    def test_scale_equivariance(self):
        rng = np.random.default_rng(2)
        g = random_graph(rng)
        base = max_flow(g)
        for c in (0.5, 3.7, 100.0):
            scaled = CapacityGraph(g.dim, g.u, g.v, g.cap * c, g.source, g.sink)
            assert max_flow(scaled) == pytest.approx(c * base, rel=1e-12)

    def test_monotone_in_capacity(self):
        rng = np.random.default_rng(3)
        for _ in range(15):
            g = random_graph(rng, N=8)
            base = max_flow(g)
            idx = int(rng.integers(len(g.cap)))
            cap2 = g.cap.copy()
            cap2[idx] += float(rng.uniform(0.1, 2.0))
            assert max_flow(CapacityGraph(8, g.u, g.v, cap2, 0, 7)) >= base - 1e-12

    def test_adding_edge_never_decreases(self):
        g = CapacityGraph(4, np.array([0, 1, 2]), np.array([1, 2, 3]),
                          np.array([1.0, 0.5, 2.0]), 0, 3)
        base = max_flow(g)
        g2 = CapacityGraph(4, np.array([0, 1, 2, 0]), np.array([1, 2, 3, 3]),
                           np.array([1.0, 0.5, 2.0, 0.7]), 0, 3)
        assert max_flow(g2) >= base - 1e-12

    @given(st.integers(min_value=0, max_value=10 ** 6))
    @settings(max_examples=30, deadline=None)
    def test_min_cut_identity_property(self, seed):
        rng = np.random.default_rng(seed)
        g = random_graph(rng, N=int(rng.integers(4, 9)))
        assert max_flow(g) == pytest.approx(brute_force_min_cut(g), abs=1e-9)


class TestCorrelate:
    def test_perfect_anticorrelation(self):
        pairs = [(float(t), 10.0 - 2.0 * t) for t in range(12)]
        rep = correlate(pairs)
        assert rep.coefficient == pytest.approx(-1.0)
        assert rep.p_value < 1e-10

    def test_needs_ten_pairs(self):
        with pytest.raises(ValidationError):
            correlate([(1.0, 2.0)] * 9)

    def test_degenerate_variance(self):
        with pytest.raises(ValidationError):
            correlate([(float(t), 1.0) for t in range(12)])


class TestFlowFit:
    def test_exact_line_recovery(self):
        fmax = [1.0, 2.0, 3.0, 4.0]
        teq = [9.0, 7.0, 5.0, 3.0]
        fit = fit_teq_vs_fmax(fmax, teq)
        assert fit.slope == pytest.approx(-2.0)
        assert fit.intercept == pytest.approx(11.0)
        assert np.allclose(fit.residuals, 0.0, atol=1e-12)
        assert fit.slope_se == pytest.approx(0.0, abs=1e-10)
        assert len(fit.residuals) == 4

    def test_needs_three_sizes(self):
        with pytest.raises(ValidationError):
            fit_teq_vs_fmax([1.0, 2.0], [3.0, 4.0])

    def test_extrapolation_arithmetic(self):
        fit = fit_teq_vs_fmax([1.0, 2.0, 3.0], [8.0, 6.0, 4.0])
        value, outside = extrapolate_teq(fit, 3.0)
        assert value == pytest.approx(4.0)
        assert not outside

    def test_interpolation_identity_on_exact_line(self):
        fit = fit_teq_vs_fmax([1.0, 2.0, 4.0], [10.0, 8.0, 4.0])
        value, _ = extrapolate_teq(fit, 2.0)
        assert value == pytest.approx(8.0)

    def test_trust_warning(self):
        fit = fit_teq_vs_fmax([1.0, 2.0, 3.0], [8.0, 6.0, 4.0])
        _, outside = extrapolate_teq(fit, 50.0, trust_frac=1.0)
        assert outside
        _, inside = extrapolate_teq(fit, 4.5, trust_frac=1.0)
        assert not inside
