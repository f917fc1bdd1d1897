import json
import math

import numpy as np
import pytest

from planarhand.sim2d import BUILTIN_SHAPES, Disk, SimConfig, square
from planarhand.graspgen import (
    Grasp,
    GraspCache,
    GraspGenParams,
    SynthesisError,
    draw_arity,
    generate_grasps,
    grasp_analysis,
    grasp_distance,
    heuristic_sample,
    net_force_min,
    next_goal,
    rrt_expand,
    sample_surface,
)

WEIGHTS = (0.3, 1.0)


def grid_force_oracle(normals, coarse=0.05, fine=0.005, fmax=3.0):
    """Two-stage brute-force grid search for the pinned-force minimum.

    Stage one scans [0, fmax] at the coarse resolution, stage two refines a
    one-cell neighborhood of the best point at the fine resolution, so the
    effective resolution is `fine`. The objective is convex in the free
    forces, which makes the local refinement sound.
    """
    arr = np.asarray(normals, dtype=float)
    m = len(arr)
    best = math.inf
    for j in range(m):
        others = np.delete(arr, j, axis=0)
        k = m - 1

        def scan(lo, hi, step):
            axes = [np.arange(lo[i], hi[i] + step / 2, step) for i in range(k)]
            grids = np.meshgrid(*axes, indexing="ij")
            f = np.stack([g.ravel() for g in grids], axis=1)
            net = f @ others + arr[j]
            vals = np.hypot(net[:, 0], net[:, 1])
            i = int(np.argmin(vals))
            return float(vals[i]), f[i]

        v, fstar = scan([0.0] * k, [fmax] * k, coarse)
        lo = np.maximum(fstar - coarse, 0.0)
        hi = np.minimum(fstar + coarse, fmax)
        v2, _ = scan(lo, hi, fine)
        best = min(best, v, v2)
    return best


class TestNetForceMin:
    def test_antipodal_pair_cancels(self):
        assert net_force_min([(1.0, 0.0), (-1.0, 0.0)]) == pytest.approx(0.0, abs=1e-8)

    def test_parallel_pair_cannot_cancel(self):
        assert net_force_min([(1.0, 0.0), (1.0, 0.0)]) == pytest.approx(1.0, abs=1e-8)

    def test_three_normals_at_120_degrees(self):
        ns = [
            (math.cos(a), math.sin(a))
            for a in (0.0, 2 * math.pi / 3, 4 * math.pi / 3)
        ]
        assert net_force_min(ns) == pytest.approx(0.0, abs=1e-8)

    def test_against_grid_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(60):
            m = int(rng.integers(2, 5))
            angles = rng.uniform(-math.pi, math.pi, m)
            ns = [(math.cos(a), math.sin(a)) for a in angles]
            got = net_force_min(ns)
            want = grid_force_oracle(ns)
            assert abs(got - want) < 0.01

    def test_rotation_invariance(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            m = int(rng.integers(2, 5))
            angles = rng.uniform(-math.pi, math.pi, m)
            ns = [(math.cos(a), math.sin(a)) for a in angles]
            base = net_force_min(ns)
            rot = rng.uniform(-math.pi, math.pi)
            c, s = math.cos(rot), math.sin(rot)
            ns_rot = [(c * x - s * y, s * x + c * y) for x, y in ns]
            assert net_force_min(ns_rot) == pytest.approx(base, abs=1e-9)

    def test_non_unit_normal_rejected(self):
        with pytest.raises(ValueError):
            net_force_min([(1.0, 0.0), (0.5, 0.0)])

    def test_bad_count_rejected(self):
        with pytest.raises(ValueError):
            net_force_min([(1.0, 0.0)])


class TestGraspAnalysis:
    def test_antipodal_passes(self):
        pts = [(1.0, 0.0), (-1.0, 0.0)]
        ns = [(-1.0, 0.0), (1.0, 0.0)]
        assert grasp_analysis(pts, ns, 0.1) is True

    def test_parallel_fails(self):
        pts = [(1.0, 0.0), (-1.0, 0.0)]
        ns = [(1.0, 0.0), (1.0, 0.0)]
        assert grasp_analysis(pts, ns, 0.1) is False

    def test_threshold_boundary_is_strict(self):
        # parallel pair has F_min exactly 1.0; threshold 1.0 must fail
        ns = [(1.0, 0.0), (1.0, 0.0)]
        assert grasp_analysis([(0, 0), (0, 0)], ns, 1.0) is False


class TestSampleSurface:
    def test_disk_points_on_circle_normals_inward(self):
        rng = np.random.default_rng(0)
        for (px, py), (nx, ny) in sample_surface(Disk(1.0), 2, rng):
            assert math.hypot(px, py) == pytest.approx(1.0, abs=1e-12)
            assert (nx, ny) == pytest.approx((-px, -py), abs=1e-12)

    def test_square_edge_frequencies_uniform(self):
        rng = np.random.default_rng(1)
        sq = square(2.0)
        counts = [0, 0, 0, 0]
        n = 10_000
        draws = 0
        while draws < n:
            for (px, py), _ in sample_surface(sq, 2, rng):
                if abs(px - 1.0) < 1e-9:
                    counts[0] += 1
                elif abs(py - 1.0) < 1e-9:
                    counts[1] += 1
                elif abs(px + 1.0) < 1e-9:
                    counts[2] += 1
                else:
                    counts[3] += 1
                draws += 1
        for c in counts:
            assert abs(c / draws - 0.25) < 0.02

    def test_arity_draw_distribution(self):
        rng = np.random.default_rng(2)
        counts = {2: 0, 3: 0, 4: 0}
        n = 10_000
        for _ in range(n):
            counts[draw_arity(rng)] += 1
        for arity in (2, 3, 4):
            assert counts[arity] / n >= 0.25

    def test_invalid_arity_rejected(self):
        with pytest.raises(ValueError):
            sample_surface(Disk(1.0), 5, np.random.default_rng(0))


class TestHeuristicSample:
    def test_disk_grasps_all_revalidate(self):
        cfg = SimConfig()
        rng = np.random.default_rng(0)
        grasps = heuristic_sample(cfg, BUILTIN_SHAPES["disk"], 100, rng)
        assert len(grasps) == 100
        params = GraspGenParams()
        for g in grasps:
            ns = [n for _, n in g.contacts]
            assert grasp_analysis([p for p, _ in g.contacts], ns, params.f_thresh)
            for (px, py), _ in g.contacts:
                assert abs(BUILTIN_SHAPES["disk"].signed_distance(px, py)) < 1e-6

    def test_infeasible_geometry_raises(self):
        from planarhand.sim2d import ConvexPolygon

        cfg = SimConfig()
        # a sliver way beyond the finger workspace
        needle = ConvexPolygon(((0.9, -0.001), (0.9, 0.001), (-0.9, 0.0)))
        rng = np.random.default_rng(0)
        params = GraspGenParams(max_attempts=3000)
        with pytest.raises(SynthesisError):
            heuristic_sample(cfg, needle, 5, rng, params)

    def test_square_has_multiple_arities(self):
        cfg = SimConfig()
        rng = np.random.default_rng(3)
        grasps = heuristic_sample(cfg, BUILTIN_SHAPES["square"], 300, rng)
        arities = {len(g.contacts) for g in grasps}
        assert len(arities) >= 2


class TestRrtExpand:
    def _seed_cache(self, n=60, seed=0):
        cache, _ = generate_grasps(
            "disk", BUILTIN_SHAPES["disk"], n_heuristic=n, n_rrt=0, seed=seed
        )
        return cache

    def test_zero_iterations_is_identity(self):
        cfg = SimConfig()
        cache = self._seed_cache()
        before = len(cache)
        stats = rrt_expand(cfg, BUILTIN_SHAPES["disk"], cache, 0, np.random.default_rng(0))
        assert len(cache) == before
        assert stats.added == 0

    def test_growth_and_validity(self):
        cfg = SimConfig()
        cache = self._seed_cache()
        before = len(cache)
        rrt_expand(cfg, BUILTIN_SHAPES["disk"], cache, 500, np.random.default_rng(1))
        assert len(cache) > before
        cache.validate(SimConfig(object_shape=cache.shape))

    def test_parent_edges_within_delta(self):
        cfg = SimConfig()
        params = GraspGenParams()
        cache = self._seed_cache()
        rrt_expand(cfg, BUILTIN_SHAPES["disk"], cache, 400, np.random.default_rng(2), params)
        for g in cache.grasps:
            if g.parent is not None:
                d = grasp_distance(g, cache.grasps[g.parent], WEIGHTS, cache.symmetry_order)
                assert d <= params.rrt_delta + 1e-9

    def test_superset_of_seed(self):
        cfg = SimConfig()
        cache = self._seed_cache()
        seed_graphs = [json.dumps(g.to_json()) for g in cache.grasps]
        rrt_expand(cfg, BUILTIN_SHAPES["disk"], cache, 200, np.random.default_rng(3))
        now = [json.dumps(g.to_json()) for g in cache.grasps]
        assert now[: len(seed_graphs)] == seed_graphs


class TestGenerateGrasps:
    def test_deterministic_cache_file(self, tmp_path):
        a, _ = generate_grasps("disk", BUILTIN_SHAPES["disk"], 40, 150, seed=9)
        b, _ = generate_grasps("disk", BUILTIN_SHAPES["disk"], 40, 150, seed=9)
        pa, pb = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        a.save(pa)
        b.save(pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_cache_roundtrip_and_validation(self, tmp_path):
        cache, _ = generate_grasps("disk", BUILTIN_SHAPES["disk"], 40, 100, seed=4)
        path = tmp_path / "cache.jsonl"
        cache.save(path)
        loaded = GraspCache.load(path, validate=True)
        assert len(loaded) == len(cache)
        assert loaded.header() == cache.header()

    def test_no_duplicates_under_metric(self):
        cache, _ = generate_grasps("disk", BUILTIN_SHAPES["disk"], 50, 150, seed=5)
        for i, g in enumerate(cache.grasps):
            d = cache.distances_from(g)
            d[i] = math.inf
            assert d.min() >= 1e-3


class TestGraspDistance:
    def test_identity_is_zero(self):
        g = Grasp(q=[0.1] * 9, p=(0.0, 0.05, 0.3), contacts=[])
        assert grasp_distance(g, g, WEIGHTS) == 0.0

    def test_theta_wraps(self):
        a = Grasp(q=[0.0] * 9, p=(0.0, 0.0, math.pi - 0.01), contacts=[])
        b = Grasp(q=[0.0] * 9, p=(0.0, 0.0, -math.pi + 0.01), contacts=[])
        assert grasp_distance(a, b, WEIGHTS) == pytest.approx(0.02, abs=1e-9)

    def test_full_turn_has_zero_rotation_term(self):
        a = Grasp(q=[0.0] * 9, p=(0.0, 0.0, 0.0), contacts=[])
        b = Grasp(q=[0.0] * 9, p=(0.0, 0.0, 2 * math.pi), contacts=[])
        assert grasp_distance(a, b, WEIGHTS) == pytest.approx(0.0, abs=1e-9)

    def test_hand_computed_value(self):
        a = Grasp(q=[0.0] * 4, p=(0.0, 0.0, 0.0), contacts=[])
        b = Grasp(q=[0.1, 0.0, 0.0, 0.2], p=(0.3, 0.4, 0.5), contacts=[])
        # 0.3*sqrt(0.01+0.04) + 1.0*(0.5 + 0.5)
        want = 0.3 * math.sqrt(0.05) + 1.0 * (0.5 + 0.5)
        assert grasp_distance(a, b, WEIGHTS) == pytest.approx(want, rel=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a = Grasp(q=list(rng.normal(size=9)), p=tuple(rng.normal(size=3)), contacts=[])
            b = Grasp(q=list(rng.normal(size=9)), p=tuple(rng.normal(size=3)), contacts=[])
            assert grasp_distance(a, b, WEIGHTS) == pytest.approx(
                grasp_distance(b, a, WEIGHTS), rel=1e-12
            )


def _toy_cache(dists):
    """Cache whose grasps sit at controlled distances from the origin grasp."""
    cache = GraspCache("disk", BUILTIN_SHAPES["disk"], metric_weights=WEIGHTS)
    for d in dists:
        cache.append(Grasp(q=[0.0] * 9, p=(0.0, d, 0.0), contacts=[], parent=None))
    return cache


class TestNextGoal:
    def setup_method(self):
        self.current = Grasp(q=[0.0] * 9, p=(0.0, 0.0, 0.0), contacts=[])

    def test_band_excludes_far_grasp(self):
        cache = _toy_cache([0.1, 0.5, 5.0])
        rng = np.random.default_rng(0)
        for _ in range(200):
            idx, g = next_goal(cache, self.current, (0.05, 1.0), 3, rng)
            assert g.p[1] != 5.0

    def test_uniform_over_cache_minus_current(self):
        dists = [0.1 * (i + 1) for i in range(8)]
        cache = _toy_cache([0.0] + dists)  # index 0 is the current grasp
        rng = np.random.default_rng(1)
        counts = np.zeros(len(cache))
        n = 10_000
        for _ in range(n):
            idx, _ = next_goal(cache, self.current, (0.0, math.inf), len(cache), rng)
            counts[idx] += 1
        assert counts[0] == 0  # the zero-distance clone is never returned
        expected = n / 8
        chi2 = float(((counts[1:] - expected) ** 2 / expected).sum())
        from scipy import stats as st

        assert st.chi2.sf(chi2, df=7) > 0.01

    def test_fallback_returns_nearest_beyond_dmin(self):
        cache = _toy_cache([2.0, 3.0])
        rng = np.random.default_rng(0)
        idx, g = next_goal(cache, self.current, (0.5, 1.0), 2, rng)
        assert g.p[1] == 2.0

    def test_fallback_errors_when_everything_is_closer_than_dmin(self):
        cache = _toy_cache([0.01, 0.02])
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            next_goal(cache, self.current, (0.5, 1.0), 2, rng)

    def test_empty_cache_rejected(self):
        cache = GraspCache("disk", BUILTIN_SHAPES["disk"])
        with pytest.raises(ValueError):
            next_goal(cache, self.current, (0.0, 1.0), 4, np.random.default_rng(0))

    def test_fixed_seed_is_pure(self):
        cache = _toy_cache([0.1, 0.2, 0.3, 0.4])
        a = next_goal(cache, self.current, (0.05, 1.0), 3, np.random.default_rng(12))
        b = next_goal(cache, self.current, (0.05, 1.0), 3, np.random.default_rng(12))
        assert a[0] == b[0]
