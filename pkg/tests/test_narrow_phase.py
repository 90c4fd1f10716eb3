import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import nn_dist, random_pair
from hdist.bench import run_no_index_space
from hdist.broad_search import broad_phase, build_bvh_over
from hdist.core import SQRT3, dist
from hdist.mesh_io import PointCloud, synthetic_cloud, translate_cloud
from hdist.narrow_phase import (HausdorffConfig, brute_force_hausdorff, brute_force_one_sided, hausdorff,
                                refine_one_sided, run_side)


def pc(*rows):
    return PointCloud(np.array(rows, dtype=float))


def check_witness(res, a, b):
    q, t, side = res.witness
    p, r = (a.points[q], b.points[t]) if side == "AB" else (b.points[q], a.points[t])
    assert dist(p, r) == pytest.approx(res.H, rel=1e-12, abs=1e-300)
    assert res.H == max(res.h_ab, res.h_ba)


def test_refine_singleton_example():
    a, b = pc((0, 0, 0)), pc((3, 4, 0))
    bvh = build_bvh_over(b.points, SQRT3)
    bp = broad_phase(a.points, bvh, SQRT3)
    res = refine_one_sided(bp, a, b, np.array([0, 1]), np.array([0]))
    assert res.h == 5.0 and (res.query, res.target) == (0, 0)


def test_singletons_fall_back():
    res = hausdorff(pc((0, 0, 0)), pc((3, 4, 0)))
    assert res.H == 5.0 and res.stats["fallback"] == ["AB", "BA"]


def test_self_distance_zero():
    c = synthetic_cloud("torus", 2000, 2)
    res = hausdorff(c, c, HausdorffConfig(k=6))
    assert res.H == 0.0 and res.h_ab == res.h_ba == 0.0
    q, t, _ = res.witness
    assert np.array_equal(c.points[q], c.points[t])


def test_subset_one_sided_zero():
    b = synthetic_cloud("gaussian", 1500, 4)
    a = PointCloud(b.points[::3])
    res = hausdorff(a, b, HausdorffConfig(k=5))
    assert res.h_ab == 0.0 and res.h_ba > 0.0
    assert res.H == brute_force_hausdorff(a, b).H


def test_brute_force_examples():
    assert brute_force_hausdorff(pc((1, 1, 1)), pc((1, 1, 3))).H == 2.0
    one = brute_force_one_sided(pc((0, 0, 0), (10, 0, 0)), pc((1, 0, 0), (9, 0, 0), (0, 1, 0)))
    assert one.h == 1.0 and one.query == 0 and one.target == 0  # smallest ids win ties


@pytest.mark.parametrize("fused", [True, False])
@pytest.mark.parametrize("seed", range(4))
def test_matches_oracle(seed, fused):
    rng = np.random.default_rng(seed)
    for i in range(8):
        a, b = random_pair(rng)
        cfg = HausdorffConfig(k=4 + i % 5, fused=fused)
        res, ref = hausdorff(a, b, cfg), brute_force_hausdorff(a, b)
        assert res.H == ref.H and res.h_ab == ref.h_ab and res.h_ba == ref.h_ba
        assert res.witness == ref.witness
        check_witness(res, a, b)
        assert res.h_ab == nn_dist(a.points, b.points).max()


@given(st.integers(0, 10**6), st.sampled_from(["auto", "sqrt3", "3"]))
def test_symmetric_and_r0_independent(seed, r0):
    rng = np.random.default_rng(seed)
    a, b = random_pair(rng, int(rng.integers(1, 200)), int(rng.integers(2, 200)))
    h1 = hausdorff(a, b, HausdorffConfig(k=5, r0=r0)).H
    h2 = hausdorff(b, a, HausdorffConfig(k=6)).H
    assert h1 == h2 == brute_force_hausdorff(a, b).H


def test_bit_count_invariance():
    a, b = random_pair(np.random.default_rng(21), 1500, 1200)
    hs = {k: hausdorff(a, b, HausdorffConfig(k=k)).H for k in range(1, 11)}
    assert len(set(hs.values())) == 1


def test_translation_closed_form():
    c = synthetic_cloud("blob", 5000, 8)
    for ratio in (0.3, 0.5, 0.7):
        t = translate_cloud(c, "y", ratio)
        res = hausdorff(c, t, HausdorffConfig(k=6))
        expect = ratio * np.ptp(c.points[:, 1])
        assert res.H == pytest.approx(expect, rel=1e-9)


def test_duplicates_and_planar_inputs():
    rng = np.random.default_rng(2)
    base = rng.uniform(-1, 1, size=(300, 3))
    base[:, 2] = 0.0
    a = PointCloud(np.vstack([base, base[:50]]))
    b = PointCloud(rng.uniform(-1, 1, size=(400, 3)) * [1, 1, 0])
    res = hausdorff(a, b, HausdorffConfig(k=7))
    ref = brute_force_hausdorff(a, b)
    assert res.H == ref.H and res.witness == ref.witness


def test_coincident_target_partial_fallback():
    a = synthetic_cloud("box", 100, 1)
    b = PointCloud(np.tile([[0.5, 0.5, 0.5]], (20, 1)))
    res = hausdorff(a, b)
    assert res.stats["fallback"] == ["AB"] and res.H == brute_force_hausdorff(a, b).H


@pytest.mark.parametrize("threads", [1, 4, "max"])
def test_threads_deterministic(threads):
    a, b = random_pair(np.random.default_rng(17), 4000, 3500)
    ref = hausdorff(a, b, HausdorffConfig(k=6, threads=1))
    res = hausdorff(a, b, HausdorffConfig(k=6, threads=threads))
    assert (res.H, res.witness) == (ref.H, ref.witness)
    for side in ("AB", "BA"):
        for key in ("candidate_cells", "candidate_pairs", "gray", "iterations"):
            assert res.stats[side][key] == ref.stats[side][key]


def test_no_index_space_matches():
    rng = np.random.default_rng(31)
    for i in range(10):
        a, b = random_pair(rng)
        res = run_no_index_space(a, b, HausdorffConfig(k=4 + i % 5))
        ref = brute_force_hausdorff(a, b)
        assert res.H == ref.H and res.witness == ref.witness
    single = run_no_index_space(pc((0, 0, 0)), pc((3, 4, 0)))
    assert single.H == 5.0


def test_side_run_exposes_pipeline():
    a, b = random_pair(np.random.default_rng(3), 200, 300)
    run = run_side(a, b, HausdorffConfig(k=5, fused=False))
    assert run.broad.materialized and run.space.n_cells <= len(b)
    assert run.result.h == nn_dist(a.points, b.points).max()
    assert set(run.timings) == {"index", "broad", "narrow"}


def test_config_validation():
    with pytest.raises(ValueError):
        HausdorffConfig(k=0)
