"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

All synthetic-benchmark runs use ``BENCHMARK_SEED`` (the first seed whose
input-space neighborhoods are pure in both label sets), perplexity 30,
theta 0.2 and 750 epochs. Metrics use k = 30 over all points.
"""

import time

import numpy as np
import pytest

from oracles import brute_knn, dense_affinity_reference, dense_gradient, fd_gradient
from rctsne import EmbedConfig, embed
from rctsne.affinity import (
    ConditioningSpec,
    build_affinities,
    calibrate_rows,
    condition_rows,
    rows_to_affinity,
    symmetrize,
)
from rctsne.core import LabelVector
from rctsne.datagen import BENCHMARK_SEED, find_benchmark_seed, generate_synthetic
from rctsne.knn import VPTree, neighbors_per_label, neighbors_unsplit
from rctsne.metrics import adjusted_rnx, evaluate, laplacian_baseline, laplacian_score, rnx
from rctsne.optimizer import kl_gradient, kl_loss

K = 30
BASE = dict(perplexity=30.0, theta=0.2, epochs=750)
EMBED_SEEDS = (0, 1, 2)
CTSNE_BETA = 1e-4
# rctsne sweep used to read off scores at ctsne's Laplacian(labels14)
RCTSNE_GRID = (1e-20, 1e-30, 1e-40, 1e-60, 1e-80, 1e-100, 1e-120)


def _report(record_property, text):
    record_property("criterion", text)
    print(text)


@pytest.fixture(scope="module")
def bench():
    return generate_synthetic(BENCHMARK_SEED)


def _scores(ds, coords):
    return (laplacian_score(coords, ds.labels14, K), laplacian_score(coords, ds.labels56, K),
            adjusted_rnx(ds.data, ds.labels14, coords, K))


@pytest.fixture(scope="module")
def tradeoff(bench):
    """Per embedding seed: ctsne scores and the rctsne sweep."""
    out = {}
    for seed in EMBED_SEEDS:
        c = embed(bench.data, bench.labels14,
                  EmbedConfig(method="ctsne", beta=CTSNE_BETA, seed=seed, **BASE))
        sweep = []
        for beta in RCTSNE_GRID:
            r = embed(bench.data, bench.labels14,
                      EmbedConfig(method="rctsne", beta=beta, seed=seed, **BASE))
            sweep.append(_scores(bench, r.embedding.coords))
        out[seed] = (_scores(bench, c.embedding.coords), np.array(sweep))
    return out


def _at_matched_l14(sweep, l14):
    """Linear interpolation of rctsne (L56, RNX) at the given Laplacian(labels14)."""
    order = np.argsort(sweep[:, 0])
    x = sweep[order, 0]
    if not x[0] <= l14 <= x[-1]:
        return None
    return np.interp(l14, x, sweep[order, 1]), np.interp(l14, x, sweep[order, 2])


def test_benchmark_seed_rule():
    assert find_benchmark_seed() == BENCHMARK_SEED


def test_c1_tsne_label_purity_and_runtime(bench, record_property):
    # warm the JIT caches so the timing reflects the method, not compilation
    embed(bench.data.values[:200], None, EmbedConfig(perplexity=10, theta=0.2, epochs=5))
    start = time.perf_counter()
    res = embed(bench.data, None, EmbedConfig(method="tsne", **BASE))
    seconds = time.perf_counter() - start
    l14 = laplacian_score(res.embedding.coords, bench.labels14, K)
    ok = l14 <= 0.02 and seconds <= 60
    _report(record_property, f"C1 t-SNE: Laplacian(labels14)={l14:.4f} (<=0.02), runtime {seconds:.1f} s (<=60)")
    assert ok


def test_c2_rctsne_removes_known_structure(bench, record_property):
    res = embed(bench.data, bench.labels14,
                EmbedConfig(method="rctsne", beta=1e-20, variance_mode="on_p", **BASE))
    base = laplacian_baseline(bench.labels14)
    l14 = laplacian_score(res.embedding.coords, bench.labels14, K)
    l56 = laplacian_score(res.embedding.coords, bench.labels56, K)
    ok = abs(l14 - base) <= 0.05 and l56 <= 0.05
    _report(record_property, f"C2 rctsne beta=1e-20 on_p: Laplacian(labels14)={l14:.4f} "
                             f"(baseline {base:.5f} +-0.05), Laplacian(labels56)={l56:.4f} (<=0.05)")
    assert ok


def test_c3_ctsne_mixes_unrelated_labels(tradeoff, record_property):
    parts, ok = [], True
    for seed, ((c14, c56, _), sweep) in tradeoff.items():
        matched = _at_matched_l14(sweep, c14)
        if matched is None:
            ok = False
            parts.append(f"seed {seed}: L14={c14:.4f} outside rctsne sweep")
            continue
        ok &= c56 > matched[0]
        parts.append(f"seed {seed}: L14={c14:.4f} L56 ctsne={c56:.4f} rctsne={matched[0]:.4f}")
    _report(record_property, "C3 ctsne vs rctsne L56 at matched L14: " + "; ".join(parts))
    assert ok


def test_c4_rctsne_preserves_more_structure(tradeoff, record_property):
    parts, ok = [], True
    for seed, ((c14, _, crnx), sweep) in tradeoff.items():
        matched = _at_matched_l14(sweep, c14)
        if matched is None:
            ok = False
            parts.append(f"seed {seed}: L14={c14:.4f} outside rctsne sweep")
            continue
        ok &= matched[1] > crnx
        parts.append(f"seed {seed}: RNX rctsne={matched[1]:.4f} ctsne={crnx:.4f}")
    _report(record_property, "C4 adjusted R_NX(30) at matched L14: " + "; ".join(parts))
    assert ok


def test_c5_oracle_equivalence(record_property):
    rng = np.random.default_rng(0)

    # (a) exact repulsion path against the dense gradient, n=200
    x = rng.normal(size=(200, 6))
    aff = build_affinities(x, None, EmbedConfig(perplexity=15))
    y = rng.normal(size=(200, 2)) * 2
    g = kl_gradient(aff, y, theta=0.0)
    ref = dense_gradient(aff.to_dense(), y)
    err_a = np.max(np.abs(g - ref)) / np.max(np.abs(ref))

    # (b) gradient against central finite differences, n=8
    x = rng.normal(size=(8, 4))
    lab = np.array([0, 1] * 4)
    aff8 = build_affinities(x, None, EmbedConfig(perplexity=2))
    y = rng.normal(size=(8, 2))
    err_b = 0.0
    for mode, beta in (("tsne", 1.0), ("ctsne", 0.01)):
        g = kl_gradient(aff8, y, 0.0, mode, lab, beta)
        fd = fd_gradient(lambda z: kl_loss(aff8, z, mode, lab, beta), y)
        err_b = max(err_b, float(np.max(np.abs(fd - g) / np.maximum(np.abs(g), 1e-8))))

    # (c) sparse affinities against a dense brentq pipeline, n=30
    x = rng.normal(size=(30, 3))
    nb = neighbors_unsplit(x, 15)
    _, rows, _ = calibrate_rows(nb.sq_distances, nb.mask, 5.0, tol=1e-12)
    got = symmetrize(rows_to_affinity(nb.indices, rows, 30), floor=0.0).to_dense()
    want = dense_affinity_reference(x, 5.0, k=15)
    shared = (got > 0) & (want > 0)
    err_c = float(np.max(np.abs(got[shared] - want[shared])))

    # (d) exact kNN with ties, n=500
    pts = np.round(rng.normal(size=(500, 3)), 1)
    ids, d2 = VPTree(pts).query_many(pts, 12, np.arange(500))
    bi, bd = brute_knn(pts, 12)
    exact_d = np.array_equal(ids, bi) and np.array_equal(d2, bd)

    ok = err_a <= 1e-10 and err_b <= 1e-4 and err_c <= 1e-9 and exact_d
    _report(record_property, f"C5 oracles: (a) {err_a:.1e} (<=1e-10) (b) {err_b:.1e} (<=1e-4) "
                             f"(c) {err_c:.1e} (<=1e-9) (d) exact={exact_d}")
    assert ok


def test_c6_normalization_and_invariance(bench, record_property):
    lab = bench.labels14
    sums = []
    for method, beta, mode in [("tsne", 1.0, "on_p"), ("ctsne", 1e-4, "on_p"),
                               ("rctsne", 1e-20, "on_p"), ("rctsne", 1e-20, "on_r"), ("rctsne", 0.3, "on_r")]:
        aff = build_affinities(bench.data, lab, EmbedConfig(method=method, beta=beta, variance_mode=mode))
        sums.append(abs(aff.values.sum() - 1.0))
    norm_ok = max(sums) <= 1e-9

    # beta=1 reduces every method to the t-SNE affinities on shared neighbors
    cfg = EmbedConfig(perplexity=30)
    nb = neighbors_per_label(bench.data, lab, cfg.k_half, cfg.k_half)
    plain = build_affinities(bench.data, None, cfg, nb.merged())
    reduce_ok = all(
        np.array_equal(build_affinities(bench.data, lab, cfg.replace(method=m, beta=1.0, variance_mode=v),
                                        nb).values, plain.values)
        for m, v in [("ctsne", "on_p"), ("rctsne", "on_p"), ("rctsne", "on_r")]
    )

    # joint scaling of the two weights, and monotone same-label mass, on overlapping classes
    rng = np.random.default_rng(1)
    cl = LabelVector(rng.integers(0, 3, 300))
    x = rng.normal(size=(300, 4)) + 0.8 * cl.labels[:, None]
    nb2 = neighbors_unsplit(x, 45)
    _, rows, _ = calibrate_rows(nb2.sq_distances, nb2.mask, 15.0)
    cond = rows_to_affinity(nb2.indices, rows, 300)
    scale_err = 0.0
    for beta in (1e-6, 0.01, 0.5):
        ref = condition_rows(cond, ConditioningSpec(beta, cl)).values
        for c in (1e-3, 7.0, 1e3):
            got = condition_rows(cond, ConditioningSpec(beta * c, cl, alpha=c)).values
            scale_err = max(scale_err, float(np.max(np.abs(got - ref))))
    same = cl.labels[cond.rows()] == cl.labels[cond.indices]
    masses = []
    for beta in (1e-8, 1e-4, 1e-2, 0.1, 0.5, 1.0):
        v = condition_rows(cond, ConditioningSpec(beta, cl)).values
        masses.append(np.bincount(cond.rows(), weights=v * same, minlength=300))
    masses = np.array(masses)
    mixed = (masses[0] > 0) & (masses[-1] < 1)
    mono_ok = bool(np.all(np.diff(masses[:, mixed], axis=0) > 0)) and mixed.sum() > 250

    ok = norm_ok and reduce_ok and scale_err <= 1e-12 and mono_ok
    _report(record_property, f"C6 invariants: |sum-1|<={max(sums):.1e} beta=1 exact={reduce_ok} "
                             f"scaling {scale_err:.1e} (<=1e-12) monotone={mono_ok}")
    assert ok


def test_c7_metric_correctness(record_property):
    rng = np.random.default_rng(2)
    n, k = 60, 5
    y = rng.normal(size=(n, 2))
    lab = np.repeat([0, 1, 2], [25, 20, 15])
    mc = float(np.mean([laplacian_score(y, rng.permutation(lab), k) for _ in range(10_000)]))
    base = laplacian_baseline(lab)
    fixed = all(rnx(1.0, kk, nn) == 1.0 and rnx(kk / (nn - 1), kk, nn) == 0.0
                for kk, nn in [(1, 10), (5, 60), (30, 1500), (7, 1000)])
    ok = abs(mc - base) <= 0.01 and fixed
    _report(record_property, f"C7 metrics: baseline {base:.4f} vs permutation {mc:.4f} (+-0.01), "
                             f"rnx fixed points exact={fixed}")
    assert ok


def test_smoke_gaussian_mixture_50d(record_property):
    rng = np.random.default_rng(3)
    lab = LabelVector(rng.integers(0, 8, 2000))
    centers = rng.normal(scale=3.0, size=(8, 50))
    x = centers[lab.labels] + rng.normal(size=(2000, 50))
    shapes, scores = [], []
    for method, beta in (("tsne", 1.0), ("ctsne", 0.01), ("rctsne", 1e-6)):
        res = embed(x, lab, EmbedConfig(method=method, beta=beta, perplexity=30, theta=0.5, epochs=300))
        y = res.embedding.coords
        shapes.append(y.shape == (2000, 2) and bool(np.all(np.isfinite(y))))
        rep = evaluate(x, y, {"cell": lab}, k=30, subsample_fraction=0.05, seed=0)
        scores.append(rep.laplacian["cell"])
    ok = all(shapes) and scores[0] < 0.05
    _report(record_property, f"smoke 2000x50 mixture: finite 2-D output={all(shapes)}, "
                             f"tsne Laplacian {scores[0]:.3f}")
    assert ok
