import numpy as np
import pytest

from homotopica.core import center_rows, pca_whiten
from homotopica.errors import RankDeficient, ShapeMismatch, Singular
from homotopica.evaluate import match_components
from homotopica.fastica import FastICAOptions, fastica_fit
from homotopica.group import (SubjectData, back_reconstruct, gica_fit, project_onto_maps,
                              skew_signs)

# tol=0 iterates to the floating-point fixed point: 1 - |cos| < tol only
# pins directions to about sqrt(2 tol), too coarse for 1e-8 comparisons.
TIGHT = FastICAOptions(tol=0.0, max_iter=300)


def signed_perm_gap(A, B):
    m = match_components(A, B)
    return np.max(np.abs(m.apply(A) - B))


def test_recovers_case1_sources(case1_clean):
    d = gica_fit(case1_clean.X, 3, 3)
    m = match_components(d.S_hat, case1_clean.S_true)
    assert np.all(m.correlations >= 0.99)


def test_maps_standardized(small_case1):
    d = gica_fit(small_case1.X, 3)
    np.testing.assert_allclose(d.S_hat.mean(axis=1), 0, atol=1e-8)
    np.testing.assert_allclose(d.S_hat.var(axis=1), 1, atol=1e-8)
    assert np.all(np.mean(d.S_hat**3, axis=1) >= 0)


def test_single_subject_is_plain_fastica(small_case1):
    X = small_case1.X[0]
    d = gica_fit([X], 3, 3, TIGHT)
    Z = pca_whiten(center_rows(X), 3).Z
    est = fastica_fit(Z, TIGHT)
    S_plain = est.W @ Z
    S_plain = S_plain * skew_signs(S_plain)[:, None]
    S_plain = (S_plain - S_plain.mean(1, keepdims=True)) / S_plain.std(1, keepdims=True)
    assert signed_perm_gap(d.S_hat, S_plain) <= 1e-8


def test_duplicate_subjects_match_single(small_case1):
    X = small_case1.X[1]
    one = gica_fit([X], 3, 3, TIGHT)
    two = gica_fit([X, X.copy()], 3, 3, TIGHT)
    assert signed_perm_gap(two.S_hat, one.S_hat) <= 1e-8


def test_back_reconstruction_noise_free(small_case1):
    d = gica_fit(small_case1.X, 3)
    for i, w in enumerate(d.block_whitening):
        A = back_reconstruct(d, i)
        err = np.linalg.norm(A @ d.S_hat - w.Z) / np.linalg.norm(w.Z)
        assert err <= 1e-6
        # time courses reproduce the centered data itself
        X = center_rows(small_case1.X[i])
        tc = d.time_courses(i)
        assert np.linalg.norm(tc @ d.S_hat - X) / np.linalg.norm(X) <= 1e-6


def test_projection_orthonormal_maps_is_transpose(rng):
    Q, _ = np.linalg.qr(rng.normal(size=(50, 3)))
    S = Q.T
    X = rng.normal(size=(4, 50))
    np.testing.assert_allclose(project_onto_maps(X, S), X @ S.T, atol=1e-10)


def test_projection_zero_loading(rng):
    S = rng.normal(size=(3, 200))
    A = rng.normal(size=(3, 3))
    A[:, 1] = 0.0
    assert np.linalg.norm(project_onto_maps(A @ S, S)[:, 1]) <= 1e-8


def test_projection_singular(rng):
    s = rng.normal(size=200)
    with pytest.raises(Singular):
        project_onto_maps(rng.normal(size=(2, 200)), np.vstack([s, s]))
    with pytest.raises(ShapeMismatch):
        project_onto_maps(rng.normal(size=(2, 10)), rng.normal(size=(2, 11)))


def test_seed_indeterminacy_is_signed_permutation(small_case1):
    a = gica_fit(small_case1.X, 3, options=FastICAOptions(seed=1))
    b = gica_fit(small_case1.X, 3, options=FastICAOptions(seed=99))
    assert np.all(match_components(a.S_hat, b.S_hat).correlations >= 0.999)


def test_subject_order_invariance(small_case1):
    X = small_case1.X
    a = gica_fit([SubjectData(f"s{i}", x) for i, x in enumerate(X)], 3, options=TIGHT)
    perm = [2, 0, 1]
    b = gica_fit([SubjectData(f"s{i}", X[i]) for i in perm], 3, options=TIGHT)
    m = match_components(b.S_hat, a.S_hat)
    assert np.all(m.correlations >= 0.999)
    for new, old in enumerate(perm):
        ta = a.time_courses(old)
        tb = b.time_courses(new)[:, m.permutation] * m.signs
        np.testing.assert_allclose(tb, ta, atol=1e-6 * np.abs(ta).max())
    assert b.subject_ids == ["s2", "s0", "s1"]


def test_shape_mismatch(rng):
    with pytest.raises(ShapeMismatch):
        gica_fit([rng.normal(size=(3, 20)), rng.normal(size=(3, 21))], 2)


def test_parameter_checks(small_case1):
    with pytest.raises(ValueError):
        gica_fit(small_case1.X, 3, 10)
    with pytest.raises(ValueError):
        gica_fit(small_case1.X, 4)
    with pytest.raises(RankDeficient):
        # noise-free subjects share one 3-dimensional row space
        gica_fit(small_case1.X, 3, 4)


def test_without_group_pca(small_case1):
    X = [x + np.random.default_rng(i).normal(size=x.shape) for i, x in enumerate(small_case1.X)]
    d = gica_fit(X, 2, 6, group_pca=False)
    assert d.n_components == 6
    with pytest.raises(ValueError):
        gica_fit(X, 2, 3, group_pca=False)


def test_mixing_blocks_layout(small_case1):
    d = gica_fit(small_case1.X, 3)
    assert d.M_hat.shape == (9, 3)
    assert [b.shape for b in d.subject_mixing] == [(3, 3)] * 3
    assert d.blocks == [(0, None), (1, None), (2, None)]
