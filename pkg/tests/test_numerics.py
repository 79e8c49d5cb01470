import numpy as np
import pytest

from i2drnn.numerics import (ConvergenceError, Rng, as_matrix, as_vector,
                             largest_eigenvalue, matvec, spectral_norm,
                             spectral_radius_scale, tanh_deriv, tanh_vec)


def test_as_matrix_rejects_wrong_rank():
    with pytest.raises(ValueError):
        as_matrix([1.0, 2.0])
    with pytest.raises(ValueError):
        as_vector([[1.0], [2.0]])


def test_matvec_checks_dimensions():
    with pytest.raises(ValueError):
        matvec(np.eye(3), np.ones(2))
    np.testing.assert_allclose(matvec([[2.0, 0.0], [0.0, 3.0]], [1.0, 1.0]),
                               [2.0, 3.0])


def test_tanh_deriv_identity():
    v = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(tanh_deriv(v), 1.0 - tanh_vec(v) ** 2,
                               atol=1e-15)


def test_largest_eigenvalue_hand_case():
    # eigenvalues of [[2,1],[1,2]] are 1 and 3
    assert largest_eigenvalue([[2.0, 1.0], [1.0, 2.0]]) == pytest.approx(3.0, abs=1e-9)


def test_largest_eigenvalue_matches_eigvalsh():
    gen = np.random.default_rng(42)
    for n in (2, 3, 5, 8, 13):
        m = gen.normal(size=(n, n))
        sym = m.T @ m
        want = float(np.linalg.eigvalsh(sym)[-1])
        got = largest_eigenvalue(sym)
        assert got == pytest.approx(want, rel=1e-8, abs=1e-10)


def test_largest_eigenvalue_requires_symmetry_and_square():
    with pytest.raises(ValueError):
        largest_eigenvalue([[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(ValueError):
        largest_eigenvalue(np.ones((2, 3)))


def test_largest_eigenvalue_zero_and_scalar():
    assert largest_eigenvalue(np.zeros((4, 4))) == 0.0
    assert largest_eigenvalue([[-2.5]]) == -2.5


def test_largest_eigenvalue_deterministic():
    gen = np.random.default_rng(3)
    m = gen.normal(size=(6, 6))
    sym = m.T @ m
    assert largest_eigenvalue(sym) == largest_eigenvalue(sym)


def test_spectral_norm_matches_svd():
    gen = np.random.default_rng(7)
    for shape in ((3, 3), (4, 2), (2, 5)):
        m = gen.normal(size=shape)
        want = float(np.linalg.svd(m, compute_uv=False)[0])
        assert spectral_norm(m) == pytest.approx(want, rel=1e-8)


def test_spectral_radius_scale_hits_target():
    gen = np.random.default_rng(11)
    m = gen.normal(size=(5, 5))
    for target in (0.5, 0.9, 1.0):
        scaled = spectral_radius_scale(m, target)
        got = float(np.linalg.svd(scaled, compute_uv=False)[0])
        assert got == pytest.approx(target, abs=1e-6)


def test_spectral_radius_scale_validates_target():
    with pytest.raises(ValueError):
        spectral_radius_scale(np.eye(2), 0.0)
    with pytest.raises(ValueError):
        spectral_radius_scale(np.eye(2), 1.5)


def test_spectral_radius_scale_zero_matrix_warns():
    with pytest.warns(RuntimeWarning):
        out = spectral_radius_scale(np.zeros((3, 3)), 0.9)
    assert np.all(out == 0.0)


def test_convergence_error_carries_iterations():
    err = ConvergenceError("nope", 17)
    assert err.iterations == 17
    assert "17" in str(err)


class TestRng:
    def test_same_seed_same_stream(self):
        a = Rng(99).split("x").normal(8)
        b = Rng(99).split("x").normal(8)
        np.testing.assert_array_equal(a, b)

    def test_labels_give_independent_streams(self):
        root = Rng(99)
        a = root.split("a").normal(8)
        b = root.split("b").normal(8)
        assert not np.array_equal(a, b)

    def test_split_insensitive_to_parent_draws(self):
        r1 = Rng(5)
        r1.normal(100)  # consume the parent stream
        child1 = r1.split("c").uniform(size=4)
        child2 = Rng(5).split("c").uniform(size=4)
        np.testing.assert_array_equal(child1, child2)

    def test_nested_paths_distinct(self):
        a = Rng(0).split("x").split("y").normal(4)
        b = Rng(0).split("x/y").normal(4)  # flat label is a different path
        assert not np.array_equal(a, b)

    def test_integers_inclusive_endpoint(self):
        draws = Rng(3).integers(1, 3, 5000)
        assert set(np.unique(draws)) == {1, 2, 3}

    def test_permutation_is_permutation(self):
        p = Rng(8).permutation(20)
        assert sorted(p.tolist()) == list(range(20))

    def test_different_seeds_differ(self):
        assert not np.array_equal(Rng(1).normal(6), Rng(2).normal(6))
