import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dasdag.errors import InsufficientSamples, ValidationError
from dasdag.graph import Dag, sample_er
from dasdag.synth import (
    LINEAR,
    MIN_SLOPE,
    NONLINEAR,
    Dataset,
    ScmSpec,
    analytic_score,
    analytic_score_jacobian,
    draw,
    sample_scm,
)


def fd_gradient(f, x, eps=1e-5):
    g = np.empty_like(x)
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = eps
        g[k] = (f(x + e) - f(x - e)) / (2 * eps)
    return g


def fd_jacobian(f, x, eps=1e-5):
    cols = []
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = eps
        cols.append((f(x + e) - f(x - e)) / (2 * eps))
    return np.stack(cols, axis=1)


@pytest.fixture(params=[NONLINEAR, LINEAR])
def scm(request):
    rng = np.random.default_rng(7)
    dag = sample_er(6, 8, rng)
    return sample_scm(dag, request.param, (0.4, 0.8), rng)


class TestAnalyticScore:
    def test_matches_finite_difference_of_log_density(self, scm):
        X = draw(scm, 5, np.random.default_rng(1)).values
        for x in X:
            np.testing.assert_allclose(analytic_score(scm, x), fd_gradient(scm.log_density, x), rtol=1e-6, atol=1e-6)

    def test_jacobian_matches_finite_difference_of_score(self, scm):
        X = draw(scm, 5, np.random.default_rng(2)).values
        for x in X:
            np.testing.assert_allclose(
                analytic_score_jacobian(scm, x), fd_jacobian(lambda y: analytic_score(scm, y), x), rtol=1e-6, atol=1e-6
            )

    def test_jacobian_symmetric(self, scm):
        J = analytic_score_jacobian(scm, draw(scm, 20, np.random.default_rng(3)).values)
        np.testing.assert_allclose(J, np.swapaxes(J, 1, 2), atol=1e-12)

    def test_leaf_diagonal_is_constant(self, scm):
        J = analytic_score_jacobian(scm, draw(scm, 50, np.random.default_rng(4)).values)
        for leaf in scm.dag.leaves():
            np.testing.assert_allclose(J[:, leaf, leaf], -1.0 / scm.sigmas[leaf] ** 2, rtol=1e-12)

    def test_single_node_gaussian(self):
        scm = sample_scm(Dag.empty(1), sigma_range=(2.0, 2.0), rng=np.random.default_rng(0))
        assert analytic_score(scm, np.array([3.0]))[0] == pytest.approx(-0.75)
        assert analytic_score_jacobian(scm, np.array([3.0]))[0, 0] == pytest.approx(-0.25)

    def test_batch_matches_rows(self, scm):
        X = draw(scm, 4, np.random.default_rng(5)).values
        S = analytic_score(scm, X)
        for r in range(4):
            np.testing.assert_allclose(S[r], analytic_score(scm, X[r]), rtol=1e-13, atol=1e-13)


class TestSampleScm:
    def test_parents_follow_dag(self, scm):
        for j, f in enumerate(scm.functions):
            assert f.parents == tuple(int(p) for p in scm.dag.parents(j))

    def test_sigmas_in_range(self, scm):
        assert np.all((scm.sigmas >= 0.4) & (scm.sigmas <= 0.8))

    def test_default_sigma_is_one(self):
        s = sample_scm(sample_er(5, 5, np.random.default_rng(0)), rng=np.random.default_rng(0))
        np.testing.assert_array_equal(s.sigmas, 1.0)

    def test_linear_coefficients(self):
        s = sample_scm(sample_er(10, 20, np.random.default_rng(0)), LINEAR, rng=np.random.default_rng(0))
        c = np.concatenate([f.coefs for f in s.functions if not f.is_zero])
        assert np.all((np.abs(c) >= 0.5) & (np.abs(c) <= 2.0))

    def test_mechanisms_nondegenerate(self):
        rng = np.random.default_rng(11)
        s = sample_scm(sample_er(8, 12, rng), NONLINEAR, rng=rng)
        X = draw(s, 2000, rng).values
        for f in s.functions:
            if not f.is_zero:
                assert np.all(np.abs(f.gradient(X[:, list(f.parents)])).max(axis=0) >= MIN_SLOPE)
                assert 0.5 < f.value(X[:, list(f.parents)]).std() < 2.0

    def test_deterministic(self):
        a = sample_scm(sample_er(6, 6, np.random.default_rng(1)), rng=np.random.default_rng(2))
        b = sample_scm(sample_er(6, 6, np.random.default_rng(1)), rng=np.random.default_rng(2))
        assert a.to_dict() == b.to_dict()

    @pytest.mark.parametrize("kw", [{"mode": "quadratic"}, {"sigma_range": (0.0, 1.0)}, {"sigma_range": (2.0, 1.0)}])
    def test_validation(self, kw):
        with pytest.raises(ValidationError):
            sample_scm(Dag.empty(2), rng=np.random.default_rng(0), **kw)

    def test_rejects_mismatched_functions(self, scm):
        with pytest.raises(ValidationError):
            ScmSpec(Dag.empty(scm.d), scm.functions, scm.sigmas)

    def test_save_load_roundtrip(self, scm, tmp_path):
        scm.save(tmp_path / "scm.json")
        back = ScmSpec.load(tmp_path / "scm.json")
        X = draw(scm, 10, np.random.default_rng(0)).values
        np.testing.assert_array_equal(back.log_density(X), scm.log_density(X))


class TestDraw:
    def test_residuals_are_noise(self):
        rng = np.random.default_rng(0)
        s = sample_scm(sample_er(5, 6, rng), rng=rng, sigma_range=(0.5, 0.5))
        X = draw(s, 20000, rng).values
        R = X - s.mechanism_values(X)
        np.testing.assert_allclose(R.std(axis=0), 0.5, rtol=0.03)
        np.testing.assert_allclose(np.corrcoef(R.T), np.eye(5), atol=0.03)

    def test_deterministic(self, scm):
        a = draw(scm, 30, np.random.default_rng(9)).values
        b = draw(scm, 30, np.random.default_rng(9)).values
        np.testing.assert_array_equal(a, b)

    def test_rejects_small_n(self, scm):
        with pytest.raises(InsufficientSamples):
            draw(scm, 1, np.random.default_rng(0))

    def test_meta(self, scm):
        ds = draw(scm, 5, np.random.default_rng(0), meta={"seed": 3})
        assert ds.meta["seed"] == 3 and not ds.standardized


class TestDataset:
    def test_read_only(self):
        ds = Dataset(np.zeros((3, 2)))
        with pytest.raises(ValueError):
            ds.values[0, 0] = 1.0

    def test_default_columns(self):
        assert Dataset(np.zeros((2, 3))).columns == ("X0", "X1", "X2")

    def test_rejects_nan_with_location(self):
        v = np.zeros((3, 2))
        v[2, 1] = np.nan
        with pytest.raises(ValidationError, match="row 2, column 1"):
            Dataset(v)

    def test_rejects_single_row(self):
        with pytest.raises(InsufficientSamples):
            Dataset(np.zeros((1, 2)))

    def test_standardize(self, rng):
        ds = Dataset(rng.normal(3, 2, (100, 3))).standardize()
        np.testing.assert_allclose(ds.values.mean(0), 0, atol=1e-12)
        np.testing.assert_allclose(ds.values.std(0), 1, rtol=1e-12)
        assert ds.standardized

    def test_standardize_constant_column(self):
        ds = Dataset(np.ones((4, 1))).standardize()
        np.testing.assert_array_equal(ds.values, 0.0)

    @settings(max_examples=25)
    @given(st.integers(2, 20), st.integers(1, 5), st.integers(0, 2**32 - 1))
    def test_csv_roundtrip_exact(self, tmp_path_factory, n, d, seed):
        v = np.random.default_rng(seed).standard_normal((n, d)) * 10.0 ** np.random.default_rng(seed).integers(-8, 8)
        p = tmp_path_factory.mktemp("csv") / "x.csv"
        Dataset(v).to_csv(p)
        back = Dataset.from_csv(p)
        np.testing.assert_array_equal(back.values, v)
        assert back.columns == tuple(f"X{i}" for i in range(d))

    def test_csv_error_names_location(self, tmp_path):
        (tmp_path / "x.csv").write_text("a,b\n1,2\n3,oops\n")
        with pytest.raises(ValidationError, match=r"row 3, column 1 \('b'\)"):
            Dataset.from_csv(tmp_path / "x.csv")

    def test_csv_ragged_row(self, tmp_path):
        (tmp_path / "x.csv").write_text("a,b\n1,2\n3\n")
        with pytest.raises(ValidationError, match="row 3"):
            Dataset.from_csv(tmp_path / "x.csv")


class TestDocumentedExamples:
    def test_empty_graph_functions_are_zero(self, rng):
        s = sample_scm(Dag.empty(4), rng=rng)
        assert all(f.is_zero for f in s.functions)

    def test_nonlinear_chain_uses_parent(self, rng):
        s = sample_scm(Dag.from_edges(2, [(0, 1)]), NONLINEAR, rng=rng)
        assert s.functions[1].parents == (0,)
        assert np.any(s.functions[1].weights[:, 0] != 0)

    def test_linear_chain_nonzero_slope(self, rng):
        s = sample_scm(Dag.from_edges(2, [(0, 1)]), LINEAR, rng=rng)
        assert s.functions[1].coefs.shape == (1,) and s.functions[1].coefs[0] != 0

    def test_empty_graph_moments(self, rng):
        X = draw(sample_scm(Dag.empty(3), rng=rng), 10000, rng).values
        assert np.all(np.abs(X.mean(0)) <= 0.05)
        assert np.all(np.abs(X.var(0) - 1) <= 0.1)

    def test_sine_chain_correlation(self, rng):
        from dasdag.synth import FunctionModel

        f = FunctionModel((0,), NONLINEAR, np.ones((1, 1)), np.array([-np.pi / 2]), np.ones(1))
        s = ScmSpec(Dag.from_edges(2, [(0, 1)]), (FunctionModel(()), f), np.array([1.0, 0.05]))
        X = draw(s, 5000, rng).values
        assert np.corrcoef(X[:, 1], np.sin(X[:, 0]))[0, 1] > 0.9

    def test_two_rows(self, rng):
        assert draw(sample_scm(Dag.empty(2), rng=rng), 2, rng).n == 2

    def test_standard_normal_score(self, rng):
        s = sample_scm(Dag.empty(3), rng=rng)
        x = rng.standard_normal(3)
        np.testing.assert_allclose(analytic_score(s, x), -x, rtol=1e-15)
        np.testing.assert_array_equal(analytic_score_jacobian(s, x), -np.eye(3))

    def test_leaf_score_is_scaled_residual(self, scm):
        X = draw(scm, 30, np.random.default_rng(8)).values
        S = analytic_score(scm, X)
        F = scm.mechanism_values(X)
        for leaf in scm.dag.leaves():
            np.testing.assert_allclose(S[:, leaf], -(X[:, leaf] - F[:, leaf]) / scm.sigmas[leaf] ** 2, rtol=1e-12)

    def test_leaf_row_zero_off_parents(self, scm):
        J = analytic_score_jacobian(scm, draw(scm, 30, np.random.default_rng(9)).values)
        for leaf in scm.dag.leaves():
            others = [j for j in range(scm.d) if j != leaf and not scm.dag.adj[j, leaf]]
            assert np.all(J[:, leaf, others] == 0.0)
