import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from dslt.config import DomainError, ModelConfig
from dslt.fbm import (
    PathBatch,
    fbm_covariance,
    implied_path_covariance,
    increment_factor,
    nondeterminism_ratios,
    sample_paths,
)


class TestModelConfig:
    def test_derived_counts(self):
        cfg = ModelConfig(H=0.3, d=3, k=(1, 2, 3))
        assert cfg.k_abs == 6
        assert cfg.n_odd == 2

    def test_scalar_k_is_normalized(self):
        assert ModelConfig(H=0.5, k=2).k == (2,)

    @pytest.mark.parametrize(
        "kwargs, field",
        [
            (dict(H=1.5), "H"),
            (dict(H=0.0), "H"),
            (dict(H=0.5, d=2, k=(1,)), "k"),
            (dict(H=0.5, k=(-1,)), "k"),
            (dict(H=0.5, t=0.0), "t"),
            (dict(H=0.5, epsilon=-1.0), "epsilon"),
        ],
    )
    def test_invalid_fields_are_named(self, kwargs, field):
        with pytest.raises(DomainError) as info:
            ModelConfig(**kwargs)
        assert info.value.field == field


class TestCovariance:
    @pytest.mark.parametrize("H", [0.1, 0.5, 0.9])
    def test_unit_variance(self, H):
        assert fbm_covariance(1, 1, H) == pytest.approx(1.0, abs=1e-15)

    def test_brownian_min(self):
        assert fbm_covariance(1, 2, 0.5) == pytest.approx(1.0, abs=1e-15)

    def test_known_value(self):
        assert fbm_covariance(1, 2, 0.75) == pytest.approx(math.sqrt(2), rel=1e-12)

    @given(st.floats(0, 10), st.floats(0, 10), st.floats(0.01, 0.99))
    def test_symmetric(self, s, t, H):
        assert fbm_covariance(s, t, H) == fbm_covariance(t, s, H)

    @pytest.mark.parametrize("args", [(-1, 1, 0.5), (1, 1, 1.0), (1, 1, 0.0)])
    def test_domain_errors(self, args):
        with pytest.raises(DomainError):
            fbm_covariance(*args)


class TestFactorization:
    @pytest.mark.parametrize("H", [0.2, 0.5, 2 / 3, 0.9])
    @pytest.mark.parametrize("method", ["circulant", "cholesky"])
    def test_factor_reproduces_covariance(self, H, method):
        n, t = 64, 1.0
        dt = t / n
        cov = implied_path_covariance(n, H, dt, method)
        grid = dt * np.arange(1, n + 1)
        exact = fbm_covariance(grid[:, None], grid[None, :], H)
        assert np.max(np.abs(cov - exact)) < 1e-10

    def test_circulant_is_default(self):
        assert increment_factor(128, 0.7, 1 / 128).method == "circulant"

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            increment_factor(8, 0.5, 0.1, "euler")


class TestSampling:
    def test_paths_start_at_origin(self):
        batch = sample_paths(ModelConfig(H=0.4, d=2, k=(1, 0)), 32, 5, seed=1)
        assert batch.values.shape == (5, 33, 2)
        assert np.all(batch.values[:, 0, :] == 0.0)

    def test_deterministic(self):
        cfg = ModelConfig(H=0.7)
        a = sample_paths(cfg, 64, 10, seed=3)
        b = sample_paths(cfg, 64, 10, seed=3)
        assert a.to_bytes() == b.to_bytes()

    def test_chunking_does_not_change_paths(self):
        cfg = ModelConfig(H=0.3)
        whole = sample_paths(cfg, 64, 10, seed=5, chunk=256)
        parts = sample_paths(cfg, 64, 10, seed=5, chunk=3)
        tail = sample_paths(cfg, 64, 4, seed=5, first_path=6)
        assert np.array_equal(whole.values, parts.values)
        assert np.array_equal(whole.values[6:], tail.values)

    def test_brownian_terminal_variance(self):
        batch = sample_paths(ModelConfig(H=0.5), 2**10, 10_000, seed=11)
        x = batch.values[:, -1, 0]
        se = math.sqrt(2.0 / (x.size - 1))
        assert abs(x.var(ddof=1) - 1.0) < 3 * se

    def test_covariance_at_two_times(self):
        H = 0.7
        batch = sample_paths(ModelConfig(H=H), 64, 10_000, seed=12)
        a, b = batch.values[:, 32, 0], batch.values[:, 64, 0]
        prod = a * b
        se = prod.std(ddof=1) / math.sqrt(prod.size)
        assert abs(prod.mean() - fbm_covariance(0.5, 1.0, H)) < 3 * se

    def test_self_similarity(self):
        # a^{-H} B_{a s} has the law of B_s
        H, a = 0.3, 4.0
        cfg = ModelConfig(H=H)
        short = sample_paths(cfg, 64, 10_000, seed=21, horizon=1.0).values[:, -1, 0]
        long = sample_paths(cfg, 64, 10_000, seed=22, horizon=a).values[:, -1, 0] * a**-H
        res = stats.ks_2samp(short, long)
        assert res.pvalue > 0.01

    def test_coordinates_are_independent_copies(self):
        batch = sample_paths(ModelConfig(H=0.6, d=2, k=(0, 0)), 16, 5000, seed=2)
        x, y = batch.values[:, -1, 0], batch.values[:, -1, 1]
        r = np.corrcoef(x, y)[0, 1]
        assert abs(r) < 3 / math.sqrt(x.size)

    def test_invalid_sizes(self):
        with pytest.raises(ValueError):
            sample_paths(ModelConfig(H=0.5), 1, 1, 0)
        with pytest.raises(ValueError):
            sample_paths(ModelConfig(H=0.5), 8, 0, 0)


class TestSerialization:
    def test_binary_round_trip(self, tmp_path):
        batch = sample_paths(ModelConfig(H=0.35, d=2, k=(0, 1)), 16, 3, seed=2**40 + 7)
        path = tmp_path / "paths.fbmp"
        batch.save(path)
        back = PathBatch.load(path)
        assert np.array_equal(back.values, batch.values)
        assert (back.dt, back.seed, back.H) == (batch.dt, batch.seed, batch.H)

    def test_header_layout(self):
        batch = sample_paths(ModelConfig(H=0.5), 4, 2, seed=9)
        data = batch.to_bytes()
        assert data[:4] == b"FBMP"
        # magic, version, H, d, n_steps, n_paths, dt, seed: 44 bytes
        assert len(data) == 44 + 8 * 2 * 5

    def test_bad_magic(self):
        batch = sample_paths(ModelConfig(H=0.5), 4, 1, seed=0)
        with pytest.raises(ValueError):
            PathBatch.from_bytes(b"XXXX" + batch.to_bytes()[4:])

    def test_csv_rows(self):
        batch = sample_paths(ModelConfig(H=0.5, d=2, k=(0, 0)), 4, 2, seed=0)
        buf = io.StringIO()
        batch.write_csv(buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "path_id,t,x_1,x_2"
        assert len(lines) == 1 + 2 * 5


class TestNondeterminism:
    def test_brownian_ratio_is_one(self):
        rep = nondeterminism_ratios(0.5, 5, 200, seed=0)
        assert rep.ratio_min == pytest.approx(1.0, abs=1e-9)
        assert rep.ratio_max == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("H", [0.2, 0.7])
    def test_single_increment(self, H):
        rep = nondeterminism_ratios(H, 1, 50, seed=1)
        assert rep.ratio_min == pytest.approx(1.0, rel=1e-12)
        assert rep.ratio_max == pytest.approx(1.0, rel=1e-12)

    def test_positive_and_seed_stable(self):
        a = nondeterminism_ratios(0.3, 4, 10_000, seed=1)
        b = nondeterminism_ratios(0.3, 4, 10_000, seed=2)
        assert 0 < a.ratio_min <= a.ratio_max < np.inf
        assert b.ratio_min == pytest.approx(a.ratio_min, rel=0.2)
        assert b.ratio_max == pytest.approx(a.ratio_max, rel=0.2)
