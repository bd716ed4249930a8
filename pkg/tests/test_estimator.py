import io
import math
import os
import subprocess
import sys

import numpy as np
import pytest
from oracles import line_path_dslt_k0

from dslt.config import ModelConfig
from dslt.estimator import (
    MAX_ORDER,
    GridMismatchError,
    McEstimate,
    batch_values,
    dslt_batch,
    dslt_columns,
    dslt_pathwise,
    horizon_values,
    mc_moment,
    write_values_csv,
)
from dslt.fbm import sample_paths


def _brute_force(path, k, eps, y, dt):
    # direct double loop with trapezoidal edge weights, diagonal excluded
    n = len(path) - 1
    total = 0.0
    norm = (2 * math.pi * eps) ** -0.5 * eps ** (-k / 2)
    coef = np.zeros(k + 1)
    coef[k] = 1
    for l in range(1, n + 1):
        for j in range(l):
            w = 0.5 if j == 0 else 1.0
            w *= 0.5 if l == n else 1.0
            z = path[l] - path[j] - y
            total += w * norm * math.exp(-z * z / (2 * eps)) * np.polynomial.hermite_e.hermeval(z / math.sqrt(eps), coef)
    return total * dt * dt


class TestPathwise:
    def test_zero_path_odd_order_vanishes(self):
        cfg = ModelConfig(H=0.5, k=(1,), epsilon=0.1)
        assert dslt_pathwise(np.zeros(65), cfg).value == 0.0

    def test_zero_path_local_time_is_simplex_area(self):
        cfg = ModelConfig(H=0.5, k=(0,), epsilon=0.1)
        n = 1024
        exact = (2 * math.pi * 0.1) ** -0.5 * 0.5
        # the excluded diagonal removes a strip of area ~ dt / 2
        assert dslt_pathwise(np.zeros(n + 1), cfg).value == pytest.approx(exact, rel=2.0 / n)

    def test_line_path_oracle(self):
        cfg = ModelConfig(H=0.5, k=(0,), epsilon=0.01)
        n = 8192
        s = np.linspace(0, 1, n + 1)
        assert dslt_pathwise(s, cfg).value == pytest.approx(line_path_dslt_k0(0.01), rel=1e-3)

    @pytest.mark.parametrize("k", [0, 1, 2, 3])
    def test_matches_brute_force(self, k):
        rng = np.random.default_rng(k)
        path = np.cumsum(rng.normal(0, 0.1, 41))
        path[0] = 0.0
        cfg = ModelConfig(H=0.5, k=(k,), epsilon=0.05)
        got = dslt_pathwise(path, cfg, y=0.03).value
        assert got == pytest.approx(_brute_force(path, k, 0.05, 0.03, 1 / 40), rel=1e-11, abs=1e-12)

    @pytest.mark.parametrize("k", [(1,), (2,), (1, 2), (0, 0)])
    def test_sign_covariance(self, k):
        cfg = ModelConfig(H=0.4, d=len(k), k=k, epsilon=0.05)
        path = sample_paths(cfg, 128, 1, seed=11).values[0]
        a = dslt_pathwise(path, cfg).value
        b = dslt_pathwise(-path, cfg).value
        assert b == (-1) ** sum(k) * a

    def test_translation_invariance(self):
        cfg = ModelConfig(H=0.4, d=2, k=(1, 1), epsilon=0.05)
        path = sample_paths(cfg, 128, 1, seed=12).values[0]
        y = np.array([0.1, -0.2])
        a = dslt_pathwise(path, cfg, y).value
        b = dslt_pathwise(path + np.array([3.0, -1.5]), cfg, y).value
        assert b == pytest.approx(a, rel=1e-9, abs=1e-12)

    def test_grid_refinement_order(self):
        cfg = ModelConfig(H=0.5, k=(1,), epsilon=0.1)
        ns = [64, 128, 256, 512, 1024, 2048]
        vals = [dslt_pathwise(np.sin(3 * np.linspace(0, 1, n + 1)), cfg, y=0.2).value for n in ns]
        diffs = np.abs(np.diff(vals))
        dts = 1 / np.array(ns[1:])
        gamma = np.polyfit(np.log(dts), np.log(diffs), 1)[0]
        assert gamma > 0.5

    def test_grid_mismatch(self):
        cfg = ModelConfig(H=0.5, epsilon=0.1)
        with pytest.raises(GridMismatchError):
            dslt_pathwise(np.zeros(11), cfg, dt=0.05)
        dslt_pathwise(np.zeros(11), cfg, dt=0.1)

    def test_dimension_checks(self):
        cfg = ModelConfig(H=0.5, d=2, k=(1, 0), epsilon=0.1)
        with pytest.raises(ValueError):
            dslt_pathwise(np.zeros((11, 3)), cfg)
        with pytest.raises(ValueError):
            dslt_pathwise(np.zeros((11, 2)), cfg, y=[0.1])

    def test_horizons_from_one_pass(self):
        cfg = ModelConfig(H=0.5, k=(2,), epsilon=0.1)
        path = sample_paths(cfg, 64, 1, seed=1).values
        cols = dslt_columns(path, cfg.k, cfg.epsilon, np.zeros(1))
        per = horizon_values(cols, 1 / 64, [32, 64])[0, 0, 0]
        half = dslt_pathwise(path[0, :33], cfg.replace(t=0.5)).value
        assert per[0] == pytest.approx(half, rel=1e-13)
        assert per[1] == pytest.approx(dslt_pathwise(path[0], cfg).value, rel=1e-13)


class TestBatch:
    def test_batch_matches_pathwise(self):
        cfg = ModelConfig(H=0.35, k=(1,), epsilon=0.05)
        vals = dslt_batch(cfg, 5, 64, seed=4)
        batch = sample_paths(cfg, 64, 5, seed=4)
        np.testing.assert_array_equal(vals, batch_values(batch, cfg))
        assert vals[2] == dslt_pathwise(batch.values[2], cfg).value

    def test_chunking_does_not_change_values(self):
        cfg = ModelConfig(H=0.35, k=(2,), epsilon=0.05)
        np.testing.assert_array_equal(dslt_batch(cfg, 7, 32, seed=2, chunk=3), dslt_batch(cfg, 7, 32, seed=2))

    def test_stride_is_coarse_grid_of_same_paths(self):
        cfg = ModelConfig(H=0.35, k=(1,), epsilon=0.05)
        coarse = dslt_batch(cfg, 3, 64, seed=9, stride=2)
        batch = sample_paths(cfg, 64, 3, seed=9)
        assert coarse[1] == pytest.approx(dslt_pathwise(batch.values[1, ::2], cfg).value, rel=1e-14)
        with pytest.raises(ValueError):
            dslt_batch(cfg, 3, 64, seed=9, stride=3)

    def test_thread_count_does_not_change_bytes(self):
        code = (
            "from dslt.config import ModelConfig; from dslt.estimator import dslt_batch;"
            "import sys; sys.stdout.write(dslt_batch(ModelConfig(H=0.4, k=(1,), epsilon=0.05), 9, 64, 5).tobytes().hex())"
        )
        outs = []
        for threads in ("1", "3"):
            env = dict(os.environ, NUMBA_NUM_THREADS=threads)
            outs.append(subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                                       check=True).stdout)
        assert outs[0] == outs[1]

    def test_csv(self):
        buf = io.StringIO()
        write_values_csv(buf, [0.5, -1.25])
        assert buf.getvalue() == "path_id,value\n0,0.5\n1,-1.25\n"


class TestMcMoment:
    def test_antithetic_odd_order_is_exactly_zero(self):
        cfg = ModelConfig(H=0.5, k=(1,), epsilon=0.1)
        est = mc_moment(cfg, 0.0, 1, n_paths=20, n_steps=64, seed=1)
        assert est.mean == 0.0 and est.std_error == 0.0

    def test_plain_mean_within_three_se(self):
        cfg = ModelConfig(H=0.5, k=(1,), epsilon=0.1)
        est = mc_moment(cfg, 0.0, 1, n_paths=200, n_steps=64, seed=1, antithetic=False)
        assert abs(est.mean) < 3 * est.std_error

    def test_antithetic_with_shifted_y_recomputes_mirror(self):
        cfg = ModelConfig(H=0.5, k=(1,), epsilon=0.1)
        est = mc_moment(cfg, 0.3, 1, n_paths=10, n_steps=32, seed=2, discretization=False)
        base = dslt_batch(cfg, 10, 32, 2, 0.3)
        mirror = dslt_batch(cfg, 10, 32, 2, 0.3, negate=True)
        assert est.mean == pytest.approx(np.mean(0.5 * (base + mirror)), rel=1e-12)

    def test_standard_error_identity(self):
        cfg = ModelConfig(H=0.5, k=(2,), epsilon=0.1)
        est = mc_moment(cfg, 0.0, 2, n_paths=50, n_steps=32, seed=3)
        assert isinstance(est, McEstimate)
        assert est.std_error == pytest.approx(math.sqrt(est.variance / est.n_samples), rel=1e-14)
        assert est.n_samples == 50 and est.discretization_tol >= 0

    def test_order_range(self):
        cfg = ModelConfig(H=0.5, epsilon=0.1)
        with pytest.raises(ValueError):
            mc_moment(cfg, 0.0, MAX_ORDER + 1, 10, 32, 0)
        with pytest.raises(ValueError):
            mc_moment(cfg, 0.0, 0, 10, 32, 0)
