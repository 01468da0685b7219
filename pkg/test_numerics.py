#!/usr/bin/env python3
"""
测试：数值基础模块
- 一元/二元正态分布函数的已知值
- Cholesky / 对称平方根 / Brent求根 / Gauss-Legendre积分
- RngStream 的可复现性与子流派生
"""
import math

import numpy as np
import pytest

from src.errors import DimensionMismatch, DomainError, NoBracket, NotPositiveDefinite
from src.numerics import (
    RngStream,
    bvn_cdf,
    bvn_survival,
    brent_root,
    cholesky,
    gauss_legendre,
    log_bvn_cdf,
    normal_cdf,
    normal_quantile,
    normal_sf,
    sample_mvn,
    sym_sqrt_2x2,
)


def test_normal_known_values():
    assert normal_cdf(1.96) == pytest.approx(0.9750021, abs=1e-7)
    assert normal_cdf(0.0) == 0.5
    assert normal_quantile(0.975) == pytest.approx(1.959964, abs=1e-6)
    # 深尾用生存函数，不会被1-p抵消
    assert normal_sf(10.0) == pytest.approx(7.619853e-24, rel=1e-6)
    for p in (1e-9, 0.01, 0.3, 0.5, 0.9, 1 - 1e-9):
        assert normal_cdf(normal_quantile(p)) == pytest.approx(p, rel=1e-12)


def test_normal_quantile_rejects_boundary():
    for p in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(DomainError):
            normal_quantile(p)


def test_bvn_closed_forms():
    # 原点处 P = 1/4 + asin(rho)/(2 pi)
    assert bvn_cdf(0.0, 0.0, 0.5) == pytest.approx(1.0 / 3.0, abs=1e-12)
    for rho in (-0.9, -0.3, 0.0, 0.4, 0.8, 0.99):
        expected = 0.25 + math.asin(rho) / (2.0 * math.pi)
        assert bvn_cdf(0.0, 0.0, rho) == pytest.approx(expected, abs=1e-12)
    # rho = 0 时分解为乘积
    assert bvn_cdf(1.2, -0.7, 0.0) == pytest.approx(normal_cdf(1.2) * normal_cdf(-0.7), abs=1e-14)
    assert bvn_survival(0.3, 1.1, 0.6) == pytest.approx(bvn_cdf(-0.3, -1.1, 0.6), abs=1e-15)


def test_bvn_vectorized_and_bounds():
    x = np.array([-2.0, 0.0, 2.0])
    vals = bvn_cdf(x[:, None], x[None, :], 0.7)
    assert vals.shape == (3, 3)
    assert np.array_equal(vals, vals.T)
    assert np.all((vals >= 0) & (vals <= 1))
    with pytest.raises(DomainError):
        bvn_cdf(0.0, 0.0, 1.0)


def test_normal_cdf_monotone():
    grid = np.linspace(-8.0, 8.0, 1000)
    cdf = normal_cdf(grid)
    assert np.all((cdf > 0) & (cdf < 1))
    assert np.all(np.diff(cdf) >= 0)
    # 双精度在1附近分辨不出相邻格点，右半段用生存函数检查严格单调
    assert np.all(np.diff(cdf[grid <= 0]) > 0)
    assert np.all(np.diff(normal_sf(grid[grid >= 0])) < 0)


@pytest.mark.parametrize("rho", [-0.99, -0.95, -0.925, -0.8, -0.5, 0.0, 0.2, 0.5, 0.8, 0.93, 0.999])
def test_bvn_argument_symmetry_is_exact(rho):
    pts = RngStream(31).uniform(-4.0, 4.0, 60)
    vals = bvn_cdf(pts[:, None], pts[None, :], rho)
    assert np.array_equal(vals, vals.T)
    surv = bvn_survival(pts[:, None], pts[None, :], rho)
    assert np.array_equal(surv, surv.T)


def test_bvn_increasing_in_rho():
    rhos = np.linspace(-0.99, 0.99, 199)
    for x, y in ((0.0, 0.0), (1.0, -0.5), (-2.0, -1.0), (2.5, 2.5), (-3.0, 1.5)):
        vals = np.array([bvn_cdf(x, y, r) for r in rhos])
        assert np.all(np.diff(vals) >= -1e-14)
        assert vals[-1] > vals[0]


def test_bvn_total_mass_and_survival_identity():
    for rho in (-0.7, 0.0, 0.6, 0.95):
        assert bvn_cdf(8.5, 8.5, rho) == pytest.approx(1.0, abs=1e-10)
        for x, y in ((0.3, -1.2), (1.5, 2.0), (-0.4, -0.4)):
            identity = 1.0 - normal_cdf(x) - normal_cdf(y) + bvn_cdf(x, y, rho)
            assert bvn_survival(x, y, rho) == pytest.approx(identity, abs=1e-12)


def test_log_bvn_cdf_deep_tail():
    # 概率约1e-395，普通算法下溢，对数尺度积分仍给出有限值
    value = log_bvn_cdf(-30.0, -30.0, 0.0)
    from scipy.special import log_ndtr
    assert math.isfinite(value)
    assert value == pytest.approx(2.0 * float(log_ndtr(-30.0)), rel=1e-6)
    assert log_bvn_cdf(0.0, 0.0, 0.5) == pytest.approx(math.log(1.0 / 3.0), abs=1e-12)


def test_cholesky_examples():
    factor = cholesky([[1.0, 0.8], [0.8, 1.0]])
    assert np.allclose(factor, [[1.0, 0.0], [0.8, 0.6]], atol=1e-14)
    with pytest.raises(NotPositiveDefinite):
        cholesky([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(DimensionMismatch):
        cholesky([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


def test_sym_sqrt_2x2():
    m = np.array([[1.0, 0.4], [0.4, 1.0]])
    root = sym_sqrt_2x2(m)
    assert np.allclose(root, root.T)
    assert np.allclose(root @ root, m, atol=1e-14)
    assert np.allclose(sym_sqrt_2x2(np.eye(2)), np.eye(2))


def _random_correlation(rng: RngStream, n: int) -> np.ndarray:
    a = rng.standard_normal((n, n + 2))
    c = a @ a.T
    s = 1.0 / np.sqrt(np.diag(c))
    c = c * s[:, None] * s[None, :]
    np.fill_diagonal(c, 1.0)
    return 0.5 * (c + c.T)


def test_factorizations_reconstruct_random_correlations():
    rng = RngStream(17)
    for i in range(100):
        m = _random_correlation(rng, 2 + i % 5)
        factor = cholesky(m)
        assert np.allclose(factor, np.tril(factor))
        assert np.linalg.norm(factor @ factor.T - m) <= 1e-10 * np.linalg.norm(m)
        if m.shape == (2, 2):
            root = sym_sqrt_2x2(m)
            assert np.linalg.norm(root @ root - m) <= 1e-10 * np.linalg.norm(m)


def test_factorizations_near_singular():
    m = np.array([[1.0, 0.999999], [0.999999, 1.0]])
    root = sym_sqrt_2x2(m)
    assert np.array_equal(root, root.T)
    assert np.all(np.linalg.eigvalsh(root) > 0)
    assert np.allclose(root @ root, m, atol=1e-12)
    factor = cholesky(m)
    assert np.allclose(factor @ factor.T, m, atol=1e-12)
    assert np.array_equal(cholesky(np.eye(3)), np.eye(3))
    with pytest.raises(NotPositiveDefinite):
        cholesky([[1.0, 1.01], [1.01, 1.0]])
    with pytest.raises(NotPositiveDefinite):
        sym_sqrt_2x2([[1.0, 1.01], [1.01, 1.0]])


def test_brent_root():
    assert brent_root(lambda x: x * x - 2.0, 0.0, 2.0) == pytest.approx(math.sqrt(2.0), abs=1e-12)
    assert brent_root(lambda x: x - 1.0, 1.0, 3.0) == 1.0
    with pytest.raises(NoBracket):
        brent_root(lambda x: x * x + 1.0, -1.0, 1.0)


def test_gauss_legendre():
    rule = gauss_legendre(6, 0.0, 1.0)
    assert rule.integrate(rule.nodes ** 5) == pytest.approx(1.0 / 6.0, abs=1e-15)
    composite = gauss_legendre(12, 0.0, 8.5, panels=9)
    assert composite.nodes.size == 108
    assert np.all(composite.weights > 0)
    # 半正态密度在[0, 8.5]上积分为1
    hn = 2.0 * np.exp(-0.5 * composite.nodes ** 2) / math.sqrt(2.0 * math.pi)
    assert composite.integrate(hn) == pytest.approx(1.0, abs=1e-14)
    with pytest.raises(DomainError):
        gauss_legendre(1, 0.0, 1.0)


def test_rng_determinism():
    a = RngStream(42)
    b = RngStream(42)
    assert np.array_equal(a.standard_normal(100), b.standard_normal(100))
    assert not np.array_equal(RngStream(42).standard_normal(10), RngStream(43).standard_normal(10))

    children = RngStream(7).spawn(3)
    assert [c.spawn_key for c in children] == [(0,), (1,), (2,)]
    again = RngStream(7).spawn(3)
    assert np.array_equal(children[2].half_normal(20), again[2].half_normal(20))
    assert np.all(RngStream(1).half_normal(1000) >= 0)
    with pytest.raises(DomainError):
        RngStream(-1)


def test_sample_mvn_moments():
    cov = np.array([[2.0, 0.6], [0.6, 1.0]])
    draws = sample_mvn([1.0, -1.0], cholesky(cov), RngStream(2024), 200_000)
    assert draws.shape == (200_000, 2)
    assert np.allclose(draws.mean(axis=0), [1.0, -1.0], atol=0.02)
    assert np.allclose(np.cov(draws, rowvar=False), cov, atol=0.03)
    with pytest.raises(DimensionMismatch):
        sample_mvn([0.0, 0.0, 0.0], np.eye(2), RngStream(1), 10)


def main():
    for name, fn in list(globals().items()):
        if name.startswith("test_") and callable(fn) and not hasattr(fn, "pytestmark"):
            fn()
    for rho in (-0.95, 0.5, 0.93):
        test_bvn_argument_symmetry_is_exact(rho)
    print("TEST NUMERICS: OK")


if __name__ == "__main__":
    main()
