#!/usr/bin/env python3
"""
测试：Matérn相关函数与站点相关矩阵
"""
import logging
import math

import numpy as np
import pytest

from src.covariance import MaternParams, SiteSet, corr_matrix, matern_rho
from src.errors import DomainError, NotPositiveDefinite
from src.numerics import RngStream


def test_matern_closed_forms():
    p = MaternParams(psi=0.3, xi=1.5)
    assert matern_rho(0.0, p) == 1.0
    # d = psi 处 (1 + 1) e^{-1}
    assert matern_rho(0.3, p) == pytest.approx(0.7357589, abs=1e-7)
    assert matern_rho(0.3, MaternParams(0.3, 0.5)) == pytest.approx(math.exp(-1.0), abs=1e-15)
    assert matern_rho(0.3, MaternParams(0.3, 2.5)) == pytest.approx(7.0 / 3.0 * math.exp(-1.0), abs=1e-15)
    d = np.linspace(0.0, 3.0, 50)
    vals = matern_rho(d, p)
    assert np.all(np.diff(vals) < 0)
    assert matern_rho(20 * 0.3, p) < 1e-7


def test_matern_params_validation():
    with pytest.raises(DomainError):
        MaternParams(psi=0.0)
    with pytest.raises(DomainError):
        MaternParams(psi=1.0, xi=1.0)
    with pytest.raises(DomainError):
        matern_rho(-0.1, MaternParams(1.0))


def test_site_set_validation():
    sites = SiteSet([[0.0, 0.0], [1.0, 0.0]])
    assert len(sites) == 2
    assert sites.site_ids == ["1", "2"]
    assert sites.distances()[0, 1] == 1.0
    with pytest.raises(DomainError):
        SiteSet(np.zeros((3, 3)))
    with pytest.raises(DomainError):
        SiteSet([[0.0, np.nan]])
    with pytest.raises(DomainError):
        SiteSet([[0.0, 0.0]], ["a", "b"])


def test_corr_matrix_random_sites():
    coords = RngStream(11).uniform(0.0, 1.0, (200, 2))
    mat = corr_matrix(SiteSet(coords), MaternParams(psi=0.2, xi=1.5))
    assert mat.dim == 200
    assert np.allclose(np.diag(mat.values), 1.0 + mat.jitter)
    assert np.array_equal(mat.values, mat.values.T)
    assert mat.jitter <= 1e-8
    assert np.allclose(mat.factor @ mat.factor.T, mat.values, atol=1e-10)


def test_corr_matrix_scaling_invariance():
    # 坐标与psi同比缩放，相关阵不变
    coords = RngStream(3).uniform(0.0, 1.0, (30, 2))
    sites = SiteSet(coords)
    a = corr_matrix(sites, MaternParams(0.25, 2.5))
    b = corr_matrix(sites.scaled(4.0), MaternParams(1.0, 2.5))
    assert np.allclose(a.values, b.values, atol=1e-12)


def test_corr_matrix_duplicate_sites_need_jitter(caplog):
    # 重合站点使相关阵奇异，需要加jitter
    sites = SiteSet([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]])
    with caplog.at_level(logging.WARNING):
        mat = corr_matrix(sites, MaternParams(0.5))
    assert 0.0 < mat.jitter <= 1e-6
    assert "jitter" in caplog.text
    with pytest.raises(NotPositiveDefinite):
        corr_matrix(sites, MaternParams(0.5), jitter=0.0)


def main():
    test_matern_closed_forms()
    test_matern_params_validation()
    test_site_set_validation()
    test_corr_matrix_random_sites()
    test_corr_matrix_scaling_invariance()
    print("TEST COVARIANCE: OK")


if __name__ == "__main__":
    main()
