#!/usr/bin/env python3
"""
测试：尾部相依
- build_pair 中心化
- 联合生存概率与正态/独立情形的闭式对照、与MC估计对照
- χ(u)、χ̄(u) 的约化、交换对称、窗口检查
- 曲线生成与批量复用
- 渐近独立性阈值与判别
"""
import math

import numpy as np
import pytest

from src import taildep
from src.errors import CurvePointError, DomainError, QuadratureError
from src.gsn import closed_moments, marginal, marginal_quantile, marginal_sf, sample
from src.numerics import HALF_NORMAL_MEAN, RngStream, bvn_survival, normal_quantile
from src.taildep import (
    TailPairParams,
    build_pair,
    chibar_curve,
    classify_prop1,
    curve_battery,
    default_u_grid,
    dependence_measures,
    figure_battery,
    joint_survival,
    orthant_probability,
    prop1_threshold,
)
from src.validation import PROP1_TRUTH_TABLE


def test_tail_pair_params_validation():
    with pytest.raises(DomainError):
        TailPairParams(1.0, 0.0, 0.0)
    with pytest.raises(DomainError):
        TailPairParams(0.5, 0.0, 0.0, zeta=0.5)
    with pytest.raises(DomainError):
        TailPairParams(0.5, 0.0, 0.0, root="lu")
    p = TailPairParams(0.4, 1.0, -0.5)
    assert p.swapped() == TailPairParams(0.4, -0.5, 1.0)


def test_build_pair_reductions():
    normal = build_pair(TailPairParams(0.6, 0.0, 0.0))
    assert np.allclose(normal.mu, 0.0) and np.allclose(normal.delta, 0.0)
    assert np.allclose(normal.sigma, [[1.0, 0.6], [0.6, 1.0]])

    indep = build_pair(TailPairParams(0.0, 1.5, -2.0))
    assert np.allclose(indep.delta, [1.5, -2.0])
    assert np.allclose(indep.mu, [-HALF_NORMAL_MEAN * 1.5, HALF_NORMAL_MEAN * 2.0])

    for root in ("symmetric", "cholesky"):
        mean, _ = closed_moments(build_pair(TailPairParams(0.8, 1.0, 2.0, root=root)))
        assert np.allclose(mean, 0.0, atol=1e-15)


def test_build_pair_sampled_mean_is_zero():
    pair = build_pair(TailPairParams(0.8, 1.0, 0.0))
    draws = sample(pair, 1_000_000, RngStream(99))
    _, cov = closed_moments(pair)
    se = np.sqrt(np.diag(cov) / draws.shape[0])
    assert np.all(np.abs(draws.mean(axis=0)) < 4 * se)


def test_joint_survival_closed_cases():
    q = float(normal_quantile(0.95))
    indep = build_pair(TailPairParams(0.0, 0.0, 0.0))
    assert joint_survival(indep, q, q) == pytest.approx(0.05 ** 2, abs=1e-12)

    q99 = float(normal_quantile(0.99))
    normal = build_pair(TailPairParams(0.8, 0.0, 0.0))
    assert joint_survival(normal, q99, q99) == pytest.approx(bvn_survival(q99, q99, 0.8), abs=1e-12)


def test_joint_survival_matches_monte_carlo():
    p = TailPairParams(0.4, 2.0, 1.0)
    pair = build_pair(p)
    q1 = marginal_quantile(marginal(pair, 0), 0.95)
    q2 = marginal_quantile(marginal(pair, 1), 0.95)
    exact = joint_survival(pair, q1, q2)

    n = 2_000_000
    draws = sample(pair, n, RngStream(2025))
    hits = np.mean((draws[:, 0] > q1) & (draws[:, 1] > q2))
    se = math.sqrt(exact * (1 - exact) / n)
    assert abs(hits - exact) < 4 * se
    assert exact <= 0.05 + 1e-12


def test_probability_integral_transform():
    pair = build_pair(TailPairParams(0.4, -1.0, 2.0))
    for idx in (0, 1):
        m = marginal(pair, idx)
        for u in (0.9, 0.99, 0.9999):
            assert marginal_sf(m, marginal_quantile(m, u)) == pytest.approx(1 - u, abs=1e-8)


def test_independence_gives_zero_chibar():
    p = TailPairParams(0.0, 0.0, 0.0)
    for u in (0.2, 0.7, 0.99):
        m = dependence_measures(p, u)
        assert m.chibar == pytest.approx(0.0, abs=1e-8)
        assert m.chi == pytest.approx(1 - u, rel=1e-8)


def test_gaussian_reduction():
    p = TailPairParams(0.4, 0.0, 0.0)
    for u in (0.9, 0.99, 0.999):
        q = float(normal_quantile(u))
        s = bvn_survival(q, q, 0.4)
        expected = 2.0 * math.log1p(-u) / math.log(s) - 1.0
        m = dependence_measures(p, u)
        assert m.chibar == pytest.approx(expected, abs=1e-6)
        assert m.chi == pytest.approx(s / (1 - u), abs=1e-6)
        assert m.flag == "ok"


def test_exchange_symmetry():
    p = TailPairParams(0.4, 2.0, -0.5)
    for u in (0.3, 0.95, 0.999):
        a = dependence_measures(p, u)
        b = dependence_measures(p.swapped(), u)
        assert abs(a.chi - b.chi) < 1e-10
        assert abs(a.chibar - b.chibar) < 1e-10


def test_dependence_measures_window():
    p = TailPairParams(0.4, 1.0, 1.0, zeta=1e-6)
    with pytest.raises(DomainError):
        dependence_measures(p, 1e-7)
    with pytest.raises(DomainError):
        dependence_measures(p, 1.0 - 1e-7)


def test_chibar_monotone_in_rho_for_normal():
    values = [dependence_measures(TailPairParams(r, 0.0, 0.0), 0.9).chibar for r in (0.2, 0.5, 0.8, 0.999)]
    assert values == sorted(values)
    assert values[-1] > 0.95


def test_chi_decreases_for_independent_configs():
    for rho, d1, d2 in ((0.4, 1.0, 2.0), (0.8, -1.0, -0.5), (0.8, 0.0, 0.0)):
        p = TailPairParams(rho, d1, d2)
        chis = [dependence_measures(p, u).chi for u in (0.99, 0.999, 0.9999)]
        assert chis[0] > chis[1] > chis[2]


def test_default_u_grid():
    grid = default_u_grid()
    assert grid.size == 200
    assert np.all(np.diff(grid) > 0)
    assert grid[0] > 1e-9 and grid[-1] < 1 - 1e-9
    assert default_u_grid(1e-6, 41).size == 41
    with pytest.raises(DomainError):
        default_u_grid(n=1)


def test_chibar_curve_reference_and_shape():
    grid = [0.5, 0.9, 0.99, 0.999]
    normal = chibar_curve(TailPairParams(0.8, 0.0, 0.0), grid, reference=True)
    assert len(normal) == 4
    assert np.allclose(normal.chibar, normal.reference.chibar, atol=1e-6)
    assert [r["u"] for r in normal.rows()] == grid
    assert set(normal.rows()[0]) == {"u", "rho", "delta1", "delta2", "chi_u", "chibar_u", "flag"}

    pos = chibar_curve(TailPairParams(0.4, 1.0, 1.0), grid)
    neg = chibar_curve(TailPairParams(0.4, -1.0, -1.0), grid)
    assert np.all(np.isfinite(pos.chibar)) and np.all(np.abs(pos.chibar) <= 1)
    assert abs(pos.value_at(0.99) - neg.value_at(0.99)) > 1e-3


def test_chibar_curve_rejects_bad_grid():
    p = TailPairParams(0.4, 0.0, 0.0)
    with pytest.raises(DomainError):
        chibar_curve(p, [0.9, 0.5])
    with pytest.raises(DomainError):
        chibar_curve(p, [1e-12, 0.5])


def test_quadrature_failure_reports_u(monkeypatch):
    # 校验规则降为2点且不允许加密，混合积分必然判为未收敛
    monkeypatch.setattr(taildep, "CHECK_ORDER", 2)
    monkeypatch.setattr(taildep, "MAX_REFINE", 0)
    p = TailPairParams(0.4, 1.0, 2.0)
    pair = build_pair(p)
    with pytest.raises(QuadratureError) as info:
        orthant_probability(pair, 1.0, 1.0)
    assert 0.0 < info.value.error_estimate < 1.0
    assert "z=(1.0, 1.0)" in str(info.value)

    with pytest.raises(CurvePointError) as info:
        chibar_curve(p, [0.9, 0.99])
    assert info.value.u == 0.9
    assert isinstance(info.value.cause, QuadratureError)
    assert "u=0.9" in str(info.value)


def test_curve_battery_reuses_mirror():
    grid = [0.6, 0.95]
    curves = curve_battery([(0.4, 1.0, -0.5), (0.4, -0.5, 1.0), (0.4, 0.0, 0.0)], u_grid=grid)
    a, b, ref = curves
    assert np.array_equal(a.chibar, b.chibar)
    assert b.params.delta1 == -0.5
    assert a.reference is ref and ref.reference is ref
    assert len(figure_battery()) == 72


def test_prop1_threshold():
    assert prop1_threshold(0.8, 0.0) == pytest.approx(0.3535534, abs=1e-7)
    assert prop1_threshold(0.999999, 2.0) == pytest.approx(2.0, abs=1e-5)
    assert math.isinf(prop1_threshold(-0.5, 1.0))
    assert math.isinf(prop1_threshold(0.0, 1.0))
    with pytest.raises(DomainError):
        prop1_threshold(1.0, 0.0)
    # 根号内在(0, 1)上恒为正，一直到最接近1的双精度数
    for rho in (1e-12, 0.3, 0.9, 0.999999, float(np.nextafter(1.0, 0.0))):
        for d2 in (0.0, 0.5, -3.0):
            t = prop1_threshold(rho, d2)
            assert math.isfinite(t) and t >= 0.0


def test_classify_prop1_examples():
    assert classify_prop1(0.4, 1.0, 2.0).label == "AsymptoticallyIndependent(a)"
    assert classify_prop1(0.8, 0.3, 0.0).label == "AsymptoticallyIndependent(b)"
    assert classify_prop1(0.8, 1.0, -0.5).label == "Indeterminate"


@pytest.mark.parametrize("rho, d1, d2, label", PROP1_TRUTH_TABLE)
def test_classify_prop1_truth_table(rho, d1, d2, label):
    assert classify_prop1(rho, d1, d2).label == label


def main():
    for name, fn in list(globals().items()):
        # 带参数的测试（parametrize、monkeypatch）只在pytest下运行
        if name.startswith("test_") and callable(fn) and fn.__code__.co_argcount == 0:
            fn()
    for case in PROP1_TRUTH_TABLE:
        test_classify_prop1_truth_table(*case)
    print("TEST TAILDEP: OK")


if __name__ == "__main__":
    main()
