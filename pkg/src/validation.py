"""
自检模块
用积分和蒙特卡洛对照检查密度、抽样、边缘一致性、尾部相依、矩公式和随机场矩

每个检查返回 CheckResult；run_battery 按固定顺序执行并汇总为报告行。
"""
import filecmp
import logging
import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np
from scipy import integrate, stats

from .covariance import MaternParams, SiteSet
from .errors import GsnError
from .fields import MixtureModel, SgrfModel, empirical_moments, regular_sites, simulate_mixture, simulate_sgrf
from .gsn import GsnParams, closed_moments, marginal, marginal_cdf, pdf, sample
from .moments import MomentParams, skew_kurt
from .numerics import RngStream, bvn_survival, gauss_legendre, normal_quantile
from .taildep import (
    TailPairParams,
    build_pair,
    classify_prop1,
    curve_battery,
    default_u_grid,
    dependence_measures,
    figure_battery,
    prop1_threshold,
)

logger = logging.getLogger(__name__)

NORMALIZATION_DELTAS = ((0.0, 0.0), (1.0, 1.0), (-1.0, -1.0), (2.0, 1.0), (1.0, -1.0), (0.5, 2.0))
NORMALIZATION_RHOS = (0.0, 0.4, 0.8)

# (rho, delta1, delta2, 期望标签)，按判别条件手工推出
PROP1_TRUTH_TABLE: Tuple[Tuple[float, float, float, str], ...] = (
    (0.8, 0.0, 0.0, "AsymptoticallyIndependent(a)"),
    (0.8, 0.0, 1.0, "AsymptoticallyIndependent(a)"),
    (0.8, 0.5, 1.0, "AsymptoticallyIndependent(a)"),
    (0.8, 1.0, 1.0, "AsymptoticallyIndependent(a)"),
    (0.8, -1.0, -0.5, "AsymptoticallyIndependent(a)"),
    (0.8, -0.5, -1.0, "AsymptoticallyIndependent(a)"),
    (0.8, -1.0, 0.0, "AsymptoticallyIndependent(a)"),
    (0.8, -0.5, 2.0, "AsymptoticallyIndependent(a)"),
    (0.8, 0.3, 0.0, "AsymptoticallyIndependent(b)"),
    (0.8, 0.5, 0.0, "Indeterminate"),
    (0.8, 0.6, 0.5, "AsymptoticallyIndependent(b)"),
    (0.8, 0.7, 0.5, "Indeterminate"),
    (0.8, 1.1, 1.0, "AsymptoticallyIndependent(b)"),
    (0.8, 1.2, 1.0, "Indeterminate"),
    (0.8, 0.5, -0.5, "Indeterminate"),
    (0.8, 0.0, -1.0, "Indeterminate"),
    (0.4, 0.8, 0.0, "AsymptoticallyIndependent(b)"),
    (0.4, 0.9, 0.0, "Indeterminate"),
    (0.4, 1.0, 0.5, "AsymptoticallyIndependent(b)"),
    (0.4, 1.1, 0.5, "Indeterminate"),
    (0.4, 1.5, 1.0, "AsymptoticallyIndependent(b)"),
    (0.4, 2.0, 1.0, "Indeterminate"),
    (0.4, 0.5, 2.0, "AsymptoticallyIndependent(a)"),
    (0.4, -2.0, -1.0, "AsymptoticallyIndependent(a)"),
    (0.4, 1.0, -0.5, "Indeterminate"),
    (-0.3, 5.0, 0.0, "AsymptoticallyIndependent(b)"),
    (-0.3, 1.0, 0.5, "AsymptoticallyIndependent(b)"),
    (-0.3, 0.0, 0.5, "AsymptoticallyIndependent(a)"),
    (-0.3, 1.0, -1.0, "Indeterminate"),
    (-0.3, -1.0, -2.0, "AsymptoticallyIndependent(a)"),
)

MOMENT_GAMMAS = (0.5, 1.0, 2.0)
MOMENT_NUS = (0.25, 0.5, 1.0)


@dataclass
class CheckResult:
    check: str
    passed: bool
    seconds: float
    detail: str

    def row(self) -> Dict[str, object]:
        return {"check": self.check, "passed": self.passed, "seconds": round(self.seconds, 3), "detail": self.detail}


@dataclass(frozen=True)
class Budget:
    """样本量与网格规模；quick 模式缩减耗时最多的几项"""

    sampler_draws: int = 1_000_000
    ks_draws: int = 100_000
    field_reps: int = 10_000
    cov_reps: int = 400_000
    limit_reps: int = 100_000
    moment_reps: int = 1_000_000
    u_points: int = 200
    battery_deltas: Tuple[float, ...] = (-1.0, -0.5, 0.0, 0.5, 1.0, 2.0)

    @classmethod
    def quick(cls) -> "Budget":
        return cls(
            sampler_draws=200_000,
            ks_draws=20_000,
            moment_reps=200_000,
            u_points=40,
            battery_deltas=(-1.0, 0.0, 1.0),
        )


def batch_se(values: np.ndarray, statistic: Callable[[np.ndarray], float], n_batches: int = 50) -> float:
    """分批统计量的标准误：各批统计量的标准差 / sqrt(批数)"""
    batches = np.array_split(np.asarray(values), n_batches)
    est = np.array([statistic(b) for b in batches])
    return float(est.std(ddof=1) / math.sqrt(n_batches))


def _bivariate_box(params: GsnParams, width: float = 12.0) -> List[Tuple[float, float]]:
    mean, cov = closed_moments(params)
    sd = np.sqrt(np.diag(cov))
    return [(float(m - width * s), float(m + width * s)) for m, s in zip(mean, sd)]


# ---------------------------------------------------------------------------
# 各项检查
# ---------------------------------------------------------------------------

def check_density_normalization(budget: Budget) -> Tuple[bool, str]:
    worst1 = 0.0
    for d in sorted({d for pair in NORMALIZATION_DELTAS for d in pair}):
        p1 = GsnParams(mu=[0.0], sigma=[[1.0]], delta=[d])
        (lo, hi), = _bivariate_box(p1)
        total = integrate.quad(lambda x: pdf(p1, [x]), lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
        worst1 = max(worst1, abs(total - 1.0))

    worst2 = 0.0
    for rho in NORMALIZATION_RHOS:
        for d1, d2 in NORMALIZATION_DELTAS:
            p2 = GsnParams(mu=[0.0, 0.0], sigma=[[1.0, rho], [rho, 1.0]], delta=[d1, d2])
            (lo1, hi1), (lo2, hi2) = _bivariate_box(p2)
            r1 = gauss_legendre(20, lo1, hi1, panels=24)
            r2 = gauss_legendre(20, lo2, hi2, panels=24)
            xx, yy = np.meshgrid(r1.nodes, r2.nodes, indexing="ij")
            dens = pdf(p2, np.stack([xx.ravel(), yy.ravel()], axis=-1)).reshape(xx.shape)
            total = float(r1.weights @ dens @ r2.weights)
            worst2 = max(worst2, abs(total - 1.0))
    passed = worst1 < 1e-8 and worst2 < 1e-6
    return passed, f"一元最大偏差={worst1:.2e}; 二元最大偏差={worst2:.2e}"


def _sampler_cases() -> List[GsnParams]:
    return [
        GsnParams(mu=[0.0], sigma=[[1.0]], delta=[2.0]),
        GsnParams(mu=[1.0, -1.0], sigma=[[1.0, 0.4], [0.4, 1.0]], delta=[1.0, 1.0]),
        GsnParams(mu=[0.0, 0.0], sigma=[[2.0, -0.6], [-0.6, 1.0]], delta=[-1.5, 0.5]),
        GsnParams(mu=[0.0, 0.5], sigma=[[1.0, 0.8], [0.8, 1.0]], delta=[0.0, -2.0]),
        GsnParams(
            mu=[0.0, 1.0, -2.0],
            sigma=[[1.0, 0.5, 0.2], [0.5, 1.0, 0.3], [0.2, 0.3, 1.0]],
            delta=[1.0, -1.0, 3.0],
        ),
    ]


def check_sampler_fidelity(budget: Budget, rng: RngStream) -> Tuple[bool, str]:
    worst = 0.0
    for params, stream in zip(_sampler_cases(), rng.spawn(5)):
        z = sample(params, budget.sampler_draws, stream)
        n = z.shape[0]
        mean, cov = closed_moments(params)
        z_mean = z.mean(axis=0)
        se_mean = np.sqrt(np.diag(cov) / n)
        worst = max(worst, float(np.max(np.abs(z_mean - mean) / se_mean)))
        centered = z - z_mean
        for i in range(params.dim):
            for j in range(i, params.dim):
                prod = centered[:, i] * centered[:, j]
                se = prod.std(ddof=1) / math.sqrt(n)
                worst = max(worst, abs(prod.mean() * n / (n - 1) - cov[i, j]) / se)
    return worst <= 4.0, f"最大偏差 {worst:.2f} 个标准误（上限4）"


def check_marginalization(budget: Budget, rng: RngStream) -> Tuple[bool, str]:
    params = GsnParams(
        mu=[0.5, -1.0, 0.0],
        sigma=[[1.0, 0.5, 0.3], [0.5, 1.5, 0.2], [0.3, 0.2, 0.8]],
        delta=[2.0, -1.0, 0.5],
    )
    z = sample(params, budget.ks_draws, rng)
    pvalues = []
    for i in range(params.dim):
        uparams = marginal(params, i)
        cdf = np.vectorize(lambda x: marginal_cdf(uparams, x))
        pvalues.append(float(stats.kstest(z[:, i], cdf).pvalue))
    passed = all(p > 0.01 for p in pvalues)
    return passed, "KS p值=" + ", ".join(f"{p:.3f}" for p in pvalues)


def check_gaussian_reduction(budget: Budget) -> Tuple[bool, str]:
    worst = 0.0
    for rho in (0.4, 0.8):
        p = TailPairParams(rho, 0.0, 0.0)
        for u in (0.9, 0.99, 0.999):
            m = dependence_measures(p, u)
            q = float(normal_quantile(u))
            s = float(bvn_survival(q, q, rho))
            ref = 2.0 * math.log1p(-u) / math.log(s) - 1.0
            worst = max(worst, abs(m.chibar - ref), abs(m.chi - s / (1.0 - u)))
    indep = max(abs(dependence_measures(TailPairParams(0.0, 0.0, 0.0), u).chibar) for u in (0.9, 0.99, 0.999))
    passed = worst < 1e-6 and indep < 1e-10
    return passed, f"与二元正态最大偏差={worst:.2e}; 独立情形|chibar|={indep:.2e}"


def check_prop1(budget: Budget) -> Tuple[bool, str]:
    threshold = prop1_threshold(0.8, 0.0)
    mismatches = [
        (rho, d1, d2) for rho, d1, d2, label in PROP1_TRUTH_TABLE
        if classify_prop1(rho, d1, d2).label != label
    ]
    not_decreasing = []
    for rho, d1, d2, label in PROP1_TRUTH_TABLE:
        if not label.endswith("(a)"):
            continue
        p = TailPairParams(rho, d1, d2)
        pair = build_pair(p)
        chis = [dependence_measures(p, u, pair=pair).chi for u in (0.99, 0.999, 0.9999)]
        if not (chis[0] > chis[1] > chis[2]):
            not_decreasing.append((rho, d1, d2))
    passed = abs(threshold - 0.3535534) < 1e-7 and not mismatches and not not_decreasing
    return passed, (
        f"阈值={threshold:.7f}; 判别不符={mismatches or '无'}; χ(u)非递减={not_decreasing or '无'}"
    )


def check_figure_battery(budget: Budget) -> Tuple[bool, str]:
    configs = figure_battery(deltas=budget.battery_deltas)
    grid = default_u_grid(n=budget.u_points)
    curves = curve_battery(configs, u_grid=grid)
    bad = [c.params for c in curves if not (np.all(np.isfinite(c.chibar)) and np.all(np.abs(c.chibar) <= 1.0))]

    by_key = {(c.params.rho, c.params.delta1, c.params.delta2): c for c in curves}
    close_pairs = []
    compared = 0
    for (rho, d1, d2), c in by_key.items():
        # delta=0 无翻转；d1 = -d2 时翻转等价于交换分量，曲线相同
        if (d1 == 0.0 and d2 == 0.0) or d1 == -d2:
            continue
        flipped = by_key.get((rho, -d1, -d2))
        if flipped is None:
            continue
        compared += 1
        u_star = 0.99
        diff = abs(c.value_at(u_star) - flipped.value_at(u_star))
        if diff <= 1e-3:
            close_pairs.append((rho, d1, d2, round(diff, 6)))
    passed = not bad and not close_pairs
    return passed, (
        f"{len(curves)}条曲线 x {grid.size}点; 越界={len(bad)}; "
        f"翻转比较{compared}对, 差值<=1e-3: {close_pairs or '无'}"
    )


def check_moment_formulas(budget: Budget, rng: RngStream) -> Tuple[bool, str]:
    s0, k0 = skew_kurt(MomentParams(gamma=0.0, nu=0.0))
    exact_ok = s0 == 0.0 and k0 == 3.0
    s_inf, k_inf = skew_kurt(MomentParams(gamma=100.0, nu=0.0))
    range_ok = abs(s_inf / 1.4075 - 1.0) < 0.01 and abs(k_inf / 9.672 - 1.0) < 0.01

    site = SiteSet(np.zeros((1, 2)), ["s1"])
    failures = []
    streams = rng.spawn(len(MOMENT_GAMMAS) * len(MOMENT_NUS))
    idx = 0
    for gamma in MOMENT_GAMMAS:
        for nu in MOMENT_NUS:
            model = MixtureModel(beta=(0.0,), sigma=1.0, gamma=gamma, tau2=1.0, nu=nu, matern=MaternParams(0.2))
            y = simulate_mixture(model, site, budget.moment_reps, streams[idx]).reps[:, 0]
            idx += 1
            s_cf, k_cf = skew_kurt(MomentParams.from_model(model))
            s_mc = float(stats.skew(y))
            k_mc = float(stats.kurtosis(y, fisher=False))
            s_tol = max(0.05 * abs(s_cf), 4.0 * batch_se(y, lambda b: float(stats.skew(b))))
            k_tol = max(0.05 * abs(k_cf), 4.0 * batch_se(y, lambda b: float(stats.kurtosis(b, fisher=False))))
            if abs(s_mc - s_cf) > s_tol or abs(k_mc - k_cf) > k_tol:
                failures.append((gamma, nu, round(s_mc, 4), round(s_cf, 4), round(k_mc, 3), round(k_cf, 3)))
    passed = exact_ok and range_ok and not failures
    return passed, (
        f"(S,K)(0,0)=({s0}, {k0}); gamma=100: S={s_inf:.4f}, K={k_inf:.3f}; MC不符={failures or '无'}"
    )


def check_field_moments(budget: Budget, rng: RngStream) -> Tuple[bool, str]:
    w_stream, c_stream = rng.spawn(2)
    # 站点间距远大于psi，各站点近似独立
    psi = 0.02
    model = SgrfModel(mu=0.0, sigma2=1.0, gamma=1.0, tau2=1.0, rho_w=MaternParams(psi))
    grid = simulate_sgrf(model, regular_sites(5), budget.field_reps, w_stream)
    emp = empirical_moments(grid)
    var_rel = abs(emp.pooled_variance / 2.7267604 - 1.0)
    site_means = grid.reps.mean(axis=1)
    mean_se = site_means.std(ddof=1) / math.sqrt(site_means.size)
    mean_z = abs(site_means.mean() - model.mu) / mean_se

    pair_sites = SiteSet(np.array([[0.0, 0.0], [psi, 0.0]]), ["a", "b"])
    pair_grid = simulate_sgrf(model, pair_sites, budget.cov_reps, c_stream)
    cov = float(np.cov(pair_grid.reps, rowvar=False)[0, 1])
    cov_rel = abs(cov / 0.7357589 - 1.0)
    passed = var_rel < 0.02 and cov_rel < 0.03 and mean_z < 3.0
    return passed, (
        f"方差={emp.pooled_variance:.5f} (相对偏差{var_rel:.3%}); "
        f"距离psi处协方差={cov:.5f} (相对偏差{cov_rel:.3%}); 均值偏差{mean_z:.2f}个标准误"
    )


def check_mixture_limit(budget: Budget, rng: RngStream) -> Tuple[bool, str]:
    matern = MaternParams(0.02)
    sites = regular_sites(2)
    sgrf = SgrfModel(mu=0.0, sigma2=1.0, gamma=1.0, tau2=1.0, rho_w=matern)
    mixture = MixtureModel(beta=(0.0,), sigma=1.0, gamma=1.0, tau2=1.0, nu=1e-8, matern=matern)
    seed = rng.seed
    v_s = float(simulate_sgrf(sgrf, sites, budget.limit_reps, RngStream(seed)).reps.var(ddof=1))
    v_m = float(simulate_mixture(mixture, sites, budget.limit_reps, RngStream(seed)).reps.var(ddof=1))
    rel = abs(v_m / v_s - 1.0)
    return rel < 0.01, f"SGRF方差={v_s:.5f}, 混合场(nu=1e-8)方差={v_m:.5f}, 相对差{rel:.2e}"


def check_determinism(budget: Budget, seed: int) -> Tuple[bool, str]:
    # 延迟导入：runner 依赖本模块
    from .parser import parse_config
    from .runner import run

    argv_sets = [
        ["simulate", "--n-reps", "20", "--n-sites", "9", "--model", "mixture", "--emit-latents"],
        ["chibar-curve", "--rho", "0.8", "--delta1", "1", "--delta2", "-0.5", "--u-points", "12"],
    ]
    mismatched: List[str] = []
    with tempfile.TemporaryDirectory() as td:
        for argv in argv_sets:
            dirs = []
            for tag in ("a", "b"):
                out = Path(td) / f"{argv[0]}_{tag}"
                config = parse_config(argv + ["--seed", str(seed), "--out", str(out)])
                if run(config, quiet=True) != 0:
                    mismatched.append(f"{argv[0]} 运行失败")
                dirs.append(out)
            names = sorted(p.name for p in dirs[0].glob("*.csv"))
            _, diff, errors = filecmp.cmpfiles(dirs[0], dirs[1], names, shallow=False)
            mismatched.extend(diff + errors)
            if not names:
                mismatched.append(f"{argv[0]} 没有输出CSV")
    return not mismatched, f"不一致文件: {mismatched or '无'}"


def run_battery(seed: int, quick: bool = False,
                progress: Callable[[CheckResult], None] = lambda r: None) -> List[CheckResult]:
    """
    依次执行全部检查；某项抛出 GsnError 时记为失败并继续

    Args:
        seed: 根随机种子，各检查使用派生的子流
        quick: 缩减样本量与网格
        progress: 每项完成后的回调
    """
    budget = Budget.quick() if quick else Budget()
    root = RngStream(seed)
    streams = root.spawn(6)
    checks: Sequence[Tuple[str, Callable[[], Tuple[bool, str]]]] = (
        ("density_normalization", lambda: check_density_normalization(budget)),
        ("sampler_fidelity", lambda: check_sampler_fidelity(budget, streams[0])),
        ("marginalization_ks", lambda: check_marginalization(budget, streams[1])),
        ("gaussian_tail_reduction", lambda: check_gaussian_reduction(budget)),
        ("prop1_classification", lambda: check_prop1(budget)),
        ("figure_battery", lambda: check_figure_battery(budget)),
        ("moment_formulas", lambda: check_moment_formulas(budget, streams[2])),
        ("field_moments", lambda: check_field_moments(budget, streams[3])),
        ("mixture_limit", lambda: check_mixture_limit(budget, streams[4])),
        ("determinism", lambda: check_determinism(budget, seed)),
    )
    results = []
    for name, fn in checks:
        start = time.perf_counter()
        try:
            passed, detail = fn()
        except GsnError as exc:
            logger.error("检查 %s 出错: %s", name, exc)
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        result = CheckResult(name, bool(passed), time.perf_counter() - start, detail)
        results.append(result)
        progress(result)
    return results
