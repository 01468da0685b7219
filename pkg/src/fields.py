"""
随机场模块
偏正态随机场(SGRF)与尺度-形状混合场的模拟、平稳矩公式和经验矩估计

两类模型的输出统一写成
    Y = 均值 + lambda^{-1/2} (w + delta * t) + epsilon
SGRF 中 lambda 恒为1；latent 面板按此约定保存。
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy import stats

from .covariance import MaternParams, SiteSet, corr_matrix, matern_rho
from .errors import DimensionMismatch, DomainError
from .numerics import HALF_NORMAL_MEAN, HALF_NORMAL_VAR, RngStream, sample_mvn

logger = logging.getLogger(__name__)

# 子随机流的派生顺序，固定后重放逐位一致
STREAM_ORDER = ("w", "delta", "lambda", "v", "epsilon")
LATENT_KEYS = ("w", "delta", "lambda", "t", "epsilon")


@dataclass(frozen=True)
class SgrfModel:
    """
    SGRF: Y(s) = mu + W(s) + delta(s) T(s) + eps(s)

    W ~ N(0, sigma2 * R_w)，delta ~ N(gamma, gamma^2 * R_delta)，
    T = V - sqrt(2/pi)，V 逐点独立半正态，eps ~ N(0, tau2)。
    rho_delta 缺省时与 rho_w 相同。
    """

    mu: float
    sigma2: float
    gamma: float
    tau2: float
    rho_w: MaternParams
    rho_delta: Optional[MaternParams] = None

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise DomainError(f"sigma2必须>0: {self.sigma2}")
        if not self.tau2 >= 0:
            raise DomainError(f"tau2必须>=0: {self.tau2}")
        if not (math.isfinite(self.mu) and math.isfinite(self.gamma)):
            raise DomainError(f"mu与gamma必须有限: mu={self.mu}, gamma={self.gamma}")
        if self.rho_delta is None:
            object.__setattr__(self, "rho_delta", self.rho_w)


@dataclass(frozen=True)
class MixtureModel:
    """
    尺度-形状混合场:
        Y_i = X_i' beta + sigma lambda_i^{-1/2} W_i + gamma lambda_i^{-1/2} delta_i T_i + eps_i

    W ~ N(0, H)，delta ~ N(1, H)，ln lambda ~ N(-nu/2, nu H)，三者共用相关阵 H。
    design 为 None 时取截距列（全1），此时 beta 只能有一个元素。
    """

    beta: tuple
    sigma: float
    gamma: float
    tau2: float
    nu: float
    matern: MaternParams
    design: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in np.atleast_1d(self.beta)))
        if not self.beta:
            raise DomainError("beta不能为空")
        if not self.sigma > 0:
            raise DomainError(f"sigma必须>0: {self.sigma}")
        if not self.nu > 0:
            raise DomainError(f"nu必须>0: {self.nu}")
        if not self.tau2 >= 0:
            raise DomainError(f"tau2必须>=0: {self.tau2}")
        if not math.isfinite(self.gamma):
            raise DomainError(f"gamma必须有限: {self.gamma}")
        if self.design is not None:
            design = np.atleast_2d(np.asarray(self.design, dtype=float))
            if design.shape[1] != len(self.beta):
                raise DimensionMismatch(f"设计矩阵列数{design.shape[1]}与beta长度{len(self.beta)}不一致")
            object.__setattr__(self, "design", design)
        elif len(self.beta) != 1:
            raise DimensionMismatch("未提供设计矩阵时beta只能是截距")

    def mean_surface(self, n_sites: int) -> np.ndarray:
        if self.design is None:
            return np.full(n_sites, self.beta[0])
        if self.design.shape[0] != n_sites:
            raise DimensionMismatch(f"设计矩阵行数{self.design.shape[0]}与站点数{n_sites}不一致")
        return self.design @ np.asarray(self.beta)


@dataclass
class SimGrid:
    """模拟结果：reps 为 (n_reps, n_sites)；latents 仅在要求时保存"""

    sites: SiteSet
    reps: np.ndarray
    latents: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.reps.ndim != 2 or self.reps.shape[1] != len(self.sites):
            raise DimensionMismatch(f"模拟矩阵形状{self.reps.shape}与站点数{len(self.sites)}不一致")
        if not np.all(np.isfinite(self.reps)):
            raise DomainError("模拟结果含非有限值")
        lam = self.latents.get("lambda")
        if lam is not None and not np.all(lam > 0):
            raise DomainError("lambda面板必须严格为正")

    @property
    def n_reps(self) -> int:
        return int(self.reps.shape[0])

    def rows(self) -> List[dict]:
        """逐 (rep, site) 展开为行，rep 从1开始编号"""
        rows = []
        coords = self.sites.coords
        for r in range(self.n_reps):
            for j, site_id in enumerate(self.sites.site_ids):
                row = {
                    "rep": r + 1,
                    "site_id": site_id,
                    "x": float(coords[j, 0]),
                    "y": float(coords[j, 1]),
                    "value": float(self.reps[r, j]),
                }
                for key in LATENT_KEYS:
                    if key in self.latents:
                        row[key] = float(self.latents[key][r, j])
                rows.append(row)
        return rows


def regular_sites(n_side: int, extent: float = 1.0) -> SiteSet:
    """[0, extent]^2 上 n_side x n_side 的规则网格，按行优先编号"""
    if n_side < 1:
        raise DomainError(f"网格边长必须>=1: {n_side}")
    axis = np.linspace(0.0, extent, n_side) if n_side > 1 else np.zeros(1)
    xx, yy = np.meshgrid(axis, axis)
    coords = np.column_stack([xx.ravel(), yy.ravel()])
    ids = [f"s{i + 1:03d}" for i in range(coords.shape[0])]
    return SiteSet(coords, ids)


def _check_reps(n_reps: int) -> int:
    n_reps = int(n_reps)
    if n_reps < 1:
        raise DomainError(f"n_reps必须>=1: {n_reps}")
    return n_reps


def _streams(rng: RngStream) -> Dict[str, RngStream]:
    return dict(zip(STREAM_ORDER, rng.spawn(len(STREAM_ORDER))))


def simulate_sgrf(model: SgrfModel, sites: SiteSet, n_reps: int, rng: RngStream,
                  keep_latents: bool = False) -> SimGrid:
    """
    按 Y = mu + W + delta T + eps 模拟SGRF

    每个分量从各自的子流整块抽取 (n_reps, n_sites) 面板；lambda 子流不使用，
    因此与同seed的混合场模拟共享 W、delta、V、eps 的底层抽样。

    Raises:
        NotPositiveDefinite: 相关矩阵分解失败
    """
    n_reps = _check_reps(n_reps)
    n = len(sites)
    streams = _streams(rng)
    h_w = corr_matrix(sites, model.rho_w)
    h_delta = h_w if model.rho_delta == model.rho_w else corr_matrix(sites, model.rho_delta)

    w = math.sqrt(model.sigma2) * sample_mvn(np.zeros(n), h_w.factor, streams["w"], n_reps)
    delta = model.gamma + abs(model.gamma) * sample_mvn(np.zeros(n), h_delta.factor, streams["delta"], n_reps)
    t = streams["v"].half_normal((n_reps, n)) - HALF_NORMAL_MEAN
    eps = math.sqrt(model.tau2) * streams["epsilon"].standard_normal((n_reps, n))

    reps = model.mu + w + delta * t + eps
    latents = {}
    if keep_latents:
        latents = {"w": w, "delta": delta, "lambda": np.ones((n_reps, n)), "t": t, "epsilon": eps}
    logger.info("SGRF模拟完成: %d次重复 x %d个站点", n_reps, n)
    return SimGrid(sites=sites, reps=reps, latents=latents)


def simulate_mixture(model: MixtureModel, sites: SiteSet, n_reps: int, rng: RngStream,
                     keep_latents: bool = False) -> SimGrid:
    """
    按尺度-形状混合模型模拟

    W、delta、ln lambda 共用 H = corr_matrix(sites, model.matern)。
    latent 中 w = sigma W，delta = gamma * delta_i（未乘 lambda^{-1/2}）。
    """
    n_reps = _check_reps(n_reps)
    n = len(sites)
    mean = model.mean_surface(n)
    streams = _streams(rng)
    h = corr_matrix(sites, model.matern)
    zeros = np.zeros(n)

    w = model.sigma * sample_mvn(zeros, h.factor, streams["w"], n_reps)
    delta = model.gamma * (1.0 + sample_mvn(zeros, h.factor, streams["delta"], n_reps))
    log_lam = -0.5 * model.nu + math.sqrt(model.nu) * sample_mvn(zeros, h.factor, streams["lambda"], n_reps)
    lam = np.exp(log_lam)
    t = streams["v"].half_normal((n_reps, n)) - HALF_NORMAL_MEAN
    eps = math.sqrt(model.tau2) * streams["epsilon"].standard_normal((n_reps, n))

    reps = mean + np.exp(-0.5 * log_lam) * (w + delta * t) + eps
    latents = {}
    if keep_latents:
        latents = {"w": w, "delta": delta, "lambda": lam, "t": t, "epsilon": eps}
    logger.info("混合场模拟完成: %d次重复 x %d个站点 (nu=%s)", n_reps, n, model.nu)
    return SimGrid(sites=sites, reps=reps, latents=latents)


@dataclass(frozen=True)
class StationaryMoments:
    mean: float
    variance: float
    covariance: Callable[[float], float] = field(repr=False)


def stationary_moments(model: SgrfModel) -> StationaryMoments:
    """
    SGRF的平稳矩

    E[Y] = mu，Var[Y] = tau2 + sigma2 + 2 gamma^2 (1 - 2/pi)，
    d > 0 时 Cov = sigma2 * rho_w(d)（不含nugget与delta项）；d = 0 时返回方差。
    """
    variance = model.tau2 + model.sigma2 + 2.0 * model.gamma ** 2 * HALF_NORMAL_VAR
    rho_w = model.rho_w

    def covariance(d: float) -> float:
        if d < 0:
            raise DomainError(f"距离必须>=0: {d}")
        if d == 0:
            return variance
        return model.sigma2 * float(matern_rho(d, rho_w))

    return StationaryMoments(mean=model.mu, variance=variance, covariance=covariance)


@dataclass
class EmpiricalMoments:
    """经验矩：逐站点与合并（所有重复和站点）的均值、无偏方差、偏度、峰度（非超额）"""

    mean: np.ndarray
    variance: np.ndarray
    skewness: np.ndarray
    kurtosis: np.ndarray
    degenerate: np.ndarray
    pooled_mean: float
    pooled_variance: float
    pooled_skewness: float
    pooled_kurtosis: float
    pooled_mean_se: float
    covariance: np.ndarray

    @property
    def any_degenerate(self) -> bool:
        return bool(np.any(self.degenerate))


def _shape_stats(x: np.ndarray, axis=None):
    skew = stats.skew(x, axis=axis, bias=True)
    kurt = stats.kurtosis(x, axis=axis, fisher=False, bias=True)
    return skew, kurt


def empirical_moments(grid: SimGrid) -> EmpiricalMoments:
    """
    经验矩估计；常数面板方差为0、偏度峰度记为nan并在 degenerate 中标记

    Raises:
        DomainError: n_reps < 2
    """
    reps = grid.reps
    if reps.shape[0] < 2:
        raise DomainError(f"经验矩至少需要2次重复: {reps.shape[0]}")
    degenerate = np.all(reps == reps[0], axis=0)
    if np.any(degenerate):
        logger.warning("%d个站点的模拟面板为常数", int(degenerate.sum()))

    mean = reps.mean(axis=0)
    variance = reps.var(axis=0, ddof=1)
    skew = np.full(reps.shape[1], np.nan)
    kurt = np.full(reps.shape[1], np.nan)
    live = ~degenerate
    if np.any(live):
        skew[live], kurt[live] = _shape_stats(reps[:, live], axis=0)

    pooled = reps.ravel()
    pooled_var = float(pooled.var(ddof=1))
    if pooled_var > 0:
        p_skew, p_kurt = (float(v) for v in _shape_stats(pooled))
    else:
        p_skew, p_kurt = math.nan, math.nan
    cov = np.atleast_2d(np.cov(reps, rowvar=False, ddof=1))
    return EmpiricalMoments(
        mean=mean,
        variance=variance,
        skewness=skew,
        kurtosis=kurt,
        degenerate=degenerate,
        pooled_mean=float(pooled.mean()),
        pooled_variance=pooled_var,
        pooled_skewness=p_skew,
        pooled_kurtosis=p_kurt,
        pooled_mean_se=math.sqrt(pooled_var / pooled.size),
        covariance=cov,
    )
