"""
GSN分布模块
n维广义偏正态分布 GSN_n(mu, Sigma, delta)：密度、矩母函数、抽样、矩与边缘分布

随机表示: Z = mu + D V + W，D = diag(delta)，V_i 独立半正态，W ~ N_n(0, Sigma)
"""
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy import integrate, special

from .errors import DimensionMismatch, DomainError, UnsupportedDimension
from .numerics import (
    HALF_NORMAL_MEAN,
    HALF_NORMAL_VAR,
    INF_PROXY,
    RngStream,
    brent_root,
    cholesky,
    log_bvn_cdf,
    sample_mvn,
)

logger = logging.getLogger(__name__)

DEFAULT_ZETA = 1e-9

_LOG_2PI = math.log(2.0 * math.pi)
_SQRT2 = math.sqrt(2.0)
_PROB_FLOOR = 1e-300


@dataclass
class GsnParams:
    """
    GSN_n(mu, Sigma, delta) 参数

    D = diag(delta) 与 Delta = I - D (Sigma + D^2)^{-1} D 在计算时派生，不存储。
    """

    mu: np.ndarray
    sigma: np.ndarray
    delta: np.ndarray
    factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        self.delta = np.atleast_1d(np.asarray(self.delta, dtype=float))
        self.sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        n = self.mu.size
        if self.mu.ndim != 1 or self.delta.shape != (n,) or self.sigma.shape != (n, n):
            raise DimensionMismatch(
                f"维度不一致: mu{self.mu.shape}, sigma{self.sigma.shape}, delta{self.delta.shape}"
            )
        self.factor = cholesky(self.sigma)

    @property
    def dim(self) -> int:
        return int(self.mu.size)

    @property
    def omega(self) -> np.ndarray:
        """Sigma + D^2"""
        return self.sigma + np.diag(self.delta ** 2)


def _as_points(params: GsnParams, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape[-1:] != (params.dim,):
        raise DimensionMismatch(f"z的最后一维必须为{params.dim}: {z.shape}")
    return z


def log_pdf(params: GsnParams, z):
    """
    对数密度

    Φ_n 因子在对数尺度下计算（n=1 用 log_ndtr；n=2 在概率低于1e-300时
    改为对数尺度积分），极端z处不会下溢。

    Args:
        params: GSN参数，n ∈ {1, 2}
        z: 形状 (n,) 或 (m, n)

    Returns:
        标量或 (m,) 数组
    """
    n = params.dim
    if n > 2:
        raise UnsupportedDimension(f"精确密度只支持n<=2，当前n={n}")
    z = _as_points(params, z)
    x = z - params.mu
    omega = params.omega
    omega_inv = np.linalg.inv(omega)
    _, logdet = np.linalg.slogdet(omega)
    quad_form = np.einsum("...i,ij,...j->...", x, omega_inv, x)
    log_phi = -0.5 * n * _LOG_2PI - 0.5 * logdet - 0.5 * quad_form

    d = np.diag(params.delta)
    big_delta = np.eye(n) - d @ omega_inv @ d
    arg = x @ (d @ omega_inv).T
    if n == 1:
        log_cap = special.log_ndtr(arg[..., 0] / math.sqrt(big_delta[0, 0]))
    else:
        s1 = math.sqrt(big_delta[0, 0])
        s2 = math.sqrt(big_delta[1, 1])
        r = float(big_delta[0, 1] / (s1 * s2))
        log_cap = log_bvn_cdf(arg[..., 0] / s1, arg[..., 1] / s2, r)
    out = n * math.log(2.0) + log_phi + log_cap
    return float(out) if np.ndim(out) == 0 else out


def pdf(params: GsnParams, z):
    """密度 2^n φ_n(z; mu, Sigma+D^2) Φ_n(D(Sigma+D^2)^{-1}(z-mu); 0, Delta)"""
    out = np.exp(log_pdf(params, z))
    return float(out) if np.ndim(out) == 0 else out


def log_mgf(params: GsnParams, t):
    """累积量母函数 log M(t)"""
    t = _as_points(params, t)
    lin = t @ params.mu
    quad_form = 0.5 * np.einsum("...i,ij,...j->...", t, params.omega, t)
    skew = np.sum(special.log_ndtr(t * params.delta), axis=-1) + params.dim * math.log(2.0)
    out = lin + quad_form + skew
    return float(out) if np.ndim(out) == 0 else out


def mgf(params: GsnParams, t):
    """
    矩母函数 M(t) = 2^n exp(t'mu + t'(Sigma+D^2)t/2) Φ_n(D t)

    Φ_n 的协方差为单位阵，因此按分量分解为 ∏ Φ(delta_i t_i)，对任意n成立。
    """
    out = np.exp(log_mgf(params, t))
    return float(out) if np.ndim(out) == 0 else out


def sample(params: GsnParams, n_draws: int, rng: RngStream) -> np.ndarray:
    """
    按随机表示 Z = mu + D V + W 抽样

    随机数消耗顺序固定：先W (n_draws x n)，再V (n_draws x n)。
    """
    w = sample_mvn(np.zeros(params.dim), params.factor, rng, n_draws)
    v = rng.half_normal((int(n_draws), params.dim))
    return params.mu + v * params.delta + w


def closed_moments(params: GsnParams) -> Tuple[np.ndarray, np.ndarray]:
    """均值 mu + sqrt(2/pi) delta，协方差 Sigma + (1 - 2/pi) D^2"""
    mean = params.mu + HALF_NORMAL_MEAN * params.delta
    cov = params.sigma + HALF_NORMAL_VAR * np.diag(params.delta ** 2)
    return mean, cov


def marginal(params: GsnParams, index: int) -> GsnParams:
    """第index个分量的一元边缘分布 GSN_1(mu_i, Sigma_ii, delta_i)"""
    if not 0 <= index < params.dim:
        raise DomainError(f"分量下标越界: {index} (维度{params.dim})")
    return GsnParams(
        mu=[params.mu[index]],
        sigma=[[params.sigma[index, index]]],
        delta=[params.delta[index]],
    )


# ---------------------------------------------------------------------------
# 一元边缘 cdf / 分位数（自适应积分）
# ---------------------------------------------------------------------------

def _univariate(uparams: GsnParams) -> Tuple[float, float, float]:
    if uparams.dim != 1:
        raise DimensionMismatch(f"需要一元GSN参数，当前维度{uparams.dim}")
    return float(uparams.mu[0]), float(uparams.sigma[0, 0]), float(uparams.delta[0])


class _Univariate:
    """一元GSN的标量快速计算（积分内层调用频繁，避免numpy开销）"""

    def __init__(self, mu: float, s2: float, d: float):
        self.mu = mu
        self.omega = math.sqrt(s2 + d * d)
        self.alpha = d / math.sqrt(s2)
        self.mean = mu + HALF_NORMAL_MEAN * d
        self.lo = mu - INF_PROXY * self.omega
        self.hi = mu + INF_PROXY * self.omega

    def pdf(self, x: float) -> float:
        y = (x - self.mu) / self.omega
        return (
            2.0 / self.omega * math.exp(-0.5 * y * y) / math.sqrt(2.0 * math.pi)
            * 0.5 * math.erfc(-self.alpha * y / _SQRT2)
        )

    def _integrate(self, a: float, b: float) -> float:
        if b <= a:
            return 0.0
        # full_output 关闭深尾处的舍入告警，结果本身不受影响
        val = integrate.quad(self.pdf, a, b, epsabs=0.0, epsrel=1e-11, limit=200, full_output=1)[0]
        return max(val, 0.0)

    def cdf(self, x: float) -> float:
        if x <= self.lo:
            return 0.0
        if x >= self.hi:
            return 1.0
        if x <= self.mean:
            return min(self._integrate(self.lo, x), 1.0)
        return min(max(1.0 - self._integrate(x, self.hi), 0.0), 1.0)

    def sf(self, x: float) -> float:
        if x <= self.lo:
            return 1.0
        if x >= self.hi:
            return 0.0
        if x >= self.mean:
            return min(self._integrate(x, self.hi), 1.0)
        return min(max(1.0 - self._integrate(self.lo, x), 0.0), 1.0)


@lru_cache(maxsize=64)
def _univariate_cached(mu: float, s2: float, d: float) -> _Univariate:
    return _Univariate(mu, s2, d)


def marginal_cdf(uparams: GsnParams, x: float) -> float:
    """
    一元边缘cdf：从 mu - 8.5*omega 起对密度做自适应积分
    （x 在均值右侧时改为积分上尾再取补，保证上尾的相对精度）
    """
    return _univariate_cached(*_univariate(uparams)).cdf(float(x))


def marginal_sf(uparams: GsnParams, x: float) -> float:
    """一元边缘生存函数 P[Z > x]"""
    return _univariate_cached(*_univariate(uparams)).sf(float(x))


@lru_cache(maxsize=65536)
def _quantile_cached(mu: float, s2: float, d: float, p: float) -> float:
    uni = _univariate_cached(mu, s2, d)
    tol = 1e-13 * uni.omega
    if p <= 0.5:
        log_p = math.log(p)
        return brent_root(
            lambda x: math.log(max(uni.cdf(x), _PROB_FLOOR)) - log_p,
            uni.lo, uni.mean + uni.omega, tol,
        )
    log_q = math.log1p(-p)
    return brent_root(
        lambda x: log_q - math.log(max(uni.sf(x), _PROB_FLOOR)),
        uni.mean - uni.omega, uni.hi, tol,
    )


def marginal_quantile(uparams: GsnParams, p: float, zeta: float = DEFAULT_ZETA) -> float:
    """
    一元边缘分位数（对数尺度Brent求根）

    Args:
        uparams: 一元GSN参数
        p: 概率，必须在 (zeta, 1 - zeta) 内
        zeta: 机器精度窗口

    Returns:
        x，满足 F(x) = p
    """
    p = float(p)
    if not (zeta < p < 1.0 - zeta):
        raise DomainError(f"分位数概率{p}不在({zeta}, {1 - zeta})内")
    return _quantile_cached(*_univariate(uparams), p)
