"""
数值基础模块
一元/二元正态分布函数、线性代数、数值积分、求根与随机数流，
其余模块都建立在这里的函数之上
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate, linalg, optimize, special

from .errors import DimensionMismatch, DomainError, NoBracket, NotPositiveDefinite

logger = logging.getLogger(__name__)

ArrayLike = Union[float, Sequence[float], np.ndarray]

# 正态尾部截断点（8.5个标准差之外的概率 < 1e-17）
INF_PROXY = 8.5

HALF_NORMAL_MEAN = math.sqrt(2.0 / math.pi)
HALF_NORMAL_VAR = 1.0 - 2.0 / math.pi

_TWOPI = 2.0 * math.pi
# 超过该幅度后 Φ 在双精度下已饱和为 0/1
_SATURATION = 40.0

# Genz/Drezner-Wesolowsky 二元正态算法使用的 Gauss-Legendre 节点（负半轴）与权重
_BVN_X = (
    np.array([-0.9324695142031522, -0.6612093864662647, -0.2386191860831970]),
    np.array([
        -0.9815606342467191, -0.9041172563704750, -0.7699026741943050,
        -0.5873179542866171, -0.3678314989981802, -0.1252334085114692,
    ]),
    np.array([
        -0.9931285991850949, -0.9639719272779138, -0.9122344282513259,
        -0.8391169718222188, -0.7463319064601508, -0.6360536807265150,
        -0.5108670019508271, -0.3737060887154196, -0.2277858511416451,
        -0.07652652113349733,
    ]),
)
_BVN_W = (
    np.array([0.1713244923791705, 0.3607615730481384, 0.4679139345726904]),
    np.array([
        0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
        0.2031674267230659, 0.2334925365383547, 0.2491470458134029,
    ]),
    np.array([
        0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
        0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
        0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
        0.1527533871307259,
    ]),
)


def _scalar_or_array(x: np.ndarray):
    return float(x) if np.ndim(x) == 0 else x


# ---------------------------------------------------------------------------
# 一元正态
# ---------------------------------------------------------------------------

def normal_pdf(x: ArrayLike):
    x = np.asarray(x, dtype=float)
    return _scalar_or_array(np.exp(-0.5 * x * x) / math.sqrt(_TWOPI))


def normal_cdf(x: ArrayLike):
    """标准正态cdf（基于erfc，两侧尾部对称处理）"""
    return _scalar_or_array(special.ndtr(np.asarray(x, dtype=float)))


def normal_sf(x: ArrayLike):
    return _scalar_or_array(special.ndtr(-np.asarray(x, dtype=float)))


def normal_quantile(p: ArrayLike):
    """
    标准正态分位数：有理逼近（ndtri）后再做一步Newton修正

    Args:
        p: 概率，必须在 (0, 1) 内

    Returns:
        分位数
    """
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise DomainError(f"分位数概率必须在(0,1)内: {p}")
    x = special.ndtri(p)
    # 上尾用生存函数做修正，避免 1-p 的抵消误差
    upper = p > 0.5
    resid = np.where(upper, (1.0 - p) - special.ndtr(-x), special.ndtr(x) - p)
    dens = np.exp(-0.5 * x * x) / math.sqrt(_TWOPI)
    step = np.where(dens > 0, resid / np.where(dens > 0, dens, 1.0), 0.0)
    return _scalar_or_array(x - step)


# ---------------------------------------------------------------------------
# 二元正态
# ---------------------------------------------------------------------------

def _check_rho(rho: float) -> float:
    rho = float(rho)
    if not (-1.0 < rho < 1.0):
        raise DomainError(f"相关系数必须满足|rho|<1: {rho}")
    return rho


def _bvnu(h: np.ndarray, k: np.ndarray, r: float) -> np.ndarray:
    """
    上正交象限概率 P[X > h, Y > k]，(X, Y) 为标准二元正态，相关系数 r

    Genz 的 BVNU 算法（Drezner & Wesolowsky 1989），向量化到 h, k；r 为标量。
    """
    h, k = np.broadcast_arrays(
        np.clip(np.asarray(h, dtype=float), -_SATURATION, _SATURATION),
        np.clip(np.asarray(k, dtype=float), -_SATURATION, _SATURATION),
    )
    # 固定(h, k)的顺序，使结果对交换参数逐位一致
    h, k = np.minimum(h, k), np.maximum(h, k)
    if abs(r) < 0.3:
        ng = 0
    elif abs(r) < 0.75:
        ng = 1
    else:
        ng = 2
    xs_nodes, ws = _BVN_X[ng], _BVN_W[ng]
    hk = h * k

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        if abs(r) < 0.925:
            hs = 0.5 * (h * h + k * k)
            asr = math.asin(r)
            sn = np.sin(asr * (np.concatenate([xs_nodes, -xs_nodes]) + 1.0) / 2.0)
            wts = np.concatenate([ws, ws])
            expo = (sn * hk[..., None] - hs[..., None]) / (1.0 - sn * sn)
            bvn = np.sum(wts * np.exp(expo), axis=-1)
            bvn = bvn * asr / (2.0 * _TWOPI) + special.ndtr(-h) * special.ndtr(-k)
            return np.clip(bvn, 0.0, 1.0)

        if r < 0:
            k = -k
            hk = -hk
        a_s = (1.0 - r) * (1.0 + r)
        a = math.sqrt(a_s)
        b_s = (h - k) ** 2
        c = (4.0 - hk) / 8.0
        d = (12.0 - hk) / 16.0
        bvn = a * np.exp(-(b_s / a_s + hk) / 2.0) * (
            1.0 - c * (b_s - a_s) * (1.0 - d * b_s / 5.0) / 3.0 + c * d * a_s * a_s / 5.0
        )
        b = np.sqrt(b_s)
        tail = (
            np.exp(-hk / 2.0) * math.sqrt(_TWOPI) * special.ndtr(-b / a) * b
            * (1.0 - c * b_s * (1.0 - d * b_s / 5.0) / 3.0)
        )
        bvn = bvn - np.where(hk > -160.0, tail, 0.0)
        half_a = a / 2.0
        for xi, wi in zip(xs_nodes, ws):
            x2 = (half_a * (xi + 1.0)) ** 2
            rs = np.sqrt(1.0 - x2)
            bvn = bvn + half_a * wi * (
                np.exp(-b_s / (2.0 * x2) - hk / (1.0 + rs)) / rs
                - np.exp(-(b_s / x2 + hk) / 2.0) * (1.0 + c * x2 * (1.0 + d * x2))
            )
            x2 = a_s * (-xi + 1.0) ** 2 / 4.0
            rs = np.sqrt(1.0 - x2)
            bvn = bvn + half_a * wi * np.exp(-(b_s / x2 + hk) / 2.0) * (
                np.exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs
                - (1.0 + c * x2 * (1.0 + d * x2))
            )
        bvn = np.nan_to_num(-bvn / _TWOPI, nan=0.0)
        if r > 0:
            bvn = bvn + special.ndtr(-np.maximum(h, k))
        else:
            bvn = -bvn + np.maximum(0.0, special.ndtr(-h) - special.ndtr(-k))
    return np.clip(bvn, 0.0, 1.0)


def bvn_cdf(x: ArrayLike, y: ArrayLike, rho: float):
    """
    标准二元正态cdf P[X <= x, Y <= y]

    Args:
        x, y: 上限（标量或数组，按numpy规则广播）
        rho: 相关系数，|rho| < 1

    Returns:
        概率（绝对误差约1e-15）
    """
    rho = _check_rho(rho)
    return _scalar_or_array(
        _bvnu(-np.asarray(x, dtype=float), -np.asarray(y, dtype=float), rho)
    )


def bvn_survival(x: ArrayLike, y: ArrayLike, rho: float):
    """标准二元正态生存函数 P[X > x, Y > y]"""
    rho = _check_rho(rho)
    return _scalar_or_array(_bvnu(np.asarray(x, dtype=float), np.asarray(y, dtype=float), rho))


def _log_bvn_cdf_tail(x: float, y: float, rho: float) -> float:
    # log Φ2 = log ∫_{-inf}^{a} φ(t) Φ((b - ρt)/s) dt，对数尺度下积分
    a, b = (x, y) if x <= y else (y, x)
    s = math.sqrt((1.0 - rho) * (1.0 + rho))

    def g(t: float) -> float:
        return -0.5 * t * t - 0.5 * math.log(_TWOPI) + float(special.log_ndtr((b - rho * t) / s))

    offsets = (0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0)
    g_max = max(g(a - y0) for y0 in offsets)
    val, _ = integrate.quad(lambda y0: math.exp(g(a - y0) - g_max), 0.0, np.inf,
                            epsabs=0.0, epsrel=1e-10, limit=200)
    return g_max + math.log(val) if val > 0 else -np.inf


def log_bvn_cdf(x: ArrayLike, y: ArrayLike, rho: float):
    """log Φ2(x, y; rho)，概率低于1e-300时改用对数尺度积分，避免下溢"""
    rho = _check_rho(rho)
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    shape = x.shape
    x, y = x.ravel(), y.ravel()
    p = _bvnu(-x, -y, rho)
    with np.errstate(divide="ignore"):
        out = np.log(p)
    for i in np.flatnonzero(p < 1e-300):
        out[i] = _log_bvn_cdf_tail(float(x[i]), float(y[i]), rho)
    return _scalar_or_array(out.reshape(shape))


# ---------------------------------------------------------------------------
# 线性代数
# ---------------------------------------------------------------------------

def _as_square(m) -> np.ndarray:
    a = np.asarray(m.values if isinstance(m, SpdMatrix) else m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"需要方阵，实际形状: {a.shape}")
    return a


def _check_symmetric(a: np.ndarray) -> None:
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12 * scale):
        raise NotPositiveDefinite("矩阵不对称")


def cholesky(m) -> np.ndarray:
    """
    Cholesky分解，返回下三角因子L，满足 L @ L.T == m

    Raises:
        NotPositiveDefinite: 出现非正主元
    """
    a = _as_square(m)
    _check_symmetric(a)
    try:
        factor = linalg.cholesky(a, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NotPositiveDefinite(f"矩阵非正定: {exc}") from exc
    if not np.all(np.diag(factor) > 0):
        raise NotPositiveDefinite("Cholesky因子对角元非正")
    return factor


@dataclass
class SpdMatrix:
    """对称正定矩阵（构造时即完成Cholesky分解作为正定性证明）"""

    values: np.ndarray
    jitter: float = 0.0
    factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.values = _as_square(self.values)
        self.factor = cholesky(self.values)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def sym_sqrt_2x2(m) -> np.ndarray:
    """
    2x2 对称正定矩阵的主平方根（特征分解）

    Returns:
        对称半正定矩阵 R，R @ R == m
    """
    a = _as_square(m)
    if a.shape != (2, 2):
        raise DimensionMismatch(f"sym_sqrt_2x2 只接受2x2矩阵: {a.shape}")
    _check_symmetric(a)
    evals, evecs = np.linalg.eigh(0.5 * (a + a.T))
    if not np.all(evals > 0):
        raise NotPositiveDefinite(f"特征值非正: {evals}")
    root = (evecs * np.sqrt(evals)) @ evecs.T
    return 0.5 * (root + root.T)


# ---------------------------------------------------------------------------
# 求根与积分
# ---------------------------------------------------------------------------

def brent_root(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12) -> float:
    """
    Brent法求根

    Raises:
        NoBracket: f(lo) 与 f(hi) 同号
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return float(lo)
    if fhi == 0.0:
        return float(hi)
    if np.sign(flo) == np.sign(fhi):
        raise NoBracket(f"区间[{lo}, {hi}]两端同号: f(lo)={flo}, f(hi)={fhi}")
    return float(optimize.brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=200))


@dataclass(frozen=True)
class QuadratureRule:
    """求积规则：节点、正权重与积分区间"""

    nodes: np.ndarray
    weights: np.ndarray
    domain: Tuple[float, float]

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))


def gauss_legendre(order: int, lo: float, hi: float, panels: int = 1) -> QuadratureRule:
    """
    复合Gauss-Legendre规则：把[lo, hi]等分成panels段，每段order个节点

    Args:
        order: 每段节点数（>= 2）
        lo, hi: 积分区间
        panels: 分段数

    Returns:
        QuadratureRule
    """
    if order < 2:
        raise DomainError(f"求积节点数至少为2: {order}")
    if panels < 1 or not hi > lo:
        raise DomainError(f"非法积分区间或分段: [{lo}, {hi}], panels={panels}")
    x, w = leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return QuadratureRule(nodes=nodes, weights=weights, domain=(float(lo), float(hi)))


# ---------------------------------------------------------------------------
# 随机数
# ---------------------------------------------------------------------------

class RngStream:
    """
    可复现的随机数流（PCG64，周期 2^128）

    相同seed产生逐位相同的序列。RngStream不可跨线程共享；并行任务通过
    spawn() 派生子流，拆分规则为 numpy SeedSequence.spawn：第i个子流由
    (seed, spawn_key=父key+(i,)) 唯一确定。
    """

    def __init__(self, seed: int, _seed_seq: Optional[np.random.SeedSequence] = None):
        seed = int(seed)
        if not 0 <= seed < 2 ** 64:
            raise DomainError(f"seed必须是64位无符号整数: {seed}")
        self.seed = seed
        self._seed_seq = _seed_seq if _seed_seq is not None else np.random.SeedSequence(seed)
        self.generator = np.random.Generator(np.random.PCG64(self._seed_seq))

    @property
    def spawn_key(self) -> Tuple[int, ...]:
        return tuple(self._seed_seq.spawn_key)

    def spawn(self, n: int) -> List["RngStream"]:
        return [RngStream(self.seed, _seed_seq=child) for child in self._seed_seq.spawn(n)]

    def standard_normal(self, size) -> np.ndarray:
        return self.generator.standard_normal(size)

    def half_normal(self, size) -> np.ndarray:
        # HN(0,1) = |N(0,1)|
        return np.abs(self.generator.standard_normal(size))

    def uniform(self, low: float, high: float, size) -> np.ndarray:
        return self.generator.uniform(low, high, size)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, spawn_key={self.spawn_key})"


def sample_mvn(mean: ArrayLike, chol_factor: np.ndarray, rng: RngStream, n_draws: int) -> np.ndarray:
    """
    多元正态抽样

    Args:
        mean: 均值向量 (n,)
        chol_factor: 协方差的下三角Cholesky因子 (n, n)
        rng: 随机数流
        n_draws: 抽样次数

    Returns:
        (n_draws, n) 抽样矩阵
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    factor = np.asarray(chol_factor, dtype=float)
    if factor.ndim != 2 or factor.shape != (mean.size, mean.size):
        raise DimensionMismatch(f"均值维度{mean.size}与因子形状{factor.shape}不一致")
    if n_draws < 1:
        raise DomainError(f"抽样次数必须>=1: {n_draws}")
    z = rng.standard_normal((int(n_draws), mean.size))
    return mean + z @ factor.T
