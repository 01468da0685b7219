"""
尾部相依模块
二元GSN（零均值中心化形式）的联合生存概率、χ(u)、χ̄(u)、曲线生成与渐近独立性判别

二元模型: GSN_2(-sqrt(2/pi) Γ^{1/2} δ, Γ, Γ^{1/2} δ)，Γ 为相关系数 rho 的 2x2 相关阵
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import CurvePointError, DimensionMismatch, DomainError, GsnError, QuadratureError
from .gsn import DEFAULT_ZETA, GsnParams, marginal, marginal_quantile
from .numerics import (
    HALF_NORMAL_MEAN,
    INF_PROXY,
    bvn_cdf,
    bvn_survival,
    cholesky,
    gauss_legendre,
    normal_pdf,
    sym_sqrt_2x2,
)

logger = logging.getLogger(__name__)

ROOTS = ("symmetric", "cholesky")

# 半正态混合积分：[0, 8.5] 上的复合Gauss-Legendre，主规则12点/段，校验规则8点/段
V_PANELS = 9
ORDER = 12
CHECK_ORDER = 8
MAX_REFINE = 2
ABS_TOL = 1e-12
REL_TOL = 1e-6

SURVIVAL_FLOOR = 1e-300
CHIBAR_SLACK = 1e-6

DEFAULT_U_POINTS = 200
FIGURE_RHOS = (0.4, 0.8)
FIGURE_DELTAS = (-1.0, -0.5, 0.0, 0.5, 1.0, 2.0)


@dataclass(frozen=True)
class TailPairParams:
    """二元GSN的 (rho, delta1, delta2) 以及χ̄(u)的计算窗口zeta"""

    rho: float
    delta1: float
    delta2: float
    zeta: float = DEFAULT_ZETA
    root: str = "symmetric"

    def __post_init__(self):
        if not -1.0 < self.rho < 1.0:
            raise DomainError(f"rho必须在(-1, 1)内: {self.rho}")
        if not 0.0 < self.zeta < 0.5:
            raise DomainError(f"zeta必须在(0, 1/2)内: {self.zeta}")
        if not (math.isfinite(self.delta1) and math.isfinite(self.delta2)):
            raise DomainError(f"delta必须有限: ({self.delta1}, {self.delta2})")
        if self.root not in ROOTS:
            raise DomainError(f"root只支持{ROOTS}: {self.root}")

    def swapped(self) -> "TailPairParams":
        return TailPairParams(self.rho, self.delta2, self.delta1, self.zeta, self.root)

    def gaussian(self) -> "TailPairParams":
        return TailPairParams(self.rho, 0.0, 0.0, self.zeta, self.root)


def gamma_matrix(rho: float) -> np.ndarray:
    return np.array([[1.0, rho], [rho, 1.0]])


def build_pair(p: TailPairParams) -> GsnParams:
    """
    构造中心化的二元GSN参数

    形状向量 a = Γ^{1/2} δ，位置 -sqrt(2/pi) a，尺度 Γ；因此 closed_moments 的均值恰为0。
    Γ^{1/2} 默认取对称主平方根，root="cholesky" 时取下三角Cholesky因子。
    """
    gam = gamma_matrix(p.rho)
    root = sym_sqrt_2x2(gam) if p.root == "symmetric" else cholesky(gam)
    a = root @ np.array([p.delta1, p.delta2], dtype=float)
    return GsnParams(mu=-HALF_NORMAL_MEAN * a, sigma=gam, delta=a)


# ---------------------------------------------------------------------------
# 联合正交象限概率（对V做半正态混合积分）
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OrthantEstimate:
    value: float
    error: float
    panels: int


def _mixture_nodes(shape: float, order: int, panels: int) -> Tuple[np.ndarray, np.ndarray]:
    # 形状参数为0时该维与V无关，积分退化为单点
    if shape == 0.0:
        return np.zeros(1), np.ones(1)
    rule = gauss_legendre(order, 0.0, INF_PROXY, panels)
    return rule.nodes, rule.weights * 2.0 * normal_pdf(rule.nodes)


def _orthant_once(pair: GsnParams, z1: float, z2: float, upper: bool, order: int, panels: int) -> float:
    s1 = math.sqrt(pair.sigma[0, 0])
    s2 = math.sqrt(pair.sigma[1, 1])
    r = float(pair.sigma[0, 1] / (s1 * s2))
    v1, w1 = _mixture_nodes(float(pair.delta[0]), order, panels)
    v2, w2 = _mixture_nodes(float(pair.delta[1]), order, panels)
    h = (z1 - pair.mu[0] - pair.delta[0] * v1) / s1
    k = (z2 - pair.mu[1] - pair.delta[1] * v2) / s2
    kernel = bvn_survival if upper else bvn_cdf
    vals = kernel(h[:, None], k[None, :], r)
    return float(w1 @ np.atleast_2d(vals) @ w2)


def orthant_probability(pair: GsnParams, z1: float, z2: float, upper: bool = True,
                        abs_tol: float = ABS_TOL, rel_tol: float = REL_TOL) -> OrthantEstimate:
    """
    条件于V后 (Z1, Z2) 为二元正态，正交象限概率为 E_V[Φ2(...)]，
    对 (v1, v2) ∈ [0, 8.5]^2 做张量Gauss-Legendre积分；
    误差估计取主规则与校验规则之差，不满足容差时把分段数加倍。

    Raises:
        QuadratureError: 加密后仍未收敛，附带误差估计
    """
    if pair.dim != 2:
        raise DimensionMismatch(f"需要二元GSN参数，当前维度{pair.dim}")
    panels = V_PANELS
    err = math.inf
    for _ in range(MAX_REFINE + 1):
        fine = _orthant_once(pair, z1, z2, upper, ORDER, panels)
        coarse = _orthant_once(pair, z1, z2, upper, CHECK_ORDER, panels)
        err = abs(fine - coarse)
        if err == 0.0 or err <= min(abs_tol, rel_tol * fine):
            return OrthantEstimate(value=min(max(fine, 0.0), 1.0), error=err, panels=panels)
        logger.info("混合积分未收敛(err=%.2e, value=%.3e)，分段数 %d -> %d", err, fine, panels, 2 * panels)
        panels *= 2
    raise QuadratureError(f"联合概率积分在 z=({z1}, {z2}) 处未收敛", err)


def joint_survival(pair: GsnParams, z1: float, z2: float) -> float:
    """P[Z1 > z1, Z2 > z2]"""
    return orthant_probability(pair, z1, z2, upper=True).value


def joint_cdf(pair: GsnParams, z1: float, z2: float) -> float:
    """P[Z1 <= z1, Z2 <= z2]"""
    return orthant_probability(pair, z1, z2, upper=False).value


# ---------------------------------------------------------------------------
# χ(u), χ̄(u)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DependenceMeasures:
    u: float
    chi: float
    chibar: float
    flag: str = "ok"


def dependence_measures(p: TailPairParams, u: float, pair: Optional[GsnParams] = None) -> DependenceMeasures:
    """
    计算 χ(u) = S(u)/(1-u) 与 χ̄(u) = 2 ln(1-u)/ln S(u) - 1

    S(u) 为两个边缘u分位数处的联合生存概率；P[F_i(Z_i) > u] 按概率积分变换取 1-u。
    u < 1/2 时用 S = 1 - 2u + C(u)（C 为联合cdf）以保留 ln S 的精度。

    Args:
        p: 二元参数
        u: 概率水平，必须在 (zeta, 1-zeta) 内
        pair: 可选，预先构造好的 build_pair(p)

    Returns:
        DependenceMeasures，flag 为 ok / survival_floor / chibar_clamped
    """
    u = float(u)
    if not p.zeta < u < 1.0 - p.zeta:
        raise DomainError(f"u={u} 不在计算窗口({p.zeta}, {1 - p.zeta})内")
    if pair is None:
        pair = build_pair(p)
    q1 = marginal_quantile(marginal(pair, 0), u, p.zeta)
    q2 = marginal_quantile(marginal(pair, 1), u, p.zeta)

    flags: List[str] = []
    if u < 0.5:
        c = joint_cdf(pair, q1, q2)
        survival = 1.0 - 2.0 * u + c
        log_s = math.log1p(-2.0 * u + c)
    else:
        survival = joint_survival(pair, q1, q2)
        if survival < SURVIVAL_FLOOR:
            logger.warning("u=%s 处联合生存概率 %.3e 低于下限，已截断", u, survival)
            survival = SURVIVAL_FLOOR
            flags.append("survival_floor")
        log_s = math.log(survival)

    chi = survival / (1.0 - u)
    chibar = 2.0 * math.log1p(-u) / log_s - 1.0
    if chibar < -1.0 or chibar > 1.0:
        if chibar < -1.0 - CHIBAR_SLACK or chibar > 1.0 + CHIBAR_SLACK:
            logger.warning("u=%s 处 chibar=%.8f 超出[-1, 1]，已截断", u, chibar)
            flags.append("chibar_clamped")
        chibar = min(max(chibar, -1.0), 1.0)
    return DependenceMeasures(u=u, chi=chi, chibar=chibar, flag="|".join(flags) or "ok")


def default_u_grid(zeta: float = DEFAULT_ZETA, n: int = DEFAULT_U_POINTS) -> np.ndarray:
    """
    默认u网格：在 (zeta, 1-zeta) 内向两端对数加密，严格递增

    下半段为 zeta 到 1/2 的对数等比点（不含zeta），上半段为其关于1/2的镜像（不含1-zeta）。
    """
    if n < 2:
        raise DomainError(f"网格点数至少为2: {n}")
    n_low = n - n // 2
    n_high = n // 2
    low = np.geomspace(zeta, 0.5, n_low + 1)[1:]
    high = 1.0 - np.geomspace(0.5, zeta, n_high + 2)[1:-1]
    return np.concatenate([low, high])


@dataclass
class CurveSeries:
    """χ̄(u)曲线：每个u一行 (u, χ(u), χ̄(u), flag)"""

    params: TailPairParams
    u: np.ndarray
    chi: np.ndarray
    chibar: np.ndarray
    flags: List[str]
    reference: Optional["CurveSeries"] = field(default=None, repr=False)

    def __len__(self) -> int:
        return int(self.u.size)

    def rows(self) -> List[Dict[str, Any]]:
        return [
            {
                "u": float(self.u[i]),
                "rho": self.params.rho,
                "delta1": self.params.delta1,
                "delta2": self.params.delta2,
                "chi_u": float(self.chi[i]),
                "chibar_u": float(self.chibar[i]),
                "flag": self.flags[i],
            }
            for i in range(len(self))
        ]

    def value_at(self, u: float) -> float:
        idx = int(np.argmin(np.abs(self.u - u)))
        return float(self.chibar[idx])


def chibar_curve(p: TailPairParams, u_grid: Optional[Sequence[float]] = None,
                 reference: bool = False) -> CurveSeries:
    """
    在u网格上逐点计算依赖度量（按网格顺序组装，结果与调度无关）

    Args:
        p: 二元参数
        u_grid: 严格递增的概率网格，默认 default_u_grid(p.zeta)
        reference: 是否同时计算同一rho下的正态参考曲线（delta=0）

    Raises:
        CurvePointError: 某个u点失败时抛出，附带该u值
    """
    grid = default_u_grid(p.zeta) if u_grid is None else np.asarray(u_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise DomainError("u网格必须是非空一维数组")
    if np.any(np.diff(grid) <= 0):
        raise DomainError("u网格必须严格递增")
    if grid[0] <= p.zeta or grid[-1] >= 1.0 - p.zeta:
        raise DomainError(f"u网格必须位于({p.zeta}, {1 - p.zeta})内")

    pair = build_pair(p)
    chi = np.empty(grid.size)
    chibar = np.empty(grid.size)
    flags: List[str] = []
    for i, u in enumerate(grid):
        try:
            m = dependence_measures(p, float(u), pair=pair)
        except GsnError as exc:
            raise CurvePointError(float(u), exc) from exc
        chi[i] = m.chi
        chibar[i] = m.chibar
        flags.append(m.flag)

    ref = None
    if reference:
        ref = chibar_curve(p.gaussian(), grid, reference=False)
    return CurveSeries(params=p, u=grid, chi=chi, chibar=chibar, flags=flags, reference=ref)


def curve_battery(configs: Sequence[Tuple[float, float, float]], zeta: float = DEFAULT_ZETA,
                  u_grid: Optional[Sequence[float]] = None, root: str = "symmetric",
                  reference: bool = True) -> List[CurveSeries]:
    """
    按配置顺序计算一组曲线，每条曲线的 reference 指向同一rho下的正态参考曲线

    对称平方根下交换 (delta1, delta2) 只交换两个分量，χ与χ̄不变，已算过的配置直接复用。
    """
    grid = default_u_grid(zeta) if u_grid is None else np.asarray(u_grid, dtype=float)
    cache: Dict[Tuple[float, float, float], CurveSeries] = {}

    def compute(rho: float, d1: float, d2: float) -> CurveSeries:
        key = (rho, d1, d2)
        if key in cache:
            return cache[key]
        p = TailPairParams(rho, d1, d2, zeta, root)
        q = p.swapped()
        mirror = cache.get((q.rho, q.delta1, q.delta2)) if root == "symmetric" else None
        if mirror is not None:
            series = CurveSeries(params=p, u=mirror.u, chi=mirror.chi.copy(),
                                 chibar=mirror.chibar.copy(), flags=list(mirror.flags))
        else:
            logger.info("计算曲线 rho=%s delta=(%s, %s)", rho, d1, d2)
            series = chibar_curve(p, grid)
        cache[key] = series
        return series

    curves = []
    for rho, d1, d2 in configs:
        series = compute(float(rho), float(d1), float(d2))
        if reference:
            series.reference = compute(float(rho), 0.0, 0.0)
        curves.append(series)
    return curves


def figure_battery(rhos: Sequence[float] = FIGURE_RHOS,
                   deltas: Sequence[float] = FIGURE_DELTAS) -> List[Tuple[float, float, float]]:
    """χ̄(u)图的默认配置组合：rho × delta1 × delta2"""
    return [(float(r), float(d1), float(d2)) for r in rhos for d1 in deltas for d2 in deltas]


# ---------------------------------------------------------------------------
# 渐近独立性判别
# ---------------------------------------------------------------------------

def prop1_threshold(rho: float, delta2: float) -> float:
    """
    情形(b)的上界 sqrt((1 + delta2^2)(1 + rho)/(2 rho) - 1)

    rho <= 0 时上界无约束，返回 +inf。rho 在 (0, 1) 内时 (1 + rho)/(2 rho) > 1，根号内恒为正。
    """
    if not -1.0 < rho < 1.0:
        raise DomainError(f"rho必须在(-1, 1)内: {rho}")
    if rho <= 0.0:
        return math.inf
    return math.sqrt((1.0 + delta2 * delta2) * (1.0 + rho) / (2.0 * rho) - 1.0)


@dataclass(frozen=True)
class Prop1Class:
    """判别结果：independent=True 时 case 为 'a' 或 'b'；否则为不确定"""

    independent: bool
    case: Optional[str] = None

    @property
    def label(self) -> str:
        if self.independent:
            return f"AsymptoticallyIndependent({self.case})"
        return "Indeterminate"


def classify_prop1(rho: float, delta1: float, delta2: float) -> Prop1Class:
    """
    按上尾相依系数为0的充分条件分类

    (a) 0 <= d1 <= d2；d1, d2 < 0；d1 < 0 <= d2
    (b) 0 <= d2 < d1 且 d1 < 阈值
    其余（0 <= d2 < d1 且 d1 >= 阈值；d2 < 0 <= d1）为不确定
    """
    if not -1.0 < rho < 1.0:
        raise DomainError(f"rho必须在(-1, 1)内: {rho}")
    if 0.0 <= delta1 <= delta2:
        return Prop1Class(True, "a")
    if delta1 < 0.0 and delta2 < 0.0:
        return Prop1Class(True, "a")
    if delta1 < 0.0 <= delta2:
        return Prop1Class(True, "a")
    if 0.0 <= delta2 < delta1:
        if delta1 < prop1_threshold(rho, delta2):
            return Prop1Class(True, "b")
        return Prop1Class(False)
    # delta2 < 0 <= delta1
    return Prop1Class(False)
