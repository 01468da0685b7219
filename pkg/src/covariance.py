"""
空间相关模块
Matérn相关函数（半整数光滑度的闭式）与站点集合的相关矩阵构造
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DomainError, NotPositiveDefinite
from .numerics import SpdMatrix

logger = logging.getLogger(__name__)

SUPPORTED_XI = (0.5, 1.5, 2.5)

JITTER_START = 1e-12
JITTER_MAX = 1e-6


@dataclass(frozen=True)
class MaternParams:
    """Matérn相关参数：range psi 与光滑度 xi（仅支持 1/2, 3/2, 5/2）"""

    psi: float
    xi: float = 1.5

    def __post_init__(self):
        if not (math.isfinite(self.psi) and self.psi > 0):
            raise DomainError(f"psi必须>0: {self.psi}")
        if not any(abs(self.xi - s) < 1e-12 for s in SUPPORTED_XI):
            raise DomainError(f"xi只支持{SUPPORTED_XI}: {self.xi}")


@dataclass
class SiteSet:
    """平面站点集合，顺序即输出顺序"""

    coords: np.ndarray
    site_ids: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.coords = np.atleast_2d(np.asarray(self.coords, dtype=float))
        if self.coords.ndim != 2 or self.coords.shape[1] != 2:
            raise DomainError(f"站点坐标必须是(n, 2): {self.coords.shape}")
        if self.coords.shape[0] == 0:
            raise DomainError("站点集合为空")
        if not np.all(np.isfinite(self.coords)):
            raise DomainError("站点坐标含非有限值")
        if not self.site_ids:
            self.site_ids = [str(i + 1) for i in range(self.coords.shape[0])]
        if len(self.site_ids) != self.coords.shape[0]:
            raise DomainError("site_id数量与坐标行数不一致")

    def __len__(self) -> int:
        return int(self.coords.shape[0])

    def scaled(self, c: float) -> "SiteSet":
        return SiteSet(self.coords * c, list(self.site_ids))

    def distances(self) -> np.ndarray:
        return cdist(self.coords, self.coords)


def matern_rho(d, params: MaternParams):
    """
    Matérn相关函数（半整数闭式）

    xi=1/2: exp(-d/psi)
    xi=3/2: (1 + d/psi) exp(-d/psi)
    xi=5/2: (1 + d/psi + (d/psi)^2/3) exp(-d/psi)
    """
    d = np.asarray(d, dtype=float)
    if np.any(d < 0) or np.any(np.isnan(d)):
        raise DomainError("距离必须>=0")
    t = d / params.psi
    if abs(params.xi - 0.5) < 1e-12:
        poly = 1.0
    elif abs(params.xi - 1.5) < 1e-12:
        poly = 1.0 + t
    else:
        poly = 1.0 + t + t * t / 3.0
    rho = poly * np.exp(-t)
    return float(rho) if rho.ndim == 0 else rho


def corr_matrix(sites: SiteSet, params: MaternParams, jitter: float = JITTER_MAX) -> SpdMatrix:
    """
    构造站点相关矩阵，并保证可Cholesky分解

    分解失败时从1e-12起按10倍递增地在对角线上加jitter，直到成功或超过上限。

    Args:
        sites: 站点集合
        params: Matérn参数
        jitter: 允许的最大jitter（默认1e-6）

    Returns:
        SpdMatrix，jitter字段记录实际加上的值（0表示未加）
    """
    if jitter < 0:
        raise DomainError(f"jitter必须>=0: {jitter}")
    values = matern_rho(sites.distances(), params)
    values = np.atleast_2d(values)
    # 按构造严格对称、对角为1
    values = 0.5 * (values + values.T)
    np.fill_diagonal(values, 1.0)
    try:
        return SpdMatrix(values)
    except NotPositiveDefinite:
        pass

    eye = np.eye(values.shape[0])
    applied = JITTER_START
    while applied <= jitter * (1 + 1e-9):
        try:
            mat = SpdMatrix(values + applied * eye, jitter=applied)
        except NotPositiveDefinite:
            applied *= 10.0
            continue
        logger.warning("相关矩阵加入jitter=%.1e后分解成功 (n=%d)", applied, values.shape[0])
        return mat
    raise NotPositiveDefinite(f"相关矩阵在最大jitter={jitter:.1e}下仍非正定", jitter=jitter)
