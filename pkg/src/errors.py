"""
异常定义模块
所有异常继承自ValueError，调用方可以统一按输入错误处理
"""
from typing import Any, Optional


class GsnError(ValueError):
    """本工具的基础异常"""


class DomainError(GsnError):
    """参数超出定义域"""


class DimensionMismatch(GsnError):
    """向量/矩阵维度不一致"""


class UnsupportedDimension(GsnError):
    """精确密度只支持 n <= 2"""


class NotPositiveDefinite(GsnError):
    """Cholesky分解失败（矩阵非正定）"""

    def __init__(self, message: str, jitter: Optional[float] = None):
        super().__init__(message)
        self.jitter = jitter


class NoBracket(GsnError):
    """求根区间两端函数值同号"""


class QuadratureError(GsnError):
    """数值积分未达到精度要求"""

    def __init__(self, message: str, error_estimate: float):
        super().__init__(f"{message} (误差估计: {error_estimate:.3e})")
        self.error_estimate = error_estimate


class CurvePointError(GsnError):
    """曲线上某个u点计算失败"""

    def __init__(self, u: float, cause: Exception):
        super().__init__(f"u={u!r} 处计算失败: {cause}")
        self.u = u
        self.cause = cause


class ConfigError(GsnError):
    """配置错误（CLI退出码2）"""


class UnknownKey(ConfigError):
    def __init__(self, key: str):
        super().__init__(f"未知配置项: {key}")
        self.key = key


class DomainViolation(ConfigError):
    def __init__(self, key: str, value: Any, allowed: str):
        super().__init__(f"配置项 {key} 的取值 {value!r} 不合法，允许范围: {allowed}")
        self.key = key
        self.value = value
        self.allowed = allowed
