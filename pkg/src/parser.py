"""
输入解析模块
用于解析命令行参数、key = value 配置文件和站点CSV文件
"""
import argparse
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .covariance import SUPPORTED_XI, SiteSet
from .errors import ConfigError, DomainViolation, UnknownKey

COMMANDS = ("chibar-curve", "moments-surface", "simulate", "prop1", "validate")
MODELS = ("sgrf", "mixture")
ROOTS = ("symmetric", "cholesky")

_TRUE = ("1", "true", "yes", "on")
_FALSE = ("0", "false", "no", "off")


def _to_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    s = str(value).strip().lower()
    if s in _TRUE:
        return True
    if s in _FALSE:
        return False
    raise ValueError(s)


def _to_int(value: Any) -> int:
    if isinstance(value, bool):
        raise ValueError(value)
    if isinstance(value, int):
        return value
    return int(str(value).strip())


def _to_float(value: Any) -> float:
    return float(str(value).strip()) if not isinstance(value, float) else value


def _to_floats(value: Any) -> List[float]:
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    parts = [p.strip() for p in str(value).replace("；", ";").replace(";", ",").split(",")]
    parts = [p for p in parts if p != ""]
    if not parts:
        raise ValueError(value)
    return [float(p) for p in parts]


def _finite(x: float) -> bool:
    return math.isfinite(x)


def _is_square(n: int) -> bool:
    root = int(math.isqrt(n))
    return n >= 1 and root * root == n


@dataclass(frozen=True)
class KeySpec:
    """配置项：类型转换、取值检查、允许范围说明、默认值"""

    convert: Callable[[Any], Any]
    check: Callable[[Any], bool]
    allowed: str
    default: Any = None


KEY_SPECS: Dict[str, KeySpec] = {
    "command": KeySpec(str, lambda v: v in COMMANDS, " | ".join(COMMANDS)),
    "seed": KeySpec(_to_int, lambda v: 0 <= v < 2 ** 64, "[0, 2^64)", 20240101),
    "out": KeySpec(str, lambda v: v.strip() != "", "非空路径", "output"),
    "rho": KeySpec(_to_float, lambda v: -1.0 < v < 1.0, "(-1, 1)"),
    "delta1": KeySpec(_to_float, _finite, "有限实数"),
    "delta2": KeySpec(_to_float, _finite, "有限实数"),
    "zeta": KeySpec(_to_float, lambda v: 0.0 < v < 0.5, "(0, 0.5)", 1e-9),
    "u_points": KeySpec(_to_int, lambda v: v >= 2, "整数 >= 2", 200),
    "root": KeySpec(str, lambda v: v in ROOTS, " | ".join(ROOTS), "symmetric"),
    "combined": KeySpec(_to_bool, lambda v: True, "true | false", False),
    "gamma": KeySpec(_to_float, _finite, "有限实数", 1.0),
    "nu": KeySpec(_to_float, lambda v: v >= 0.0 and _finite(v), "[0, inf)", 0.5),
    "tau": KeySpec(_to_float, lambda v: v >= 0.0 and _finite(v), "[0, inf)", 1.0),
    "sigma": KeySpec(_to_float, lambda v: v > 0.0 and _finite(v), "(0, inf)", 1.0),
    "mu": KeySpec(_to_float, _finite, "有限实数", 0.0),
    "beta": KeySpec(_to_floats, lambda v: all(_finite(b) for b in v), "逗号分隔的有限实数"),
    "psi": KeySpec(_to_float, lambda v: v > 0.0 and _finite(v), "(0, inf)", 0.2),
    "xi": KeySpec(_to_float, lambda v: any(abs(v - s) < 1e-12 for s in SUPPORTED_XI),
                  " | ".join(str(s) for s in SUPPORTED_XI), 1.5),
    "n_reps": KeySpec(_to_int, lambda v: v >= 2, "整数 >= 2", 1000),
    "sites": KeySpec(str, lambda v: v.strip() != "", "站点CSV路径"),
    "n_sites": KeySpec(_to_int, _is_square, "完全平方数 >= 1（规则网格）", 25),
    "model": KeySpec(str, lambda v: v in MODELS, " | ".join(MODELS), "sgrf"),
    "gamma_min": KeySpec(_to_float, _finite, "有限实数", -5.0),
    "gamma_max": KeySpec(_to_float, _finite, "有限实数", 5.0),
    "gamma_step": KeySpec(_to_float, lambda v: v > 0.0 and _finite(v), "(0, inf)", 0.1),
    "nu_grid": KeySpec(_to_floats, lambda v: all(x >= 0.0 and _finite(x) for x in v),
                       "逗号分隔的非负实数", [0.0, 0.25, 0.5, 1.0, 2.0]),
    "emit_plots": KeySpec(_to_bool, lambda v: True, "true | false", False),
    "emit_latents": KeySpec(_to_bool, lambda v: True, "true | false", False),
    "emit_xlsx": KeySpec(_to_bool, lambda v: True, "true | false", False),
    "quick": KeySpec(_to_bool, lambda v: True, "true | false", False),
    "verbose": KeySpec(_to_bool, lambda v: True, "true | false", False),
}


def normalize_key(key: str) -> str:
    return key.strip().lower().replace("-", "_")


@dataclass
class RunConfig:
    """一次运行的完整配置（已校验）"""

    command: str
    seed: int
    output_dir: Path
    emit_plots: bool = False
    emit_latents: bool = False
    params: Dict[str, Any] = field(default_factory=dict)

    def get(self, key: str, default: Any = None) -> Any:
        value = self.params.get(key)
        return default if value is None else value

    def describe(self) -> str:
        """参数的稳定文本表示（按键名排序），写入CSV注释头"""
        parts = []
        for key in sorted(self.params):
            value = self.params[key]
            if value is None or key in ("out", "command", "seed"):
                continue
            if isinstance(value, list):
                value = ",".join(repr(v) for v in value)
            elif isinstance(value, float):
                value = repr(value)
            parts.append(f"{key}={value}")
        return ";".join(parts)


class ConfigFileParser:
    """key = value 配置文件解析器"""

    def __init__(self, config_file: str):
        """
        Args:
            config_file: 配置文件路径，每行一个 key = value，# 开头为注释
        """
        self.config_file = Path(config_file)

    def parse(self) -> Dict[str, str]:
        if not self.config_file.exists():
            raise ConfigError(f"配置文件不存在: {self.config_file}")
        values: Dict[str, str] = {}
        text = self.config_file.read_text(encoding="utf-8")
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if line == "":
                continue
            if "=" not in line:
                raise ConfigError(f"{self.config_file}:{lineno} 不是 key = value 格式: {raw.strip()}")
            key, value = line.split("=", 1)
            key = normalize_key(key)
            if key not in KEY_SPECS:
                raise UnknownKey(key)
            values[key] = value.strip()
        return values


class SitesParser:
    """
    站点CSV解析器

    表头为 site_id,x,y[,协变量...]；有协变量时设计矩阵为 [1, 协变量...]，
    没有协变量时返回 None（只含截距）。
    """

    REQUIRED = ("site_id", "x", "y")

    def __init__(self, sites_file: str):
        self.sites_file = Path(sites_file)

    def parse(self) -> Tuple[SiteSet, Optional[np.ndarray], List[str]]:
        if not self.sites_file.exists():
            raise ConfigError(f"站点文件不存在: {self.sites_file}")
        with open(self.sites_file, newline="", encoding="utf-8") as fh:
            lines = [ln for ln in fh if not ln.lstrip().startswith("#") and ln.strip() != ""]
        reader = csv.DictReader(lines)
        headers = [h.strip() for h in (reader.fieldnames or [])]
        missing = [h for h in self.REQUIRED if h not in headers]
        if missing:
            raise ConfigError(f"站点文件缺少列: {', '.join(missing)}")
        covariates = [h for h in headers if h not in self.REQUIRED]

        ids: List[str] = []
        coords: List[List[float]] = []
        extra: List[List[float]] = []
        for lineno, row in enumerate(reader, start=2):
            row = {k.strip(): v for k, v in row.items() if k is not None}
            try:
                coords.append([float(row["x"]), float(row["y"])])
                extra.append([float(row[c]) for c in covariates])
            except (TypeError, ValueError):
                raise ConfigError(f"站点文件第{lineno}行含非数值: {row}")
            ids.append(str(row["site_id"]).strip())
        if not ids:
            raise ConfigError(f"站点文件没有数据行: {self.sites_file}")
        if len(set(ids)) != len(ids):
            raise ConfigError("站点文件中site_id重复")

        sites = SiteSet(np.array(coords), ids)
        design = None
        if covariates:
            design = np.column_stack([np.ones(len(ids)), np.array(extra)])
        return sites, design, covariates


def build_arg_parser() -> argparse.ArgumentParser:
    """构建命令行参数解析器；所有参数默认None，未给出的不覆盖配置文件"""
    parser = argparse.ArgumentParser(
        description="GSN随机场工具 - 尾部相依曲线、矩公式网格、随机场模拟与自检"
    )
    parser.add_argument("command_name", nargs="?", default=None, metavar="COMMAND",
                        help="子命令（也可用 --command 给出）")
    parser.add_argument("--command", "-c", type=str, default=None, help=f"子命令: {' | '.join(COMMANDS)}")
    parser.add_argument("--config", type=str, default=None, help="key = value 配置文件路径")
    parser.add_argument("--seed", type=str, default=None, help="随机种子（64位无符号整数，默认: 20240101）")
    parser.add_argument("--out", "-o", type=str, default=None, help="输出目录（默认: output）")

    group = parser.add_argument_group("尾部相依")
    group.add_argument("--rho", type=str, default=None, help="二元相关系数，(-1, 1)")
    group.add_argument("--delta1", type=str, default=None, help="第一分量形状参数")
    group.add_argument("--delta2", type=str, default=None, help="第二分量形状参数")
    group.add_argument("--zeta", type=str, default=None, help="u的计算窗口 (zeta, 1-zeta)（默认: 1e-9）")
    group.add_argument("--u-points", type=str, default=None, help="u网格点数（默认: 200）")
    group.add_argument("--root", type=str, default=None, help="Γ平方根: symmetric | cholesky")
    group.add_argument("--combined", action="store_true", default=None, help="另外输出所有曲线的合并CSV")

    group = parser.add_argument_group("模型参数")
    group.add_argument("--gamma", type=str, default=None, help="偏斜参数gamma（默认: 1）")
    group.add_argument("--nu", type=str, default=None, help="尾重参数nu（默认: 0.5）")
    group.add_argument("--tau", type=str, default=None, help="nugget标准差tau（默认: 1）")
    group.add_argument("--sigma", type=str, default=None, help="尺度sigma（默认: 1）")
    group.add_argument("--mu", type=str, default=None, help="SGRF常数均值（默认: 0）")
    group.add_argument("--beta", type=str, default=None, help="回归系数，逗号分隔（默认: mu）")
    group.add_argument("--psi", type=str, default=None, help="Matérn range（默认: 0.2）")
    group.add_argument("--xi", type=str, default=None, help="Matérn光滑度 0.5 | 1.5 | 2.5（默认: 1.5）")
    group.add_argument("--model", type=str, default=None, help="模拟模型: sgrf | mixture（默认: sgrf）")

    group = parser.add_argument_group("模拟")
    group.add_argument("--n-reps", type=str, default=None, help="重复次数（默认: 1000）")
    group.add_argument("--sites", type=str, default=None, help="站点CSV: site_id,x,y[,协变量...]")
    group.add_argument("--n-sites", type=str, default=None, help="未给站点文件时的规则网格站点数（默认: 25）")

    group = parser.add_argument_group("矩公式网格")
    group.add_argument("--gamma-min", type=str, default=None, help="gamma下限（默认: -5）")
    group.add_argument("--gamma-max", type=str, default=None, help="gamma上限（默认: 5）")
    group.add_argument("--gamma-step", type=str, default=None, help="gamma步长（默认: 0.1）")
    group.add_argument("--nu-grid", type=str, default=None, help="nu取值，逗号分隔（默认: 0,0.25,0.5,1,2）")

    group = parser.add_argument_group("输出")
    group.add_argument("--emit-plots", action="store_true", default=None, help="输出SVG图")
    group.add_argument("--emit-latents", action="store_true", default=None, help="模拟CSV附带latent列")
    group.add_argument("--emit-xlsx", action="store_true", default=None, help="另外输出合并的xlsx工作簿")
    group.add_argument("--quick", action="store_true", default=None, help="validate 使用缩减的样本量")
    group.add_argument("--verbose", "-v", action="store_true", default=None, help="输出INFO级别日志")
    return parser


def _flag_values(argv: Optional[Sequence[str]]) -> Tuple[Optional[str], Dict[str, Any]]:
    parser = build_arg_parser()
    args, unknown = parser.parse_known_args(argv)
    if unknown:
        raise UnknownKey(unknown[0].lstrip("-").split("=", 1)[0])
    values = {k: v for k, v in vars(args).items() if v is not None and k not in ("config", "command_name")}
    if args.command_name is not None and "command" not in values:
        values["command"] = args.command_name
    return args.config, values


def validate_values(raw: Dict[str, Any]) -> Dict[str, Any]:
    """
    按 KEY_SPECS 顺序转换并检查所有配置项

    Raises:
        UnknownKey: 未知配置项
        DomainViolation: 第一个不合法的配置项（附带允许范围）
    """
    for key in raw:
        if key not in KEY_SPECS:
            raise UnknownKey(key)
    out: Dict[str, Any] = {}
    for key, spec in KEY_SPECS.items():
        if key not in raw or raw[key] is None:
            out[key] = spec.default
            continue
        value = raw[key]
        try:
            converted = spec.convert(value)
            ok = spec.check(converted)
        except (TypeError, ValueError):
            raise DomainViolation(key, value, spec.allowed)
        if not ok:
            raise DomainViolation(key, value, spec.allowed)
        out[key] = converted
    return out


def parse_config(argv: Optional[Sequence[str]] = None) -> RunConfig:
    """
    解析配置：默认值 < 配置文件 < 命令行参数

    Args:
        argv: 命令行参数列表（None 时取 sys.argv[1:]）

    Returns:
        校验通过的 RunConfig
    """
    config_file, flags = _flag_values(argv)
    merged: Dict[str, Any] = {}
    if config_file:
        merged.update(ConfigFileParser(config_file).parse())
    merged.update(flags)

    values = validate_values(merged)
    if values["command"] is None:
        raise ConfigError(f"缺少command，可选: {' | '.join(COMMANDS)}")
    if values["gamma_max"] < values["gamma_min"]:
        raise DomainViolation("gamma_max", values["gamma_max"], f">= gamma_min ({values['gamma_min']})")
    if values["command"] == "prop1":
        for key in ("rho", "delta2"):
            if values[key] is None:
                raise ConfigError(f"prop1 需要配置项 {key}")
    if values["command"] == "simulate" and values["model"] == "mixture" and values["nu"] <= 0.0:
        raise DomainViolation("nu", values["nu"], "(0, inf)（mixture模型）")

    return RunConfig(
        command=values["command"],
        seed=values["seed"],
        output_dir=Path(values["out"]),
        emit_plots=values["emit_plots"],
        emit_latents=values["emit_latents"],
        params=values,
    )
