"""
输出文件生成模块
用于生成曲线/矩表/模拟结果CSV、SVG图以及合并的xlsx工作簿
"""
import csv
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import openpyxl  # noqa: E402

from . import __version__  # noqa: E402
from .fields import SimGrid  # noqa: E402
from .taildep import CurveSeries  # noqa: E402

SCHEMA_DIR = Path(__file__).resolve().parent.parent / "schemas"

DEFAULT_COLUMNS = {
    "curve": ["u", "rho", "delta1", "delta2", "chi_u", "chibar_u", "flag"],
    "simgrid": ["rep", "site_id", "x", "y", "value", "w", "delta", "lambda", "t", "epsilon"],
    "moments": ["gamma", "nu", "tau", "sigma", "skewness", "kurtosis"],
    "validation": ["check", "passed", "seconds", "detail"],
}

# svg里的元素id由该salt决定，同一数据重复绘图时文件一致
plt.rcParams["svg.hashsalt"] = "gsn-field"


def format_tag(x: float) -> str:
    """文件名中的数值：0.4 -> 0.4，-0.5 -> m0.5"""
    s = repr(float(x))
    if s.endswith(".0"):
        s = s[:-2]
    return s.replace("-", "m")


def _cell(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


class OutputGenerator:
    """输出文件生成器"""

    def __init__(self, output_dir: str = "output", command: str = "", seed: int = 0, describe: str = ""):
        """
        初始化输出生成器

        Args:
            output_dir: 输出目录
            command: 子命令名，写入CSV注释头
            seed: 随机种子，写入CSV注释头
            describe: 参数集合的稳定文本表示
        """
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.seed = seed
        self.describe = describe

    @staticmethod
    def _read_headers_from_schema(name: str) -> Optional[List[str]]:
        """按 schemas/<name>.schema.json 中 properties 的顺序取列名"""
        schema_file = SCHEMA_DIR / f"{name}.schema.json"
        try:
            schema = json.loads(schema_file.read_text(encoding="utf-8"))
            headers = [str(h) for h in schema.get("properties", {})]
            return headers if headers else None
        except (OSError, ValueError):
            return None

    def columns(self, name: str, rows: Sequence[Dict[str, Any]] = ()) -> List[str]:
        columns = self._read_headers_from_schema(name) or list(DEFAULT_COLUMNS[name])
        if rows:
            # 可选列（如latent列）只在数据里出现时输出
            columns = [c for c in columns if c in rows[0]]
        return columns

    def header_line(self) -> str:
        line = f"# gsn-field {__version__} command={self.command} seed={self.seed}"
        if self.describe:
            line += f" {self.describe}"
        return line

    def _write_csv(self, filename: str, columns: List[str], rows: Sequence[Dict[str, Any]],
                   extra_header: str = "") -> str:
        output_file = self.output_dir / filename
        with open(output_file, "w", newline="", encoding="utf-8") as fh:
            fh.write(self.header_line() + (f" {extra_header}" if extra_header else "") + "\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_cell(row.get(c, "")) for c in columns])
        return str(output_file)

    # ------------------------------------------------------------------
    # CSV
    # ------------------------------------------------------------------

    @staticmethod
    def curve_filename(series: CurveSeries) -> str:
        p = series.params
        return f"chibar_rho{format_tag(p.rho)}_d1{format_tag(p.delta1)}_d2{format_tag(p.delta2)}.csv"

    @staticmethod
    def reference_filename(rho: float) -> str:
        return f"chibar_rho{format_tag(rho)}_reference.csv"

    def generate_curve_table(self, series: CurveSeries, output_file: Optional[str] = None) -> str:
        """写一条χ̄(u)曲线"""
        p = series.params
        extra = f"zeta={p.zeta!r} root={p.root}"
        return self._write_csv(output_file or self.curve_filename(series),
                               self.columns("curve"), series.rows(), extra)

    def generate_reference_table(self, series: CurveSeries) -> str:
        return self.generate_curve_table(series, self.reference_filename(series.params.rho))

    def generate_combined_curves(self, curves: Sequence[CurveSeries]) -> str:
        """所有曲线的长格式合并CSV"""
        rows: List[Dict[str, Any]] = []
        for series in curves:
            rows.extend(series.rows())
        return self._write_csv("chibar_curves.csv", self.columns("curve"), rows)

    def generate_moment_table(self, rows: List[Dict[str, Any]]) -> str:
        return self._write_csv("moments_surface.csv", self.columns("moments"), rows)

    def generate_simgrid_table(self, grid: SimGrid, model: str) -> str:
        rows = grid.rows()
        return self._write_csv(f"simgrid_{model}.csv", self.columns("simgrid", rows), rows)

    def generate_validation_report(self, rows: List[Dict[str, Any]]) -> str:
        return self._write_csv("validation_report.csv", self.columns("validation"), rows)

    # ------------------------------------------------------------------
    # SVG
    # ------------------------------------------------------------------

    def plot_chibar_panels(self, curves: Sequence[CurveSeries], rho: float,
                           reference: Optional[CurveSeries] = None) -> str:
        """
        同一rho下每个delta1一个子图，子图内每个delta2一条曲线，黑色实线为正态参考
        """
        selected = [c for c in curves if c.params.rho == rho]
        delta1_values = sorted({c.params.delta1 for c in selected})
        n = max(len(delta1_values), 1)
        ncols = min(n, 3)
        nrows = (n + ncols - 1) // ncols
        fig, axes = plt.subplots(nrows, ncols, figsize=(4.2 * ncols, 3.4 * nrows), squeeze=False)
        for idx, d1 in enumerate(delta1_values):
            ax = axes[idx // ncols][idx % ncols]
            if reference is not None:
                ax.plot(reference.u, reference.chibar, color="black", linewidth=1.6, label="normal")
            for c in (c for c in selected if c.params.delta1 == d1):
                ax.plot(c.u, c.chibar, linestyle="--", linewidth=1.0, label=f"δ2={c.params.delta2:g}")
            ax.set_title(f"ρ={rho:g}, δ1={d1:g}")
            ax.set_xlabel("u")
            ax.set_ylabel("χ̄(u)")
            ax.set_xlim(0.0, 1.0)
            ax.set_ylim(-1.0, 1.0)
            ax.grid(True)
            ax.legend(fontsize=7)
        for idx in range(len(delta1_values), nrows * ncols):
            axes[idx // ncols][idx % ncols].set_visible(False)
        fig.tight_layout()
        output_file = self.output_dir / f"chibar_rho{format_tag(rho)}.svg"
        fig.savefig(output_file, format="svg", metadata={"Date": None})
        plt.close(fig)
        return str(output_file)

    def plot_moment_surface(self, rows: List[Dict[str, Any]]) -> str:
        """上图偏度、下图峰度，横轴gamma，每个nu一条曲线"""
        nu_values: List[float] = []
        for row in rows:
            if row["nu"] not in nu_values:
                nu_values.append(row["nu"])
        fig, (ax_s, ax_k) = plt.subplots(2, 1, figsize=(6.0, 7.0), sharex=True)
        for nu in nu_values:
            part = [r for r in rows if r["nu"] == nu]
            g = [r["gamma"] for r in part]
            ax_s.plot(g, [r["skewness"] for r in part], label=f"ν={nu:g}")
            ax_k.plot(g, [r["kurtosis"] for r in part], label=f"ν={nu:g}")
        ax_s.set_ylabel("S(Y)")
        ax_k.set_ylabel("K(Y)")
        ax_k.set_xlabel("γ")
        for ax in (ax_s, ax_k):
            ax.grid(True)
            ax.legend(fontsize=8)
        fig.tight_layout()
        output_file = self.output_dir / "moments_surface.svg"
        fig.savefig(output_file, format="svg", metadata={"Date": None})
        plt.close(fig)
        return str(output_file)

    # ------------------------------------------------------------------
    # xlsx
    # ------------------------------------------------------------------

    @staticmethod
    def _write_sheet(ws, headers: List[str], rows: Sequence[Dict[str, Any]]):
        ws.append(headers)
        for row in rows:
            ws.append([row.get(h, "") for h in headers])

    def generate_combined_output(self, tables: Dict[str, Tuple[List[str], Sequence[Dict[str, Any]]]],
                                 output_file: Optional[str] = None) -> str:
        """
        生成合并的工作簿，每张表一个sheet（sheet名截断到31个字符）

        Args:
            tables: {sheet名: (列名, 行)}
            output_file: 输出文件路径（可选）

        Returns:
            输出文件路径
        """
        output_file = Path(output_file) if output_file else self.output_dir / f"gsn_field_{self.command}.xlsx"
        wb = openpyxl.Workbook()
        wb.remove(wb.active)
        info = wb.create_sheet("run")
        info.append(["version", __version__])
        info.append(["command", self.command])
        info.append(["seed", self.seed])
        info.append(["parameters", self.describe])
        for name, (headers, rows) in tables.items():
            ws = wb.create_sheet(name[:31])
            self._write_sheet(ws, headers, rows)
        wb.save(output_file)
        return str(output_file)
