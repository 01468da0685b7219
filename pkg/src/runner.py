"""
命令调度模块
把 RunConfig 分派到 chibar-curve / moments-surface / simulate / prop1 / validate
"""
import logging
import math
from typing import Callable, Dict, List

from .covariance import MaternParams
from .fields import (
    MixtureModel,
    SgrfModel,
    empirical_moments,
    regular_sites,
    simulate_mixture,
    simulate_sgrf,
    stationary_moments,
)
from .generator import OutputGenerator
from .moments import MomentParams, gamma_grid, moment_surface, skew_kurt
from .numerics import RngStream
from .parser import RunConfig, SitesParser
from .taildep import (
    FIGURE_DELTAS,
    FIGURE_RHOS,
    classify_prop1,
    curve_battery,
    default_u_grid,
    prop1_threshold,
)
from .validation import CheckResult, run_battery

logger = logging.getLogger(__name__)


class Reporter:
    """控制台进度输出（quiet 时静默）"""

    def __init__(self, quiet: bool = False):
        self.quiet = quiet

    def __call__(self, message: str = ""):
        if not self.quiet:
            print(message)


def _generator(config: RunConfig) -> OutputGenerator:
    return OutputGenerator(
        output_dir=str(config.output_dir),
        command=config.command,
        seed=config.seed,
        describe=config.describe(),
    )


def run_chibar_curve(config: RunConfig, say: Reporter) -> int:
    rho = config.get("rho")
    d1 = config.get("delta1")
    d2 = config.get("delta2")
    rhos = [rho] if rho is not None else list(FIGURE_RHOS)
    d1s = [d1] if d1 is not None else list(FIGURE_DELTAS)
    d2s = [d2] if d2 is not None else list(FIGURE_DELTAS)
    configs = [(r, a, b) for r in rhos for a in d1s for b in d2s]
    zeta = config.get("zeta")
    grid = default_u_grid(zeta, config.get("u_points"))

    say(f"步骤 1/2: 计算 {len(configs)} 条χ̄(u)曲线（每条 {grid.size} 个u点）...")
    curves = curve_battery(configs, zeta=zeta, u_grid=grid, root=config.get("root"))
    flagged = sum(1 for c in curves for f in c.flags if f != "ok")
    say(f"  完成，带标记的点: {flagged}")

    say("步骤 2/2: 生成输出文件...")
    gen = _generator(config)
    references = {}
    for series in curves:
        say(f"✓ 曲线: {gen.generate_curve_table(series)}")
        references[series.params.rho] = series.reference
    for ref in references.values():
        say(f"✓ 正态参考: {gen.generate_reference_table(ref)}")
    if config.get("combined"):
        say(f"✓ 合并曲线: {gen.generate_combined_curves(curves)}")
    if config.emit_plots:
        for rho_value, ref in references.items():
            say(f"✓ 图: {gen.plot_chibar_panels(curves, rho_value, ref)}")
    if config.get("emit_xlsx"):
        rows: List[dict] = []
        for series in curves:
            rows.extend(series.rows())
        ref_rows: List[dict] = []
        for ref in references.values():
            ref_rows.extend(ref.rows())
        columns = gen.columns("curve")
        say(f"✓ 工作簿: {gen.generate_combined_output({'chibar': (columns, rows), 'reference': (columns, ref_rows)})}")
    return 0


def run_moments_surface(config: RunConfig, say: Reporter) -> int:
    gammas = gamma_grid(config.get("gamma_min"), config.get("gamma_max"), config.get("gamma_step"))
    nus = config.get("nu_grid")
    say(f"步骤 1/2: 计算偏度/峰度表（{gammas.size} 个gamma x {len(nus)} 个nu）...")
    rows = moment_surface(gammas, nus, tau=config.get("tau"), sigma=config.get("sigma"))

    say("步骤 2/2: 生成输出文件...")
    gen = _generator(config)
    say(f"✓ 矩表: {gen.generate_moment_table(rows)}")
    if config.emit_plots:
        say(f"✓ 图: {gen.plot_moment_surface(rows)}")
    if config.get("emit_xlsx"):
        say(f"✓ 工作簿: {gen.generate_combined_output({'moments': (gen.columns('moments'), rows)})}")
    return 0


def run_simulate(config: RunConfig, say: Reporter) -> int:
    say("步骤 1/3: 准备站点...")
    design = None
    if config.get("sites"):
        sites, design, covariates = SitesParser(config.get("sites")).parse()
        say(f"  站点文件: {len(sites)} 个站点，协变量: {', '.join(covariates) or '无'}")
        if covariates and config.get("model") == "sgrf":
            logger.warning("SGRF使用常数均值mu，站点文件中的协变量(%s)被忽略；需要回归均值请用 --model mixture",
                           ", ".join(covariates))
    else:
        sites = regular_sites(math.isqrt(config.get("n_sites")))
        say(f"  规则网格: {len(sites)} 个站点")

    matern = MaternParams(config.get("psi"), config.get("xi"))
    rng = RngStream(config.seed)
    n_reps = config.get("n_reps")
    model_name = config.get("model")
    sigma = config.get("sigma")
    tau = config.get("tau")
    gamma = config.get("gamma")

    say(f"步骤 2/3: 模拟 {model_name}（{n_reps} 次重复）...")
    if model_name == "sgrf":
        model = SgrfModel(mu=config.get("mu"), sigma2=sigma * sigma, gamma=gamma, tau2=tau * tau, rho_w=matern)
        grid = simulate_sgrf(model, sites, n_reps, rng, keep_latents=config.emit_latents)
        target = stationary_moments(model)
        say(f"  理论均值={target.mean:.6g}, 理论方差={target.variance:.6g}")
    else:
        beta = config.get("beta") or [config.get("mu")]
        model = MixtureModel(beta=tuple(beta), sigma=sigma, gamma=gamma, tau2=tau * tau,
                             nu=config.get("nu"), matern=matern, design=design)
        grid = simulate_mixture(model, sites, n_reps, rng, keep_latents=config.emit_latents)
        s, k = skew_kurt(MomentParams.from_model(model))
        say(f"  理论偏度={s:.6g}, 理论峰度={k:.6g}")
    emp = empirical_moments(grid)
    say(
        f"  经验: 均值={emp.pooled_mean:.6g}, 方差={emp.pooled_variance:.6g}, "
        f"偏度={emp.pooled_skewness:.6g}, 峰度={emp.pooled_kurtosis:.6g}"
    )

    say("步骤 3/3: 生成输出文件...")
    gen = _generator(config)
    say(f"✓ 模拟结果: {gen.generate_simgrid_table(grid, model_name)}")
    if config.get("emit_xlsx"):
        rows = grid.rows()
        say(f"✓ 工作簿: {gen.generate_combined_output({'simgrid': (gen.columns('simgrid', rows), rows)})}")
    return 0


def run_prop1(config: RunConfig, say: Reporter) -> int:
    rho = config.get("rho")
    d2 = config.get("delta2")
    threshold = prop1_threshold(rho, d2)
    bound = "inf" if math.isinf(threshold) else f"{threshold:.7f}"
    print(f"rho={rho!r} delta2={d2!r}")
    print(f"threshold = {bound}")
    print("case table:")
    print("  (a) 0 <= delta1 <= delta2          -> AsymptoticallyIndependent(a)")
    print("  (a) delta1 < 0 and delta2 < 0      -> AsymptoticallyIndependent(a)")
    print("  (a) delta1 < 0 <= delta2           -> AsymptoticallyIndependent(a)")
    print(f"  (b) 0 <= delta2 < delta1 < {bound:<9} -> AsymptoticallyIndependent(b)")
    print(f"      0 <= delta2 < delta1, delta1 >= {bound} -> Indeterminate")
    print("      delta2 < 0 <= delta1           -> Indeterminate")
    d1 = config.get("delta1")
    if d1 is not None:
        print(f"delta1={d1!r}: {classify_prop1(rho, d1, d2).label}")
    return 0


def run_validate(config: RunConfig, say: Reporter) -> int:
    quick = bool(config.get("quick"))
    say(f"运行自检（{'quick' if quick else 'full'}）...")

    def progress(result: CheckResult):
        mark = "✓" if result.passed else "✗"
        say(f"{mark} {result.check} ({result.seconds:.1f}s): {result.detail}")

    results = run_battery(config.seed, quick=quick, progress=progress)
    gen = _generator(config)
    say(f"✓ 报告: {gen.generate_validation_report([r.row() for r in results])}")
    failed = [r.check for r in results if not r.passed]
    if failed:
        say(f"失败的检查: {', '.join(failed)}")
        return 1
    return 0


HANDLERS: Dict[str, Callable[[RunConfig, Reporter], int]] = {
    "chibar-curve": run_chibar_curve,
    "moments-surface": run_moments_surface,
    "simulate": run_simulate,
    "prop1": run_prop1,
    "validate": run_validate,
}


def run(config: RunConfig, quiet: bool = False) -> int:
    """
    执行一个子命令

    Returns:
        退出码：0 成功，1 自检失败
    """
    logger.info("command=%s seed=%s out=%s", config.command, config.seed, config.output_dir)
    return HANDLERS[config.command](config, Reporter(quiet))
