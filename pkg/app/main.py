"""
命令行入口
python -m app.main <子命令> [--config PATH] [--out DIR] [--seed U64] [--threads K]
"""
import argparse
import sys
from typing import List, Optional

from loguru import logger
from pydantic import ValidationError

from app.state import run_state, set_component
from app.api.commands import HANDLERS, apply_overrides, load_config, run_command, selftest_failed
from app.core.config import settings
from app.core.exceptions import UsageError

DESCRIPTIONS = {
    "simulate": "演化随机 H^s 初值，记录质量与能量守恒（conservation.csv）",
    "drift1d": "一维 E¹/E² 漂移随 N 的衰减（drift.csv, slopes.csv, coupling.csv, resonances.csv）",
    "drift2d": "二维 E¹ 漂移与 Tr₁/Tr₂ 对账（drift.csv, slopes.csv, coupling.csv）",
    "counting": "格点计数扫描：1D 界表、A^λ、Pick、圆弧、Gauss（counting_1d.csv 等）",
    "bilinear": "双线性与线性 Strichartz 比值（bilinear.csv, control.csv, linear.csv）",
    "perturbation": "E² − E¹ 随 N 的大小（perturbation.csv, slopes.csv）",
    "m6probe": "M6 在 Γ₆ 上的上界探测（m6probe.csv, resonances.csv）",
    "selftest": "运行全部自检，任一失败时退出码为 1（selftest.csv）",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="python -m app.main",
        description="周期 L² 临界 NLS 的 I-方法数值实验室",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in HANDLERS:
        cmd = sub.add_parser(name, help=DESCRIPTIONS[name], formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        cmd.add_argument(
            "--config",
            metavar="PATH",
            default=None,
            help="JSON 配置文档；缺省值: name=default, d=1, s=0.45, N=[2,4,8], lam_rule=explicit, "
            "lams=[1], M=16, dt=1e-3, t_end=0.1, seeds=[0], checkpoints=16, gamma_mode=auto",
        )
        cmd.add_argument("--out", metavar="DIR", default=None, help=f"输出根目录（缺省取配置或 {settings.output_dir}）")
        cmd.add_argument("--seed", metavar="U64", type=int, default=None, help="覆盖配置中的 seeds")
        cmd.add_argument("--threads", metavar="K", type=int, default=settings.threads, help="工作线程数")
    return parser


def configure_logging(run_dir) -> int:
    """stderr 输出 + 运行目录下的 run.log"""
    logger.remove()
    logger.add(sys.stderr, level=settings.log_level)
    run_dir.mkdir(parents=True, exist_ok=True)
    return logger.add(run_dir / "run.log", level=settings.log_level, encoding="utf-8")


def main(argv: Optional[List[str]] = None) -> int:
    """
    解析参数并执行子命令

    Returns:
        退出码：0 成功，1 自检失败，2 用法错误
    """
    args = build_parser().parse_args(argv)
    try:
        if args.threads is not None and args.threads < 1:
            raise UsageError(f"线程数必须为正: {args.threads}", field="threads")
        cfg = apply_overrides(load_config(args.config), out=args.out, seed=args.seed)
    except (UsageError, ValidationError) as e:
        logger.error(f"用法错误: {e}")
        return 2

    run_dir = settings.run_directory(args.command, cfg.name, cfg.output)
    sink = configure_logging(run_dir)
    set_component("run_dir", run_dir)
    logger.info(f"启动I-方法数值实验室: {args.command}")

    try:
        result = run_command(args.command, cfg, threads=args.threads)
    except (UsageError, ValidationError) as e:
        logger.error(f"用法错误: {e}")
        return 2
    finally:
        logger.remove(sink)
        run_state.pop("run_dir", None)

    if args.command == "selftest" and selftest_failed(result):
        logger.error("自检存在失败项")
        return 1
    logger.info(f"结果已写入 {result['run_dir']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
