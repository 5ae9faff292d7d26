"""
子命令处理
读取配置、分发到实验运行器、把结果表与运行清单写入运行目录
"""
import json
import time
from datetime import datetime
from importlib import metadata
from pathlib import Path
from typing import Callable, Dict, List, Optional

import pandas as pd
from loguru import logger
from pydantic import ValidationError

from app.api.models import ExperimentConfig, RunManifest
from app.core.config import settings
from app.core.exceptions import UsageError
from app.services.experiment_runner import ExperimentRunner
from app.services.selftest import run_selftest
from app.state import get_component

VERSIONED_PACKAGES = ["numpy", "scipy", "pandas", "pydantic", "pydantic-settings", "loguru"]


def load_config(path: Optional[str]) -> ExperimentConfig:
    """
    读取 JSON 配置文档

    Args:
        path: 配置文件路径，None 时使用全部缺省值

    Returns:
        校验后的 ExperimentConfig
    """
    if path is None:
        return ExperimentConfig()
    source = Path(path)
    if not source.exists():
        raise UsageError(f"配置文件不存在: {path}", field="config")
    try:
        raw = json.loads(source.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise UsageError(f"配置文件不是合法的 JSON: {e}", field="config") from e
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first["loc"]) or "config"
        raise UsageError(f"配置字段 {field} 无效: {first['msg']}", field=field) from e


def apply_overrides(cfg: ExperimentConfig, out: Optional[str] = None, seed: Optional[int] = None) -> ExperimentConfig:
    """命令行 --out / --seed 覆盖配置中的值"""
    update = {}
    if out is not None:
        update["output"] = out
    if seed is not None:
        if seed < 0:
            raise UsageError(f"种子必须非负: {seed}", field="seed")
        update["seeds"] = [seed]
    return cfg.model_copy(update=update) if update else cfg


def package_versions() -> Dict[str, str]:
    versions = {}
    for name in VERSIONED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def _selftest(runner: ExperimentRunner, cfg: ExperimentConfig) -> Dict[str, pd.DataFrame]:
    return {"selftest.csv": pd.DataFrame(run_selftest(), columns=["name", "status", "detail"])}


HANDLERS: Dict[str, Callable[[ExperimentRunner, ExperimentConfig], Dict[str, pd.DataFrame]]] = {
    "simulate": ExperimentRunner.run_simulate,
    "drift1d": ExperimentRunner.run_drift_1d,
    "drift2d": ExperimentRunner.run_drift_2d,
    "counting": ExperimentRunner.run_counting,
    "bilinear": ExperimentRunner.run_bilinear,
    "perturbation": ExperimentRunner.run_perturbation,
    "m6probe": ExperimentRunner.run_m6probe,
    "selftest": _selftest,
}


def write_tables(run_dir: Path, tables: Dict[str, pd.DataFrame]) -> List[str]:
    """每张表写成一个 CSV，空表只含表头"""
    run_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for filename, frame in tables.items():
        frame.to_csv(run_dir / filename, index=False)
        written.append(filename)
        logger.info(f"写入 {run_dir / filename}: {len(frame)} 行")
    return written


def run_command(command: str, cfg: ExperimentConfig, threads: Optional[int] = None) -> Dict:
    """
    执行一个子命令

    Args:
        command: 子命令名
        cfg: 已应用命令行覆盖的配置
        threads: 工作线程数，缺省取配置值

    Returns:
        运行结果：run_dir, tables, manifest
    """
    handler = HANDLERS.get(command)
    if handler is None:
        raise UsageError(f"未知的子命令: {command}", field="command")

    run_dir = get_component("run_dir") or settings.run_directory(command, cfg.name, cfg.output)
    started = datetime.now()
    clock = time.perf_counter()
    runner = ExperimentRunner(threads=threads)
    logger.info(f"开始 {command}（{cfg.name}），输出目录 {run_dir}")

    try:
        tables = handler(runner, cfg)
    finally:
        runner.shutdown()

    outputs = write_tables(run_dir, tables)
    manifest = RunManifest(
        command=command,
        name=cfg.name,
        config=cfg.model_dump(mode="json"),
        versions=package_versions(),
        seed=cfg.seeds[0] if cfg.seeds else settings.default_seed,
        threads=runner.threads,
        started=started,
        wall_time=time.perf_counter() - clock,
        outputs=outputs + [name for name in ("run.log",) if (run_dir / name).exists()],
    )
    (run_dir / "manifest.json").write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    logger.info(f"{command} 完成: 用时 {manifest.wall_time:.2f}s, 统计 {runner.get_stats()}")
    return {"run_dir": run_dir, "tables": tables, "manifest": manifest}


def selftest_failed(result: Dict) -> bool:
    table = result["tables"].get("selftest.csv")
    return table is not None and bool((table["status"] == "fail").any())
