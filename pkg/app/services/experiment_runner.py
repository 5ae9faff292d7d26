"""
实验运行服务
把配置展开为相互独立的 (N, λ, seed) 单元，在线程池上执行，
按提交顺序汇总为表格
"""
import itertools
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from loguru import logger

from app.api.models import DriftRecord, ExperimentConfig
from app.core.config import settings
from app.core.exceptions import DomainError
from app.core.torus_lattice import TorusLattice
from app.core.spectral_field import mass, sobolev_norm
from app.core.nls_solver import NLSSolver, SolverConfig, conservation_report, random_hs_field, rescale
from app.core.imethod import IMethodParams, apply_I, first_energy
from app.core.multilinear import ResonanceLog
from app.core.modified_energy import m6_bound_probe, second_energy, second_energy_estimate, tr_decomposition_2d
from app.core.lattice_counting import (
    Disk,
    LatticePolygon,
    arc_lemma_violations,
    bound_M_1d,
    gauss_deviation,
    pick_area,
    random_lattice_polygon,
    sweep_A_lambda_2d,
)
from app.services.strichartz_bench import comparable_frequency_control, linear_strichartz_ratio, measure_bilinear, valid_exponent
from app.utils.fitting import loglog_slope

DRIFT_COLUMNS = list(DriftRecord.model_fields)
SLOPE_COLUMNS = ["quantity", "slope", "ci_low", "ci_high", "points", "flag"]
TR_MULTILINEAR_MAX_M = 8
RESONANCE_COLUMNS = ["N", "lam", "seed"] + ResonanceLog.COLUMNS
PERTURBATION_COLUMNS = ["N", "lam", "seed", "E1", "E2", "gap", "gap_constant", "coercivity", "coercivity_constant", "status", "error"]


def _frame(rows: List[Dict], columns: List[str]) -> pd.DataFrame:
    """空结果也保留表头"""
    if not rows:
        return pd.DataFrame(columns=columns)
    return pd.DataFrame(rows, columns=columns)


def checkpoint_stride(n_steps: int, checkpoints: int) -> int:
    """整除步数且使帧数不少于 checkpoints+1 的最大保存间隔"""
    stride = max(1, n_steps // max(checkpoints, 1))
    while n_steps % stride:
        stride -= 1
    return stride


class ExperimentRunner:
    """实验运行器"""

    def __init__(self, threads: Optional[int] = None):
        """
        初始化实验运行器

        Args:
            threads: 工作线程数，缺省取配置值
        """
        self.threads = threads or settings.threads
        self.executor = ThreadPoolExecutor(max_workers=self.threads)
        self._lock = threading.Lock()
        self._cell_logs: Dict[tuple, ResonanceLog] = {}
        self._completed_count = 0
        self._failed_count = 0
        logger.info(f"初始化实验运行器: {self.threads} 个线程")

    def shutdown(self):
        self.executor.shutdown(wait=True)
        logger.info(f"实验运行器关闭: 完成 {self._completed_count} 个单元, 失败 {self._failed_count} 个")

    def get_stats(self) -> Dict:
        with self._lock:
            return {"completed": self._completed_count, "failed": self._failed_count}

    def _count(self, ok: bool = True):
        with self._lock:
            if ok:
                self._completed_count += 1
            else:
                self._failed_count += 1

    def _cell_log(self, key: tuple) -> ResonanceLog:
        """每个单元一份共振日志"""
        log = ResonanceLog()
        with self._lock:
            self._cell_logs[key] = log
        return log

    def resonances(self, keys: List[tuple]) -> pd.DataFrame:
        """
        按单元提交顺序合并共振日志

        Args:
            keys: (N, λ, seed) 单元键，顺序即输出顺序
        """
        frames = []
        for n, lam, seed in keys:
            log = self._cell_logs.get((n, lam, seed))
            frame = log.to_frame() if log is not None else None
            if frame is None or frame.empty:
                continue
            frame.insert(0, "N", n)
            frame.insert(1, "lam", lam)
            frame.insert(2, "seed", seed)
            frames.append(frame)
        if not frames:
            return pd.DataFrame(columns=RESONANCE_COLUMNS)
        return pd.concat(frames, ignore_index=True)

    # ---- 公共部分 ----

    @staticmethod
    def initial_data(cfg: ExperimentConfig, lam: float, seed: int):
        """单位环面上的随机 H^s 数据经伸缩映射搬到 T^d_λ"""
        base = TorusLattice(d=cfg.d, lam=1.0, M=cfg.M)
        u0 = random_hs_field(base, cfg.s, seed, cfg.amplitude, max_index=cfg.data_cutoff)
        return rescale(u0, lam)

    def _cells(self, cfg: ExperimentConfig) -> List[tuple]:
        pairs = list(zip(cfg.N, cfg.lambdas()))
        return [(n, lam, seed) for (n, lam), seed in itertools.product(pairs, cfg.seeds)]

    def _failed(self, cfg: ExperimentConfig, n: float, lam: float, seed: int, e: Exception) -> DriftRecord:
        logger.error(f"单元失败 N={n}, λ={lam}, seed={seed}: {e}")
        self._count(ok=False)
        return DriftRecord(d=cfg.d, N=n, lam=lam, seed=seed, status="failed", error=str(e))

    def coupling_table(self, cfg: ExperimentConfig) -> pd.DataFrame:
        rows = [
            {"d": cfg.d, "s": cfg.s, "N": n, "lam": lam, "lam_ge_N": lam >= n, "lam_le_N": lam <= n}
            for n, lam in zip(cfg.N, cfg.lambdas())
        ]
        return _frame(rows, ["d", "s", "N", "lam", "lam_ge_N", "lam_le_N"])

    def _drift_slopes(self, records: pd.DataFrame, quantity: str) -> Dict:
        ok = records[(records["status"] == "ok") & records[quantity].notna()].astype({"time": float, quantity: float})
        if ok.empty:
            return loglog_slope(f"{quantity}_vs_N", [], [])
        final = ok.loc[ok.groupby(["N", "lam", "seed"])["time"].idxmax()]
        worst = final.groupby("N")[quantity].max()
        return loglog_slope(f"{quantity}_vs_N", worst.index.to_numpy(), worst.to_numpy())

    # ---- simulate ----

    def _simulate_cell(self, cfg: ExperimentConfig, lam: float, seed: int) -> List[Dict]:
        try:
            u0 = self.initial_data(cfg, lam, seed)
            n_steps = SolverConfig(dt=cfg.dt, t_end=cfg.t_end).n_steps
            solver = NLSSolver(SolverConfig(dt=cfg.dt, t_end=cfg.t_end, save_every=checkpoint_stride(n_steps, cfg.checkpoints)))
            report = conservation_report(solver.evolve(u0))
            self._count()
            return [
                {"d": cfg.d, "lam": lam, "seed": seed, "time": t, "mass": m, "energy": e,
                 "mass_drift": abs(m - report.mass[0]) / report.mass[0], "energy_drift": abs(e - report.energy[0]),
                 "status": "ok", "error": ""}
                for t, m, e in zip(report.times, report.mass, report.energy)
            ]
        except Exception as e:
            logger.error(f"模拟失败 λ={lam}, seed={seed}: {e}")
            self._count(ok=False)
            return [{"d": cfg.d, "lam": lam, "seed": seed, "status": "failed", "error": str(e)}]

    def run_simulate(self, cfg: ExperimentConfig) -> Dict[str, pd.DataFrame]:
        """按配置推进轨道并记录质量与能量"""
        cells = list(itertools.product(sorted(set(cfg.lambdas())), cfg.seeds))
        logger.info(f"开始模拟: {len(cells)} 个单元")
        results = self.executor.map(lambda c: self._simulate_cell(cfg, *c), cells)
        rows = [row for block in results for row in block]
        columns = ["d", "lam", "seed", "time", "mass", "energy", "mass_drift", "energy_drift", "status", "error"]
        return {"conservation.csv": _frame(rows, columns)}

    # ---- drift1d ----

    def _drift_cell_1d(self, cfg: ExperimentConfig, n: float, lam: float, seed: int) -> List[DriftRecord]:
        try:
            p = IMethodParams(N=n, s=cfg.s)
            u0 = self.initial_data(cfg, lam, seed)
            n_steps = SolverConfig(dt=cfg.dt, t_end=cfg.t_end).n_steps
            solver_cfg = SolverConfig(dt=cfg.dt, t_end=cfg.t_end, dealias=True,
                                      save_every=checkpoint_stride(n_steps, cfg.checkpoints))
            trajectory = NLSSolver(solver_cfg).evolve(u0)
            options = {"mode": cfg.gamma_mode, "samples": cfg.samples, "seed": seed,
                       "log": self._cell_log((n, lam, seed))}

            records = []
            e1_0 = e2_0 = None
            for t, frame in zip(trajectory.times, trajectory.frames):
                e1 = first_energy(p, frame)
                e2 = second_energy(p, frame, **options)
                if e1_0 is None:
                    e1_0, e2_0 = e1, e2
                records.append(DriftRecord(d=1, N=n, lam=lam, seed=seed, time=float(t), E1=e1, E2=e2,
                                           mass=mass(frame), drift1=abs(e1 - e1_0), drift2=abs(e2 - e2_0)))
            self._count()
            logger.info(f"一维漂移 N={n}, λ={lam}, seed={seed}: drift2={records[-1].drift2:.3e}")
            return records
        except Exception as e:
            return [self._failed(cfg, n, lam, seed, e)]

    def run_drift_1d(self, cfg: ExperimentConfig) -> Dict[str, pd.DataFrame]:
        """
        一维五次方程：每个 N 上 E¹、E² 的检查点漂移与 drift₂ 对 N 的斜率

        Returns:
            文件名到表格的映射
        """
        if cfg.d != 1:
            raise DomainError("drift1d 需要 d = 1")
        cells = self._cells(cfg)
        logger.info(f"开始一维漂移实验: {len(cells)} 个单元")
        results = self.executor.map(lambda c: self._drift_cell_1d(cfg, *c), cells)
        records = _frame([r.model_dump() for block in results for r in block], DRIFT_COLUMNS)
        slopes = [self._drift_slopes(records, "drift2"), self._drift_slopes(records, "drift1")]
        return {
            "drift.csv": records,
            "slopes.csv": _frame(slopes, SLOPE_COLUMNS),
            "coupling.csv": self.coupling_table(cfg),
            "resonances.csv": self.resonances(cells),
        }

    # ---- drift2d ----

    def _tr_method(self, cfg: ExperimentConfig) -> str:
        if cfg.tr_method != "auto":
            return cfg.tr_method
        return "multilinear" if cfg.M <= TR_MULTILINEAR_MAX_M else "spectral"

    def _drift_cell_2d(self, cfg: ExperimentConfig, n: float, lam: float, seed: int) -> List[DriftRecord]:
        try:
            p = IMethodParams(N=n, s=cfg.s)
            u0 = self.initial_data(cfg, lam, seed)
            solver_cfg = SolverConfig(dt=cfg.dt, t_end=cfg.t_end, dealias=True)
            trajectory = NLSSolver(solver_cfg).evolve(u0)
            stride = checkpoint_stride(solver_cfg.n_steps, cfg.checkpoints)

            e1_0 = first_energy(p, trajectory.frame(0))
            records = []
            for i in range(0, trajectory.n_frames, stride):
                frame = trajectory.frame(i)
                e1 = first_energy(p, frame)
                records.append(DriftRecord(d=2, N=n, lam=lam, seed=seed, time=float(trajectory.times[i]),
                                           E1=e1, mass=mass(frame), drift1=abs(e1 - e1_0)))

            report = tr_decomposition_2d(p, trajectory, float(trajectory.times[-1]), method=self._tr_method(cfg),
                                         samples=cfg.samples, seed=seed)
            last = records[-1]
            records[-1] = last.model_copy(update={"tr1": report.tr1, "tr2": report.tr2, "tr_discrepancy": report.relative})
            self._count()
            logger.info(f"二维漂移 N={n}, λ={lam}, seed={seed}: drift1={last.drift1:.3e}, Tr 相对差={report.relative:.2e}")
            return records
        except Exception as e:
            return [self._failed(cfg, n, lam, seed, e)]

    def run_drift_2d(self, cfg: ExperimentConfig) -> Dict[str, pd.DataFrame]:
        """二维三次方程：E¹ 漂移、终止时刻的 Tr₁/Tr₂ 核对与 drift₁ 对 N 的斜率"""
        if cfg.d != 2:
            raise DomainError("drift2d 需要 d = 2")
        cells = self._cells(cfg)
        logger.info(f"开始二维漂移实验: {len(cells)} 个单元, Tr 方法 {self._tr_method(cfg)}")
        results = self.executor.map(lambda c: self._drift_cell_2d(cfg, *c), cells)
        records = _frame([r.model_dump() for block in results for r in block], DRIFT_COLUMNS)
        return {
            "drift.csv": records,
            "slopes.csv": _frame([self._drift_slopes(records, "drift1")], SLOPE_COLUMNS),
            "coupling.csv": self.coupling_table(cfg),
        }

    # ---- counting ----

    def run_counting(self, cfg: ExperimentConfig) -> Dict[str, pd.DataFrame]:
        """
        计数扫描：一维 #S 界、二维 A^λ、圆弧引理、Pick 恒等式与 Gauss 计数

        所有结果只依赖配置与种子，重复运行逐行一致。
        """
        sweep = cfg.counting
        grid = [(lam, n1, n2) for lam in sweep.lams for n1 in sweep.N1s for n2 in sweep.N2s if n1 > 2 * n2]
        logger.info(f"开始计数扫描: 一维 {len(grid)} 个配置")
        rows_1d = list(self.executor.map(lambda c: bound_M_1d(*c, w=sweep.w), grid))
        columns_1d = ["lambda", "N1", "N2", "k", "tau", "count", "count_ratio", "M", "M_shape"]

        rows_2d = sweep_A_lambda_2d(sweep.lams_2d, sweep.N1s_2d, sweep.N2s_2d, directions=sweep.directions)
        columns_2d = ["lambda", "N1", "N2", "a", "b", "c", "count", "circle_max", "shape_b"]

        rng = np.random.default_rng(cfg.seeds[0] if cfg.seeds else settings.default_seed)
        pick_rows = []
        for i in range(sweep.polygons):
            polygon: LatticePolygon = random_lattice_polygon(rng)
            pick, shoelace = pick_area(polygon)
            pick_rows.append({"polygon": i, "vertices": len(polygon.vertices), "pick": str(pick),
                              "shoelace": str(shoelace), "match": pick == shoelace})

        arc = arc_lemma_violations(sweep.arc_max_r2)
        arc_row = {k: arc[k] for k in ("circles", "triples", "violation_count", "min_ratio")}
        gauss_rows = gauss_deviation(sweep.gauss_lams, Disk(r=1.0))
        logger.info(f"计数扫描完成: Pick 不符 {sum(not r['match'] for r in pick_rows)} 个, 圆弧违例 {arc['violation_count']} 个")
        return {
            "counting_1d.csv": _frame(rows_1d, columns_1d),
            "counting_2d.csv": _frame(rows_2d, columns_2d),
            "pick.csv": _frame(pick_rows, ["polygon", "vertices", "pick", "shoelace", "match"]),
            "arc.csv": _frame([arc_row], list(arc_row)),
            "gauss.csv": _frame(gauss_rows, ["lambda", "count", "area", "deviation", "ratio"]),
        }

    # ---- bilinear ----

    def run_bilinear(self, cfg: ExperimentConfig) -> Dict[str, pd.DataFrame]:
        """双线性常数扫描、同频对照与线性 Strichartz 比值"""
        sweep = cfg.bilinear
        seed = cfg.seeds[0] if cfg.seeds else settings.default_seed
        columns = ["d", "lambda", "N1", "N2", "trials", "B_max", "reference", "constant", "ratio"]

        cells = [(1, lam, n1, n2) for lam in sweep.lams for n1 in sweep.N1s for n2 in sweep.N2s if n1 >= 4 * n2]
        cells += [(2, lam, n1, n2) for lam in sweep.lams_2d for n1 in sweep.N1s_2d for n2 in sweep.N2s_2d if n1 >= 4 * n2]
        logger.info(f"开始双线性扫描: {len(cells)} 个配置")
        rows = list(self.executor.map(
            lambda c: measure_bilinear(*c, trials=sweep.trials, seed=seed, frames=sweep.frames), cells))

        control = comparable_frequency_control(1.0, sweep.control_N1s, sweep.trials, seed, sweep.frames)

        linear_rows = []
        for d, p in itertools.product((1, 2), sweep.p_values):
            if not valid_exponent(d, p):
                continue
            lattice = TorusLattice(d=d, lam=1.0, M=16 if d == 1 else 8)
            ratio = linear_strichartz_ratio(lattice, p, trials=sweep.linear_trials, seed=seed, frames=sweep.frames)
            linear_rows.append({"d": d, "lambda": lattice.lam, "M": lattice.M, "p": p, "ratio": ratio})

        return {
            "bilinear.csv": _frame(rows, columns),
            "control.csv": _frame(control, columns),
            "linear.csv": _frame(linear_rows, ["d", "lambda", "M", "p", "ratio"]),
        }

    # ---- perturbation ----

    def _perturbation_cell(self, cfg: ExperimentConfig, n: float, lam: float, seed: int) -> Dict:
        try:
            p = IMethodParams(N=n, s=cfg.s)
            u0 = self.initial_data(cfg, lam, seed)
            e1 = first_energy(p, u0)
            est = second_energy_estimate(p, u0, mode=cfg.gamma_mode, samples=cfg.samples, seed=seed,
                                         log=self._cell_log((n, lam, seed)))
            gap = abs(est.value - e1)
            # ‖∇If‖² − 2E²
            coercivity = 2.0 * est.kinetic - 2.0 * est.value
            h1 = sobolev_norm(apply_I(p, u0), 1.0)
            self._count()
            return {
                "N": n, "lam": lam, "seed": seed, "E1": e1, "E2": est.value, "gap": gap,
                "gap_constant": gap * n / h1 ** 6 if h1 > 0 else 0.0,
                "coercivity": coercivity, "coercivity_constant": max(coercivity, 0.0) * n,
                "status": "ok", "error": "",
            }
        except Exception as e:
            logger.error(f"扰动单元失败 N={n}, λ={lam}, seed={seed}: {e}")
            self._count(ok=False)
            return {"N": n, "lam": lam, "seed": seed, "status": "failed", "error": str(e)}

    def run_perturbation(self, cfg: ExperimentConfig) -> Dict[str, pd.DataFrame]:
        """固定数据上 |E² − E¹| 对 N 的衰减"""
        if cfg.d != 1:
            raise DomainError("perturbation 需要 d = 1")
        cells = self._cells(cfg)
        rows = list(self.executor.map(lambda c: self._perturbation_cell(cfg, *c), cells))
        frame = _frame(rows, PERTURBATION_COLUMNS)
        ok = frame[frame["status"] == "ok"]
        worst = ok.groupby("N")["gap"].max() if not ok.empty else pd.Series(dtype=float)
        slope = loglog_slope("gap_vs_N", worst.index.to_numpy(), worst.to_numpy())
        return {"perturbation.csv": frame, "slopes.csv": _frame([slope], SLOPE_COLUMNS)}

    # ---- m6probe ----

    def run_m6probe(self, cfg: ExperimentConfig) -> Dict[str, pd.DataFrame]:
        """每个 λ 上 max|M6| 的探测"""
        probe = cfg.probe
        seed = cfg.seeds[0] if cfg.seeds else settings.default_seed
        p = IMethodParams(N=probe.N, s=cfg.s)
        lattices = [TorusLattice(d=1, lam=lam, M=probe.M) for lam in probe.lams]
        rows = list(self.executor.map(
            lambda l: m6_bound_probe(p, l, probe.random_tuples, seed, log=self._cell_log((probe.N, l.lam, seed))), lattices))
        columns = ["lam", "M", "N", "s", "exhaustive_tuples", "exhaustive_max", "random_tuples", "random_max",
                   "bound", "excluded", "fallback"]
        return {"m6probe.csv": _frame(rows, columns), "resonances.csv": self.resonances([(probe.N, l.lam, seed) for l in lattices])}
