"""
实验配置与结果记录模型
"""
from datetime import datetime
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


# 子配置
class CountingSweep(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lams: List[float] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0]
    N1s: List[float] = [8.0, 16.0, 32.0]
    N2s: List[float] = [1.0, 2.0]
    w: float = Field(default=1.0, gt=0)
    lams_2d: List[float] = [1.0, 2.0, 4.0]
    N1s_2d: List[float] = [4.0, 8.0]
    N2s_2d: List[float] = [1.0]
    directions: int = Field(default=8, ge=1)
    polygons: int = Field(default=1000, ge=0)
    arc_max_r2: int = Field(default=40_000, ge=0)
    gauss_lams: List[float] = [4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0]


class BilinearSweep(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lams: List[float] = [1.0, 2.0, 4.0]
    N1s: List[float] = [8.0, 16.0]
    N2s: List[float] = [1.0, 2.0]
    lams_2d: List[float] = [1.0, 2.0]
    N1s_2d: List[float] = [4.0]
    N2s_2d: List[float] = [1.0]
    control_N1s: List[float] = [2.0, 4.0, 8.0]
    trials: int = Field(default=50, ge=0)
    frames: int = Field(default=128, ge=8)
    p_values: List[float] = [2.0, 4.0, 6.0]
    linear_trials: int = Field(default=10, ge=1)


class ProbeSweep(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lams: List[float] = [1.0, 2.0, 4.0]
    M: int = Field(default=8, ge=4)
    N: float = Field(default=1.0, ge=1)
    random_tuples: int = Field(default=1_000_000, ge=0)


class ExperimentConfig(BaseModel):
    """一次实验运行的全部参数（JSON 文档）"""

    model_config = ConfigDict(extra="forbid")

    name: str = "default"
    d: Literal[1, 2] = 1
    s: float = Field(default=0.45, gt=0, lt=1)
    N: List[float] = [2.0, 4.0, 8.0]
    lam_rule: Literal["explicit", "auto"] = "explicit"
    lams: List[float] = [1.0]
    M: int = Field(default=16, ge=4)
    dt: float = Field(default=1e-3, gt=0)
    t_end: float = Field(default=0.1, gt=0)
    seeds: List[int] = [0]
    output: Optional[str] = None

    amplitude: float = Field(default=1.0, gt=0)
    data_cutoff: Optional[float] = Field(default=None, gt=0)
    checkpoints: int = Field(default=16, ge=1)
    gamma_mode: Literal["auto", "exhaustive", "sampled"] = "auto"
    samples: int = Field(default=200_000, ge=1)
    tr_method: Literal["auto", "multilinear", "spectral"] = "auto"

    counting: CountingSweep = CountingSweep()
    bilinear: BilinearSweep = BilinearSweep()
    probe: ProbeSweep = ProbeSweep()

    @model_validator(mode="after")
    def _check_rules(self):
        if self.M % 2:
            raise ValueError("M 必须为偶数")
        if any(n <= 0 for n in self.N):
            raise ValueError("N 中的值必须为正")
        if self.lam_rule == "explicit":
            if len(self.lams) not in (1, len(self.N)):
                raise ValueError("lams 的长度必须为 1 或与 N 相同")
            if any(lam < 1 for lam in self.lams):
                raise ValueError("lams 中的值必须 ≥ 1")
        return self

    def lambdas(self) -> List[float]:
        """与 N 一一对应的 λ；auto 规则取 λ = max(1, round(N^{(1−s)/s}))"""
        if self.lam_rule == "auto":
            return [float(max(1, round(n ** ((1 - self.s) / self.s)))) for n in self.N]
        if len(self.lams) == 1:
            return [self.lams[0]] * len(self.N)
        return list(self.lams)


class DriftRecord(BaseModel):
    """一个 (N, λ, seed) 单元在某一检查点的漂移"""

    d: int
    N: float
    lam: float
    seed: int
    time: Optional[float] = None
    E1: Optional[float] = None
    E2: Optional[float] = None
    mass: Optional[float] = None
    drift1: Optional[float] = Field(default=None, ge=0)
    drift2: Optional[float] = Field(default=None, ge=0)
    status: str = "ok"
    error: str = ""
    tr1: Optional[float] = None
    tr2: Optional[float] = None
    tr_discrepancy: Optional[float] = None


class RunManifest(BaseModel):
    """运行目录中的 manifest.json"""

    command: str
    name: str
    config: Dict
    versions: Dict[str, str]
    seed: int
    threads: int
    started: datetime
    wall_time: float = 0.0
    outputs: List[str] = []
