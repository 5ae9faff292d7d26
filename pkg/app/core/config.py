from typing import Optional
from pathlib import Path
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    # 日志配置
    log_level: str = "INFO"

    # 输出配置
    output_dir: str = "runs"
    threads: int = 4
    default_seed: int = 0

    # 枚举预算配置（Γ_n 穷举上限与分块大小）
    enumeration_budget: int = 100_000_000
    enumeration_chunk: int = 262_144
    resonance_log_limit: int = 10_000

    # 采样配置
    sample_count: int = 200_000

    # 求解器配置（Galerkin 非线性子步的不动点迭代）
    fixed_point_tol: float = 1e-14
    fixed_point_max_iter: int = 100

    # 时空范数与Strichartz基准配置
    xsb_min_frames: int = 8
    window_frames: int = 128
    bilinear_trials: int = 50
    epsilon_2d: float = 0.1

    class Config:
        env_file = ".env"

    def run_directory(self, command: str, name: str, out: Optional[str] = None) -> Path:
        """获取运行目录路径"""
        base = Path(out or self.output_dir)
        return base / f"{command}-{name}"


settings = Settings()
