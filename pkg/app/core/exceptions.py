"""
异常定义模块
实验室各层共用的错误类型
"""
from typing import Optional


class LabError(Exception):
    """实验室基础异常"""


class DomainError(LabError, ValueError):
    """输入超出操作的定义域（前置条件不满足）"""


class BudgetExceededError(DomainError):
    """穷举枚举的元组数超过预算"""

    def __init__(self, message: str, tuples: int, budget: int):
        super().__init__(message)
        self.tuples = tuples
        self.budget = budget


class IntegrationError(LabError):
    """时间积分失败（出现NaN或溢出）"""

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} (t={time:.6g})")
        self.time = time


class UsageError(LabError):
    """命令行或配置文件用法错误"""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field
