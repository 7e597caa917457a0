# -*- coding: utf-8 -*-
"""
异常定义模块

数值事件（上溢、下溢、NaN）不会抛出异常，而是计入 NumericEvents；
这里只定义契约违例、数据格式错误和训练中止等需要调用方处理的错误。
"""

from typing import Any, Dict, Optional


class HalfLabError(Exception):
    """所有领域错误的基类"""


class ContractViolationError(HalfLabError, ValueError):
    """形状、精度标签或前置条件不满足"""


class ArchitectureMismatchError(ContractViolationError):
    """两个模型的结构不一致，无法逐输入比较"""


class TheoryViolationError(HalfLabError, AssertionError):
    """误差容限证书成立但两个模型的预测不同（说明实现有缺陷）"""


class ConfigError(HalfLabError, ValueError):
    """配置文件或命令行覆盖项校验失败"""


class DatasetError(HalfLabError):
    """IDX 数据文件解析错误的基类"""


class WrongMagicError(DatasetError):
    """IDX 魔数与期望的文件类型不符"""


class TruncatedPayloadError(DatasetError):
    """IDX 数据长度小于头部声明的长度"""


class CountMismatchError(DatasetError):
    """图像文件与标签文件的样本数不一致"""


class ModelFileError(HalfLabError):
    """模型文件解析错误的基类"""


class BadMagicError(ModelFileError):
    """模型文件魔数错误"""


class VersionMismatchError(ModelFileError):
    """模型文件格式版本不受支持"""


class PayloadLengthError(ModelFileError):
    """模型文件声明长度与实际字节数不符"""


class TrainingInstabilityError(HalfLabError):
    """
    训练因权重大面积非有限而中止

    report 字段保存结构化的中止报告（首个不稳定事件、非有限权重比例等），
    由命令行前端写入输出目录。
    """

    def __init__(self, message: str, report: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.report = report or {}
