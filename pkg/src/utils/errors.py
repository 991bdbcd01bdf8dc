"""项目统一的异常层次"""


class LidarDistillError(Exception):
    """所有可预期错误的基类"""


class ContractError(LidarDistillError, ValueError):
    """前置条件、形状或长度不满足"""


class EmptyCloudError(ContractError):
    """输入点云为空"""

    def __init__(self, message="empty cloud"):
        super().__init__(message)


class DegenerateFeatureError(ContractError):
    """特征行范数为零，无法归一化"""


class QuantizationOverflowError(ContractError):
    """体素键超出整数范围，通常意味着输入已损坏"""


class ConfigurationError(LidarDistillError, ValueError):
    """参数或标定不一致"""


class DataFormatError(LidarDistillError, ValueError):
    """文件内容格式错误"""
