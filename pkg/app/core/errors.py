"""规划器异常定义"""

from typing import Dict, List, Optional


class SurveyPlannerError(Exception):
    """所有规划器异常的基类"""


class InvalidParameterError(SurveyPlannerError, ValueError):
    """相机或飞行器参数非法"""


class InvalidPlanError(SurveyPlannerError, ValueError):
    """航点计划非法（航点数量、重合航点等）"""


class SpecError(SurveyPlannerError, ValueError):
    """航测任务文件校验失败，携带逐字段的诊断信息"""

    def __init__(self, diagnostics: List[str]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


class NoFeasibleStepError(SurveyPlannerError):
    """固定步长 dt 的搜索上界处仍不可行"""


class InvalidWarmStartError(SurveyPlannerError, ValueError):
    """初值的维度与航点计划不一致"""


class FallbackNeeded(SurveyPlannerError):
    """等式模式（球面输入）求解失败，需要放宽约束"""

    def __init__(self, message: str, residuals: Optional[Dict[str, float]] = None):
        self.residuals = residuals or {}
        super().__init__(message)


class PlannerInfeasibleError(SurveyPlannerError):
    """放宽约束并增加切换点后仍不可行"""

    def __init__(self, message: str, residuals: Optional[Dict[str, float]] = None):
        self.residuals = residuals or {}
        super().__init__(message)


class StaleSolutionError(SurveyPlannerError):
    """解的约束残差超过容差，拒绝插值"""


class OutOfRangeError(SurveyPlannerError, ValueError):
    """采样时间超出轨迹时间范围"""


class InfeasibleAxisError(SurveyPlannerError):
    """单轴边界速度不可达"""
