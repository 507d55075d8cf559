import logging
from pathlib import Path

VERSION = "v0.4.0"
APP_NAME = "SurveyPlanner"

# 路径
ROOT_PATH = Path(__file__).parent

RESOURCE_PATH = ROOT_PATH.parent / "resource"
APPDATA_PATH = ROOT_PATH.parent / "AppData"
WORK_PATH = ROOT_PATH.parent / "work-dir"

SURVEY_PRESET_PATH = RESOURCE_PATH / "surveys"

LOG_PATH = APPDATA_PATH / "logs"
CACHE_PATH = APPDATA_PATH / "cache"

# 日志配置
LOG_LEVEL = logging.INFO
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# 数值容差
EPS_FEAS = 1e-6  # positions (m), velocities (m/s), sphere deviation (m/s^2)
EPS_OPT = 1e-6
EPS_TIME = 1e-9  # s
EPS_GAP = 1e-6  # relative duality gap of the conic solver
SOCP_FEASTOL = 1e-8

TOLERANCE_PROFILES = {
    "default": EPS_FEAS,
    "strict": 1e-8,
}

# 求解器默认参数
DT_BRACKET = (0.01, 20.0)  # s，上界不可行时自动扩大
DT_EXPANSION_MARGIN = 2.0
DT_TOL = 1e-3  # s
LINE_SEARCH_MAX_ITER = 60
SWITCHING_POINTS_MAX = 5
AUGLAG_MAX_OUTER = 30
AUGLAG_PENALTY_INIT = 1.0
AUGLAG_PENALTY_GROWTH = 10.0
AUGLAG_PENALTY_MAX = 1e8

# 校验
RK4_STEP_S = 1e-3
BRUTE_FORCE_GRID = 21
SMOOTH_EXCEEDANCE_FACTOR = 1.5
SMOOTH_CONDITION_TOL = 1e-9  # 平滑轨迹端点/中点条件误差上限
SAMPLE_RATE_HZ = 50.0
