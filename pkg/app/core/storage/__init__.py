# app/core/storage/__init__.py
from .cache_manager import CacheManager
from .constants import SolutionStage
from .models import SolutionCache

__all__ = [
    "CacheManager",
    "SolutionCache",
    "SolutionStage",
]
