"""
Cache manager for per-window-size lookup tables.

Detection visits the same handful of window sizes for every image, so LUTs
are memoised in the configured Django cache keyed by pool and size.
"""

from __future__ import annotations

import logging
from typing import Optional

from django.core.cache import cache

from .models import FeaturePool, ScaledFeatureLUT
from .services import build_lut_for_size

logger = logging.getLogger(__name__)


class LutCacheManager:
    """
    Cache for ScaledFeatureLUT instances.

    Compact pools (the features a trained model uses) are small enough to
    round-trip through any cache backend; full pools are better built once
    and held by the caller.
    """

    CACHE_TIMEOUT = 3600  # 1 hour

    @staticmethod
    def _key(pool: FeaturePool, window_size: int) -> str:
        return f"lut_{pool.cache_key}_{window_size}"

    @classmethod
    def get_lut(cls, pool: FeaturePool, window_size: int) -> ScaledFeatureLUT:
        """
        Get the LUT for a window size, building it on a miss.

        Args:
            pool: Pool whose features the LUT rescales
            window_size: Window edge in pixels (>= pool.base)

        Returns:
            ScaledFeatureLUT for ``window_size``
        """
        cache_key = cls._key(pool, window_size)
        lut: Optional[ScaledFeatureLUT] = cache.get(cache_key)
        if lut is None:
            lut = build_lut_for_size(pool, window_size)
            cache.set(cache_key, lut, cls.CACHE_TIMEOUT)
            logger.debug(f"Built LUT for size {window_size} ({len(pool)} features)")
        return lut

    @classmethod
    def invalidate(cls, pool: FeaturePool, window_size: int) -> None:
        cache.delete(cls._key(pool, window_size))
