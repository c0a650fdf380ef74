"""Input readers, output writers and the stage cache"""

from .cache import StageCache, content_key, file_digest

__all__ = ["StageCache", "content_key", "file_digest"]
