"""
Stage Cache
Content-addressed on-disk cache of stage outputs with atomic commits
"""

import json
import logging
import os
import shutil
import tempfile
from hashlib import sha256
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, Optional

logger = logging.getLogger(__name__)

COMPLETE_MARKER = "_complete.json"
_CHUNK = 1 << 20


def file_digest(path: Path) -> str:
    """sha256 of a file's bytes"""
    digest = sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(_CHUNK), b""):
            digest.update(block)
    return digest.hexdigest()


def canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), default=str)


def content_key(payload: Dict[str, Any]) -> str:
    """sha256 of the canonical JSON form of `payload`"""
    return sha256(canonical_json(payload).encode("utf-8")).hexdigest()


class StageCache:
    """
    One directory per (stage, key) under `root`

    Layout: <root>/<stage>-<key16>/ holding the stage's files plus a
    completion marker. Entries are built in a temporary sibling directory
    and renamed into place, so readers never see a partial entry.
    """

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def entry(self, stage: str, key: str) -> Path:
        return self.root / f"{stage}-{key[:16]}"

    def has(self, stage: str, key: str) -> bool:
        marker = self.entry(stage, key) / COMPLETE_MARKER
        if not marker.exists():
            return False
        try:
            return json.loads(marker.read_text(encoding="utf-8")).get("key") == key
        except (OSError, ValueError):
            return False

    def commit(self, stage: str, key: str, build: Callable[[Path], Iterable[str]]) -> Path:
        """
        Run `build(tmpdir)` and atomically publish the directory it fills

        Args:
            stage: Stage name
            key: Full cache key
            build: Writes the stage files into the given directory and
                returns their names

        Returns:
            Path of the published entry
        """
        final = self.entry(stage, key)
        staging = Path(tempfile.mkdtemp(prefix=f".{stage}-", dir=self.root))
        try:
            names = sorted(build(staging))
            marker = {"stage": stage, "key": key, "files": names}
            (staging / COMPLETE_MARKER).write_text(canonical_json(marker), encoding="utf-8")
            if final.exists():
                shutil.rmtree(final)
            os.replace(staging, final)
        except BaseException:
            shutil.rmtree(staging, ignore_errors=True)
            raise
        logger.info(f"Cached {stage} outputs at {final.name}")
        return final

    def files(self, stage: str, key: str) -> Optional[list]:
        marker = self.entry(stage, key) / COMPLETE_MARKER
        if not marker.exists():
            return None
        return json.loads(marker.read_text(encoding="utf-8")).get("files", [])
