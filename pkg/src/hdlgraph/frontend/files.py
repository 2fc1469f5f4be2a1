from __future__ import annotations

import os
from pathlib import Path


def list_repository_files(root: str | os.PathLike[str]) -> list[str]:
    """All ``.v`` files under ``root`` as POSIX relative paths, sorted.

    Ordering compares the relative path strings, so it does not depend on
    the filesystem's directory enumeration order.
    """
    root_path = Path(root)
    if not root_path.is_dir():
        raise NotADirectoryError(f"not a directory: {root_path}")
    found: list[str] = []

    def _raise(err: OSError) -> None:
        raise err

    for dirpath, _dirnames, filenames in os.walk(root_path, onerror=_raise):
        for name in filenames:
            if name.endswith(".v"):
                rel = Path(dirpath, name).relative_to(root_path)
                found.append(rel.as_posix())
    return sorted(found)
