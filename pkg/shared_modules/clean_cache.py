"""
Clear cached target networks (cache_data/targets/*.blob) so the next
trained-target emulation sweep retrains from scratch.
"""

import argparse
from pathlib import Path
from typing import List

from shared_modules.config import CACHE_DIR


def _subdirs_deepest_first(root: Path) -> List[Path]:
    return sorted((d for d in root.rglob("*") if d.is_dir()), key=lambda d: len(d.parts), reverse=True)


def clean_cache(cache_dir: str, pattern: str = "*.blob", dry_run: bool = False) -> int:
    """Delete checkpoint blobs matching `pattern`, then empty folders. 0 = clean, 1 = leftovers."""
    root = Path(cache_dir)
    if not root.exists():
        print(f"[clean_cache] Nothing to do (missing): {root}")
        return 0

    blobs = sorted(p for p in root.rglob(pattern) if p.is_file())
    if dry_run:
        for p in blobs:
            print(f"[clean_cache] would delete {p}")
        return 0

    locked: List[Path] = []
    for p in blobs:
        try:
            p.unlink()
        except OSError:
            locked.append(p)
    for d in _subdirs_deepest_first(root):
        if not any(d.iterdir()):
            d.rmdir()

    if locked:
        print(f"[clean_cache] {len(locked)} file(s) could not be deleted:")
        for p in locked:
            print(f" - {p}")
        return 1
    print(f"[clean_cache] Removed {len(blobs)} checkpoint(s) from {root}")
    return 0


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description="Delete cached target-network checkpoints")
    ap.add_argument("--cache-dir", default=CACHE_DIR, help=f"Cache directory to clear (default: {CACHE_DIR})")
    ap.add_argument("--pattern", default="*.blob", help="Glob of files to delete (default: *.blob)")
    ap.add_argument("--dry-run", action="store_true", help="List matching files without deleting")
    args = ap.parse_args()
    raise SystemExit(clean_cache(args.cache_dir, args.pattern, args.dry_run))
