"""Run every config in configs/ into its own output directory.

    python scripts/run_suite.py --out runs/a
    python scripts/run_suite.py --out runs/b --check runs/a

``--check`` compares the new outputs byte for byte against an earlier run.
"""

import argparse
import filecmp
import sys
from pathlib import Path

from anisotm.cli import main as cli_main

ROOT = Path(__file__).resolve().parents[1]


def run_suite(out_root: Path, seed: int, jobs: int, fmt: str) -> dict[str, int]:
    codes = {}
    for cfg in sorted((ROOT / "configs").glob("*.json")):
        codes[cfg.stem] = cli_main(["--config", str(cfg), "--out", str(out_root / cfg.stem),
                                    "--seed", str(seed), "--jobs", str(jobs), "--format", fmt])
    return codes


def differing_files(a: Path, b: Path) -> list[str]:
    out = []
    for path in sorted(a.rglob("*")):
        if path.is_file():
            other = b / path.relative_to(a)
            if not other.exists() or not filecmp.cmp(path, other, shallow=False):
                out.append(str(path.relative_to(a)))
    return out


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=ROOT / "runs" / "latest")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--format", choices=("json", "csv"), default="json")
    ap.add_argument("--check", type=Path, help="earlier run to compare against")
    args = ap.parse_args()

    codes = run_suite(args.out, args.seed, args.jobs, args.format)
    for name, code in codes.items():
        print(f"{name:24s} exit {code}", file=sys.stderr)
    if args.check is None:
        return max(codes.values())
    diff = differing_files(args.out, args.check)
    print(f"determinism: {'identical' if not diff else 'differs in ' + ', '.join(diff)}", file=sys.stderr)
    return 1 if diff else max(codes.values())


if __name__ == "__main__":
    raise SystemExit(main())
