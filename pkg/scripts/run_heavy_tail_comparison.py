#!/usr/bin/env python3
"""Compare the re-weighted sampler against the HAT baseline on a two-mode
heavy-tailed Student-t mixture over 5 replica seeds.

Usage: python scripts/run_heavy_tail_comparison.py [--out DIR]
"""

import argparse
import sys
from pathlib import Path

from realps.cli import cmd_compare, cmd_train, load_config

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(ROOT / "configs" / "heavy_tail_t.json"))
    ap.add_argument("--out", default=None)
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()

    cfg = load_config(args.config, out_dir=args.out, seed=args.seed)
    print(f"training re_alps weights -> {cfg.out_dir}/scheme.json")
    cmd_train(cfg)
    print("running paired comparison ...")
    out = cmd_compare(cfg)
    print(f"wrote {out}:")
    print(out.read_text())
    return 0


if __name__ == "__main__":
    sys.exit(main())
