#!/usr/bin/env python3
"""Generate a synthetic check-in TSV plus its root-category map."""

import argparse
import json
from pathlib import Path

from roleminer import testkit


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--users", type=int, default=200)
    ap.add_argument("--rows-per-user", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out-dir", default="demo_data")
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tsv = out / "checkins.tsv"
    tsv.write_text(testkit.gen_checkin_tsv(args.users, args.rows_per_user, seed=args.seed))
    roots = out / "roots.json"
    roots.write_text(json.dumps(testkit.synthetic_root_map(), indent=2) + "\n")
    print(f"wrote {tsv} ({args.users * args.rows_per_user} rows) and {roots}")


if __name__ == "__main__":
    main()
