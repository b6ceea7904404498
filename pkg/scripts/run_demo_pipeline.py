#!/usr/bin/env python3
"""Run the whole pipeline on generated demo data: ingest through report."""

import argparse
import json
import sys
from pathlib import Path

from roleminer import testkit
from roleminer.cli import main as cli


def run(argv: list[str]) -> None:
    print("+ roleminer", " ".join(argv))
    rc = cli(argv)
    if rc != 0:
        sys.exit(rc)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--users", type=int, default=150)
    ap.add_argument("--rows-per-user", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--runs", type=int, default=3)
    ap.add_argument("--out-dir", default="demo_run")
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tsv = out / "checkins.tsv"
    tsv.write_text(testkit.gen_checkin_tsv(args.users, args.rows_per_user, seed=args.seed))
    roots = out / "roots.json"
    roots.write_text(json.dumps(testkit.synthetic_root_map()) + "\n")

    run(["ingest", "--input", str(tsv), "--out-dir", str(out)])
    run([
        "featurize", "--checkins", str(out / "checkins.ndjson"),
        "--roots", str(roots), "--out-dir", str(out),
    ])
    feats = out / "features_time-root.csv"
    run([
        "elbow", "--features", str(feats), "--k-min", "2", "--k-max", "12",
        "--seed", str(args.seed), "--svg", "--out-dir", str(out),
    ])
    chosen = json.loads((out / "elbow.json").read_text())["chosen_k"]
    run([
        "cluster", "--features", str(feats), "--k", str(chosen),
        "--seed", str(args.seed), "--out-dir", str(out),
    ])
    run([
        "stabilize", "--features", str(feats),
        "--cluster", str(out / "cluster.json"),
        "--seed", str(args.seed), "--max-rounds", "60", "--out-dir", str(out),
    ])
    run([
        "report", "--features", str(feats), "--k", str(chosen),
        "--runs", str(args.runs), "--seed", str(args.seed),
        "--max-rounds", "60", "--out-dir", str(out),
    ])
    print(f"\nall outputs in {out}/")


if __name__ == "__main__":
    main()
