#!/usr/bin/env python3
"""Before/after study of the stabilizer on synthetic blob datasets.

For each dataset seed: run k-means N times, stabilize each run, then compare
average silhouette per run and aligned pairwise churn between runs. The
count-like regime (clipped blobs, proportion-normalized, cluster count below
the latent clump count) is where independent k-means runs disagree most and
the stabilizer has room to both lift quality and align the partitions.
"""

import argparse
import itertools

import numpy as np

from roleminer import kmeans, quality, stabilize, testkit


def evaluate(args, ds_seed: int):
    spec = testkit.SyntheticSpec(
        k_true=args.k_true,
        users_per_cluster=args.users_per_cluster,
        dims=args.dims,
        separation=args.separation,
        seed=ds_seed,
        clip_nonnegative=args.clip,
    )
    raw, _ = testkit.gen_clusters(spec)
    if args.normalize:
        vecs = {u: (v / v.sum() if v.sum() > 0 else v) for u, v in raw.items()}
    else:
        vecs = raw
    users = sorted(vecs)
    X = np.stack([vecs[u] for u in users])
    n = len(users)
    roles = [f"R{j:02d}" for j in range(args.k)]

    before_parts, after_parts, before_se, after_se = [], [], [], []
    for r in range(args.runs):
        model = kmeans.fit(X, args.k, seed=1000 * ds_seed + r)
        members = {roles[j]: set() for j in range(args.k)}
        for u, j in zip(users, model.assignments):
            members[roles[j]].add(u)
        part = quality.Partition(roles=list(roles), members=members, vectors=vecs)
        before_parts.append(part)
        before_se.append(quality.avg_silhouette(part))
        cfg = stabilize.StabilizeConfig(
            gamma=args.gamma, delta=n / 20, max_rounds=args.max_rounds, seed=r
        )
        rep = stabilize.stabilize(
            part, cfg,
            initial_centroids={roles[j]: model.centroids[j] for j in range(args.k)},
        )
        after_parts.append(rep.final)
        after_se.append(rep.rounds[-1].avg_silhouette)

    rand_before, rand_after = [], []
    for i, j in itertools.combinations(range(args.runs), 2):
        rand_before.append(quality.randomness(
            before_parts[i], quality.align_partition(before_parts[i], before_parts[j])
        ))
        rand_after.append(quality.randomness(
            after_parts[i], quality.align_partition(after_parts[i], after_parts[j])
        ))
    return before_se, after_se, rand_before, rand_after


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dims", type=int, default=6)
    ap.add_argument("--k-true", type=int, default=12)
    ap.add_argument("--users-per-cluster", type=int, default=25)
    ap.add_argument("--separation", type=float, default=3.0)
    ap.add_argument("--k", type=int, default=5)
    ap.add_argument("--runs", type=int, default=3)
    ap.add_argument("--gamma", type=float, default=0.7)
    ap.add_argument("--max-rounds", type=int, default=60)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--no-clip", dest="clip", action="store_false")
    ap.add_argument("--no-normalize", dest="normalize", action="store_false")
    args = ap.parse_args()

    print(f"dims={args.dims} k_true={args.k_true} upc={args.users_per_cluster} "
          f"sep={args.separation} k={args.k} runs={args.runs}")
    header = "".join(
        [f"  SC_K{r + 1}  SC_K{r + 1}_E" for r in range(args.runs)]
    )
    print(f"{'seed':>4}{header}   rand(mean)  rand_E(mean)")
    all_b, all_a, all_rb, all_ra = [], [], [], []
    for ds_seed in args.seeds:
        b, a, rb, ra = evaluate(args, ds_seed)
        cells = "".join(f"  {x:+.3f}  {y:+.3f}" for x, y in zip(b, a))
        print(f"{ds_seed:>4}{cells}   {np.mean(rb):10.1f}  {np.mean(ra):10.1f}")
        all_b += b; all_a += a; all_rb += rb; all_ra += ra
    imp = np.mean(all_a) - np.mean(all_b)
    ratio = np.mean(all_ra) / max(np.mean(all_rb), 1e-9)
    print(f"\nmean silhouette {np.mean(all_b):+.3f} -> {np.mean(all_a):+.3f} "
          f"(improvement {imp:+.3f}); churn ratio after/before = {ratio:.2f}")


if __name__ == "__main__":
    main()
