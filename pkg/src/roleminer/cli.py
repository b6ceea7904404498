"""Pipeline CLI: ingest -> featurize -> elbow/cluster -> stabilize -> report.

Every command writes a ``manifest_<command>.json`` next to its outputs with
the config snapshot, input digests, seed, and timings. With a fixed ``--seed``
and identical inputs, all non-manifest outputs are byte-identical between
runs; manifests alone carry wall-clock data.

Exit codes: 0 success, 1 data error (bad rows or schema), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from time import perf_counter

import numpy as np

from . import __version__, features, ingest, kmeans, quality, stabilize
from .manifest import RunManifest
from .rng import STREAM_CLUSTER, STREAM_STABILIZE, derive_seed


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"input file not found: {p}")
    return p


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_features(path: Path):
    try:
        users, labels, X = features.read_feature_csv(path)
    except features.FeatureError as exc:
        raise DataError(str(exc)) from exc
    if not users:
        raise DataError(f"{path}: no user rows")
    return users, labels, X


def _write_silhouette(breakdown, out: Path, stem: str) -> list[Path]:
    csv_path = out / f"{stem}.csv"
    quality.write_silhouette_csv(breakdown, csv_path)
    json_path = out / f"{stem}.json"
    _write_json(
        {"average": breakdown.average, "users": len(breakdown.per_user)}, json_path
    )
    return [csv_path, json_path]


def _partition_from_model(users, X, assignments, k):
    roles = [f"R{j:02d}" for j in range(k)]
    members = {r: set() for r in roles}
    for u, j in zip(users, assignments):
        members[roles[int(j)]].add(u)
    vectors = {u: X[i] for i, u in enumerate(users)}
    return quality.Partition(roles=roles, members=members, vectors=vectors)


# ---------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    src = _require_file(args.input)
    out = _out_dir(args)
    manifest = RunManifest("ingest", {"strict": args.strict, "input": str(src)})
    manifest.add_input(src)
    t0 = perf_counter()
    with open(src, encoding="utf-8") as fh:
        try:
            result = ingest.parse_checkins(fh, strict=args.strict)
        except ingest.IngestError as exc:
            raise DataError(str(exc)) from exc
    manifest.timings["parse_s"] = perf_counter() - t0

    ndjson = out / "checkins.ndjson"
    with open(ndjson, "w") as fh:
        for c in result.checkins:
            fh.write(json.dumps(ingest.checkin_to_json(c), sort_keys=True) + "\n")
    stats_path = out / "ingest_stats.json"
    _write_json(
        {
            "total_rows": result.stats.total_rows,
            "accepted": result.stats.accepted,
            "rejected": result.stats.rejected,
            "user_count": result.stats.user_count,
            "manifest": "manifest_ingest.json",
        },
        stats_path,
    )
    manifest.add_output(ndjson)
    manifest.add_output(stats_path)
    manifest.write(out / "manifest_ingest.json")
    print(
        f"ingest: {result.stats.accepted} accepted, {result.stats.rejected} "
        f"rejected, {result.stats.user_count} users"
    )
    return 0


def _read_ndjson_checkins(path: Path):
    checkins = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                checkins.append(ingest.checkin_from_json(json.loads(line)))
            except (KeyError, ValueError) as exc:
                raise DataError(f"{path}:{line_no}: bad check-in record: {exc}") from exc
    return checkins


def cmd_featurize(args) -> int:
    checkins_path = _require_file(args.checkins)
    roots_path = _require_file(args.roots)
    out = _out_dir(args)
    mode = {"none": "none", "l1": "l1_global"}[args.normalize]
    manifest = RunManifest(
        "featurize", {"normalize": mode, "checkins": str(checkins_path), "roots": str(roots_path)}
    )
    manifest.add_input(checkins_path)
    manifest.add_input(roots_path)

    checkins = _read_ndjson_checkins(checkins_path)
    labels = ingest.DEFAULT_ROOT_LABELS
    if args.root_labels is not None:
        labels_path = _require_file(args.root_labels)
        labels = json.loads(labels_path.read_text())
        if not isinstance(labels, list) or not all(isinstance(x, str) for x in labels):
            raise DataError(f"{labels_path}: expected a JSON array of label strings")
        manifest.add_input(labels_path)
    with open(roots_path) as fh:
        try:
            root_map = ingest.load_root_category_map(fh, roots=labels)
        except ingest.IngestError as exc:
            raise DataError(str(exc)) from exc
    t0 = perf_counter()
    homes = ingest.infer_homes(checkins)
    fs = features.build_ufs(
        checkins,
        contexts=[features.time_axis(), features.distance_axis()],
        views=[features.root_view(root_map.roots)],
        root_map=root_map,
        homes=homes,
    )
    manifest.timings["build_s"] = perf_counter() - t0
    if not fs.matrices:
        raise DataError(f"{checkins_path}: no resolvable check-ins")

    for pair in fs.pairs:
        path = out / f"features_{pair[0]}-{pair[1]}.csv"
        features.write_feature_csv(fs, pair, path, mode)
        manifest.add_output(path)
    meta_path = out / "features_meta.json"
    features.write_feature_meta(fs, meta_path, mode)
    manifest.add_output(meta_path)
    manifest.write(out / "manifest_featurize.json")
    print(f"featurize: {len(fs.matrices)} users, {len(fs.pairs)} pairs, "
          f"{fs.skipped_events} events skipped")
    return 0


def cmd_elbow(args) -> int:
    feat_path = _require_file(args.features)
    out = _out_dir(args)
    users, _labels, X = _load_features(feat_path)
    if args.k_min < 1 or args.k_max > len(users) or args.k_min + 2 > args.k_max:
        raise UsageError(
            f"elbow needs 1 <= k-min <= k-max-2 <= {len(users) - 2}, "
            f"got {args.k_min}..{args.k_max}"
        )
    manifest = RunManifest(
        "elbow",
        {"k_min": args.k_min, "k_max": args.k_max, "repeats": args.repeats},
        seed=args.seed,
    )
    manifest.add_input(feat_path)
    t0 = perf_counter()
    curve = kmeans.elbow_curve(
        X, range(args.k_min, args.k_max + 1), repeats=args.repeats, base_seed=args.seed
    )
    chosen = kmeans.pick_elbow(curve)
    manifest.timings["elbow_s"] = perf_counter() - t0

    csv_path = out / "elbow.csv"
    with open(csv_path, "w") as fh:
        fh.write("k,rmse\n")
        for k, v in curve.points:
            fh.write(f"{k},{v!r}\n")
    _write_json(
        {"chosen_k": chosen, "repeats": curve.repeats, "seed": args.seed,
         "manifest": "manifest_elbow.json"},
        out / "elbow.json",
    )
    manifest.add_output(csv_path)
    manifest.add_output(out / "elbow.json")
    if args.svg:
        svg_path = out / "elbow.svg"
        _plot_elbow(curve, chosen, svg_path)
        manifest.add_output(svg_path)
    manifest.write(out / "manifest_elbow.json")
    print(f"elbow: chose k={chosen}")
    return 0


def cmd_cluster(args) -> int:
    feat_path = _require_file(args.features)
    out = _out_dir(args)
    users, _labels, X = _load_features(feat_path)
    if args.k is None:
        raise UsageError("cluster requires --k (run elbow to pick one)")
    if args.k < 1 or args.k > len(users):
        raise UsageError(f"--k must be in [1, {len(users)}], got {args.k}")
    manifest = RunManifest("cluster", {"k": args.k}, seed=args.seed)
    manifest.add_input(feat_path)
    t0 = perf_counter()
    try:
        model = kmeans.fit(X, args.k, seed=args.seed)
    except kmeans.KMeansError as exc:
        raise DataError(f"{feat_path}: {exc}") from exc
    manifest.timings["fit_s"] = perf_counter() - t0

    cluster_path = out / "cluster.json"
    _write_json(
        {
            "k": model.k,
            "seed": model.seed,
            "rmse": model.rmse,
            "iterations": model.iterations,
            "centroids": [[float(x) for x in c] for c in model.centroids],
            "assignments": {u: int(j) for u, j in zip(users, model.assignments)},
            "manifest": "manifest_cluster.json",
        },
        cluster_path,
    )
    manifest.add_output(cluster_path)
    if model.k >= 2:
        part = _partition_from_model(users, X, model.assignments, model.k)
        breakdown = quality.silhouette_breakdown(part)
        for p in _write_silhouette(breakdown, out, "silhouette"):
            manifest.add_output(p)
        print(f"cluster: k={model.k} rmse={model.rmse:.6f} "
              f"avg_se={breakdown.average:.6f}")
    else:
        print(f"cluster: k={model.k} rmse={model.rmse:.6f}")
    manifest.write(out / "manifest_cluster.json")
    return 0


def _load_cluster_json(path: Path) -> dict:
    try:
        doc = json.loads(path.read_text())
    except ValueError as exc:
        raise DataError(f"{path}: not valid JSON: {exc}") from exc
    for field in ("k", "centroids", "assignments"):
        if field not in doc:
            raise DataError(f"{path}: missing field {field!r}")
    return doc


def _stabilize_config(args, n_users: int) -> stabilize.StabilizeConfig:
    cfg = stabilize.StabilizeConfig(
        alpha=args.alpha,
        beta=args.beta,
        gamma=args.gamma,
        delta=args.delta_frac * n_users,
        max_rounds=args.max_rounds,
        order=args.order,
        seed=args.seed,
        reference=args.reference,
    )
    try:
        cfg.validate()
    except stabilize.StabilizeError as exc:
        raise UsageError(str(exc)) from exc
    return cfg


def cmd_stabilize(args) -> int:
    feat_path = _require_file(args.features)
    cluster_path = _require_file(args.cluster)
    out = _out_dir(args)
    users, _labels, X = _load_features(feat_path)
    doc = _load_cluster_json(cluster_path)
    missing = [u for u in users if u not in doc["assignments"]]
    if missing:
        raise DataError(
            f"{cluster_path}: field 'assignments' lacks users {missing[:3]}..."
        )
    k = int(doc["k"])
    part = _partition_from_model(
        users, X, [doc["assignments"][u] for u in users], k
    )
    initial_centroids = {
        f"R{j:02d}": np.asarray(c, float) for j, c in enumerate(doc["centroids"])
    }
    cfg = _stabilize_config(args, len(users))
    manifest = RunManifest("stabilize", cfg.to_dict(), seed=args.seed)
    manifest.add_input(feat_path)
    manifest.add_input(cluster_path)
    t0 = perf_counter()
    report = stabilize.stabilize(part, cfg, initial_centroids=initial_centroids)
    manifest.timings["stabilize_s"] = perf_counter() - t0
    for t in report.rounds:
        manifest.timings[f"round_{t.round}_s"] = t.duration_s

    report_path = out / "stabilize_report.json"
    stabilize.write_report_json(report, report_path)
    state_path = out / "state.csv"
    stabilize.write_state_csv(report.state, state_path)
    manifest.add_output(report_path)
    manifest.add_output(state_path)
    try:
        breakdown = quality.silhouette_breakdown(report.final)
        for p in _write_silhouette(breakdown, out, "silhouette_stabilized"):
            manifest.add_output(p)
    except quality.QualityError:
        pass  # degenerate final partition: breakdown undefined
    manifest.write(out / "manifest_stabilize.json")
    last = report.rounds[-1]
    se = "NA" if last.avg_silhouette is None else f"{last.avg_silhouette:.6f}"
    print(
        f"stabilize: converged={report.converged} rounds={report.rounds_used} "
        f"avg_se={se} randomness={last.randomness}"
    )
    return 0


def cmd_report(args) -> int:
    feat_path = _require_file(args.features)
    out = _out_dir(args)
    users, _labels, X = _load_features(feat_path)
    n = len(users)
    if args.runs < 1:
        raise UsageError(f"--runs must be >= 1, got {args.runs}")
    k = args.k
    if k is None:
        curve = kmeans.elbow_curve(
            X, range(args.k_min, args.k_max + 1), repeats=args.repeats,
            base_seed=args.seed,
        )
        k = kmeans.pick_elbow(curve)
    if k < 2 or k > n:
        raise UsageError(f"need 2 <= k <= {n}, got {k}")

    manifest = RunManifest(
        "report", {"k": k, "runs": args.runs, "gamma": args.gamma,
                   "delta_frac": args.delta_frac, "normalize": args.normalize},
        seed=args.seed,
    )
    manifest.add_input(feat_path)

    before_parts, after_parts = [], []
    before_se, after_se = [], []
    t0 = perf_counter()
    for r in range(args.runs):
        run_seed = derive_seed(args.seed, STREAM_CLUSTER, r)
        model = kmeans.fit(X, k, seed=run_seed)
        part = _partition_from_model(users, X, model.assignments, k)
        before_parts.append(part)
        before_se.append(quality.avg_silhouette(part))
        cfg = stabilize.StabilizeConfig(
            alpha=args.alpha, beta=args.beta, gamma=args.gamma,
            delta=args.delta_frac * n, max_rounds=args.max_rounds,
            order=args.order, seed=derive_seed(args.seed, STREAM_STABILIZE, r),
            reference=args.reference,
        )
        rep = stabilize.stabilize(
            part, cfg,
            initial_centroids={f"R{j:02d}": model.centroids[j] for j in range(k)},
        )
        after_parts.append(rep.final)
        after_se.append(rep.rounds[-1].avg_silhouette)
    manifest.timings["runs_s"] = perf_counter() - t0

    header, row = [], []
    for r in range(args.runs):
        header += [f"SC_K{r + 1}", f"SC_K{r + 1}_E"]
        after = after_se[r]
        row += [repr(before_se[r]), "NA" if after is None else repr(after)]
    pair_rand = []
    for i in range(args.runs):
        for j in range(i + 1, args.runs):
            rb = quality.randomness(
                before_parts[i], quality.align_partition(before_parts[i], before_parts[j])
            )
            ra = quality.randomness(
                after_parts[i], quality.align_partition(after_parts[i], after_parts[j])
            )
            header += [f"Rand_k{i + 1}k{j + 1}", f"Rand_k{i + 1}k{j + 1}_E"]
            row += [str(rb), str(ra)]
            pair_rand.append((i, j, rb, ra))
            detail = quality.randomness_detail(
                after_parts[i], quality.align_partition(after_parts[i], after_parts[j])
            )
            rand_path = out / f"rand_k{i + 1}k{j + 1}.json"
            quality.write_randomness_json(detail, rand_path)
            manifest.add_output(rand_path)

    csv_path = out / "report.csv"
    with open(csv_path, "w") as fh:
        fh.write(",".join(header) + "\n")
        fh.write(",".join(row) + "\n")
    manifest.add_output(csv_path)
    svg_path = out / "report.svg"
    _plot_report(before_se, after_se, pair_rand, svg_path)
    manifest.add_output(svg_path)
    manifest.write(out / "manifest_report.json")
    print(f"report: k={k}, {args.runs} runs -> {csv_path}")
    return 0


# ---------------------------------------------------------------------------


def _mpl():
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "roleminer"
    import matplotlib.pyplot as plt

    return plt


def _plot_elbow(curve, chosen: int, path) -> None:
    plt = _mpl()
    ks = [k for k, _ in curve.points]
    vs = [v for _, v in curve.points]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ks, vs, marker="o")
    ax.axvline(chosen, color="tab:red", linestyle="--", label=f"elbow k={chosen}")
    ax.set_xlabel("k")
    ax.set_ylabel("within-cluster RMSE (min over repeats)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _plot_report(before_se, after_se, pair_rand, path) -> None:
    plt = _mpl()
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    runs = np.arange(len(before_se))
    width = 0.38
    ax1.bar(runs - width / 2, before_se, width, label="k-means")
    ax1.bar(
        runs + width / 2,
        [0.0 if a is None else a for a in after_se],
        width,
        label="stabilized",
    )
    ax1.set_xticks(runs, [f"run {r + 1}" for r in runs])
    ax1.set_ylabel("average silhouette")
    ax1.legend()
    if pair_rand:
        pairs = np.arange(len(pair_rand))
        ax2.bar(pairs - width / 2, [p[2] for p in pair_rand], width, label="k-means")
        ax2.bar(pairs + width / 2, [p[3] for p in pair_rand], width, label="stabilized")
        ax2.set_xticks(pairs, [f"k{i + 1}k{j + 1}" for i, j, _, _ in pair_rand])
        ax2.set_ylabel("pairwise randomness")
        ax2.legend()
    else:
        ax2.set_axis_off()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# ---------------------------------------------------------------------------


def _add_stabilize_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gamma", type=float, default=0.7,
                   help="silhouette convergence threshold (default 0.7)")
    p.add_argument("--delta-frac", type=float, default=0.05,
                   help="randomness threshold as a fraction of |U| (default 1/20)")
    p.add_argument("--alpha", type=float, default=1.0,
                   help="initial state membership value (default 1.0)")
    p.add_argument("--beta", type=float, default=0.5,
                   help="state update weight in [0,1] (default 0.5)")
    p.add_argument("--max-rounds", type=int, default=500)
    p.add_argument("--order", choices=stabilize.ORDER_POLICIES, default="sorted",
                   help="user processing order within a round")
    p.add_argument("--reference", choices=stabilize.REFERENCE_POLICIES,
                   default="frozen",
                   help="reward reference: previous round snapshot or in-round lists")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roleminer",
        description="Check-in mining: user features, role discovery, stabilization.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse a TSV check-in log")
    p.add_argument("--input", required=True, help="TSV check-in file")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--strict", action="store_true",
                   help="fail on the first malformed row instead of skipping")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("featurize", help="build per-user context-view matrices")
    p.add_argument("--checkins", required=True, help="canonical NDJSON from ingest")
    p.add_argument("--roots", required=True, help="category-to-root JSON map")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--normalize", choices=("none", "l1"), default="l1")
    p.add_argument("--root-labels", default=None,
                   help="JSON array overriding the default 9 root labels")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("elbow", help="RMSE elbow curve and automatic k")
    p.add_argument("--features", required=True, help="feature CSV")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--k-min", type=int, default=2)
    p.add_argument("--k-max", type=int, default=15)
    p.add_argument("--repeats", type=int, default=kmeans.DEFAULT_REPEATS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--svg", action="store_true", help="also write a line chart")
    p.set_defaults(func=cmd_elbow)

    p = sub.add_parser("cluster", help="one seeded k-means++ run")
    p.add_argument("--features", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("stabilize", help="stabilize a cluster run into roles")
    p.add_argument("--features", required=True)
    p.add_argument("--cluster", required=True, help="cluster.json from cluster")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_stabilize_flags(p)
    p.set_defaults(func=cmd_stabilize)

    p = sub.add_parser("report", help="before/after comparison over N runs")
    p.add_argument("--features", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--k", type=int, default=None,
                   help="cluster count; omitted -> elbow selection")
    p.add_argument("--k-min", type=int, default=2)
    p.add_argument("--k-max", type=int, default=15)
    p.add_argument("--repeats", type=int, default=kmeans.DEFAULT_REPEATS)
    p.add_argument("--runs", type=int, default=3,
                   help="independent cluster runs to compare (default 3)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--normalize", choices=("none", "l1"), default="l1")
    _add_stabilize_flags(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ingest.IngestError, features.FeatureError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
