"""Command-line driver: synth -> featurize -> label -> run -> report.

Every stage writes a ``meta.json`` next to its outputs recording digests of
the inputs it consumed; downstream stages refuse inputs whose digests no
longer match. Exit codes: 0 success, 1 usage, 2 data error, 3 internal.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from moodid import __version__
from moodid._seeding import config_hash, file_digest
from moodid.featurize import GPS_EPS, GPS_MIN_PTS, EncodingError, featurize, load_matrix, save_matrix
from moodid.harness import (
    ExperimentConfig,
    NoEvaluableWindows,
    Regime,
    load_result,
    run_experiment,
    saliency_frequencies,
    save_result,
)
from moodid.ingest import DatasetError, DatasetManifest, load_dataset, write_dataset
from moodid.learn import ExtraTreesParams, ForestParams
from moodid.metrics import ema_correlations
from moodid.mood import (
    DatasetVariant,
    average_hourly,
    build_variant,
    coverage_report,
    load_labels,
    save_labels,
)
from moodid.synthgen import SCENARIOS, ProfileError, generate, scenario
from moodid.types import EmaResponse, HourKey, Mood

log = logging.getLogger("moodid")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class StaleInputError(DatasetError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_meta(directory: Path, stage: str) -> dict:
    path = directory / "meta.json"
    if not path.exists():
        raise DatasetError(f"{directory} has no meta.json; was it produced by `moodid {stage}`?")
    meta = json.loads(path.read_text(encoding="utf-8"))
    if meta.get("stage") != stage:
        raise DatasetError(f"{path} was written by stage {meta.get('stage')!r}, expected {stage!r}")
    return meta


def dataset_digest(manifest_path: Path, manifest: DatasetManifest) -> dict:
    return {
        "manifest": file_digest(manifest_path),
        "files": {kind: file_digest(manifest.path(kind)) for kind in sorted(manifest.files)},
    }


# -- commands -----------------------------------------------------------------


def cmd_synth(args) -> int:
    profiles, days = scenario(args.scenario, args.days)
    out = generate(profiles, days, seed=args.seed)
    root = Path(args.output)
    manifest = DatasetManifest(out.window.start, out.window.end, out.subjects, root=root)
    write_dataset(out.all_events, manifest, root / "manifest.json")
    with open(root / "ground_truth.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("subject", "hour_index", "mood"))
        w.writerows((s, h, m.value) for s, h, m in out.truth)
    params = {"scenario": args.scenario, "days": days, "seed": args.seed, "subjects": len(profiles)}
    _write_json(root / "synth_meta.json", {"stage": "synth", "params": params, "config_hash": config_hash(params)})
    print(f"wrote {len(out.events)} events and {len(out.ema)} EMA responses for "
          f"{len(profiles)} subjects x {days} days to {root}")
    return EXIT_OK


def cmd_featurize(args) -> int:
    manifest_path = Path(args.manifest)
    manifest = DatasetManifest.load(manifest_path)
    events = load_dataset(manifest)
    telemetry = [e for e in events if not isinstance(e, EmaResponse)]
    if not telemetry:
        raise DatasetError("dataset contains no telemetry events")
    fm = featurize(telemetry, manifest.window, manifest.subjects, eps=args.eps, min_pts=args.min_pts)
    out = Path(args.output)
    files = save_matrix(fm, out)
    n_apps = sum(c.startswith("apps_") for c in fm.columns)
    n_gps = sum(c.startswith("gps_") for c in fm.columns)
    inputs = dataset_digest(manifest_path, manifest)
    params = {"eps": args.eps, "min_pts": args.min_pts}
    _write_json(out / "meta.json", {
        "stage": "featurize",
        "inputs": inputs,
        "params": params,
        "config_hash": config_hash({"inputs": inputs, "params": params}),
        "matrix_digest": fm.digest(),
        "files": files,
        "shape": list(fm.values.shape),
        "app_vocab_size": n_apps,
        "gps_vocab_size": n_gps,
    })
    print(f"feature matrix {fm.values.shape[0]} x {fm.values.shape[1]} "
          f"({n_apps} app tokens, {n_gps} gps tokens) -> {out}")
    return EXIT_OK


def cmd_label(args) -> int:
    manifest_path = Path(args.manifest)
    manifest = DatasetManifest.load(manifest_path)
    events = load_dataset(manifest)
    window = manifest.window
    keys = [HourKey(s, h) for h in range(window.grid_length) for s in sorted(manifest.subjects)]
    hourly = average_hourly((e for e in events if isinstance(e, EmaResponse)), window)
    variants = list(DatasetVariant) if args.variant == "all" else [DatasetVariant(args.variant)]
    out = Path(args.output)
    coverage = {}
    for v in variants:
        ema_map = build_variant(hourly, v, window)
        save_labels(out / f"labels_{v.value}.csv", v, ema_map, keys)
        rep = coverage_report(v, ema_map, keys)
        coverage[v.value] = {
            "labeled_count": rep.labeled_count,
            "total": rep.total,
            "fraction": rep.fraction,
            "mood_totals": rep.mood_totals(),
            "per_subject_counts": {str(s): c for s, c in sorted(rep.per_subject_counts.items())},
        }
        print(f"{v.value}: {rep.labeled_count}/{rep.total} samples with EMA ({rep.fraction:.1%}); "
              + ", ".join(f"{m}={n}" for m, n in rep.mood_totals().items()))
    inputs = dataset_digest(manifest_path, manifest)
    _write_json(out / "coverage.json", coverage)
    _write_json(out / "meta.json", {
        "stage": "label",
        "inputs": inputs,
        "variants": [v.value for v in variants],
        "config_hash": config_hash({"inputs": inputs, "variants": [v.value for v in variants]}),
        "files": {v.value: f"labels_{v.value}.csv" for v in variants},
        "digests": {v.value: file_digest(out / f"labels_{v.value}.csv") for v in variants},
    })
    return EXIT_OK


RUNSPEC_KEYS = {
    "features", "labels", "output", "deltas", "regimes", "moods", "variants",
    "stride", "forest", "selector", "selection_threshold",
}


def load_runspec(path: Path) -> dict:
    try:
        spec = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read run config {path}: {exc}") from exc
    unknown = set(spec) - RUNSPEC_KEYS
    if unknown:
        raise UsageError(f"unknown run config keys: {sorted(unknown)}")
    if "features" not in spec:
        raise UsageError("run config needs a 'features' directory")
    base = path.parent
    spec = dict(spec)
    for key in ("features", "labels", "output"):
        if spec.get(key) is not None:
            spec[key] = base / spec[key]
    spec.setdefault("deltas", [4])
    spec.setdefault("regimes", ["all"])
    spec.setdefault("moods", [m.value for m in Mood])
    spec.setdefault("variants", ["H", "D"])
    return spec


def expand_grid(spec: dict, seed: int) -> list[ExperimentConfig]:
    forest = ForestParams(**spec.get("forest", {}))
    selector = ExtraTreesParams(**spec.get("selector", {}))
    common = dict(
        master_seed=seed, stride=spec.get("stride", 1), forest=forest, selector=selector,
        selection_threshold=spec.get("selection_threshold", "mean"),
    )
    configs = []
    for delta in spec["deltas"]:
        for regime in spec["regimes"]:
            if Regime(regime) is Regime.ALL:
                configs.append(ExperimentConfig(delta=delta, **common))
                continue
            for variant in spec["variants"]:
                for mood in spec["moods"]:
                    configs.append(ExperimentConfig(
                        delta=delta, regime=regime, mood=mood, variant=variant, **common,
                    ))
    return configs


def cmd_run(args) -> int:
    spec = load_runspec(Path(args.config))
    try:
        configs = expand_grid(spec, args.seed)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid experiment grid: {exc}") from exc

    feat_dir = Path(spec["features"])
    feat_meta = _read_meta(feat_dir, "featurize")
    fm = load_matrix(feat_dir)
    if fm.digest() != feat_meta["matrix_digest"]:
        raise StaleInputError(f"{feat_dir}: feature files do not match meta.json (edited or stale)")
    inputs = {"features": feat_meta["config_hash"], "matrix": feat_meta["matrix_digest"]}

    labels_by_variant = {}
    needs_labels = any(c.regime is not Regime.ALL for c in configs)
    if needs_labels:
        if spec.get("labels") is None:
            raise UsageError("mood regimes need a 'labels' directory in the run config")
        lab_dir = Path(spec["labels"])
        lab_meta = _read_meta(lab_dir, "label")
        if lab_meta["inputs"] != feat_meta["inputs"]:
            raise StaleInputError("labels and features were built from different datasets; rerun the stale stage")
        for v in {c.variant for c in configs if c.variant is not None}:
            path = lab_dir / f"labels_{v.value}.csv"
            if not path.exists():
                raise DatasetError(f"missing label file {path}")
            if file_digest(path) != lab_meta.get("digests", {}).get(v.value):
                raise StaleInputError(f"{path} changed after `moodid label` wrote it")
            _, labels, _ = load_labels(path)
            if set(labels) != set(fm.rows):
                raise DatasetError(f"{path} rows do not align with the feature matrix")
            labels_by_variant[v] = labels
        inputs["labels"] = lab_meta["config_hash"]

    out = Path(spec.get("output") or args.output or "results")
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for cfg in configs:
        try:
            result = run_experiment(cfg, fm, labels_by_variant.get(cfg.variant), jobs=args.jobs)
        except NoEvaluableWindows as exc:
            log.warning("%s", exc)
            written.append({"name": cfg.name, "status": "no evaluable windows"})
            continue
        result.inputs = dict(inputs)
        paths = save_result(result, out)
        agg = result.aggregates()
        written.append({"name": cfg.name, "config_hash": result.hash, "aggregate": paths["aggregate"].name})
        print(f"{cfg.name}: mean F={agg['mean_f']:.4f} over {agg['n_windows']} windows "
              f"({agg['n_skipped']} skipped)")
    _write_json(out / "run_meta.json", {
        "stage": "run", "seed": args.seed, "inputs": inputs, "experiments": written,
    })
    return EXIT_OK



def _group_of(cfg: ExperimentConfig) -> str:
    return "default" if cfg.regime is Regime.ALL else f"{cfg.regime.value}_{cfg.mood.value}"


def cmd_report(args) -> int:
    res_dir = Path(args.results)
    paths = sorted(res_dir.glob("aggregate_*.json"))
    if not paths:
        raise DatasetError(f"no result files (aggregate_*.json) in {res_dir}")
    results = [load_result(p) for p in paths]
    out = Path(args.output) if args.output else res_dir / "report"
    out.mkdir(parents=True, exist_ok=True)

    rows = []
    for r in results:
        c = r.config
        rows.append({
            "name": c.name,
            "config_hash": r.hash,
            "regime": c.regime.value,
            "mood": c.mood.value if c.mood else "",
            "variant": c.variant.value if c.variant else "",
            "delta": c.delta,
            **r.aggregates(),
        })
    rows.sort(key=lambda d: (d["regime"], d["mood"], d["variant"], d["delta"]))
    with open(out / "fscores.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    _write_json(out / "aggregate.json", {"experiments": rows})

    groups: dict[str, list] = {}
    for r in results:
        groups.setdefault(_group_of(r.config), []).append(r)
    with open(out / "saliency.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("group", "rank", "feature", "frequency"))
        for name in sorted(groups):
            try:
                ranked = saliency_frequencies(groups[name], top_k=args.top_k)
            except ValueError:
                continue
            w.writerows((name, i + 1, f, repr(q)) for i, (f, q) in enumerate(ranked))

    if args.labels:
        lab_dir = Path(args.labels)
        raw_path, d_path = lab_dir / "labels_raw.csv", lab_dir / "labels_D.csv"
        if not (raw_path.exists() and d_path.exists()):
            raise DatasetError(f"{lab_dir} needs labels_raw.csv and labels_D.csv for correlations")
        _, _, raw = load_labels(raw_path)
        _, _, daily = load_labels(d_path)
        names, mat = ema_correlations(raw, daily)
        with open(out / "correlations.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["", *names])
            for name, row in zip(names, mat):
                w.writerow([name, *("" if np.isnan(x) else repr(float(x)) for x in row)])
    print(f"report for {len(results)} experiments -> {out}")
    return EXIT_OK


# -- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="moodid", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"moodid {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--scenario", required=True, help=f"one of: {', '.join(sorted(SCENARIOS))}")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--days", type=int, default=None)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_synth)

    f = sub.add_parser("featurize", help="build the hourly feature matrix")
    f.add_argument("--manifest", required=True)
    f.add_argument("-o", "--output", required=True)
    f.add_argument("--eps", type=float, default=GPS_EPS)
    f.add_argument("--min-pts", type=int, default=GPS_MIN_PTS)
    f.set_defaults(func=cmd_featurize)

    lab = sub.add_parser("label", help="compute mood labels for raw/H/D variants")
    lab.add_argument("--manifest", required=True)
    lab.add_argument("--variant", default="all", choices=["all", *(v.value for v in DatasetVariant)])
    lab.add_argument("-o", "--output", required=True)
    lab.set_defaults(func=cmd_label)

    r = sub.add_parser("run", help="run the sliding-window experiment grid")
    r.add_argument("--config", required=True, help="run config JSON")
    r.add_argument("--seed", type=int, required=True)
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("-o", "--output", default=None, help="used when the config has no 'output'")
    r.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="aggregate result files")
    rep.add_argument("results")
    rep.add_argument("--labels", default=None, help="label directory for EMA correlations")
    rep.add_argument("--top-k", type=int, default=10)
    rep.add_argument("-o", "--output", default=None)
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "seed", 0) is not None and getattr(args, "seed", 0) < 0:
        parser.error("--seed must be non-negative")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"moodid: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ProfileError as exc:
        # Unknown scenario names land here as well.
        print(f"moodid: {exc}", file=sys.stderr)
        return EXIT_USAGE if args.command == "synth" else EXIT_DATA
    except (DatasetError, EncodingError, NoEvaluableWindows, FileNotFoundError, ValueError) as exc:
        print(f"moodid: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"moodid: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
