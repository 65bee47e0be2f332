"""Command-line entry point.

Subcommands: validate, timeline, profile, intervals, fit, coenroll,
categories, transitions, recommend-eval, synth.  Every option can come
from a JSON config file (--config) or a flag, but not both: a key
present in the config and on the command line is a configuration
error.  All randomness flows from the single configured seed, and all
results are written to files under --out-dir so runs are diffable;
wall-clock timings go to a separate file excluded from the
byte-identical guarantee.

Exit codes: 0 success, 1 runtime failure, 2 usage error,
3 missing input file, 4 bad configuration.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import coenroll as co
from . import eventlog as ev
from . import recommend as rec
from . import seqmine as sq
from . import synthgen as sg
from . import temporal as tp

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_MISSING_INPUT = 3
EXIT_BAD_CONFIG = 4


class ConfigError(Exception):
    pass


def _parse_time(value) -> int:
    """Epoch seconds from an integer or a naive ISO-8601 timestamp."""
    if isinstance(value, int):
        return value
    s = str(value)
    try:
        return int(s)
    except ValueError:
        pass
    try:
        dt = datetime.fromisoformat(s)
    except ValueError:
        raise ConfigError(f"cannot parse timestamp {value!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(path)
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file is not valid JSON: {e}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    return cfg


class Options:
    """Merged view of config-file keys and command-line flags.

    One source of truth per key: a key supplied both ways is an error.
    """

    def __init__(self, args: argparse.Namespace, config: dict, known: set[str]):
        self._flags = vars(args)
        self._config = config
        unknown = set(config) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in config:
            if self._flags.get(key) is not None:
                raise ConfigError(
                    f"key {key!r} set in both the config file and on the command line"
                )

    def get(self, key: str, default=None):
        v = self._flags.get(key)
        if v is not None:
            return v
        if key in self._config:
            return self._config[key]
        return default

    def require(self, key: str):
        v = self.get(key)
        if v is None:
            raise ConfigError(f"missing required option {key!r}")
        return v


def _schema_from_options(opts: Options) -> ev.CsvSchema:
    columns = opts.get("column_map")
    if isinstance(columns, str):
        try:
            columns = json.loads(columns)
        except json.JSONDecodeError:
            raise ConfigError("column_map must be a JSON object") from None
    kwargs: dict = {
        "delimiter": opts.get("delimiter", ","),
        "has_header": bool(opts.get("has_header", False)),
    }
    if columns:
        kwargs["columns"] = columns
    return ev.CsvSchema(**kwargs)


def _load_events(opts: Options) -> tuple[ev.EventLog, ev.ValidationReport]:
    path = Path(opts.require("events"))
    if not path.exists():
        raise FileNotFoundError(str(path))
    catalog = None
    cat_path = opts.get("catalog")
    if cat_path:
        cp = Path(cat_path)
        if not cp.exists():
            raise FileNotFoundError(str(cp))
        catalog = ev.read_course_catalog(cp, delimiter=opts.get("delimiter", ","))
    schema = _schema_from_options(opts)
    workers = int(opts.get("workers", 1))
    return ev.parse_activity_csv(path, schema=schema, catalog=catalog, workers=workers)


def _out_dir(opts: Options) -> Path:
    out = Path(opts.get("out_dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_validate(opts: Options) -> int:
    _, report = _load_events(opts)
    out = _out_dir(opts) / "validation_report.txt"
    out.write_text(report.to_text())
    sys.stdout.write(report.to_text())
    return EXIT_OK


def _cmd_timeline(opts: Options) -> int:
    log, _ = _load_events(opts)
    bucket = int(opts.get("bucket", 86400))
    series = tp.activity_timeline(log, bucket)
    lines = ["bucket_start\tcount"] + [f"{b}\t{c}" for b, c in series]
    (_out_dir(opts) / "timeline.tsv").write_text("\n".join(lines) + "\n")
    return EXIT_OK


def _cmd_profile(opts: Options) -> int:
    log, _ = _load_events(opts)
    period = opts.get("period", "day")
    tz_off = int(round(float(opts.get("tz_offset_hours", 0)) * 3600))
    if period == "day":
        prof = tp.daily_profile(log, tz_off).counts
        n_bins = 24
    elif period == "week":
        prof = tp.weekly_profile(log, tz_off).counts
        n_bins = 7
    else:
        raise ConfigError("period must be 'day' or 'week'")
    lines = ["activity_type\tbin\tcount"]
    for t in ev.ActivityType:
        for b in range(n_bins):
            lines.append(f"{t.name}\t{b}\t{int(prof[int(t), b])}")
    (_out_dir(opts) / f"profile_{period}.tsv").write_text("\n".join(lines) + "\n")
    return EXIT_OK


def _cmd_intervals(opts: Options) -> int:
    log, _ = _load_events(opts)
    perspective = opts.get("perspective", "learner")
    bin_width = int(opts.get("bin_width", 3600))
    hist = tp.interval_distribution(log, perspective, bin_width)
    lines = ["bin_start_seconds\tcount"]
    for i in hist.nonempty_bins():
        lines.append(f"{i * hist.bin_width}\t{hist.counts[i]}")
    out = _out_dir(opts)
    (out / f"intervals_{perspective}.tsv").write_text("\n".join(lines) + "\n")
    within = opts.get("within_seconds")
    if within is not None:
        frac = tp.fraction_within(hist, int(within))
        (out / f"intervals_{perspective}_stats.txt").write_text(
            f"total_intervals={hist.total_intervals}\n"
            f"threshold_seconds={int(within)}\n"
            f"fraction_within={frac.value:.10g}\n"
            f"empty={str(frac.empty).lower()}\n"
        )
    return EXIT_OK


def _cmd_fit(opts: Options) -> int:
    log, _ = _load_events(opts)
    perspective = opts.get("perspective", "learner")
    bin_width = int(opts.get("bin_width", 3600))
    period = float(opts.get("period_hours", 24.0))
    hist = tp.interval_distribution(log, perspective, bin_width)
    result = tp.fit_power_cosine(
        hist, period_hours=period, fit_amplitude=not bool(opts.get("no_amplitude", False))
    )
    text = (
        f"k={result.params.k:.10g}\n"
        f"alpha={result.params.alpha:.10g}\n"
        f"amplitude={result.params.amplitude:.10g}\n"
        f"period_hours={result.params.period_hours:.10g}\n"
        f"residual={result.residual:.10g}\n"
        f"bins_used={result.bins_used}\n"
    )
    out = _out_dir(opts)
    (out / "fit.txt").write_text(text)
    (out / "fit.json").write_text(
        json.dumps(
            {"params": asdict(result.params), "residual": result.residual,
             "bins_used": result.bins_used},
            indent=2, sort_keys=True,
        )
        + "\n"
    )
    sys.stdout.write(text)
    return EXIT_OK


def _cmd_coenroll(opts: Options) -> int:
    log, _ = _load_events(opts)
    table = ev.build_enrollment_table(log)
    min_learners = int(opts.get("min_learners", 1))
    threshold = float(opts.get("npmi_threshold", 0.6))
    skip_disjoint = bool(opts.get("skip_disjoint", False))
    pairs = list(co.all_pairs(table, min_learners, skip_disjoint=skip_disjoint))
    out = _out_dir(opts)
    lines = ["course_i\tcourse_j\tn_i\tn_j\tn_both\tn_either\tjaccard\tpmi\tnpmi"]
    for p in pairs:
        lines.append(
            f"{p.course_i}\t{p.course_j}\t{p.n_i}\t{p.n_j}\t{p.n_both}\t{p.n_either}"
            f"\t{p.jaccard:.10g}\t{p.pmi:.10g}\t{p.npmi:.10g}"
        )
    (out / "pairs.tsv").write_text("\n".join(lines) + "\n")
    fmt = opts.get("format", "edgelist")
    fmt_internal = {"edgelist": "edge_list", "dot": "dot"}.get(fmt)
    if fmt_internal is None:
        raise ConfigError("format must be 'edgelist' or 'dot'")
    graph = co.build_graph(
        pairs,
        threshold,
        catalog=log.catalog,
        include_isolated=not bool(opts.get("drop_isolated", False)),
    )
    suffix = "edgelist" if fmt == "edgelist" else "dot"
    (out / f"graph.{suffix}").write_bytes(co.export_graph(graph, fmt_internal))
    return EXIT_OK


def _cmd_categories(opts: Options) -> int:
    log, _ = _load_events(opts)
    if not log.catalog:
        raise ConfigError("categories requires --catalog with category data")
    table = ev.build_enrollment_table(log)
    matrix = co.category_jaccard(table, log.catalog)
    lines = ["category\t" + "\t".join(matrix.categories)]
    for i, cat in enumerate(matrix.categories):
        row = "\t".join(f"{v:.10g}" for v in matrix.values[i])
        lines.append(f"{cat}\t{row}")
    (_out_dir(opts) / "category_jaccard.tsv").write_text("\n".join(lines) + "\n")
    return EXIT_OK


def _cmd_transitions(opts: Options) -> int:
    log, _ = _load_events(opts)
    table = ev.build_enrollment_table(log)
    seqs = sq.enrollment_sequences(table)
    counts = sq.count_transitions(seqs, adjacent_only=not bool(opts.get("all_pairs", False)))
    level = opts.get("level", "course")
    if level == "course":
        matrix = sq.course_transition_matrix(counts)
    elif level == "category":
        if not log.catalog:
            raise ConfigError("category-level transitions require --catalog")
        matrix = sq.category_transition_matrix(counts, log.catalog)
    else:
        raise ConfigError("level must be 'course' or 'category'")
    out = _out_dir(opts)
    if bool(opts.get("dense", False)):
        lines = ["label\t" + "\t".join(matrix.labels)]
        for i, lbl in enumerate(matrix.labels):
            row = "\t".join(f"{v:.10g}" for v in matrix.probs[i])
            lines.append(f"{lbl}\t{row}")
    else:
        lines = ["src\tdst\tprobability"]
        for i, src in enumerate(matrix.labels):
            if not matrix.row_defined[i]:
                continue
            for j in np.nonzero(matrix.probs[i] > 0)[0]:
                lines.append(f"{src}\t{matrix.labels[j]}\t{matrix.probs[i, j]:.10g}")
    (out / f"transitions_{level}.tsv").write_text("\n".join(lines) + "\n")
    return EXIT_OK


def _cmd_recommend_eval(opts: Options) -> int:
    log, _ = _load_events(opts)
    rng_bounds = log.time_range()
    if rng_bounds is None:
        raise ConfigError("event log is empty")
    split = _parse_time(opts.require("split"))
    start = _parse_time(opts.get("start", rng_bounds[0]))
    end = _parse_time(opts.get("end", rng_bounds[1] + 1))
    spec = rec.SplitSpec(start=start, split_time=split, end=end)
    train, test = rec.temporal_split(log, spec)
    if len(train) == 0:
        raise ConfigError("training window contains no events")
    k = int(opts.get("k", 10))
    seed = int(opts.get("seed", 0))
    min_train_events = int(opts.get("min_train_events", 0))

    t0 = time.perf_counter()
    model = rec.fit_frepapop(train)
    train_time = time.perf_counter() - t0
    recommenders = {
        "frepapop": lambda r: rec.recommend_frepapop(model, r),
        "popularity": lambda r: rec.recommend_popularity(model, r),
        "random": lambda r: rec.recommend_random(model.catalog, r, seed),
    }
    which = opts.get("model", "all")
    names = list(recommenders) if which == "all" else [which]
    if any(n not in recommenders for n in names):
        raise ConfigError("model must be frepapop, popularity, random, or all")

    rows = []
    for name in names:
        m = rec.evaluate(recommenders[name], train, test, k, min_train_events)
        rows.append((name, m))

    out = _out_dir(opts)
    header = f"model\tf1@{k}\tmap@{k}\tmrr@{k}\tndcg@{k}\tusers_evaluated"
    lines = [header]
    for name, m in rows:
        lines.append(
            f"{name}\t{m.f1_at_k:.6f}\t{m.map_at_k:.6f}\t{m.mrr_at_k:.6f}"
            f"\t{m.ndcg_at_k:.6f}\t{m.users_evaluated}"
        )
    (out / "eval_results.tsv").write_text("\n".join(lines) + "\n")
    (out / "eval_timing.txt").write_text(f"training_time_seconds={train_time:.3f}\n")

    widths = (12, 10, 10, 10, 10, 16)
    cols = ["model", f"F1@{k}", f"MAP@{k}", f"MRR@{k}", f"NDCG@{k}", "users_evaluated"]
    fmt_row = lambda cells: "  ".join(str(c).ljust(w) for c, w in zip(cells, widths))
    print(fmt_row(cols))
    for name, m in rows:
        print(
            fmt_row(
                [
                    name,
                    f"{m.f1_at_k * 100:.2f}%",
                    f"{m.map_at_k * 100:.2f}%",
                    f"{m.mrr_at_k * 100:.2f}%",
                    f"{m.ndcg_at_k * 100:.2f}%",
                    m.users_evaluated,
                ]
            )
        )
    print(f"training time: {train_time:.3f}s")
    return EXIT_OK


def _chain_spec_from_dict(d: dict, seed: int) -> sg.ChainSpec:
    try:
        kwargs = {
            "course_ids": tuple(d["course_ids"]),
            "categories": tuple(d.get("categories") or [None] * len(d["course_ids"])),
            "transition": np.asarray(d["transition"], dtype=np.float64),
            "start_weights": np.asarray(d["start_weights"], dtype=np.float64),
            "n_learners": int(d["n_learners"]),
            "seq_length_range": tuple(d["seq_length_range"]),
            "seed": seed,
        }
    except KeyError as e:
        raise ConfigError(f"chain spec missing key {e.args[0]!r}") from None
    for opt in ("burst_events_range", "enroll_gap_seconds_range", "start_time_range"):
        if opt in d:
            kwargs[opt] = tuple(d[opt])
    if "burst_gaps" in d:
        kwargs["burst_gaps"] = sg.IntervalSpec(**d["burst_gaps"])
    return sg.ChainSpec(**kwargs)


def _cmd_synth(opts: Options) -> int:
    spec_path = Path(opts.require("spec"))
    if not spec_path.exists():
        raise FileNotFoundError(str(spec_path))
    try:
        spec_dict = json.loads(spec_path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"spec file is not valid JSON: {e}") from None
    if "seed" in spec_dict and opts.get("seed") is not None:
        raise ConfigError("seed set in both the spec file and on the command line")
    seed = int(spec_dict.pop("seed", opts.get("seed", 0) or 0))
    mode = opts.get("mode", "log")
    out = _out_dir(opts)
    if mode == "intervals":
        try:
            ispec = sg.IntervalSpec(seed=seed, **spec_dict)
        except TypeError as e:
            raise ConfigError(f"bad interval spec: {e}") from None
        samples = sg.gen_intervals(ispec)
        path = out / "intervals_samples.txt"
        path.write_text("".join(f"{s:.12g}\n" for s in samples))
    elif mode == "log":
        cspec = _chain_spec_from_dict(spec_dict, seed)
        log = sg.gen_activity_log(cspec)
        ev.write_activity_csv(log, out / "events.csv")
        cat_lines = ["course_id,title,start_date,end_date,category"]
        for cid in sorted(log.catalog):
            meta = log.catalog[cid]
            cat_lines.append(f"{meta.course_id},{meta.title},,,{meta.category or ''}")
        (out / "catalog.csv").write_text("\n".join(cat_lines) + "\n")
    else:
        raise ConfigError("mode must be 'intervals' or 'log'")
    return EXIT_OK


_COMMANDS = {
    "validate": _cmd_validate,
    "timeline": _cmd_timeline,
    "profile": _cmd_profile,
    "intervals": _cmd_intervals,
    "fit": _cmd_fit,
    "coenroll": _cmd_coenroll,
    "categories": _cmd_categories,
    "transitions": _cmd_transitions,
    "recommend-eval": _cmd_recommend_eval,
    "synth": _cmd_synth,
}


def _add_common(p: argparse.ArgumentParser, with_events: bool = True) -> None:
    p.add_argument("--config", help="JSON config file; keys mirror the flags")
    p.add_argument("--out-dir", dest="out_dir", help="output directory (default .)")
    if with_events:
        p.add_argument("--events", help="activity log file")
        p.add_argument("--catalog", help="course catalog file")
        p.add_argument("--delimiter", help="field delimiter (default ,)")
        p.add_argument("--has-header", dest="has_header", action="store_const", const=True)
        p.add_argument("--column-map", dest="column_map", help="JSON field->column map")
        p.add_argument("--workers", type=int, help="parser worker count (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moocmine",
        description="Pattern mining and course recommendation on MOOC activity logs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("validate", help="parse and report row accounting"))

    p = sub.add_parser("timeline", help="event counts per time bucket")
    _add_common(p)
    p.add_argument("--bucket", type=int, help="bucket width in seconds (default 86400)")

    p = sub.add_parser("profile", help="hour-of-day / day-of-week activity profile")
    _add_common(p)
    p.add_argument("--period", choices=["day", "week"])
    p.add_argument("--tz-offset-hours", dest="tz_offset_hours", type=float)

    p = sub.add_parser("intervals", help="consecutive-activity gap histogram")
    _add_common(p)
    p.add_argument("--perspective", choices=["learner", "course"])
    p.add_argument("--bin-width", dest="bin_width", type=int)
    p.add_argument("--within-seconds", dest="within_seconds", type=int)

    p = sub.add_parser("fit", help="fit the power-law + cosine gap model")
    _add_common(p)
    p.add_argument("--perspective", choices=["learner", "course"])
    p.add_argument("--bin-width", dest="bin_width", type=int)
    p.add_argument("--period-hours", dest="period_hours", type=float)
    p.add_argument("--no-amplitude", dest="no_amplitude", action="store_const", const=True)

    p = sub.add_parser("coenroll", help="pairwise co-enrollment statistics and graph")
    _add_common(p)
    p.add_argument("--min-learners", dest="min_learners", type=int)
    p.add_argument("--npmi-threshold", dest="npmi_threshold", type=float)
    p.add_argument("--format", choices=["edgelist", "dot"])
    p.add_argument("--skip-disjoint", dest="skip_disjoint", action="store_const", const=True)
    p.add_argument("--drop-isolated", dest="drop_isolated", action="store_const", const=True)

    _add_common(sub.add_parser("categories", help="category-level learner overlap matrix"))

    p = sub.add_parser("transitions", help="course/category transition matrix")
    _add_common(p)
    p.add_argument("--level", choices=["course", "category"])
    p.add_argument("--all-pairs", dest="all_pairs", action="store_const", const=True)
    p.add_argument("--dense", action="store_const", const=True)

    p = sub.add_parser("recommend-eval", help="train and evaluate recommenders")
    _add_common(p)
    p.add_argument("--model", choices=["frepapop", "popularity", "random", "all"])
    p.add_argument("--k", type=int)
    p.add_argument("--split", help="split timestamp (epoch seconds or ISO-8601)")
    p.add_argument("--start", help="train window start (default: log start)")
    p.add_argument("--end", help="test window end (default: log end + 1)")
    p.add_argument("--seed", type=int)
    p.add_argument("--min-train-events", dest="min_train_events", type=int)

    p = sub.add_parser("synth", help="generate synthetic interval samples or logs")
    _add_common(p, with_events=False)
    p.add_argument("--mode", choices=["intervals", "log"])
    p.add_argument("--spec", help="JSON generator spec file")
    p.add_argument("--seed", type=int)

    return parser


_OPTION_KEYS = {
    "validate": {"events", "catalog", "delimiter", "has_header", "column_map", "workers", "out_dir"},
    "timeline": {"events", "catalog", "delimiter", "has_header", "column_map", "workers", "out_dir", "bucket"},
    "profile": {"events", "catalog", "delimiter", "has_header", "column_map", "workers", "out_dir", "period", "tz_offset_hours"},
    "intervals": {"events", "catalog", "delimiter", "has_header", "column_map", "workers", "out_dir", "perspective", "bin_width", "within_seconds"},
    "fit": {"events", "catalog", "delimiter", "has_header", "column_map", "workers", "out_dir", "perspective", "bin_width", "period_hours", "no_amplitude"},
    "coenroll": {"events", "catalog", "delimiter", "has_header", "column_map", "workers", "out_dir", "min_learners", "npmi_threshold", "format", "skip_disjoint", "drop_isolated"},
    "categories": {"events", "catalog", "delimiter", "has_header", "column_map", "workers", "out_dir"},
    "transitions": {"events", "catalog", "delimiter", "has_header", "column_map", "workers", "out_dir", "level", "all_pairs", "dense"},
    "recommend-eval": {"events", "catalog", "delimiter", "has_header", "column_map", "workers", "out_dir", "model", "k", "split", "start", "end", "seed", "min_train_events"},
    "synth": {"out_dir", "mode", "spec", "seed"},
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    command = args.command
    try:
        config = _load_config(args.config)
        opts = Options(args, config, _OPTION_KEYS[command])
        return _COMMANDS[command](opts)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except FileNotFoundError as e:
        print(f"error: missing input file: {e}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except (ValueError, KeyError, sg.GenerationError, tp.FitError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
