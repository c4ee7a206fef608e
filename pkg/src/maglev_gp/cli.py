"""
Command-line front end: ``campaign``, ``train``, ``validate``, ``compress``,
``track`` and ``report``.

Exit codes: 0 success, 2 usage error, 3 unreadable or malformed input,
4 numerical or simulation failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import zlib
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import io
from .campaign import (
    SettlingTimeout,
    assemble_dataset,
    initial_hyperparameters,
    period_from_dataset,
    reductions,
    run_grid_campaign,
    evaluate_trace,
    run_tracking_traces,
    train_model,
    validate_model,
)
from .gp import Dataset, FactorizationError, GPPosterior, OptimizerConfig
from .kernels import KernelSpec
from .metrics import spatial_spectrum
from .motor_sim import Scenario, SimulationError, default_field
from .sparse import SRPredictor, sr_compress

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_NUMERIC = 0, 2, 3, 4

DEFAULT_TRAIN_POINTS = 3600


class UsageError(Exception):
    pass


def substream(seed: int, name: str) -> int:
    """Independent integer seed for the named consumer of a command's seed."""
    return int(np.random.SeedSequence([seed, zlib.crc32(name.encode())]).generate_state(1)[0])


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _config(args):
    if args.config is not None and not Path(args.config).is_file():
        raise UsageError(f"config file not found: {args.config}")
    return io.load_config(args.config)


def _field(conf, seed):
    return default_field(seed, **conf["field"])


def _read_datasets(paths) -> Dataset:
    for p in paths:
        if not Path(p).is_file():
            raise UsageError(f"dataset not found: {p}")
    return Dataset.concat(io.read_dataset_csv(p) for p in paths)


def _read_model(path):
    if not Path(path).is_file():
        raise UsageError(f"model file not found: {path}")
    return io.load_model(path)


def _out_dir(args, default):
    out = Path(args.out if args.out is not None else default)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------- commands


def cmd_campaign(args) -> int:
    conf = _config(args)
    cfg = replace(conf["campaign"], seed=args.seed)
    base = Scenario(params=conf["plant"], field=_field(conf, args.seed))
    sets = run_grid_campaign(cfg, base)
    out = _out_dir(args, "campaign")
    files = []
    for s in sets:
        path = out / f"run_{s.run:02d}.csv"
        io.write_measurement_csv(path, s)
        files.append({"file": path.name, "run": s.run, "points": len(s), "sha256": _sha256(path)})
    _, _, wl = spatial_spectrum(sets[0].grid(), (sets[0].x, sets[0].y))
    cdict = asdict(cfg)
    manifest = {
        "seed": args.seed,
        "config": args.config,
        "campaign": cdict,
        "grid": [int(sets[0].x.size), int(sets[0].y.size)],
        "dominant_wavelength_m": [None if not np.isfinite(w) else float(w) for w in wl],
        "runs": files,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    print(f"wrote {len(sets)} runs of {len(sets[0])} points to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    parts = [_read_datasets([p]) for p in args.datasets]
    data = Dataset.concat(parts)
    spec = KernelSpec.parse(args.kernel)
    n = min(DEFAULT_TRAIN_POINTS, len(data)) if args.subset_size is None else args.subset_size
    if n > len(data):
        raise UsageError(f"--subset-size {n} exceeds the {len(data)} available points")
    train = assemble_dataset([data], n=n, seed=substream(args.seed, "shuffle"))
    period = args.period if args.period is not None else period_from_dataset(parts[0])
    init = initial_hyperparameters(train, period)
    ocfg = OptimizerConfig(max_iter=args.max_iter, restarts=args.restarts, seed=substream(args.seed, "optimizer"))
    post, report = train_model(
        train, spec, init, ocfg, opt_points=args.opt_points, seed=substream(args.seed, "subsample")
    )
    out = Path(args.out if args.out is not None else f"model_{spec.value}.json")
    io.save_model(out, post, report, extra={"seed": args.seed, "sources": [str(p) for p in args.datasets]})
    print(f"kernel {spec.value}: {spec.n_params} hyperparameters, N = {post.count}")
    print(f"NLL {report.initial_nll:.6g} -> {report.final_nll:.6g} in {report.n_iter} iterations"
          f" (converged: {report.converged}, |grad| = {report.grad_norm:.3g})")
    print(io.format_hyperparameters(post.hp, spec), end="")
    print(f"wrote {out}")
    return EXIT_OK


def _model_label(model):
    kind = "sr" if isinstance(model, SRPredictor) else "exact"
    return f"{model.spec.value} ({kind})"


def cmd_validate(args) -> int:
    data = _read_datasets(args.data)
    rows = []
    for path in args.models:
        model = _read_model(path)
        rows.append((Path(path).name, _model_label(model), validate_model(model, data)))
    print(f"{'model':<28} {'kernel':<20} {'BFR [%]':>9}")
    for name, label, score in rows:
        print(f"{name:<28} {label:<20} {score:9.2f}")
    print(f"validation points: {len(data)}")
    if args.out is not None:
        with open(args.out, "w") as fh:
            fh.write("model,kernel,bfr,n\n")
            for name, label, score in rows:
                fh.write(f"{name},{label},{float(score)!r},{len(data)}\n")
    return EXIT_OK


def cmd_compress(args) -> int:
    model = _read_model(args.model)
    if not isinstance(model, GPPosterior):
        raise UsageError("compress needs an exact model")
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    m = 200 if args.subset_size is None else args.subset_size
    if not 1 <= m <= model.count:
        raise UsageError(f"--subset-size must be between 1 and {model.count}")
    train = Dataset(model.inputs, model.targets)
    sel = _read_datasets(args.data) if args.data else None
    sr = sr_compress(train, model.spec, model.hp, m, args.trials, sel, seed=substream(args.seed, "sr"))
    out = Path(args.out if args.out is not None else "model_sr.json")
    io.save_model(out, sr, extra={"seed": args.seed, "trials": args.trials, "source": str(args.model)})
    print(f"best of {args.trials} subsets of {m}/{model.count}: selection BFR {sr.selection_bfr:.2f} %")
    print(f"wrote {out}")
    return EXIT_OK


_ROWS = (
    ("whole trajectory", "l2/sqrt(N) [m]", "l2"),
    ("whole trajectory", "linf [m]", "linf"),
    ("constant velocity", "l2/sqrt(N) [m]", "cv_l2"),
    ("constant velocity", "linf [m]", "cv_linf"),
)


def comparison_table(before, after=None) -> str:
    """Text table of error norms without / with augmentation and the relative reduction."""
    lines = []
    if after is None:
        lines.append(f"{'interval':<18} {'metric':<15} {'no augmentation':>16}")
        for interval, metric, key in _ROWS:
            lines.append(f"{interval:<18} {metric:<15} {getattr(before, key):16.4e}")
        return "\n".join(lines)
    red = reductions(before, after)
    lines.append(f"{'interval':<18} {'metric':<15} {'no augmentation':>16} {'GP augmentation':>16} {'reduction':>10}")
    for interval, metric, key in _ROWS:
        lines.append(
            f"{interval:<18} {metric:<15} {getattr(before, key):16.4e} {getattr(after, key):16.4e} {red[key]:9.2f}%"
        )
    lines.append(f"cancellation BFR of the augmentation: {after.bfr:.2f} %")
    return "\n".join(lines)


def cmd_track(args) -> int:
    conf = _config(args)
    model = _read_model(args.model) if args.model is not None else None
    cfg = replace(conf["tracking"], seed=args.seed, field=_field(conf, args.seed))
    trace_off, trace_on = run_tracking_traces(cfg, model)
    out = _out_dir(args, "tracking")
    io.write_trace_csv(out / "trace_no_augmentation.csv", trace_off)
    off = evaluate_trace(trace_off, cfg.params)
    on = None
    reports = {"no_augmentation": off}
    if trace_on is not None:
        io.write_trace_csv(out / "trace_gp_augmentation.csv", trace_on)
        on = reports["gp_augmentation"] = evaluate_trace(trace_on, cfg.params)
    io.write_reports_csv(out / "reports.csv", reports)
    table = comparison_table(off, on)
    (out / "comparison.txt").write_text(table + "\n")
    print(table)
    return EXIT_OK


def cmd_report(args) -> int:
    if not Path(args.reports).is_file():
        raise UsageError(f"report file not found: {args.reports}")
    reps = io.read_reports_csv(args.reports)
    if "no_augmentation" not in reps:
        raise io.ParseError("no 'no_augmentation' row", args.reports)
    print(comparison_table(reps["no_augmentation"], reps.get("gp_augmentation")))
    return EXIT_OK


# ------------------------------------------------------------------------ parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="maglev-gp",
        description="Learn and deploy a GP feedforward for the levitated planar motor simulator.",
        epilog="exit codes: 0 ok, 2 usage, 3 malformed input, 4 numerical failure",
    )
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config=False, seed=True):
        if config:
            sp.add_argument("--config", help="scenario file with [campaign] [plant] [motion] [tracking] [field] sections")
        if seed:
            sp.add_argument("--seed", type=int, required=True, help="global seed for every random stream")
        sp.add_argument("--out", help="output path")

    sp = sub.add_parser("campaign", help="simulate grid measurement runs and write one CSV per run")
    common(sp, config=True)
    sp.set_defaults(func=cmd_campaign)

    sp = sub.add_parser("train", help="optimise hyperparameters and write an exact model")
    sp.add_argument("datasets", nargs="+", help="measurement / dataset CSV files")
    common(sp)
    sp.add_argument("--kernel", choices=[k.value for k in KernelSpec], default="full")
    sp.add_argument("--subset-size", type=int, help=f"training points after shuffling (default min({DEFAULT_TRAIN_POINTS}, N))")
    sp.add_argument("--opt-points", type=int, default=800, help="points used for the likelihood optimisation")
    sp.add_argument("--max-iter", type=int, default=200)
    sp.add_argument("--restarts", type=int, default=8)
    sp.add_argument("--period", type=float, help="initial periodic length (m); default: spectrum of the first file, else 0.03")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("validate", help="BFR of one or more models on a dataset")
    sp.add_argument("models", nargs="+")
    sp.add_argument("--data", nargs="+", required=True)
    common(sp, seed=False)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("compress", help="subset-of-regressors compression by random search")
    sp.add_argument("model")
    sp.add_argument("--data", nargs="*", help="selection set (default: the model's training data)")
    common(sp)
    sp.add_argument("--subset-size", type=int, help="regressor count m (default 200)")
    sp.add_argument("--trials", type=int, default=1000)
    sp.set_defaults(func=cmd_compress)

    sp = sub.add_parser("track", help="run the tracking trajectory without and with the learned feedforward")
    common(sp, config=True)
    sp.add_argument("--model", help="exact or SR model file; omit for a baseline run only")
    sp.set_defaults(func=cmd_track)

    sp = sub.add_parser("report", help="print the comparison table of a reports CSV")
    sp.add_argument("reports")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (io.ParseError, UnicodeDecodeError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (FactorizationError, SettlingTimeout, SimulationError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
