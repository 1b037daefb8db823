"""``ddfprobe`` command line: train, probe, compare, hdc-demo.

Each command writes its artifacts under the output directory and prints
one tab-separated ``key<TAB>value`` line per artifact or headline number.
Exit codes: 0 success, 2 configuration or contract error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_config
from .errors import ContractError, NumericalError
from .hdc_demo import demo_statistics, demo_text
from .host import build_host, derived_seed, load_checkpoint, read_checkpoint_meta, save_checkpoint
from .host import scene_pool, train
from .probe import DeltaSchedule, ProbeReport, compare_models, probe_model
from .reports import comparison_table, read_json, validate, write_effect_csv, write_json
from .reports import write_loss_csv, write_ppm, write_strips

EXIT_OK = 0
EXIT_CONTRACT = 2
EXIT_NUMERICAL = 3


def _emit(key, value):
    print(f"{key}\t{value}")


def _variant(with_ddf):
    return "ddf" if with_ddf else "baseline"


def _resolve_config(args, fallback=None):
    if args.config is not None:
        cfg = load_config(args.config)
    elif fallback is not None:
        cfg = fallback
    else:
        cfg = ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _out_dir(args, cfg):
    return Path(args.out if args.out is not None else cfg.output.dir)


# -- train -----------------------------------------------------------------


def run_train(cfg, with_ddf, out_dir, dump_scenes=None):
    """Train one variant and write checkpoint, loss CSV, manifest and figure.

    Returns the run directory.
    """
    from .plotting import plot_loss_curves

    cfg = cfg.with_ddf(with_ddf)
    m, t, ds = cfg.model, cfg.training, cfg.dataset
    run_dir = Path(out_dir) / _variant(with_ddf)
    run_dir.mkdir(parents=True, exist_ok=True)
    model = build_host(
        m.d, with_ddf, n=m.n, seed=m.seed, image_size=ds.image_size, hidden=m.hidden,
        bias_low=m.bias_low, bias_high=m.bias_high,
    )
    initial_checksum = model.checksum()
    frozen_before = [p.data.copy() for p in model.frozen_parameters]
    images = scene_pool(ds.num_scenes, ds.seed, ds.image_size)
    if dump_scenes is not None:
        for i, img in enumerate(images):
            write_ppm(Path(dump_scenes) / f"scene_{i:05d}.ppm", img)
    extra = {"experiment_config": cfg.to_dict(), "config_hash": cfg.config_hash()}
    started = time.perf_counter()
    log = train(
        model, ds.num_scenes, t.steps, t.batch, t.lr, ds.seed, momentum=t.momentum,
        optimizer=t.optimizer, warmup=t.warmup,
        checkpoint_every=t.checkpoint_every,
        checkpoint_dir=run_dir / "checkpoints" if t.checkpoint_every else None,
        images=images, checkpoint_extra=extra,
    )
    wall = time.perf_counter() - started
    frozen_intact = all(
        np.array_equal(a, p.data) for a, p in zip(frozen_before, model.frozen_parameters)
    )
    if not frozen_intact:
        raise NumericalError("frozen DDF parameters changed during training")
    checkpoint = save_checkpoint(model, run_dir / "checkpoint.npz", extra)
    loss_csv = write_loss_csv(log, run_dir / "loss.csv")
    manifest = {
        "schema_version": 1,
        "kind": "train_manifest",
        "variant": _variant(with_ddf),
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "seeds": {
            "dataset": ds.seed,
            "model": m.seed,
            "encoder_decoder_stream": derived_seed(m.seed, 0),
            "ddf_stream": derived_seed(m.seed, 1) if with_ddf else None,
            "scene_pool_stream": derived_seed(ds.seed, 2),
            "batch_order_stream": derived_seed(ds.seed, 3),
        },
        "wall_time_seconds": wall,
        "steps": t.steps,
        "initial_loss": log.losses[0],
        "final_loss": log.final_loss(),
        "final_loss_window": min(100, len(log.losses)),
        "encoder_grad_norm_first_step": log.encoder_grad_norm_first_step,
        "initial_checksum": initial_checksum,
        "final_checksum": log.final_checksum,
        "frozen_checksum": model.ddf.checksum() if with_ddf else None,
        "checkpoint": checkpoint.name,
        "intermediate_checkpoints": [str(Path(c).relative_to(run_dir)) for c in log.checkpoints],
        "python": platform.python_version(),
        "numpy": np.__version__,
        "package_version": __version__,
    }
    manifest_path = write_json(run_dir / "manifest.json", manifest)
    figure = plot_loss_curves({_variant(with_ddf): log.losses}, run_dir / "loss.png")
    _emit("variant", _variant(with_ddf))
    _emit("checkpoint", checkpoint)
    _emit("loss_csv", loss_csv)
    _emit("manifest", manifest_path)
    _emit("figure", figure)
    _emit("initial_loss", repr(log.losses[0]))
    _emit("final_loss", repr(log.final_loss()))
    _emit("wall_time_seconds", f"{wall:.2f}")
    return run_dir


# -- probe -----------------------------------------------------------------


def _check_checkpoint_matches(meta, cfg, path):
    """Raise ContractError when a checkpoint disagrees with the config dimensions.

    The variant itself comes from the checkpoint, so ``with_ddf`` is not
    compared; everything else that shapes the model is.
    """
    mc = meta["config"]
    m = cfg.model
    expected = {
        "d": m.d,
        "image_size": cfg.dataset.image_size,
        "hidden": m.hidden,
        "seed": m.seed,
    }
    problems = [f"{k}: checkpoint {mc.get(k)!r} vs config {v!r}" for k, v in expected.items()
                if mc.get(k) != v]
    ddf = mc.get("ddf")
    if ddf:
        for key, value in (("n", m.n), ("bias_low", m.bias_low), ("bias_high", m.bias_high)):
            if ddf.get(key) != value:
                problems.append(f"ddf {key}: checkpoint {ddf.get(key)!r} vs config {value!r}")
    stored = meta.get("extra", {}).get("experiment_config")
    if stored is not None and stored.get("dataset") != cfg.dataset_identity():
        problems.append(f"dataset: checkpoint {stored.get('dataset')} vs config {cfg.dataset_identity()}")
    if problems:
        raise ContractError(f"checkpoint {path} does not match config: " + "; ".join(problems))


def probe_checkpoint(checkpoint, cfg, out_dir, threads=1):
    """Probe one checkpoint; write report JSON, effects CSV, strips and figures."""
    from .plotting import plot_effect_matrix, plot_probe_grid

    meta = read_checkpoint_meta(checkpoint)
    _check_checkpoint_matches(meta, cfg, checkpoint)
    model = load_checkpoint(checkpoint)
    model.dataset = cfg.dataset_identity()
    p = cfg.probe
    report = probe_model(
        model, p.batch, DeltaSchedule(p.deltas), p.seed, p.epsilon, p.jump_fraction,
        threads=threads, dataset=cfg.dataset_identity(),
    )
    report.seeds["dataset"] = cfg.dataset.seed
    doc = validate(report.to_dict(), "probe_report")
    out_dir = Path(out_dir)
    write_json(out_dir / "report.json", doc)
    write_effect_csv(report, out_dir / "effects.csv")
    strips = write_strips(report, out_dir / "strips", p.image_format)
    plot_probe_grid(report, out_dir / "grid.png")
    plot_effect_matrix(report, out_dir / "effects.png")
    return report, strips, int(meta.get("steps_trained", 0))


def run_probe(checkpoints, cfg, out_dir, threads=1):
    """Probe each checkpoint into ``probe_<variant>/``.

    When several checkpoints of one variant are given, each gets its own
    subdirectory and a score-vs-training-step curve is written for that
    variant.
    """
    from .plotting import plot_score_curve

    out_dir = Path(out_dir)
    groups = {}
    for ckpt in checkpoints:
        ckpt = Path(ckpt)
        variant = _variant(read_checkpoint_meta(ckpt)["config"]["with_ddf"])
        groups.setdefault(variant, []).append(ckpt)
    reports = []
    for variant, paths in groups.items():
        results = []
        for i, ckpt in enumerate(paths):
            target = out_dir / f"probe_{variant}"
            if len(paths) > 1:
                target = target / f"{i:02d}_{ckpt.stem}"
            report, strips, steps = probe_checkpoint(ckpt, cfg, target, threads)
            results.append((steps, report))
            reports.append(report)
            _emit("report", target / "report.json")
            _emit("effects_csv", target / "effects.csv")
            _emit("strips", f"{target / 'strips'} ({len(strips)} files)")
            _emit("score", repr(report.score))
            _emit("counts", ",".join(f"{k}={v}" for k, v in report.counts.items()))
        if len(results) > 1:
            results.sort(key=lambda r: r[0])
            steps = [s for s, _ in results]
            scores = [r.score for _, r in results]
            lines = ["steps,score"] + [f"{s},{v!r}" for s, v in zip(steps, scores)]
            curve = out_dir / f"probe_{variant}" / "score_curve.csv"
            curve.write_text("\n".join(lines) + "\n")
            plot_score_curve(steps, scores, curve.with_suffix(".png"))
            _emit("score_curve", curve)
    return reports


# -- compare ---------------------------------------------------------------


def run_compare(report_a, report_b, out_dir):
    from .plotting import plot_comparison

    docs = []
    for path in (report_a, report_b):
        doc = validate(read_json(path), "probe_report")
        ProbeReport.from_dict(doc)  # round-trips or raises
        docs.append(doc)
    comparison = validate(compare_models(*docs), "comparison")
    out_dir = Path(out_dir)
    json_path = write_json(out_dir / "comparison.json", comparison)
    text_path = out_dir / "comparison.txt"
    text_path.write_text(comparison_table(comparison))
    figure = plot_comparison(comparison, out_dir / "comparison.png")
    _emit("comparison", json_path)
    _emit("table", text_path)
    _emit("figure", figure)
    _emit("baseline_score", repr(comparison["baseline"]["disentanglement_score"]))
    _emit("ddf_score", repr(comparison["ddf"]["disentanglement_score"]))
    _emit("score_difference", repr(comparison["score_difference"]))
    _emit("direction", comparison["direction"])
    return comparison


# -- hdc-demo --------------------------------------------------------------


def run_hdc_demo(d, trials, seed, out_dir, capacity_trials=None):
    from .plotting import plot_cosine_histogram

    stats = demo_statistics(d, trials, seed, capacity_trials)
    out_dir = Path(out_dir)
    json_path = write_json(out_dir / "hdc_demo.json", stats)
    text_path = out_dir / "hdc_demo.txt"
    text_path.write_text(demo_text(stats))
    figure = plot_cosine_histogram(stats, out_dir / "cosine_hist.png")
    _emit("statistics", json_path)
    _emit("table", text_path)
    _emit("figure", figure)
    _emit("cosine_std", repr(stats["orthogonality"]["std"]))
    _emit("bind_inverse_exact", stats["bind_bundle"]["bind_inverse_exact"])
    return stats


# -- argument parsing ------------------------------------------------------


def _global_flags(defaults):
    # Shared by the top-level parser and every subparser, so the flags work
    # before or after the command name. Subparsers suppress defaults so they
    # never clobber a value given before the command.
    p = argparse.ArgumentParser(add_help=False)
    d = None if defaults else argparse.SUPPRESS
    p.add_argument("--config", default=d, help="INI or JSON experiment config")
    p.add_argument("--seed", type=int, default=d, help="override every seed in the config")
    p.add_argument("--out", default=d, help="output directory (default: [output] dir)")
    p.add_argument("--threads", type=int, default=1 if defaults else argparse.SUPPRESS,
                   help="worker threads for neuron sweeps")
    return p


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ddfprobe", parents=[_global_flags(True)],
        description="Train, probe and compare hosts with and without a frozen DDF layer.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    shared = [_global_flags(False)]

    tr = sub.add_parser("train", parents=shared, help="train one host variant")
    tr.add_argument("--ddf", dest="ddf", action=argparse.BooleanOptionalAction, default=None,
                    help="insert the DDF layer (default: [model] with_ddf)")
    tr.add_argument("--dump-scenes", metavar="DIR", help="also write the scene pool as PPM files")

    pr = sub.add_parser("probe", parents=shared, help="sweep every probe neuron of checkpoints")
    pr.add_argument("checkpoints", nargs="+", help="checkpoint .npz file(s)")

    co = sub.add_parser("compare", parents=shared, help="compare a baseline and a DDF report")
    co.add_argument("baseline_report")
    co.add_argument("ddf_report")

    hd = sub.add_parser("hdc-demo", parents=shared, help="hypervector property statistics")
    hd.add_argument("--d", type=int, default=10000, help="hypervector dimension")
    hd.add_argument("--trials", type=int, default=1000)
    hd.add_argument("--capacity-trials", type=int, default=None,
                    help="trials per capacity point (default: --trials)")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.threads < 1:
            raise ContractError(f"--threads must be >= 1, got {args.threads}")
        if args.command == "train":
            cfg = _resolve_config(args)
            with_ddf = cfg.model.with_ddf if args.ddf is None else args.ddf
            run_train(cfg, with_ddf, _out_dir(args, cfg), args.dump_scenes)
        elif args.command == "probe":
            fallback = None
            if args.config is None:
                stored = read_checkpoint_meta(args.checkpoints[0]).get("extra", {})
                if "experiment_config" in stored:
                    from .config import from_mapping

                    fallback = from_mapping(stored["experiment_config"])
            cfg = _resolve_config(args, fallback)
            run_probe(args.checkpoints, cfg, _out_dir(args, cfg), args.threads)
        elif args.command == "compare":
            cfg = _resolve_config(args)
            run_compare(args.baseline_report, args.ddf_report, _out_dir(args, cfg))
        elif args.command == "hdc-demo":
            seed = 0 if args.seed is None else args.seed
            out = Path(args.out) if args.out is not None else _out_dir(args, _resolve_config(args))
            run_hdc_demo(args.d, args.trials, seed, out, args.capacity_trials)
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except NumericalError as exc:
        step = getattr(exc, "last_finite_step", None)
        suffix = f" (last finite step {step})" if step is not None else ""
        print(f"numerical failure: {exc}{suffix}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
