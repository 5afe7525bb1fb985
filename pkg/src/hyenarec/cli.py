"""``hyenarec`` command-line entry point."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import logging
import sys
from pathlib import Path

from . import bench
from .config import RunConfig, dump_config, format_value, load_config, parse_lines, parse_overrides
from .data import load_cache, load_dataset, load_log, preprocess, save_cache, source_hash, synth_copy_task
from .errors import ConfigError, DataError, HyenaRecError
from .evaluation import PopularityScorer, evaluate, write_results
from .filters import energy_curve
from .model import HyenaRecModel, load_model
from .train import Trainer

log = logging.getLogger("hyenarec")

STATS_ORDER = ("users", "items", "avg_length", "interactions", "sparsity")


# -- helpers ----------------------------------------------------------------------
def _ints(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path):
    """List every artifact under ``out_dir`` with its sha256."""
    out_dir = Path(out_dir)
    files = sorted(p for p in out_dir.rglob("*") if p.is_file() and p.name != "manifest.txt")
    lines = [f"{sha256(p)}  {p.relative_to(out_dir).as_posix()}\n" for p in files]
    (out_dir / "manifest.txt").write_text("".join(lines))


def format_stats(stats: dict) -> str:
    head = " | ".join(f"{k:>12}" for k in STATS_ORDER)
    vals = []
    for k in STATS_ORDER:
        v = stats[k]
        vals.append(f"{v:>12.1f}" if k == "avg_length" else f"{v:>12.4%}" if k == "sparsity" else f"{v:>12}")
    return head + "\n" + " | ".join(vals)


def build_dataset(cfg: RunConfig):
    if cfg.is_copy_task:
        ds = synth_copy_task(cfg.copy_users, cfg.copy_len, cfg.copy_lag, cfg.copy_vocab, seed=cfg.seed)
    else:
        if not Path(cfg.dataset).exists():
            raise DataError(f"dataset not found: {cfg.dataset}")
        if cfg.format == "cache":
            ds = load_cache(cfg.dataset)
        else:
            ds = load_dataset(cfg.dataset, cfg.format, cfg.cache)
    if cfg.subsample_users:
        ds = ds.subsample(cfg.subsample_users, seed=cfg.seed)
    return ds


def _set_threads(n: int):
    if bench.threadpool_limits is not None:
        bench.threadpool_limits(limits=n)


def run_config_from_args(args) -> RunConfig:
    overrides = parse_overrides(getattr(args, "override", None))
    direct = {
        "max_steps": getattr(args, "max_steps", None),
        "subsample_users": getattr(args, "subsample_users", None),
        "mixer": getattr(args, "mixer", None),
        "basis": getattr(args, "basis", None),
        "threads": getattr(args, "threads", None),
        "output_dir": getattr(args, "output_dir", None),
        "dataset": getattr(args, "dataset", None),
        "format": getattr(args, "format", None),
        "seed": getattr(args, "seed", None),
    }
    overrides.update({k: v for k, v in direct.items() if v is not None})
    if getattr(args, "ablate", None):
        overrides["ablate"] = tuple(args.ablate)
    if getattr(args, "no_mask_seen", False):
        overrides["mask_seen"] = False
    return load_config(getattr(args, "config", None), overrides)


# -- commands ---------------------------------------------------------------------
def cmd_preprocess(args) -> int:
    inp = Path(args.input)
    if not inp.exists():
        raise DataError(f"input not found: {inp}")
    ds = preprocess(load_log(inp, args.format), name=inp.stem)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_cache(ds, out, key=source_hash(inp, format=args.format))
    print(format_stats(ds.stats()))
    print(f"cache {out} sha256 {sha256(out)}")
    return 0


def train_run(cfg: RunConfig, quiet: bool = False) -> dict:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.txt").write_text(dump_config(cfg))
    ds = build_dataset(cfg)
    mcfg = cfg.model_config(ds.num_items)
    log_path = out / "train_log.csv"
    if log_path.exists():
        log_path.unlink()
    tcfg = cfg.train_config(log_path=str(log_path), checkpoint_dir=str(out))
    trainer = Trainer(HyenaRecModel(mcfg, seed=cfg.seed), ds, tcfg)
    trainer.extra_meta = {f"run.{f.name}": format_value(getattr(cfg, f.name)) for f in dataclasses.fields(cfg)}
    st = trainer.fit()
    trainer.save(out / "final.ckpt")
    res = evaluate(trainer.model, ds, "test", tcfg.ks, mask_seen=tcfg.mask_seen)
    metrics_path = out / "test_metrics.csv"
    if metrics_path.exists():
        metrics_path.unlink()
    write_results(metrics_path, res, ds.name, "test", cfg.seed)
    write_manifest(out)
    summary = {"steps": st.step, "wall_seconds": st.wall_seconds, "best_valid": st.early.best,
               "best_step": st.early.best_step, **{f"test_{k}": v for k, v in res.metrics().items()}}
    if not quiet:
        for k, v in summary.items():
            print(f"{k} = {v:.6g}" if isinstance(v, float) else f"{k} = {v}")
    return summary


def cmd_train(args) -> int:
    cfg = run_config_from_args(args)
    _set_threads(cfg.threads)
    train_run(cfg)
    return 0


def _run_config_from_meta(meta: dict) -> RunConfig:
    lines = [f"{k[4:]} = {v}" for k, v in meta.items() if k.startswith("run.")]
    return RunConfig(**parse_lines(lines)) if lines else RunConfig()


def cmd_eval(args) -> int:
    path = Path(args.checkpoint)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    model, _, meta = load_model(path)
    cfg = _run_config_from_meta(meta)
    over = parse_overrides(args.override)
    if args.dataset is not None:
        over["dataset"] = args.dataset
    if args.format is not None:
        over["format"] = args.format
    if args.no_mask_seen:
        over["mask_seen"] = False
    cfg = dataclasses.replace(cfg, **over)
    ds = build_dataset(cfg)
    if ds.num_items != model.config.num_items:
        raise DataError(f"checkpoint has {model.config.num_items} items, dataset has {ds.num_items}")
    ks = tuple(_ints(args.k))
    mask_seen = cfg.mask_seen and not cfg.is_copy_task
    res = evaluate(model, ds, args.stage, ks, mask_seen=mask_seen)
    for name, v in res.metrics().items():
        print(f"{name} = {v:.6f}")
    out = Path(args.output_dir or path.parent)
    out.mkdir(parents=True, exist_ok=True)
    target = out / f"eval_{args.stage}.csv"
    if target.exists():
        target.unlink()
    write_results(target, res, ds.name, args.stage, cfg.seed)
    write_manifest(out)
    return 0


ABLATION_VARIANTS = {
    "full": {},
    "no-pk": {"ablate": ("no-pk",)},
    "no-glu": {"ablate": ("no-glu",)},
    "fourier": {"basis": "fourier"},
    "chebyshev": {"basis": "chebyshev"},
}


def run_ablation(cfg: RunConfig, variants=None) -> list[dict]:
    """Train each variant with the same seed and budget; one summary row per variant."""
    rows = []
    base_out = Path(cfg.output_dir)
    for name in variants or ABLATION_VARIANTS:
        vcfg = dataclasses.replace(cfg, output_dir=str(base_out / name), **ABLATION_VARIANTS[name])
        summary = train_run(vcfg, quiet=True)
        rows.append({"variant": name, **summary})
        log.info("ablation %s best valid %s = %.4f", name, cfg.monitor, summary["best_valid"])
    return rows


def cmd_ablate(args) -> int:
    cfg = run_config_from_args(args)
    _set_threads(cfg.threads)
    variants = args.variants.split(",") if args.variants else None
    unknown = set(variants or ()) - set(ABLATION_VARIANTS)
    if unknown:
        raise ConfigError(f"unknown variants {sorted(unknown)}; choose from {list(ABLATION_VARIANTS)}")
    rows = run_ablation(cfg, variants)
    out = Path(cfg.output_dir)
    with (out / "ablation.csv").open("w", newline="") as f:
        w = csv.DictWriter(f, list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        print(f"{r['variant']:>10}  valid {cfg.monitor} = {r['best_valid']:.4f}")
    write_manifest(out)
    return 0


def cmd_bench(args) -> int:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    threads = None if args.parallel else args.threads
    records = []
    for kind in args.mixer.split(","):
        recs = bench.time_mixer(kind, args.B, args.D, _ints(args.L), args.warmup, args.reps,
                                order=args.order, K=args.K, seed=args.seed, threads=threads,
                                scope=args.scope)
        records.extend(recs)
        print(f"{kind}: time slope {recs[0].fitted_exponent:.3f}, memory slope {bench.memory_slope(recs):.3f}")
        for r in recs:
            print(f"  L={r.L:>5}  median {r.median_ms:10.2f} ms  p90 {r.p90_ms:10.2f} ms  peak {r.peak_bytes / 2**20:8.1f} MiB")
    name = "bench_parallel.csv" if args.parallel else "bench.csv"
    bench.write_bench_csv(out / name, records)
    write_manifest(out)
    return 0


def cmd_inspect_filters(args) -> int:
    path = Path(args.checkpoint)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    model, _, _ = load_model(path)
    banks = [[bank for bank in blk.mixer.banks] for blk in model.blocks if hasattr(blk.mixer, "banks")]
    if not banks:
        raise ConfigError("checkpoint has no long-convolution filters (attention mixer)")
    if not 0 <= args.layer < len(banks) or not 0 <= args.stage < len(banks[args.layer]):
        raise ConfigError(f"no filter bank at layer {args.layer} stage {args.stage}")
    bank = banks[args.layer][args.stage]
    k = bank.kernels().data
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(("channel", "tap", "value"))
        for c in range(k.shape[0]):
            for t in range(k.shape[1]):
                w.writerow((c, t, repr(float(k[c, t]))))
    energy_path = Path(args.energy) if args.energy else out.with_name(out.stem + "_energy.csv")
    curve = energy_curve(bank.coeffs, bank.basis, per_channel=True)
    with energy_path.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(("channel", "K", "energy_fraction"))
        for c in range(curve.shape[0]):
            for n in range(curve.shape[1]):
                w.writerow((c, n + 1, repr(float(curve[c, n]))))
    print(f"wrote {k.shape[0] * k.shape[1]} kernel rows to {out} and energy curves to {energy_path}")
    return 0


def cmd_popularity(args) -> int:
    cfg = run_config_from_args(args)
    ds = build_dataset(cfg)
    ks = tuple(_ints(args.k))
    res = evaluate(PopularityScorer(ds, cfg.max_len), ds, args.stage, ks, mask_seen=cfg.mask_seen)
    for name, v in res.metrics().items():
        print(f"{name} = {v:.6f}")
    return 0


# -- parser -----------------------------------------------------------------------
def _add_run_args(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--dataset", help="interaction file path, or 'copy' for the synthetic copy task")
    p.add_argument("--format", choices=("csv", "tsv", "ml1m", "cache"))
    p.add_argument("--max-steps", type=int)
    p.add_argument("--subsample-users", type=int)
    p.add_argument("--mixer", choices=("hyena", "attention"))
    p.add_argument("--ablate", action="append", choices=("no-pk", "no-glu"))
    p.add_argument("--basis", choices=("legendre", "chebyshev", "fourier"))
    p.add_argument("--threads", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-mask-seen", action="store_true", help="rank history items too")
    p.add_argument("--output-dir")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hyenarec", description="Long-convolution sequential recommender.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="filter and split an interaction log into a cache file")
    p.add_argument("--input", required=True)
    p.add_argument("--format", default="csv", choices=("csv", "tsv", "ml1m"))
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train a model and report test metrics")
    _add_run_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset")
    p.add_argument("--format", choices=("csv", "tsv", "ml1m", "cache"))
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--stage", default="test", choices=("valid", "test"))
    p.add_argument("--k", default="10,20")
    p.add_argument("--no-mask-seen", action="store_true", help="rank history items too")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train the full model and each ablation with one budget and seed")
    _add_run_args(p)
    p.add_argument("--variants", help=f"comma list from {','.join(ABLATION_VARIANTS)}")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("bench", help="time one mixer block against sequence length")
    p.add_argument("--mixer", default="hyena,attention")
    p.add_argument("--L", default="256,512,1024,2048,4096")
    p.add_argument("--B", type=int, default=8)
    p.add_argument("--D", type=int, default=64)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--K", type=int, default=64)
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--parallel", action="store_true", help="leave the BLAS thread count unpinned")
    p.add_argument("--scope", default="mixer", choices=bench.SCOPES,
                   help="time the mixer sublayer alone or the whole block with its FFN")
    p.add_argument("--output-dir", default="runs/bench")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("inspect-filters", help="dump learned kernels and energy curves")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--energy")
    p.add_argument("--layer", type=int, default=0)
    p.add_argument("--stage", type=int, default=0)
    p.set_defaults(func=cmd_inspect_filters)

    p = sub.add_parser("popularity", help="evaluate the popularity baseline")
    _add_run_args(p)
    p.add_argument("--stage", default="test", choices=("valid", "test"))
    p.add_argument("--k", default="10,20")
    p.set_defaults(func=cmd_popularity)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except HyenaRecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
