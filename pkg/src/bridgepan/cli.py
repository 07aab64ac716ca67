"""Batch command-line front end.

Subcommands wire ingestion, Wald degradation, training, sampling, baselines,
metric reports, and the invariant suites into deterministic batch workflows.
Every run writes its resolved configuration next to its outputs; all file
writes go through temp-then-rename. Exit codes: 0 ok, 2 usage, 3 format,
4 numeric, 5 verification failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .bridge import build_schedule
from .errors import (
    ConfigurationError,
    ContractViolation,
    DimensionError,
    DomainError,
    FormatError,
    NumericError,
)
from .metrics import classical_pansharpen, no_reference_metrics, reference_metrics
from .pipeline import FusionModel, SampleConfig, TrainConfig, sample, train
from .raster import (
    WaldPair,
    export_png,
    import_png,
    make_wald_pair,
    read_raster,
    upsample_bicubic,
    write_raster,
)

_USAGE_EXIT = 2
_FORMAT_EXIT = 3
_NUMERIC_EXIT = 4
_VERIFY_EXIT = 5


def _worker_count() -> int:
    val = os.environ.get("BRIDGEPAN_THREADS", "")
    try:
        return max(1, int(val)) if val else max(1, os.cpu_count() or 1)
    except ValueError:
        raise ConfigurationError(f"BRIDGEPAN_THREADS={val!r} is not an integer")


def _load_raster(path: str):
    return import_png(path) if path.lower().endswith(".png") else read_raster(path)


def _write_json(path: str, payload: dict) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    os.replace(tmp, path)


def _write_config(out_dir: str, command: str, args: dict) -> None:
    _write_json(os.path.join(out_dir, f"{command}_config.json"),
                {"command": command, **args})


# -- subcommands ------------------------------------------------------------------


def cmd_degrade(args) -> int:
    ms = _load_raster(args.ms)
    pan = _load_raster(args.pan)
    pair = make_wald_pair(ms, pan, args.ratio)
    os.makedirs(args.out, exist_ok=True)
    write_raster(os.path.join(args.out, "ms_reduced.bpr"), pair.ms_reduced)
    write_raster(os.path.join(args.out, "pan_reduced.bpr"), pair.pan_reduced)
    write_raster(os.path.join(args.out, "reference.bpr"), pair.reference)
    _write_json(os.path.join(args.out, "manifest.json"), {
        "ratio": args.ratio,
        "ms_reduced": {"bands": pair.ms_reduced.bands,
                       "height": pair.ms_reduced.height,
                       "width": pair.ms_reduced.width},
        "pan_reduced": {"height": pair.pan_reduced.height,
                        "width": pair.pan_reduced.width},
        "reference": {"bands": pair.reference.bands,
                      "height": pair.reference.height,
                      "width": pair.reference.width},
        "band_names": pair.reference.band_names,
    })
    _write_config(args.out, "degrade",
                  {"ms": args.ms, "pan": args.pan, "ratio": args.ratio, "out": args.out})
    return 0


def _scan_dataset(data_dir: str) -> list[WaldPair]:
    def load_triple(d):
        names = ("ms_reduced.bpr", "pan_reduced.bpr", "reference.bpr")
        if not all(os.path.exists(os.path.join(d, n)) for n in names):
            return None
        manifest_path = os.path.join(d, "manifest.json")
        ratio = None
        if os.path.exists(manifest_path):
            with open(manifest_path) as fh:
                ratio = json.load(fh).get("ratio")
        ms = read_raster(os.path.join(d, names[0]))
        pan = read_raster(os.path.join(d, names[1]))
        ref = read_raster(os.path.join(d, names[2]))
        if ratio is None:
            ratio = pan.height // ms.height
        return WaldPair(ms_reduced=ms, pan_reduced=pan, reference=ref, ratio=int(ratio))

    pairs = []
    direct = load_triple(data_dir)
    if direct is not None:
        pairs.append(direct)
    for entry in sorted(os.listdir(data_dir)):
        sub = os.path.join(data_dir, entry)
        if os.path.isdir(sub):
            triple = load_triple(sub)
            if triple is not None:
                pairs.append(triple)
    return pairs


def cmd_train(args) -> int:
    dataset = _scan_dataset(args.data_dir)
    if not dataset:
        raise ConfigurationError(f"no WaldPair triples found under {args.data_dir!r}")
    cfg = TrainConfig(lr=args.lr, batch=args.batch, steps=args.steps,
                      gamma=args.gamma, t_steps=args.t_steps, seed=args.seed,
                      variant=args.variant)
    model = FusionModel(args.variant, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    if cfg.steps > 0:
        train(dataset, model, cfg, log_path=os.path.join(args.out, "train_log.csv"))
    model.save(os.path.join(args.out, "checkpoint.ckpt"))
    _write_config(args.out, "train", {
        "data_dir": args.data_dir, "variant": args.variant, "steps": args.steps,
        "seed": args.seed, "lr": args.lr, "batch": args.batch,
        "gamma": args.gamma, "t_steps": args.t_steps, "out": args.out,
        "samples": len(dataset),
    })
    return 0


def cmd_sharpen(args) -> int:
    ms = _load_raster(args.ms)
    pan = _load_raster(args.pan)
    model = FusionModel.load(args.ckpt)
    scfg = SampleConfig(nfe=args.nfe, eta=args.eta, mode=args.mode)
    sched = build_schedule(args.t_steps)
    oracle = _load_raster(args.oracle) if args.oracle else None
    fused = sample(ms, pan, model, scfg, sched, oracle_ref=oracle)
    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    os.makedirs(out_dir, exist_ok=True)
    write_raster(args.out, fused)
    if args.png:
        export_png(args.png, fused, bands=tuple(args.preview_bands)
                   if args.preview_bands else None)
    _write_config(out_dir, "sharpen", {
        "ms": args.ms, "pan": args.pan, "ckpt": args.ckpt, "nfe": args.nfe,
        "eta": args.eta, "mode": args.mode, "t_steps": args.t_steps,
        "oracle": args.oracle, "out": args.out,
    })
    return 0


def _aggregate_csv(path: str, reports: list[dict]) -> None:
    keys = sorted({k for r in reports for k in r if k != "per_band"})
    lines = ["metric,mean,std"]
    for k in keys:
        vals = np.array([r[k] for r in reports if k in r], dtype=np.float64)
        lines.append(f"{k},{vals.mean():.8f},{vals.std():.8f}")
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def cmd_eval(args) -> int:
    ref_mode = args.ref is not None
    noref_mode = args.ms is not None or args.pan is not None
    if ref_mode == noref_mode:
        raise ConfigurationError(
            "choose exactly one of reference mode (--ref) or "
            "no-reference mode (--ms with --pan)"
        )
    if ref_mode and args.ratio is None:
        raise ConfigurationError("reference mode requires --ratio")
    if noref_mode and (args.ms is None or args.pan is None or args.ratio is None):
        raise ConfigurationError("no-reference mode requires --ms, --pan, and --ratio")
    fused_paths = args.fused
    refs = args.ref if ref_mode else None
    if ref_mode and len(refs) not in (1, len(fused_paths)):
        raise ConfigurationError("--ref must name one file or one per --fused")
    os.makedirs(args.out, exist_ok=True)

    def one(i, fpath):
        fused = _load_raster(fpath)
        if ref_mode:
            ref = _load_raster(refs[i % len(refs)])
            rep = reference_metrics(fused, ref, args.ratio)
        else:
            rep = no_reference_metrics(fused, _load_raster(args.ms),
                                       _load_raster(args.pan), args.ratio)
        return rep.as_dict()

    with ThreadPoolExecutor(max_workers=min(_worker_count(), len(fused_paths))) as pool:
        reports = list(pool.map(lambda t: one(*t), enumerate(fused_paths)))
    for fpath, rep in zip(fused_paths, reports):
        stem = os.path.splitext(os.path.basename(fpath))[0]
        _write_json(os.path.join(args.out, f"{stem}.metrics.json"), rep)
    _aggregate_csv(os.path.join(args.out, "metrics_aggregate.csv"), reports)
    _write_config(args.out, "eval", {
        "fused": fused_paths, "ref": refs, "ms": args.ms, "pan": args.pan,
        "ratio": args.ratio, "out": args.out,
    })
    return 0


def cmd_baseline(args) -> int:
    ms = _load_raster(args.ms)
    pan = _load_raster(args.pan)
    methods = ["sfim", "ihs", "gs", "brovey"] if args.method == "all" else [args.method]
    os.makedirs(args.out, exist_ok=True)

    def one(method):
        fused = classical_pansharpen(ms, pan, args.ratio, method)
        write_raster(os.path.join(args.out, f"{method}.bpr"), fused)
        if args.ref:
            rep = reference_metrics(fused, _load_raster(args.ref), args.ratio)
            return method, rep.as_dict()
        return method, {}

    with ThreadPoolExecutor(max_workers=min(_worker_count(), len(methods))) as pool:
        results = list(pool.map(one, methods))
    lines = ["method,psnr,ssim,ergas,sam"]
    for method, rep in results:
        if rep:
            lines.append(f"{method},{rep['psnr']:.6f},{rep['ssim']:.6f},"
                         f"{rep['ergas']:.6f},{rep['sam']:.6f}")
        else:
            lines.append(f"{method},,,,")
    tmp = os.path.join(args.out, "baselines.csv.tmp")
    with open(tmp, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, os.path.join(args.out, "baselines.csv"))
    _write_config(args.out, "baseline", {
        "ms": args.ms, "pan": args.pan, "ratio": args.ratio,
        "method": args.method, "ref": args.ref, "out": args.out,
    })
    return 0


def cmd_verify(args) -> int:
    from .verify import SUITES, run_suites

    names = list(SUITES) if args.suite == "all" else [args.suite]
    ok, lines = run_suites(names)
    print("\n".join(lines))
    print("verification:", "PASS" if ok else "FAIL")
    return 0 if ok else _VERIFY_EXIT


# -- wiring ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bridgepan",
        description="Band-agnostic pansharpening: degradation, training, "
                    "sampling, baselines, metrics, verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", help="build a reduced-scale WaldPair from MS+PAN")
    p.add_argument("--ms", required=True)
    p.add_argument("--pan", required=True)
    p.add_argument("--ratio", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_degrade)

    p = sub.add_parser("train", help="train a fusion model on WaldPair triples")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--variant", default="micro",
                   choices=["micro", "t", "s", "b", "l"])
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--gamma", type=float, default=0.001)
    p.add_argument("--t-steps", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("sharpen", help="fuse one MS/PAN pair with a checkpoint")
    p.add_argument("--ms", required=True)
    p.add_argument("--pan", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--nfe", type=int, default=3)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--mode", default="state", choices=["z0", "eps", "state"])
    p.add_argument("--t-steps", type=int, default=1000)
    p.add_argument("--oracle", default=None,
                   help="reference raster for oracle-denoiser verification")
    p.add_argument("--png", default=None, help="optional preview PNG path")
    p.add_argument("--preview-bands", type=int, nargs="+", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_sharpen)

    p = sub.add_parser("eval", help="reference or no-reference metric reports")
    p.add_argument("--fused", nargs="+", required=True)
    p.add_argument("--ref", nargs="+", default=None)
    p.add_argument("--ms", default=None)
    p.add_argument("--pan", default=None)
    p.add_argument("--ratio", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("baseline", help="classical pansharpening methods")
    p.add_argument("--ms", required=True)
    p.add_argument("--pan", required=True)
    p.add_argument("--ratio", type=int, required=True)
    p.add_argument("--method", default="all",
                   choices=["sfim", "ihs", "gs", "brovey", "all"])
    p.add_argument("--ref", default=None, help="optional reference for the CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_baseline)

    p = sub.add_parser("verify", help="run the invariant suites")
    p.add_argument("--suite", default="all",
                   choices=["bridge", "kernels", "grad", "moe", "all"])
    p.set_defaults(fn=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return _USAGE_EXIT if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (ConfigurationError, DimensionError, ContractViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _USAGE_EXIT
    except FormatError as exc:
        offset = f" (byte offset {exc.byte_offset})" if exc.byte_offset is not None else ""
        print(f"format error: {exc}{offset}", file=sys.stderr)
        return _FORMAT_EXIT
    except (NumericError, DomainError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return _NUMERIC_EXIT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _USAGE_EXIT


if __name__ == "__main__":
    sys.exit(main())
