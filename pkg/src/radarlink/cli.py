"""Command-line entry point: dataset generation, training, sweeps, demos.

Subcommands: generate-dataset, train, sweep, detect-demo.  Configuration
comes from a flat key-value file (see config.SCHEMA); the RSEED
environment variable and --seed/--trials flags override it.  Exit codes:
0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .channel import UlaConfig
from .config import ConfigError, RunConfig, load_config, override_seed, override_trials
from .detection import dump_correlator_csv
from .fmcw import synthesize_rx
from .neural import (
    BUILDERS,
    load_checkpoint,
    save_checkpoint,
    train,
    write_history_csv,
)
from .scenario import (
    NN_PREDICTORS,
    PREDICTOR_KINDS,
    generate_dataset,
    make_scene,
    prepare_training_arrays,
    read_dataset,
    read_split_manifest,
    run_campaign,
    write_results_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _load_run_config(path, args) -> RunConfig:
    cfg = load_config(path)
    env_seed = os.environ.get("RSEED")
    if env_seed is not None:
        try:
            cfg = override_seed(cfg, int(env_seed))
        except ValueError:
            raise ConfigError(f"RSEED must be an integer, got {env_seed!r}")
    if getattr(args, "seed", None) is not None:
        cfg = override_seed(cfg, args.seed)
    if getattr(args, "trials", None) is not None:
        cfg = override_trials(cfg, args.trials)
    if getattr(args, "jobs", None) is not None:
        cfg = RunConfig(
            sim=cfg.sim,
            train=cfg.train,
            n_scenes=cfg.n_scenes,
            train_fraction=cfg.train_fraction,
            jobs=args.jobs,
            raw_items=cfg.raw_items,
        )
    return cfg


def cmd_generate_dataset(args) -> int:
    cfg = _load_run_config(args.config, args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    probe = out_dir / ".write_probe"
    try:
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        print(f"error: output directory not writable: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    summary = generate_dataset(
        cfg.sim, cfg.n_scenes, cfg.sim.campaign.seed, out_dir
    )
    print(
        f"wrote {summary.n_pairs_written} pairs from {summary.n_scenes} scenes "
        f"({summary.n_discarded} undetected vehicles discarded)"
    )
    for variant, path in summary.files.items():
        print(f"  {variant}: {path}")
    print(f"  split manifest: {summary.manifest}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_run_config(args.config, args)
    variant = args.variant
    dataset_path = Path(args.dataset_dir) / f"{variant}.rcpd"
    if not dataset_path.exists():
        print(f"error: no dataset for variant {variant!r} at {dataset_path}", file=sys.stderr)
        return EXIT_RUNTIME
    file_variant, inputs, targets, _, _, _ = read_dataset(dataset_path)
    if file_variant != variant:
        print(
            f"error: dataset at {dataset_path} holds variant {file_variant!r}, "
            f"requested {variant!r}",
            file=sys.stderr,
        )
        return EXIT_RUNTIME
    manifest = Path(args.dataset_dir) / "split.txt"
    train_idx, val_idx = read_split_manifest(manifest, inputs.shape[0])
    train_set, val_set, norm_const = prepare_training_arrays(
        variant, inputs, targets, train_idx, val_idx
    )
    n = cfg.sim.link.n_rsu
    model = BUILDERS[variant](n, seed=cfg.train.seed)
    model.norm_const = norm_const
    model, history = train(model, train_set, val_set, cfg.train, variant)
    save_checkpoint(args.out, model)
    if args.history:
        write_history_csv(args.history, history, header_lines=cfg.header_lines())
    best = min((h.val_loss for h in history), default=float("nan"))
    print(
        f"trained {variant}: {len(history)} epochs, best validation loss {best:.6e}"
    )
    print(f"checkpoint: {args.out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_run_config(args.config, args)
    needed = {
        PREDICTOR_KINDS[p]
        for p in cfg.sim.campaign.predictors
        if p in NN_PREDICTORS
    }
    models = {}
    for kind in sorted(needed):
        if args.checkpoint_dir is None:
            print(
                f"error: predictor set needs a {kind} checkpoint; pass --checkpoint-dir",
                file=sys.stderr,
            )
            return EXIT_RUNTIME
        path = Path(args.checkpoint_dir) / f"{kind}.ckpt"
        if not path.exists():
            print(f"error: missing checkpoint {path}", file=sys.stderr)
            return EXIT_RUNTIME
        models[kind] = load_checkpoint(path)
    result = run_campaign(cfg.sim, models=models, jobs=cfg.jobs)
    write_results_csv(args.out, result, header_lines=cfg.header_lines())
    print(f"wrote {len(result.rows)} rows to {args.out}")
    print(f"missed-detection probability: {result.p_missed_detection:.4f}")
    for agg in result.aggregates:
        print(
            f"  {agg.protocol_variant}/{agg.predictor_variant} "
            f"t_coh={agg.t_coh_s:g}s: mean sum rate {agg.mean_sum_rate_bps:.4e} bps, "
            f"P_out LOS={agg.p_outage_los:.3f} NLOS={agg.p_outage_nlos:.3f}"
        )
    return EXIT_OK


def cmd_detect_demo(args) -> int:
    cfg = _load_run_config(args.config, args)
    sim = cfg.sim
    seed = sim.campaign.seed
    scene = make_scene(sim.scene, seed)
    capture = synthesize_rx(
        [(a.radar, a.radar_paths) for a in scene.actives],
        UlaConfig(sim.link.n_rsu),
        sim.capture(),
        noise_power_w=sim.radar_rx.noise_power_w,
        seed=seed,
    )
    dump_correlator_csv(args.out, capture, sim.bank(), header_lines=cfg.header_lines())
    rates = ", ".join(
        f"{a.radar.chirp_rate_hz_per_s:.3e}" for a in scene.actives
    )
    print(f"scene with {len(scene.actives)} radars (chirp rates {rates} Hz/s)")
    print(f"wrote per-block lag powers to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radarlink",
        description="Passive-radar-aided mmWave link configuration simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-dataset", help="synthesize covariance feature pairs")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_generate_dataset)

    p = sub.add_parser("train", help="train one translation network")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset-dir", required=True)
    p.add_argument("--variant", required=True, choices=("aps", "eigvec", "covvec"))
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--history", help="optional training-history CSV path")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="Monte Carlo rate/outage sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="results CSV path")
    p.add_argument("--checkpoint-dir", help="directory with {aps,eigvec,covvec}.ckpt")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("detect-demo", help="dump correlator outputs for one scene")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="lag-power CSV path")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_detect_demo)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
