"""Command-line experiment runner.

    semcom train     --config desk.cfg --out-dir runs/rec
    semcom evaluate  --checkpoint runs/rec/model.ckpt --snr 0,6,12,18 --visualize
    semcom infer     --checkpoint runs/rec/model.ckpt --image photo.png --requirement "restore the photo"
    semcom kb-match  "segment the objects"

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from . import config as config_mod
from .checkpoint import CheckpointError
from .config import ConfigError
from .data import DataError, load_image, make_dataset, save_image, save_mask
from .task_kb import EmbedderError, TaskKB, TaskKBError
from .training import NumericalError, fit, load_model

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _snr_list(text: str) -> list:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        out.append(config_mod.NOISELESS if part.lower() == config_mod.NOISELESS else float(part))
    if not out:
        raise ConfigError("--snr needs at least one value")
    return out


def _load_for_eval(args):
    cfg = config_mod.load_config(args.config) if args.config else None
    model, cfg, _ = load_model(args.checkpoint, cfg, force=getattr(args, "force", False))
    if args.steps is not None and args.steps < 1:
        raise ConfigError("--steps must be >= 1")
    return model, cfg


def cmd_train(args) -> int:
    cfg = config_mod.load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["training.seed"] = args.seed
    if args.steps is not None:
        overrides["recon_decoder.refinement_steps"] = args.steps
    if overrides:
        cfg = cfg.replace(**overrides)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.cfg").write_text(cfg.to_text(), encoding="utf-8")

    def progress(row):
        print(f"epoch {row['epoch']:>4}  loss {row['loss']}  lr {row['lr']}  t {row['wall_time']}s", flush=True)

    fit(cfg, log_path=out / "train_log.csv", checkpoint_path=out / "model.ckpt", progress=progress)
    print(f"wrote {out / 'model.ckpt'} and {out / 'train_log.csv'}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .evaluation import plot_sweep, sweep, visualize, write_csv

    model, cfg = _load_for_eval(args)
    task = args.task or cfg.training.task
    if task not in model.tasks:
        raise ConfigError(f"task mismatch: checkpoint decodes {model.tasks}, asked for {task}")
    dataset = make_dataset(cfg, "val")
    if task == "SEGMENT" and not getattr(dataset, "has_masks", False):
        raise ConfigError("task mismatch: SEGMENT evaluation needs a dataset with masks")
    snrs = _snr_list(args.snr) if args.snr else list(cfg.eval.snr_list)
    seed = cfg.eval.seed if args.seed is None else args.seed
    rows = sweep(model, dataset, task, snrs, seed=seed, batch_size=cfg.eval.batch_size, steps=args.steps,
                 max_value=cfg.eval.max_value, bound_bits=cfg.eval.bound_bits)
    out = Path(args.out_dir)
    csv_path = write_csv(rows, out / f"eval_{task.lower()}.csv")
    plot_path = plot_sweep(rows, out / f"eval_{task.lower()}.png")
    for r in rows:
        metric = f"psnr {r['psnr_db']:.3f} dB" if task == "RECONSTRUCT" else f"mIoU {r['mean_iou']:.4f}"
        print(f"snr {r['snr_db']:>6} dB  {metric}  bits {r['bandwidth_bits']:.0f}  compliant {r['bound_compliant']}")
    print(f"wrote {csv_path} and {plot_path}")
    if args.visualize:
        path = visualize(model, dataset, task, args.visualize_snr, seed, out / f"visual_{task.lower()}_snr{args.visualize_snr:g}.png",
                         steps=args.steps)
        print(f"wrote {path}")
    return EXIT_OK


def cmd_infer(args) -> int:
    model, cfg = _load_for_eval(args)
    kb = TaskKB.from_config(cfg.task_kb)
    ranked = kb.scores(args.requirement)
    instr = ranked[0][0]
    print(f"instruction: {instr.id} (similarity {ranked[0][1]:.4f})")
    if instr.id not in model.tasks:
        raise ConfigError(f"task mismatch: requirement routed to {instr.id}, checkpoint decodes {model.tasks}")
    image = load_image(args.image, (cfg.image.height, cfg.image.width))
    x = torch.from_numpy(image).permute(2, 0, 1).unsqueeze(0)
    snr = args.snr if args.snr is not None else cfg.channel.snr_db
    snr = config_mod.NOISELESS if str(snr).lower() == config_mod.NOISELESS else float(snr)
    model.channel.reseed(cfg.eval.seed if args.seed is None else args.seed)
    with torch.no_grad():
        out = model(x, instr, snr_db=snr, steps=args.steps)
    dest = Path(args.out_dir)
    dest.mkdir(parents=True, exist_ok=True)
    stem = Path(args.image).stem
    if instr.id == "RECONSTRUCT":
        path = dest / f"{stem}_reconstruction.png"
        save_image(path, out[0].permute(1, 2, 0).numpy())
    else:
        path = dest / f"{stem}_mask.png"
        save_mask(path, out[0].argmax(0).numpy().astype(np.uint8))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_kb_match(args) -> int:
    cfg = config_mod.load_config(args.config).task_kb if args.config else config_mod.TaskKBConfig()
    kb = TaskKB.from_config(cfg)
    for instr, score in kb.scores(args.requirement):
        print(f"{instr.id}\t{score:.6f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="semcom", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one system end to end")
    t.add_argument("--config", required=True)
    t.add_argument("--out-dir", default="runs/train")
    t.add_argument("--seed", type=int)
    t.add_argument("--steps", type=int, help="refinement steps K of the reconstruction decoder")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="SNR sweep to CSV and plot")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--config", help="experiment config (default: the one embedded in the checkpoint)")
    e.add_argument("--snr", help="comma-separated SNR list in dB")
    e.add_argument("--seed", type=int)
    e.add_argument("--steps", type=int)
    e.add_argument("--task", choices=config_mod.TASKS)
    e.add_argument("--out-dir", default="runs/eval")
    e.add_argument("--visualize", action="store_true", help="also write side-by-side images")
    e.add_argument("--visualize-snr", type=float, default=18.0)
    e.add_argument("--force", action="store_true", help="load despite a config-hash mismatch")
    e.set_defaults(func=cmd_evaluate)

    i = sub.add_parser("infer", help="route a requirement and run one image")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--image", required=True)
    i.add_argument("--requirement", required=True)
    i.add_argument("--config")
    i.add_argument("--snr")
    i.add_argument("--seed", type=int)
    i.add_argument("--steps", type=int)
    i.add_argument("--out-dir", default="runs/infer")
    i.set_defaults(func=cmd_infer)

    k = sub.add_parser("kb-match", help="score a requirement against every task instruction")
    k.add_argument("requirement")
    k.add_argument("--config")
    k.set_defaults(func=cmd_kb_match)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, TaskKBError, CheckpointError, EmbedderError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
