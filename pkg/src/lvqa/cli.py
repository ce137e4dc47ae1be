"""Command-line harness: gen, train, eval, bench, ablate.

Every command writes its resolved configuration and a version stamp next
to its outputs; identical configs and seeds reproduce outputs bit for bit
(wall-clock columns excepted).  Exit codes: 0 success, 1 validation
error, 2 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, figures, nd
from .config import RunConfig, resolve, write_resolved
from .errors import NumericError, PipelineError
from .metrics import write_predictions
from .pipeline import Pipeline, evaluate, sparse_event_mean, train
from .synthbench import (GenSpec, build_instance, load_split, write_dataset)

BENCH_COLUMNS = "arm,frames,visual_tokens,arena_bytes,runtime_seconds,k_acc"
ABLATE_COLUMNS = "arm,split,metric,value"
TRAIN_COLUMNS = "step,l_qa,l_ret,l_policy,total"
EVAL_COLUMNS = "split,metric,value"

EPILOG = f"""\
output schemas (stable):
  gen    -> dataset dir: manifest.txt, <split>/inst_*.frames, <split>/inst_*.qa
  train  -> checkpoint.bin, train_log.csv ({TRAIN_COLUMNS}), train_loss.png
  eval   -> report.csv ({EVAL_COLUMNS}), records.csv, predictions.tsv
            (instance_id<TAB>answer), eval_metrics.png
  bench  -> bench.csv ({BENCH_COLUMNS}), bench_scalability.png
  ablate -> ablation.csv ({ABLATE_COLUMNS}; split also takes sparse_event),
            ablation.png, arms/<arm>/checkpoint.bin

config file: line-oriented section.key=value; unknown keys are rejected.
metric note: meteor is reported as meteor_simplified (stem matching, no
synonym dictionary).
"""


def _version_stamp() -> str:
    try:
        described = subprocess.run(["git", "describe", "--always", "--dirty"],
                                   capture_output=True, text=True, timeout=5,
                                   cwd=Path(__file__).parent).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        described = ""
    return f"lvqa {__version__}" + (f" ({described})" if described else "")


def _prepare_out(out: str, force: bool) -> Path:
    path = Path(out)
    if path.exists() and any(path.iterdir()) and not force:
        raise FileExistsError(f"output dir {path} is not empty (use --force)")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _stamp(cfg: RunConfig, out: Path) -> None:
    write_resolved(cfg, out / "resolved_config.txt")
    (out / "version.txt").write_text(_version_stamp() + "\n")


def _write_csv(path: Path, header: str, rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header.split(","))
        for row in rows:
            writer.writerow(row)


# commands --------------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = resolve(args.config, args.seed)
    counts = {"train": cfg["synthbench.train_instances"],
              "val": cfg["synthbench.val_instances"],
              "test": cfg["synthbench.test_instances"]}
    out = _prepare_out(args.out, args.force)
    write_dataset(out, cfg.gen_spec(), counts, cfg["run.seed"])
    _stamp(cfg, out)
    print(f"dataset written to {out} "
          f"(train={counts['train']} val={counts['val']} test={counts['test']})")
    return 0


def cmd_train(args) -> int:
    cfg = resolve(args.config, args.seed)
    out = _prepare_out(args.out, args.force)
    _stamp(cfg, out)
    instances = load_split(args.dataset, "train")
    pipe = Pipeline.build(cfg)
    print(f"answerer parameters: {pipe.answerer.param_count}")
    rows: list[dict] = []
    try:
        rows = train(pipe, instances, on_step=rows.append)
    except NumericError:
        pipe.save(out / "checkpoint.bin")
        _write_train_log(out, rows)
        raise
    pipe.save(out / "checkpoint.bin")
    _write_train_log(out, rows)
    if not args.no_figures and rows:
        figures.render_training_curves(rows, out / "train_loss.png")
    print(f"checkpoint written to {out / 'checkpoint.bin'} "
          f"({len(rows)} samples seen)")
    return 0


def _write_train_log(out: Path, rows: list[dict]) -> None:
    _write_csv(out / "train_log.csv", TRAIN_COLUMNS,
               ([r["step"], repr(r["l_qa"]), repr(r["l_ret"]),
                 repr(r["l_policy"]), repr(r["total"])] for r in rows))


def cmd_eval(args) -> int:
    cfg = resolve(args.config, args.seed)
    out = _prepare_out(args.out, args.force)
    _stamp(cfg, out)
    instances = load_split(args.dataset, args.split)
    pipe = Pipeline.load(args.checkpoint, cfg)
    report, predictions = evaluate(pipe, instances)
    report.write_csv(out / "report.csv")
    report.write_records_csv(out / "records.csv")
    write_predictions(out / "predictions.tsv", predictions)
    if not args.no_figures:
        figures.render_eval_report(report.rows(), out / "eval_metrics.png")
    for split, metric, value in report.rows():
        print(f"{split:16s} {metric:18s} {value:7.2f}")
    return 0


ARMS = (
    ("base", {"pipeline.use_ftc": False, "pipeline.use_tg": False,
              "pipeline.use_pi": False}),
    ("ftc", {"pipeline.use_tg": False, "pipeline.use_pi": False}),
    ("ftc_tg", {"pipeline.use_pi": False, "tms.policy_fixed": "uniform"}),
    ("ftc_tg_pi", {}),
)


def _arm_config(cfg: RunConfig, overrides: dict) -> RunConfig:
    values = dict(cfg.values)
    values.update(overrides)
    return RunConfig(values)


def cmd_ablate(args) -> int:
    cfg = resolve(args.config, args.seed)
    out = _prepare_out(args.out, args.force)
    _stamp(cfg, out)
    train_insts = load_split(args.dataset, "train")
    test_insts = load_split(args.dataset, args.split)
    rows = []
    for arm, overrides in ARMS:
        arm_cfg = _arm_config(cfg, overrides)
        arm_dir = out / "arms" / arm
        arm_dir.mkdir(parents=True, exist_ok=True)
        write_resolved(arm_cfg, arm_dir / "resolved_config.txt")
        pipe = Pipeline.build(arm_cfg)
        train(pipe, train_insts)
        pipe.save(arm_dir / "checkpoint.bin")
        report, _ = evaluate(pipe, test_insts)
        for split, metric, value in report.rows():
            rows.append({"arm": arm, "split": split, "metric": metric,
                         "value": value})
        rows.append({"arm": arm, "split": "sparse_event", "metric": "k_acc",
                     "value": sparse_event_mean(report)})
        print(f"{arm:10s} sparse-event K-ACC {rows[-1]['value']:6.2f}")
    _write_csv(out / "ablation.csv", ABLATE_COLUMNS,
               ([r["arm"], r["split"], r["metric"], f"{r['value']:.2f}"]
                for r in rows))
    if not args.no_figures:
        figures.render_ablation(rows, out / "ablation.png")
    return 0


def _bench_spec(cfg: RunConfig, frames: int) -> GenSpec:
    base = cfg.gen_spec()
    return GenSpec(episode_frames=frames, episodes_per_instance=1,
                   fps=base.fps, height=base.height, width=base.width,
                   channels=base.channels, event_amplitude=base.event_amplitude,
                   noise_std=base.noise_std, fluid_frames=base.fluid_frames,
                   motion_frames=base.motion_frames,
                   instrument_frames=base.instrument_frames,
                   phase_frames=base.phase_frames, patch_t=base.patch_t,
                   patch_s=base.patch_s)


def _bench_arm(pipe: Pipeline, cfg: RunConfig, frames: int, samples: int,
               arm: str) -> dict:
    spec = _bench_spec(cfg, frames)
    ftc = pipe.stack.cfg
    tokens = (frames // ftc.patch_t) * (spec.height // ftc.patch_s) \
        * (spec.width // ftc.patch_s)
    rng = np.random.default_rng([cfg["run.seed"], 55, frames])
    correct = 0
    nd.arena_reset()
    started = time.perf_counter()
    for i in range(samples):
        inst = build_instance([cfg["run.seed"], 55, frames, i], spec,
                              with_out_of_template=False,
                              instance_id=f"bench/{frames}/{i}")
        qa = inst.qas[i % 3]  # cycle the sparse-event question types
        text, _ = pipe.answer_question(inst.video, qa, rng)
        from .metrics import keyword_accuracy
        correct += keyword_accuracy(text, qa.keywords)
    runtime = time.perf_counter() - started
    return {"arm": arm, "frames": frames, "visual_tokens": tokens,
            "arena_bytes": nd.arena_bytes(), "runtime_seconds": runtime,
            "k_acc": 100.0 * correct / samples}


def cmd_bench(args) -> int:
    cfg = resolve(args.config, args.seed)
    out = _prepare_out(args.out, args.force)
    _stamp(cfg, out)
    cfg_ftc = _arm_config(cfg, {"pipeline.use_ftc": True})
    cfg_noftc = _arm_config(cfg, {"pipeline.use_ftc": False})
    pipe_ftc = Pipeline.load(args.checkpoint, cfg_ftc)
    if args.checkpoint_noftc:
        pipe_noftc = Pipeline.load(args.checkpoint_noftc, cfg_noftc)
    else:
        print("no --checkpoint-noftc given; training the comparison arm")
        if not args.dataset:
            raise PipelineError("--dataset is required to train the no-FTC arm")
        pipe_noftc = Pipeline.build(cfg_noftc)
        train(pipe_noftc, load_split(args.dataset, "train"))
        pipe_noftc.save(out / "checkpoint_noftc.bin")
    rows = []
    for frames in cfg["bench.frames"]:
        for arm, pipe in (("ftc", pipe_ftc), ("no_ftc", pipe_noftc)):
            row = _bench_arm(pipe, cfg, frames, cfg["bench.samples"], arm)
            rows.append(row)
            print(f"{arm:7s} T={frames:5d} tokens={row['visual_tokens']:8d} "
                  f"bytes={row['arena_bytes']:12d} "
                  f"runtime={row['runtime_seconds']:.2f}s "
                  f"k_acc={row['k_acc']:.1f}")
    _write_csv(out / "bench.csv", BENCH_COLUMNS,
               ([r["arm"], r["frames"], r["visual_tokens"], r["arena_bytes"],
                 f"{r['runtime_seconds']:.4f}", f"{r['k_acc']:.2f}"]
                for r in rows))
    if not args.no_figures:
        figures.render_bench(rows, out / "bench_scalability.png")
    return 0


# entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lvqa", epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
        description="long-video QA pipeline: consolidation, grounded "
                    "multi-policy resampling, toy answerer, benchmark, metrics")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, dataset=False, checkpoint=False):
        p.add_argument("--config", default=None, help="section.key=value file")
        p.add_argument("--seed", type=int, default=None, help="global seed")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--force", action="store_true",
                       help="allow writing into a non-empty output directory")
        p.add_argument("--no-figures", action="store_true",
                       help="skip PNG rendering next to the CSV output")
        if dataset:
            p.add_argument("--dataset", required=dataset == "required",
                           help="dataset directory from `lvqa gen`")
        if checkpoint:
            p.add_argument("--checkpoint", required=True,
                           help="parameter checkpoint from `lvqa train`")

    common(sub.add_parser("gen", help="generate a synthetic dataset"))
    common(sub.add_parser("train", help="train the full pipeline"),
           dataset="required")
    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    common(p_eval, dataset="required", checkpoint=True)
    p_eval.add_argument("--split", default="test", choices=("train", "val", "test"))
    p_abl = sub.add_parser("ablate", help="train/evaluate the four component arms")
    common(p_abl, dataset="required")
    p_abl.add_argument("--split", default="test", choices=("val", "test"))
    p_bench = sub.add_parser("bench", help="scalability sweep over input frames")
    common(p_bench, dataset="optional", checkpoint=True)
    p_bench.add_argument("--checkpoint-noftc", default=None,
                         help="checkpoint for the no-FTC arm (else it is trained)")
    return parser


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval,
            "ablate": cmd_ablate, "bench": cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (PipelineError, FileExistsError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except NumericError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
