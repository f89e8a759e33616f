"""Command-line interface.

One binary with five subcommands covering the pipeline end to end:

  synth             write a labeled synthetic segment store + annotations
  train-diffusion   fit the noise predictor on a store's preictal segments
  generate          sample synthetic preictal segments from a checkpoint
  train-classifier  balance a store and fit one classifier family
  evaluate          leave-one-seizure-out alarm-level evaluation

Every command takes `--config FILE` (JSON) plus repeatable
`--set section.key=value` overrides; overrides win.  The fully resolved
config is logged to stderr.  Exit codes: 0 success, 2 config error, 3 data
error (malformed or unreadable files), 4 protocol violation.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .balance import BalancePlan, apply_plan
from .classifiers import ARCHITECTURES, DilatedCnnClassifier, MlpClassifier, \
    TransformerClassifier
from .config import apply_overrides, describe_defaults, load_config, resolved_json
from .dataset import (
    PREICTAL,
    DatasetSpec,
    Segment,
    admit_patient,
    assign_seizures,
    label_segments,
    merge_seizures,
)
from .diffusion import TrainOptions, pack_state, sample, train, unpack_state
from .errors import ConfigError, DataFormatError, ProtocolError
from .evaluation import AlarmPolicy, report_csv, report_summary, run_cv
from .generator import DiffusionGenerator
from .io import (
    load_checkpoint,
    read_annotations,
    read_segments,
    save_checkpoint,
    write_annotations,
    write_loss_trace,
    write_segments,
)
from .network import NoisePredictor, config_for_segments
from .schedule import linear_schedule
from .seeding import named_streams
from .signal import SyntheticProfile, log_compress, stft_magnitude, synth_record

BALANCE_CHOICES = ("downsample", "sliding", "sliding_window", "recombine", "diffusion")


def _config_guard(build, *args, **kwargs):
    # constructor validation on config-derived values is a config error
    try:
        return build(*args, **kwargs)
    except ValueError as err:
        raise ConfigError(str(err)) from None


def _dataset_spec(config) -> DatasetSpec:
    return _config_guard(DatasetSpec, **config["dataset"])


def _schedule(config):
    d = config["diffusion"]
    return _config_guard(linear_schedule, d["steps"], d["beta_start"], d["beta_end"])


def _net_config(config, in_channels: int, segment_len: int):
    net, stft = config["net"], config["stft"]
    kwargs = dict(channels=net["channels"], layers=net["layers"],
                  blocks=net["blocks"], kernel=net["kernel"])
    if net["upsample_t"] is not None:
        kwargs["upsample_t"] = tuple(net["upsample_t"])
    return _config_guard(config_for_segments, in_channels, segment_len,
                         stft["window_len"], stft["hop"], **kwargs)


def _plan(config) -> BalancePlan:
    b = dict(config["balance"])
    if b["method"] == "sliding":
        b["method"] = "sliding_window"
    return _config_guard(BalancePlan, method=b["method"], window_s=b["window_s"],
                         stride_s=b["stride_s"], seed=b["seed"],
                         checkpoint=b["checkpoint"])


def _policy(config) -> AlarmPolicy:
    a = config["alarm"]
    return _config_guard(AlarmPolicy, k=a["k"], n=a["n"],
                         refractory_s=a["refractory_s"], sph_s=a["sph_s"],
                         sop_s=a["sop_s"])


def _classifier(config):
    c = config["clf"]
    if c["arch"] not in ARCHITECTURES:
        raise ConfigError(f"clf.arch must be one of {sorted(ARCHITECTURES)}, "
                          f"got {c['arch']!r}")
    common = dict(epochs_max=c["epochs_max"], patience=c["patience"],
                  batch_size=c["batch"], lr=c["lr"], seed=c["seed"])
    if c["arch"] == "mlp":
        return MlpClassifier(**common)
    if c["arch"] == "cnn":
        return DilatedCnnClassifier(scales=tuple(c["scales"]), **common)
    return TransformerClassifier(heads=c["heads"], **common)


def _generator(config) -> DiffusionGenerator:
    d, n, t, s = (config["diffusion"], config["net"], config["train"],
                  config["stft"])
    return DiffusionGenerator(
        steps=d["steps"], beta_start=d["beta_start"], beta_end=d["beta_end"],
        window_len=s["window_len"], hop=s["hop"], channels=n["channels"],
        layers=n["layers"], blocks=n["blocks"], kernel=n["kernel"],
        iters=t["iters"], batch_size=t["batch"], lr=t["lr"], seed=t["seed"])


def _load_store(path):
    segments, fs = read_segments(path)
    return segments, fs


def _attach_seizures(segments, annotations_path, spec: DatasetSpec):
    per_record = read_annotations(annotations_path)
    record_id = segments[0].record_id
    if record_id not in per_record:
        raise DataFormatError(
            f"annotations file has no rows for record {record_id!r}")
    return assign_seizures(segments, per_record[record_id], spec), per_record[record_id]


def _restored_net(config, checkpoint_path, in_channels: int, segment_len: int):
    net = NoisePredictor(_net_config(config, in_channels, segment_len), seed=0)
    tensors, meta = load_checkpoint(checkpoint_path)
    state = unpack_state(net, tensors, meta, config["train"]["lr"])
    return net, state


def _even_onsets(duration_s: float, count: int) -> list[float]:
    if count < 1:
        raise ConfigError(f"synth.seizures must be at least 1, got {count}")
    return [duration_s * (i + 1) / (count + 1) for i in range(count)]


def cmd_synth(args, config) -> None:
    spec = _dataset_spec(config)
    s = config["synth"]
    profile = _config_guard(
        SyntheticProfile, channels=s["channels"], fs=s["fs"],
        rhythm_hz=s["rhythm_hz"], rhythm_amp=s["rhythm_amp"],
        pink_level=s["pink_level"], signature_hz=s["signature_hz"],
        signature_amp=s["signature_amp"], ramp_s=s["ramp_s"], seed=s["seed"])
    onsets = (list(map(float, s["onsets"])) if s["onsets"] is not None
              else _even_onsets(s["duration_s"], s["seizures"]))
    record_id = Path(args.out).stem
    record = synth_record(profile, s["duration_s"], onsets,
                          seizure_len_s=s["seizure_len_s"], record_id=record_id)
    report = admit_patient([record], spec)
    if not report.admitted:
        raise ProtocolError("patient rejected: " + "; ".join(report.violated))
    segments = label_segments(record, spec)
    write_segments(args.out, segments, record.fs)
    annotations_path = args.annotations or f"{args.out}.annotations.csv"
    write_annotations(annotations_path, {record_id: record.annotations})
    pre = sum(1 for seg in segments if seg.label == PREICTAL)
    print(f"wrote {len(segments)} segments ({pre} preictal) to {args.out}; "
          f"{len(record.annotations)} seizures to {annotations_path}")


def cmd_train_diffusion(args, config) -> None:
    segments, _fs = _load_store(args.store)
    pre = [seg for seg in segments if seg.label == PREICTAL]
    if not pre:
        raise ProtocolError("store has no preictal segments to train on")
    in_channels, segment_len = pre[0].data.shape
    stft = config["stft"]
    sched = _schedule(config)
    t = config["train"]
    options = _config_guard(TrainOptions, iters=t["iters"], batch=t["batch"],
                            lr=t["lr"], seed=t["seed"])
    if args.resume:
        net, state = _restored_net(config, args.resume, in_channels, segment_len)
    else:
        net = NoisePredictor(_net_config(config, in_channels, segment_len),
                             seed=t["seed"])
        state = None
    conditioners = [log_compress(stft_magnitude(seg.data, stft["window_len"],
                                                stft["hop"])) for seg in pre]
    state = train([seg.data for seg in pre], conditioners, net, sched, options,
                  state=state)
    save_checkpoint(args.out, *pack_state(state))
    if args.trace:
        first = state.iteration - len(state.loss_trace) + 1
        write_loss_trace(args.trace, state.loss_trace, start=first)
    print(f"trained to iteration {state.iteration}; "
          f"final loss {state.loss_trace[-1]:.6f}; checkpoint {args.out}")


def cmd_generate(args, config) -> None:
    if args.count < 1:
        raise ConfigError(f"--count must be at least 1, got {args.count}")
    segments, fs = _load_store(args.store)
    donors = [seg for seg in segments
              if seg.label == PREICTAL and not seg.synthetic]
    if not donors:
        raise ProtocolError("store has no real preictal donors")
    in_channels, segment_len = donors[0].data.shape
    net, _state = _restored_net(config, args.checkpoint, in_channels, segment_len)
    sched = _schedule(config)
    stft = config["stft"]
    streams = named_streams(args.seed, ("donor", "noise"))
    out_segments = []
    for _ in range(args.count):
        donor = donors[int(streams["donor"].integers(0, len(donors)))]
        cond = log_compress(stft_magnitude(donor.data, stft["window_len"],
                                           stft["hop"]))
        data = sample(net, cond, sched, streams["noise"])
        out_segments.append(Segment(data=data, label=PREICTAL,
                                    record_id=donor.record_id,
                                    start_s=donor.start_s, synthetic=True))
    write_segments(args.out, out_segments, fs)
    print(f"wrote {len(out_segments)} synthetic preictal segments to {args.out}")


def _balanced_training_set(args, config, segments, fs):
    spec = _dataset_spec(config)
    if args.annotations:
        segments, _ = _attach_seizures(segments, args.annotations, spec)
    plan = _plan(config)
    net = sched = None
    if plan.method == "diffusion":
        if not plan.checkpoint:
            raise ConfigError("balance.checkpoint is required for diffusion "
                              "balancing outside of evaluate")
        pre = [seg for seg in segments if seg.label == PREICTAL]
        if not pre:
            raise ProtocolError("store has no preictal segments")
        net, _ = _restored_net(config, plan.checkpoint, *pre[0].data.shape)
        sched = _schedule(config)
    return apply_plan(plan, segments, fs=fs, net=net, sched=sched)


def cmd_train_classifier(args, config) -> None:
    segments, fs = _load_store(args.store)
    balanced = _balanced_training_set(args, config, segments, fs)
    clf = _classifier(config).fit(balanced)
    tensors = {name: p.data for name, p in clf.params_.items()}
    save_checkpoint(args.out, tensors,
                    {"epochs": clf.n_epochs_, "seed": config["clf"]["seed"]})
    if args.history:
        with open(args.history, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "loss", "val_sensitivity", "val_specificity"])
            for row in clf.history_:
                writer.writerow([row["epoch"], repr(row["loss"]),
                                 repr(row["val_sensitivity"]),
                                 repr(row["val_specificity"])])
    print(f"trained {config['clf']['arch']} for {clf.n_epochs_} epochs "
          f"(best at {clf.best_epoch_}); checkpoint {args.out}")


def cmd_evaluate(args, config) -> None:
    if args.balance:
        config = apply_overrides(config, [f"balance.method={args.balance}"])
    segments, fs = _load_store(args.store)
    spec = _dataset_spec(config)
    segments, annotations = _attach_seizures(segments, args.annotations, spec)
    merged = merge_seizures(annotations, spec.merge_gap_minutes)
    onsets = {i: onset for i, (onset, _offset) in enumerate(merged)}
    plan = _plan(config)
    generator = _generator(config) if plan.method == "diffusion" else None
    cv = run_cv(segments, plan, _classifier(config), _policy(config), fs=fs,
                stride_s=spec.segment_seconds, onsets=onsets,
                generator=generator, threshold=config["alarm"]["threshold"],
                jobs=args.jobs)
    if args.out_csv:
        Path(args.out_csv).write_text(report_csv(cv))
    summary = report_summary(cv)
    if args.out_summary:
        Path(args.out_summary).write_text(summary)
    print(summary, end="")


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE",
                        help="JSON config file merged over the defaults")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE",
                        help="config override; repeatable; wins over --config")
    common.add_argument("--jobs", type=int, default=1,
                        help="parallel fold workers for evaluate (default 1)")

    parser = argparse.ArgumentParser(
        prog="eegaug",
        description="EEG segment synthesis, diffusion-based augmentation, "
                    "and alarm-level seizure-prediction evaluation.",
        epilog=describe_defaults(),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("synth", parents=[common],
                       help="write a labeled synthetic segment store")
    p.add_argument("out", help="segment store path to write")
    p.add_argument("--annotations", metavar="FILE",
                   help="annotations CSV path (default: OUT.annotations.csv)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-diffusion", parents=[common],
                       help="train the noise predictor on preictal segments")
    p.add_argument("store", help="segment store with preictal training data")
    p.add_argument("--out", required=True, help="checkpoint path to write")
    p.add_argument("--trace", metavar="FILE", help="loss trace CSV to write")
    p.add_argument("--resume", metavar="CKPT",
                   help="continue training from this checkpoint")
    p.set_defaults(func=cmd_train_diffusion)

    p = sub.add_parser("generate", parents=[common],
                       help="sample synthetic preictal segments")
    p.add_argument("store", help="segment store providing donor spectrograms")
    p.add_argument("--checkpoint", required=True, help="trained checkpoint")
    p.add_argument("--out", required=True, help="segment store to write")
    p.add_argument("--count", type=int, required=True,
                   help="number of segments to generate")
    p.add_argument("--seed", type=int, default=0, help="sampling seed")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train-classifier", parents=[common],
                       help="balance a store and fit one classifier")
    p.add_argument("store", help="labeled segment store")
    p.add_argument("--annotations", metavar="FILE",
                   help="annotations CSV (needed by seizure-aware balancing)")
    p.add_argument("--out", required=True, help="classifier checkpoint to write")
    p.add_argument("--history", metavar="FILE", help="training history CSV")
    p.set_defaults(func=cmd_train_classifier)

    p = sub.add_parser("evaluate", parents=[common],
                       help="leave-one-seizure-out alarm-level evaluation")
    p.add_argument("store", help="labeled segment store")
    p.add_argument("--annotations", required=True, metavar="FILE",
                   help="annotations CSV written by synth")
    p.add_argument("--balance", choices=BALANCE_CHOICES,
                   help="shorthand for --set balance.method=...")
    p.add_argument("--out-csv", metavar="FILE", help="per-fold report CSV")
    p.add_argument("--out-summary", metavar="FILE", help="summary table file")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = apply_overrides(load_config(args.config), args.overrides)
        print(f"resolved config:\n{resolved_json(config)}", file=sys.stderr)
        if args.jobs < 1:
            raise ConfigError(f"--jobs must be at least 1, got {args.jobs}")
        args.func(args, config)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (DataFormatError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except (ProtocolError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 4
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
