"""Command-line entry points.

Subcommands mirror the pipeline stages so long runs can be resumed and
re-evaluated piecemeal: experiment, sweep, train-gan, generate, train-clf,
evaluate, synth-data. Exit codes: 0 success, 1 usage error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .classifier import load_mlp, save_mlp, train_mlp
from .config import ExperimentConfig, load_config, write_effective_config
from .cyclegan import generate, load_checkpoint
from .data import Dataset, Label, required_generation_count, select_template
from .errors import CheckpointError, DataError, MetricsError, NumericalError, TraceGanError
from .imaging import read_pgm, sequence_to_image, write_pgm
from .metrics import Approach, reports_to_csv, reports_to_json
from .oversampling import balance_with_gan, balance_with_smote
from .pipeline import (
    _evaluate,
    _images,
    _mlp_cfg,
    ingest,
    make_split,
    run_experiment,
    run_standalone_sweep,
    train_gan_with_artifacts,
    write_split_manifest,
)
from .seeding import derive_seed

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="tracegan", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text, **extra_flags):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None, help="override the root seed")
        p.add_argument("--out", default=None, help="override the output directory")
        for flag, kwargs in extra_flags.items():
            p.add_argument(flag, **kwargs)
        p.set_defaults(func=func)
        return p

    add("experiment", _cmd_experiment, "run the full three-approach comparison",
        **{"--select-on-test": dict(action="store_true", dest="select_on_test",
                                    help="select the checkpoint on the test sweep (leaks)")})
    add("sweep", _cmd_sweep, "score every saved checkpoint by downstream AUC",
        **{"--checkpoints": dict(required=True, help="directory of ckpt_<step>.agck files")})
    add("train-gan", _cmd_train_gan, "train the translation model and save checkpoints")
    add("generate", _cmd_generate, "generate synthetic anomalies from one checkpoint",
        **{"--checkpoint": dict(required=True, help="checkpoint file to generate from")})
    add("train-clf", _cmd_train_clf, "train one detector variant and persist it",
        **{"--approach": dict(required=True, choices=[a.value for a in Approach]),
           "--generated": dict(default=None, help="directory of generated images (cyclegan)")})
    add("evaluate", _cmd_evaluate, "evaluate a persisted detector on the test split",
        **{"--model": dict(required=True, help="mlp .agck file")})
    add("synth-data", _cmd_synth_data, "materialize the synth spec as trace files")
    return parser


def _load_cfg(args) -> ExperimentConfig:
    return load_config(args.config, seed=args.seed, output_dir=args.out)


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_experiment(args) -> int:
    cfg = _load_cfg(args)
    result = run_experiment(cfg, select_on_test=args.select_on_test)
    print(reports_to_csv(result.reports), end="")
    print(f"selected checkpoint step: {result.selected_step}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load_cfg(args)
    rows = run_standalone_sweep(cfg, args.checkpoints, _out_dir(cfg))
    for step, auc in rows:
        print(f"{step},{auc!r}")
    return EXIT_OK


def _cmd_train_gan(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(cfg)
    write_effective_config(cfg, out)
    train_set, test_set = make_split(cfg, ingest(cfg))
    write_split_manifest(train_set, test_set, out)
    _, checkpoints = train_gan_with_artifacts(cfg, train_set, out)
    print(f"saved {len(checkpoints)} checkpoints under {out / 'checkpoints'}")
    return EXIT_OK


def _cmd_generate(args) -> int:
    cfg = _load_cfg(args)
    ckpt = Path(args.checkpoint)
    if not ckpt.is_file():
        raise DataError(f"missing checkpoint file: {ckpt}")
    out = _out_dir(cfg)
    train_set, _ = make_split(cfg, ingest(cfg))
    templates = select_template(train_set, required_generation_count(train_set),
                                derive_seed(cfg.seed, "template"))
    model = load_checkpoint(ckpt)
    images = generate(model, [sequence_to_image(t) for t in templates])
    entries = []
    for i, img in enumerate(images):
        name = f"gen_{i:05d}.pgm"
        write_pgm(img, out / name)
        entries.append({"file": name, "source_id": img.source_id, "label": img.label.value})
    (out / "generated_manifest.json").write_text(json.dumps(
        {"checkpoint_step": model.step, "images": entries}, indent=2) + "\n")
    print(f"wrote {len(images)} images to {out}")
    return EXIT_OK


def _read_generated(gen_dir: Path):
    manifest_path = gen_dir / "generated_manifest.json"
    if not manifest_path.is_file():
        raise DataError(f"missing generated-image manifest: {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    images = []
    for entry in manifest["images"]:
        path = gen_dir / entry["file"]
        if not path.is_file():
            raise DataError(f"missing generated image file: {path}")
        images.append(read_pgm(path, Label(entry["label"]), entry["source_id"]))
    return images


def _cmd_train_clf(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(cfg)
    train_set, _ = make_split(cfg, ingest(cfg))
    train_images = _images(train_set)
    approach = Approach(args.approach)
    if approach is Approach.IMBALANCED:
        data = train_images
    elif approach is Approach.SMOTE:
        data = balance_with_smote(train_images, cfg.smote_k, derive_seed(cfg.seed, "smote"))
    else:
        if args.generated is None:
            raise DataError("train-clf --approach cyclegan needs --generated <dir>")
        data = balance_with_gan(train_images, _read_generated(Path(args.generated)))
    mlp = train_mlp(data, _mlp_cfg(cfg, approach.value))
    model_path = out / f"mlp_{approach.value}.agck"
    save_mlp(mlp, model_path, approach=approach.value)
    print(f"saved detector to {model_path}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(cfg)
    model_path = Path(args.model)
    if not model_path.is_file():
        raise DataError(f"missing model file: {model_path}")
    mlp, approach_tag = load_mlp(model_path)
    _, test_set = make_split(cfg, ingest(cfg))
    approach = Approach(approach_tag) if approach_tag else Approach.IMBALANCED
    report = _evaluate(approach, mlp, _images(test_set))
    (out / "report.csv").write_text(reports_to_csv([report]))
    (out / "report.json").write_text(reports_to_json([report]))
    print(reports_to_csv([report]), end="")
    return EXIT_OK


def _cmd_synth_data(args) -> int:
    cfg = _load_cfg(args)
    if cfg.data.synth is None:
        raise DataError("synth-data needs a config with a synth spec")
    out = _out_dir(cfg)
    ds = ingest(cfg)
    counts = {Label.NORMAL: 0, Label.ANOMALY: 0}
    for label in (Label.NORMAL, Label.ANOMALY):
        (out / label.value).mkdir(parents=True, exist_ok=True)
    for trace in ds.traces:
        i = counts[trace.label]
        counts[trace.label] += 1
        path = out / trace.label.value / f"trace_{i:05d}.txt"
        path.write_text(" ".join(str(int(v)) for v in trace.values) + "\n")
    print(f"wrote {counts[Label.NORMAL]} normal / {counts[Label.ANOMALY]} anomaly traces to {out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (DataError, CheckpointError, MetricsError) as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except OSError as exc:
        log.error("i/o failure: %s", exc)
        return EXIT_DATA
    except TraceGanError as exc:
        log.error("%s", exc)
        return EXIT_DATA


def entry() -> None:
    sys.exit(main())
