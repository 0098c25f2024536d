"""End-to-end experiment, checkpoint sweep, and single-stage runners.

Stage seeds all derive from the experiment's root seed with fixed tags, so
any stage can be re-run on its own and reproduce the same artifacts. The held
out test set is split once and reused identically by every approach.

Checkpoint selection for the final report defaults to the argmax-AUC on a
10 percent validation subsplit of the training set; the emitted sweep.csv is
always the per-checkpoint AUC on the held-out test set (the evolution-style
diagnostic). Passing select_on_test=True instead selects on the test sweep and
prints a leakage warning.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

from .classifier import MlpConfig, TrainedMlp, predict_labels, predict_scores, train_mlp
from .config import ExperimentConfig, write_effective_config
from .cyclegan import (
    CycleGanModel,
    GanConfig,
    LOSS_CSV_HEADER,
    build_model,
    generate,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .data import (
    ClampPolicy,
    Dataset,
    Label,
    SplitSpec,
    load_traces,
    required_generation_count,
    select_template,
    split_dataset,
    synth_dataset,
)
from .errors import CheckpointError, DataError
from .imaging import TraceImage, sequence_to_image
from .metrics import (
    Approach,
    EvaluationReport,
    make_report,
    reports_to_csv,
    reports_to_json,
    roc_auc,
)
from .oversampling import balance_with_gan, balance_with_smote
from .seeding import derive_seed

log = logging.getLogger(__name__)

SELECTION_VAL_FRACTION = 0.1


def ingest(cfg: ExperimentConfig) -> Dataset:
    if cfg.data.synth is not None:
        s = cfg.data.synth
        return synth_dataset(s.n_normal, s.n_anomaly, tuple(s.length_range),
                             derive_seed(cfg.seed, "synth"))
    return load_traces(cfg.data.normal_dir, cfg.data.anomaly_dir, cfg.data.max_length,
                       ClampPolicy(cfg.data.clamp_policy))


def make_split(cfg: ExperimentConfig, ds: Dataset) -> tuple[Dataset, Dataset]:
    seed = derive_seed(cfg.seed, "split")
    if cfg.split.mode == "counts":
        spec = SplitSpec(seed=seed, test_counts=(cfg.split.test_normal, cfg.split.test_anomaly))
    else:
        spec = SplitSpec(seed=seed, test_fraction=cfg.split.test_fraction)
    return split_dataset(ds, spec)


def write_split_manifest(train: Dataset, test: Dataset, out_dir: Path) -> None:
    manifest = {t.source_id: "train" for t in train.traces}
    manifest.update({t.source_id: "test" for t in test.traces})
    (out_dir / "split_manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _images(ds: Dataset) -> list[TraceImage]:
    return [sequence_to_image(t) for t in ds.traces]


def _mlp_cfg(cfg: ExperimentConfig, tag: str) -> MlpConfig:
    return replace(cfg.mlp, seed=derive_seed(cfg.seed, f"mlp.{tag}"))


def _gan_cfg(cfg: ExperimentConfig) -> GanConfig:
    return replace(cfg.gan, seed=derive_seed(cfg.seed, "gan"))


def _evaluate(approach: Approach, mlp: TrainedMlp, test_images: list[TraceImage]) -> EvaluationReport:
    truth = [im.label for im in test_images]
    scores = predict_scores(mlp, test_images)
    predicted = [Label.ANOMALY if s >= mlp.cfg.threshold else Label.NORMAL for s in scores]
    return make_report(approach, truth, predicted, scores)


def train_gan_with_artifacts(cfg: ExperimentConfig, train_set: Dataset,
                             out_dir: Path) -> tuple[CycleGanModel, list[tuple[int, Path]]]:
    """Train the translation model, streaming losses.csv and saving
    ckpt_<step>.agck files (step 0 included) under out_dir/checkpoints."""
    gan_cfg = _gan_cfg(cfg)
    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    model = build_model(gan_cfg)
    saved: list[tuple[int, Path]] = []
    loss_path = out_dir / "losses.csv"
    with open(loss_path, "w") as loss_file:
        loss_file.write(LOSS_CSV_HEADER + "\n")

        def on_loss(record):
            loss_file.write(record.csv_row() + "\n")

        def on_checkpoint(step, m):
            path = ckpt_dir / f"ckpt_{step}.agck"
            save_checkpoint(m, path)
            saved.append((step, path))
            log.info("checkpoint saved at step %d", step)

        train(model, train_set, gan_cfg, on_loss=on_loss, on_checkpoint=on_checkpoint)
    return model, saved


def run_checkpoint_sweep(checkpoints: list[tuple[int, Path]], templates: list[TraceImage],
                         train_images: list[TraceImage], eval_images: list[TraceImage],
                         mlp_cfg: MlpConfig) -> list[tuple[int, float]]:
    """For each checkpoint in ascending step order: generate from the
    templates, balance, train a fresh MLP (same seed every row), and score
    AUC on eval_images. Unreadable checkpoints are skipped with a warning."""
    truth = [im.label for im in eval_images]
    rows: list[tuple[int, float]] = []
    for step, path in sorted(checkpoints):
        try:
            model = load_checkpoint(path)
        except CheckpointError as exc:
            log.warning("skipping checkpoint %s: %s", path, exc)
            continue
        generated = generate(model, templates)
        balanced = balance_with_gan(train_images, generated)
        mlp = train_mlp(balanced, mlp_cfg)
        rows.append((step, roc_auc(truth, predict_scores(mlp, eval_images))))
    return rows


def sweep_to_csv(rows: list[tuple[int, float]]) -> str:
    return "checkpoint_step,auc\n" + "".join(f"{s},{auc!r}\n" for s, auc in rows)


@dataclass
class ExperimentResult:
    reports: list[EvaluationReport]
    sweep_rows: list[tuple[int, float]]
    selected_step: int


def run_experiment(cfg: ExperimentConfig, select_on_test: bool = False) -> ExperimentResult:
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        return _run_experiment(cfg, select_on_test, out_dir)
    except Exception as exc:
        (out_dir / "FAILED.json").write_text(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}, indent=2) + "\n"
        )
        raise


def _run_experiment(cfg: ExperimentConfig, select_on_test: bool, out_dir: Path) -> ExperimentResult:
    cfg.validate()
    write_effective_config(cfg, out_dir)
    ds = ingest(cfg)
    train_set, test_set = make_split(cfg, ds)
    write_split_manifest(train_set, test_set, out_dir)
    train_images = _images(train_set)
    test_images = _images(test_set)
    log.info("split: train %d/%d, test %d/%d (normal/anomaly)",
             train_set.normal_count(), train_set.anomaly_count(),
             test_set.normal_count(), test_set.anomaly_count())

    mlp_imbalanced = train_mlp(train_images, _mlp_cfg(cfg, "imbalanced"))
    report_imbalanced = _evaluate(Approach.IMBALANCED, mlp_imbalanced, test_images)
    log.info("imbalanced: recall %.4f auc %.4f", report_imbalanced.recall, report_imbalanced.auc)

    smote_balanced = balance_with_smote(train_images, cfg.smote_k, derive_seed(cfg.seed, "smote"))
    mlp_smote = train_mlp(smote_balanced, _mlp_cfg(cfg, "smote"))
    report_smote = _evaluate(Approach.SMOTE, mlp_smote, test_images)
    log.info("smote: recall %.4f auc %.4f", report_smote.recall, report_smote.auc)

    _, checkpoints = train_gan_with_artifacts(cfg, train_set, out_dir)

    templates = select_template(train_set, required_generation_count(train_set),
                                derive_seed(cfg.seed, "template"))
    template_images = [sequence_to_image(t) for t in templates]

    sweep_rows = run_checkpoint_sweep(checkpoints, template_images, train_images,
                                      test_images, _mlp_cfg(cfg, "sweep"))
    (out_dir / "sweep.csv").write_text(sweep_to_csv(sweep_rows))

    if select_on_test:
        log.warning("selecting the checkpoint on the test set leaks test "
                    "information into model choice")
        selection_rows = sweep_rows
    else:
        core, val = split_dataset(
            train_set,
            SplitSpec(seed=derive_seed(cfg.seed, "select"), test_fraction=SELECTION_VAL_FRACTION),
        )
        core_templates = select_template(core, required_generation_count(core),
                                         derive_seed(cfg.seed, "select.template"))
        selection_rows = run_checkpoint_sweep(
            checkpoints, [sequence_to_image(t) for t in core_templates],
            _images(core), _images(val), _mlp_cfg(cfg, "sweep"),
        )
    if not selection_rows:
        raise DataError("no usable checkpoints for selection")
    best_auc = max(auc for _, auc in selection_rows)
    selected_step = min(s for s, auc in selection_rows if auc == best_auc)
    (out_dir / "selection.json").write_text(json.dumps({
        "rows": [{"checkpoint_step": s, "auc": a} for s, a in selection_rows],
        "selected_step": selected_step,
        "selected_on": "test" if select_on_test else "validation_subsplit",
    }, indent=2) + "\n")
    log.info("selected checkpoint step %d", selected_step)

    ckpt_path = dict(checkpoints)[selected_step]
    generated = generate(load_checkpoint(ckpt_path), template_images)
    gan_balanced = balance_with_gan(train_images, generated)
    mlp_gan = train_mlp(gan_balanced, _mlp_cfg(cfg, "cyclegan"))
    report_gan = _evaluate(Approach.CYCLEGAN, mlp_gan, test_images)
    log.info("cyclegan: recall %.4f auc %.4f", report_gan.recall, report_gan.auc)

    reports = [report_imbalanced, report_smote, report_gan]
    (out_dir / "report.csv").write_text(reports_to_csv(reports))
    (out_dir / "report.json").write_text(reports_to_json(reports))
    return ExperimentResult(reports, sweep_rows, selected_step)


def run_standalone_sweep(cfg: ExperimentConfig, checkpoint_dir: str | Path,
                         out_dir: Path) -> list[tuple[int, float]]:
    """Recompute the deterministic split and templates from cfg, then sweep
    every ckpt_<step>.agck under checkpoint_dir against the test set."""
    ckpt_dir = Path(checkpoint_dir)
    if not ckpt_dir.is_dir():
        raise DataError(f"missing checkpoint directory: {ckpt_dir}")
    checkpoints = []
    for path in sorted(ckpt_dir.glob("ckpt_*.agck")):
        stem = path.stem.removeprefix("ckpt_")
        try:
            checkpoints.append((int(stem), path))
        except ValueError:
            log.warning("ignoring unrecognized checkpoint name %s", path.name)
    if not checkpoints:
        raise DataError(f"no ckpt_<step>.agck files under {ckpt_dir}")
    ds = ingest(cfg)
    train_set, test_set = make_split(cfg, ds)
    templates = select_template(train_set, required_generation_count(train_set),
                                derive_seed(cfg.seed, "template"))
    rows = run_checkpoint_sweep(checkpoints, [sequence_to_image(t) for t in templates],
                                _images(train_set), _images(test_set), _mlp_cfg(cfg, "sweep"))
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "sweep.csv").write_text(sweep_to_csv(rows))
    return rows
