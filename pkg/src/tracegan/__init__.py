"""tracegan: balancing host-based intrusion datasets by translating normal
syscall-trace images into synthetic anomalies, with SMOTE and imbalanced
baselines, an MLP detector, and checkpoint-sweep evaluation."""

from .data import (
    ClampPolicy,
    Dataset,
    Label,
    SplitSpec,
    TraceSequence,
    load_traces,
    required_generation_count,
    select_template,
    split_dataset,
    synth_dataset,
)
from .imaging import TraceImage, denormalize, image_to_sequence, normalize, sequence_to_image
from .cyclegan import (
    CycleGanModel,
    GanConfig,
    ImagePool,
    LossRecord,
    build_model,
    generate,
    load_checkpoint,
    lr_at,
    save_checkpoint,
    train,
    train_step,
)
from .oversampling import BalancedSet, Provenance, balance_with_gan, balance_with_smote, smote
from .classifier import MlpConfig, TrainedMlp, predict_labels, predict_scores, train_mlp
from .metrics import (
    Approach,
    ConfusionMatrix,
    EvaluationReport,
    confusion,
    f1,
    make_report,
    precision,
    recall,
    roc_auc,
)
from .errors import (
    CheckpointError,
    DataError,
    MetricsError,
    NumericalError,
    ShapeError,
    TraceGanError,
)

__version__ = "0.1.0"
