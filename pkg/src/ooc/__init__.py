"""Out-of-context image/caption detection toolkit.

Operates on precomputed joint-embedding vectors: generates random, hard, and
cross-topic mismatches, trains an embedding-fusion classifier head, and
evaluates with detection-theory metrics plus corpus breakouts.
"""

from .analytics import (
    ClusterModel,
    bucket,
    cluster_texts,
    cluster_top_words,
    ocr_coverage,
    tag_cross_cluster,
    union_area,
)
from .detector import (
    DetectorModel,
    TrainConfig,
    fuse,
    init_model,
    load_model,
    predict,
    save_model,
    train,
    zero_shot_score,
)
from .metrics import MetricsSummary, RocCurve, breakout, eer, pd_at_far, roc, summarize
from .mismatch import (
    DatasetManifest,
    LabeledPair,
    build_dataset,
    load_pairs,
    mine_cross_topic,
    mine_hard,
    mine_random,
    save_pairs,
)
from .store import (
    EmbeddingMatrix,
    OcrRecord,
    SampleRecord,
    load_manifest,
    load_matrix,
    load_ocr,
    save_manifest,
    save_matrix,
    save_ocr,
)

__version__ = "0.1.0"

__all__ = [
    "ClusterModel", "DatasetManifest", "DetectorModel", "EmbeddingMatrix",
    "LabeledPair", "MetricsSummary", "OcrRecord", "RocCurve", "SampleRecord",
    "TrainConfig", "breakout", "bucket", "build_dataset", "cluster_texts",
    "cluster_top_words", "eer", "fuse", "init_model", "load_manifest",
    "load_matrix", "load_model", "load_ocr", "load_pairs", "mine_cross_topic",
    "mine_hard", "mine_random", "ocr_coverage", "pd_at_far", "predict", "roc",
    "save_manifest", "save_matrix", "save_model", "save_ocr", "save_pairs",
    "summarize", "tag_cross_cluster", "train", "union_area", "zero_shot_score",
]
