"""Query plan encoding toolkit: plan normalization, tree linearization,
structural similarity scoring, and learned plan encoders for latency
prediction and query classification."""

from .taxonomy import NIL, UNK, OperatorTriple, normalize_operator, operator_group
from .plan import (MetricLabels, PlanNode, PlanTree, extract_labels, load_plan,
                   parse_plan_document, serialize_plan, deserialize_plan)
from .linearize import (TokenSequence, Vocabulary, add_specials, delinearize,
                        encode_ids, linearize)
from .smatch import smatch_exact, smatch_hillclimb
from .features import (FeatureSchema, extract_db_features,
                       extract_meta_features, extract_node_features,
                       load_catalog)
from .structure import StructureEncoder, train_ppsr, finetune_structure
from .perf import (FeatureBundle, PerfGroupModel, build_training_rows,
                   joint_train, perf_embed_plan, finetune_perf)
from .downstream import LatencyModel, TemplateClassifier
from .manifest import RunManifest, load_manifest

__version__ = "0.1.0"

__all__ = [
    "NIL", "UNK", "OperatorTriple", "normalize_operator", "operator_group",
    "MetricLabels", "PlanNode", "PlanTree", "extract_labels", "load_plan",
    "parse_plan_document", "serialize_plan", "deserialize_plan",
    "TokenSequence", "Vocabulary", "add_specials", "delinearize",
    "encode_ids", "linearize",
    "smatch_exact", "smatch_hillclimb",
    "FeatureSchema", "extract_db_features", "extract_meta_features",
    "extract_node_features", "load_catalog",
    "StructureEncoder", "train_ppsr", "finetune_structure",
    "FeatureBundle", "PerfGroupModel", "build_training_rows", "joint_train",
    "perf_embed_plan", "finetune_perf",
    "LatencyModel", "TemplateClassifier",
    "RunManifest", "load_manifest",
    "__version__",
]
