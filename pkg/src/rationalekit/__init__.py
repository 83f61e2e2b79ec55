"""rationalekit: implicit-rationale extraction, filtering, and process supervision.

The pipeline has three stages: extract rationale candidates from corpora and
QA datasets through a model backend, keep the ones whose insertion lowers the
weighted future-token loss by at least a threshold, and emit them as training
pairs. At inference, a supervision loop scores agent-proposed reasoning steps
against generated rationales and extends the trajectory with the argmax.
"""

from .backends import (
    BackendRole,
    EmbeddingVector,
    Gateway,
    GenerationRequest,
    HttpTransport,
    MockTransport,
    Role,
    TokenScore,
)
from .config import RunConfig
from .emitter import EmitReport, TrainingExample, emit, stats
from .evaluation import EvalResult, TaskInstance, evaluate, extract_answer
from .extraction import (
    Origin,
    PromptTemplate,
    QAPair,
    RationaleCandidate,
    Segment,
    extract_from_corpus,
    extract_from_qa,
    load_template,
    segment,
)
from .filtering import (
    FilterReport,
    FilterVerdict,
    WeightSchedule,
    calibrate_threshold,
    filter_verdicts,
    future_loss,
    score_candidate,
    score_candidates,
)
from .prefilter import Document, PrefilterConfig, centroid, cosine, prefilter
from .supervision import (
    RoleBindings,
    RunResult,
    SupervisionConfig,
    SupervisionMode,
    Trajectory,
    run,
    run_baseline,
)

__version__ = "0.1.0"

__all__ = [
    "BackendRole",
    "Document",
    "EmbeddingVector",
    "EmitReport",
    "EvalResult",
    "FilterReport",
    "FilterVerdict",
    "Gateway",
    "GenerationRequest",
    "HttpTransport",
    "MockTransport",
    "Origin",
    "PrefilterConfig",
    "PromptTemplate",
    "QAPair",
    "RationaleCandidate",
    "Role",
    "RoleBindings",
    "RunConfig",
    "RunResult",
    "Segment",
    "SupervisionConfig",
    "SupervisionMode",
    "TaskInstance",
    "TokenScore",
    "Trajectory",
    "TrainingExample",
    "WeightSchedule",
    "calibrate_threshold",
    "centroid",
    "cosine",
    "emit",
    "evaluate",
    "extract_answer",
    "extract_from_corpus",
    "extract_from_qa",
    "filter_verdicts",
    "future_loss",
    "load_template",
    "prefilter",
    "run",
    "run_baseline",
    "score_candidate",
    "score_candidates",
    "segment",
    "stats",
]
