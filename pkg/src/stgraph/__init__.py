"""stgraph: build, evaluate, and export situational-reasoning graphs.

Given a context and a situation phrase, the framework queries a pluggable
text-generation backend with (context, situation, relation, effect) questions
and compiles the answers into a rooted directed acyclic influence graph.
Adapters reformulate existing what-if datasets into that shape; metrics
score generated graphs against references; downstream helpers export QA
augmentation files and run zero-shot two-option evaluation.
"""

__version__ = "0.1.0"

from .adapters import (
    RecordSkip,
    SplitManifest,
    StExample,
    adapt_defeasible,
    adapt_quarel,
    adapt_wiqa,
    group_examples,
    load_split,
    reference_graph,
)
from .backends import (
    BackendError,
    GenerationConfig,
    GenerationFailure,
    GeneratorBackend,
    NGramBackend,
    NGramModel,
    OracleBackend,
    ProtocolError,
    RemoteBackend,
    ScoredText,
    ServerError,
    TransportError,
    decode,
    nucleus_sample,
    oracle_backend,
    oracle_from_examples,
    oracle_from_file,
    remote_backend,
    score,
    train_ngram,
)
from .downstream import (
    AugmentedQaItem,
    QaItem,
    ZeroShotItem,
    ZeroShotPick,
    augment,
    export_training_file,
    zero_shot_eval,
    zero_shot_pick,
)
from .generation import (
    ExpansionPolicy,
    R_FWD,
    R_REV,
    RelationSchedule,
    build_query,
    iterative_graph_gen,
    recursive_expand,
)
from .graph import (
    AddResult,
    Edge,
    EffectType,
    Node,
    Polarity,
    Relation,
    StGraph,
    StQuery,
    Violation,
)
from .metrics import (
    ConsistencyReport,
    Criterion,
    EvalReport,
    bleu,
    bleu_by_order,
    consistency_rate,
    eval_graphs,
    rouge_l,
    token_f1,
)
from .rand import SplitMix64, derive_seed
from .text import normalize_text, tokenize
