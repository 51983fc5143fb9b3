"""Information-theoretic analytics for tokenized clinical event streams."""

from .vocabulary import Vocabulary, token_type
from .ingest import (
    EventRecord,
    Hospitalization,
    parse_tables,
    read_cohort,
    split_cohort,
    write_cohort,
)
from .tokenizer import (
    CutoffTable,
    Timeline,
    bin_value,
    decode,
    encode,
    encode_cohort,
    event_spans,
    fit_cutoffs,
    fit_vocabulary,
    read_timelines,
    write_timelines,
)
from .seqmodel import (
    BackoffModel,
    SequenceModel,
    TableModel,
    cross_entropy,
    pack,
    train_backoff,
)
from .protocol import RemoteModel, external_model, inprocess_endpoint, serve_model
from .infomeasure import (
    CountFeatures,
    InfoThresholds,
    ScoredTimeline,
    count_features,
    fit_thresholds,
    mean_bits,
    score_cohort,
    score_events,
    score_timeline,
    score_tokens,
)
from .reprspace import ReprTrace, info_delta_regression, net_displacement, path_length, trace
from .experiments import (
    RedactionPlan,
    count_feature_regression,
    filter_icu_24h,
    redact,
    run_redaction_grid,
    truncate_24h,
)
from .synthgen import (
    GeneratorConfig,
    generate,
    null_config,
    oracle_model,
    planted_config,
)
from .highlight import HighlightScale, ansi_report, fit_scale, svg_report
from .stats import (
    bootstrap_ci,
    brier,
    logistic_fit,
    ols_fit,
    paired_auc_pvalue,
    pr_auc,
    roc_auc,
)

__version__ = "0.1.0"
