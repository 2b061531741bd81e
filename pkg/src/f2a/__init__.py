"""Forecast-to-anomaly: predict which future timesteps of a multivariate
series will be anomalous, by fusing a base forecast with horizons retrieved
from historically similar contexts and scoring the fused forecast with a
learned anomaly head."""

from .checkpoint import TrainedModel, load_checkpoint, save_checkpoint
from .dataset import (
    ChannelPlan,
    RawSeries,
    SynthConfig,
    WindowSample,
    gen_synthetic,
    make_windows,
    read_series_csv,
    select_channels,
    write_series_csv,
)
from .errors import ConfigError, CoverageError, DimensionError, FormatError
from .forecaster import (
    BuiltinForecaster,
    Embedding,
    ExternalForecaster,
    ForecasterParams,
    decode,
    encode,
    init_forecaster_params,
    load_external,
    save_external,
)
from .fusion import (
    ForwardTrace,
    FusionParams,
    aggregate_stage1,
    anomaly_head,
    f2a_backward,
    f2a_forward,
    fuse_stage2,
    init_fusion_params,
    scale_forecast,
)
from .loss import LossConfig, focal_loss, joint_loss, threshold_labels, weighted_mae
from .metrics import (
    MetricReport,
    ScoredSeries,
    average_precision,
    build_report,
    pooled_report,
    prf1,
    stitch_scores,
    vus_pr,
)
from .optim import TrainConfig, TrainResult, calibrate_threshold, cosine_lr, optimizer_step, train
from .pipeline import PreparedData, VariantResult, base_rate, predict_scores, prepare_data, run_variant
from .retrieval import RetrievalStore, RetrievedSet, build_store, load_store, query, save_store

__version__ = "0.1.0"
