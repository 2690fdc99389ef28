"""Few-shot CLIP-adapter engine with a hold-one-shot-out learnable blending ratio.

Operates entirely on precomputed feature banks; see the README for the bank
format and the CLI entry points.
"""

from .errors import (
    ConfigError,
    DataError,
    DegenerateVectorError,
    FormatError,
    HosoError,
    InsufficientShotsError,
    LabelError,
    NumericsError,
    ShapeError,
    TapeError,
)
from .featurebank import (
    FeatureBank,
    HoldoutCache,
    SupportSet,
    load_bank,
    sample_few_shot,
    split_hoso_cache,
    write_bank,
)
from .model import (
    AdapterModel,
    AdapterParams,
    BlendMode,
    adapter_forward,
    alpha_from_logit,
    blend,
    init_adapter,
    logit_from_alpha,
    zero_shot_classifier,
)
from .trainers import (
    METHODS,
    RunReport,
    TrainConfig,
    TrainerHooks,
    alpha_svl,
    run_method,
    tip_adapter,
    train_fixed_alpha,
    train_hoso,
    train_joint,
    train_pathclip_dvc,
    train_random_alpha,
    train_svl,
    train_with_extra_views,
)
from .evaluation import (
    EvalResult,
    SyntheticSpec,
    evaluate,
    grid_search_alpha,
    make_synthetic_bank,
    one_shot_correlation,
    overfit_gap,
    pearson_r,
    per_class_alpha_sweep,
)

__version__ = "0.1.0"
