"""Sample-conditioned generative modeling of grid signals.

Train one network per dataset that maps (query position, set of observed
samples) to a value distribution; use it for mean inference, randomized-
order autoregressive sampling, and interactive querying.
"""

from .distribution import (
    BinLayout,
    DistParams,
    closest_bin,
    expected_value,
    head_to_params,
    log_likelihood,
    make_bins,
    sample_value,
)
from .errors import (
    ConfigError,
    FormatError,
    InputError,
    SampleFieldError,
    ShapeError,
    TrainingAbort,
    UsageError,
)
from .inference import (
    GenerationResult,
    QuerySummary,
    SamplerConfig,
    infer_mean,
    query_point,
    sample_signal,
)
from .model import (
    ModelConfig,
    QueryBatch,
    SampleSet,
    encode_samples,
    fourier_features,
    init_params,
    param_schema,
    predict,
)
from .signals import (
    DrawConfig,
    Signal,
    box_resample,
    draw_sq,
    gen_polynomial,
    grid_positions,
    load_idx,
    read_pgm,
    sample_bilinear,
    sample_set_from_grid,
    write_idx,
    write_pgm,
    write_ppm,
)
from .tensor import Tensor, no_grad, using_dtype
from .training import (
    Adam,
    Checkpoint,
    TrainConfig,
    load_checkpoint,
    nll_loss,
    save_checkpoint,
    train,
    train_step,
)

__version__ = "0.1.0"
