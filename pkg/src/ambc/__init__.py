"""Tag-signal detection for ambient backscatter communication.

Simulation of the multi-antenna on-off-keyed backscatter link, the
optimal likelihood ratio test and an energy-detector baseline, and a
covariance-matrix CNN detector trained offline and adapted per frame
from pilots by transfer learning.
"""

from .sysmodel import (
    SystemParams,
    ChannelRealization,
    TagSymbolSample,
    derive_signal_power,
    sample_channel,
    generate_tag_symbol,
    generate_frame,
    pilot_bits,
)
from .features import (
    Scm,
    ScmExample,
    Dataset,
    scm,
    to_planes,
    build_source_dataset,
    build_target_dataset,
    save_dataset,
    load_dataset,
)
from .classical import (
    LrtContext,
    EdContext,
    lrt_context,
    lrt_statistic,
    lrt_decide,
    ed_context,
    ed_decide,
)
from .cmnet import CmnetArch, CmnetParams, TrainConfig, init_params, forward
from .dtl import (
    DetectorModel,
    offline_learn,
    transfer_learn,
    cmnet_lrt,
    detect_symbol,
    detect_batch,
    save_model,
    load_model,
)
from .bench import (
    SweepSpec,
    TrainBudget,
    BerPoint,
    run_point,
    run_sweep,
    emit_csv,
)
from .rng import substream, derive_seed

__version__ = "0.1.0"
