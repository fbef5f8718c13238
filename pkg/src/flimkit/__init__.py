"""flimkit: fluorescence-lifetime imaging analysis toolkit.

Synthesis of TCSPC decays and image phantoms with ground truth,
lifetime extraction (curve fitting, tail fits, rapid gating, EM, and a
learned per-pixel estimator), phasor analysis, phasor-space
segmentation, classification, compressive-sensing reconstruction, and
S/G-plane denoising.  The same functionality is exposed over HTTP by
`flimkit.service` and driven from the command line by `flimkit.cli`.
"""

__version__ = "0.1.0"

from .decay import (  # noqa: F401
    DecayModel,
    DiracIrf,
    Disk,
    FlimCube,
    GaussianIrf,
    MeasuredIrf,
    PhantomSpec,
    Rectangle,
    Region,
    TcspcHistogram,
    TimeGrid,
    default_grid,
    evaluate_decay,
    synthesize_cube,
    synthesize_histogram,
    synthesize_histogram_on,
)
from .images import LifetimeImage  # noqa: F401
from .fitting import (  # noqa: F401
    FitResult,
    IrfEstimate,
    batch_fit,
    fit_em,
    fit_lsm,
    gate_lifetime,
    tail_fit,
)
from .phasor import (  # noqa: F401
    FdMeasurement,
    Phasor,
    PhasorImage,
    average_lifetime,
    fd_lifetimes,
    phasor_from_components,
    phasor_from_fd,
    phasor_from_histogram,
    phasor_image,
)
from .segment import SegmentationResult, kmeans_phasor, labels_to_image  # noqa: F401
from .classify import (  # noqa: F401
    ElmModel,
    EviResult,
    QuadrantFeatures,
    RegionStats,
    da_score,
    da_train,
    elm_predict,
    elm_train,
    quadrant_features,
    region_stats,
)
from .estimator import (  # noqa: F401
    MlpModel,
    TrainConfig,
    load_mlp,
    mlp_batch,
    mlp_predict,
    mlp_train,
    save_mlp,
)
from .cs import (  # noqa: F401
    CsMeasurement,
    GatedStack,
    PatternSet,
    cs_forward,
    cs_invert,
    cs_lifetime,
    hadamard_patterns,
)
from .denoise import (  # noqa: F401
    CompositeImage,
    FrameAverage,
    GaussianSmooth,
    MedianSmooth,
    composite,
    denoise_sg,
    lifetime_from_phasor_image,
    psnr,
)
