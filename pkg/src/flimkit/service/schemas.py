"""Request/response models for the analysis service.

Arrays travel as base64-encoded little-endian buffers with an explicit
shape and dtype so float values survive the wire bit-exactly; cubes and
trained estimator models reuse their binary container formats.
"""

import base64

import numpy as np
from pydantic import BaseModel, Field

from ..decay import DiracIrf, GaussianIrf, Irf, MeasuredIrf, TimeGrid
from ..images import LifetimeImage
from ..phasor import PhasorImage

_DTYPES = {"f8": "<f8", "i8": "<i8", "u1": "|u1", "b1": "|b1"}


class ArrayPayload(BaseModel):
    shape: list[int]
    dtype: str
    data_b64: str

    @classmethod
    def wrap(cls, arr: np.ndarray) -> "ArrayPayload":
        arr = np.asarray(arr)
        if arr.dtype == np.bool_:
            code = "b1"
        elif arr.dtype == np.uint8:
            code = "u1"
        elif np.issubdtype(arr.dtype, np.integer):
            code = "i8"
        else:
            code = "f8"
        data = arr.astype(_DTYPES[code]).tobytes()
        return cls(
            shape=list(arr.shape), dtype=code,
            data_b64=base64.b64encode(data).decode("ascii"),
        )

    def unwrap(self) -> np.ndarray:
        if self.dtype not in _DTYPES:
            raise ValueError(f"unsupported dtype {self.dtype!r}")
        raw = base64.b64decode(self.data_b64)
        arr = np.frombuffer(raw, dtype=_DTYPES[self.dtype])
        return arr.reshape(self.shape).copy()


class GridModel(BaseModel):
    n_bins: int
    bin_width_ns: float
    origin_ns: float = 0.0

    @classmethod
    def wrap(cls, grid: TimeGrid) -> "GridModel":
        return cls(n_bins=grid.n_bins, bin_width_ns=grid.bin_width,
                   origin_ns=grid.origin)

    def unwrap(self) -> TimeGrid:
        return TimeGrid(self.n_bins, self.bin_width_ns, self.origin_ns)


class IrfModel(BaseModel):
    kind: str = "dirac"
    center: float = 0.0
    fwhm: float = 0.1
    samples: list[float] | None = None

    @classmethod
    def wrap(cls, irf: Irf) -> "IrfModel":
        if isinstance(irf, GaussianIrf):
            return cls(kind="gaussian", center=irf.center, fwhm=irf.fwhm)
        if isinstance(irf, MeasuredIrf):
            return cls(kind="measured", samples=list(irf.samples))
        return cls(kind="dirac")

    def unwrap(self) -> Irf:
        if self.kind == "dirac":
            return DiracIrf()
        if self.kind == "gaussian":
            return GaussianIrf(self.center, self.fwhm)
        if self.kind == "measured":
            if not self.samples:
                raise ValueError("measured IRF needs samples")
            return MeasuredIrf(tuple(self.samples))
        raise ValueError(f"unknown IRF kind {self.kind!r}")


class LifetimeImageModel(BaseModel):
    tau: ArrayPayload
    fractions: ArrayPayload
    intensity: ArrayPayload
    valid: ArrayPayload

    @classmethod
    def wrap(cls, img: LifetimeImage) -> "LifetimeImageModel":
        return cls(
            tau=ArrayPayload.wrap(img.tau),
            fractions=ArrayPayload.wrap(img.fractions),
            intensity=ArrayPayload.wrap(img.intensity),
            valid=ArrayPayload.wrap(img.valid),
        )

    def unwrap(self) -> LifetimeImage:
        return LifetimeImage(
            self.tau.unwrap(), self.fractions.unwrap(),
            self.intensity.unwrap(), self.valid.unwrap(),
        )


class PhasorImageModel(BaseModel):
    g: ArrayPayload
    s: ArrayPayload
    intensity: ArrayPayload
    valid: ArrayPayload
    omega: float

    @classmethod
    def wrap(cls, img: PhasorImage) -> "PhasorImageModel":
        return cls(
            g=ArrayPayload.wrap(img.g), s=ArrayPayload.wrap(img.s),
            intensity=ArrayPayload.wrap(img.intensity),
            valid=ArrayPayload.wrap(img.valid), omega=img.omega,
        )

    def unwrap(self) -> PhasorImage:
        return PhasorImage(
            self.g.unwrap(), self.s.unwrap(), self.intensity.unwrap(),
            self.valid.unwrap(), self.omega,
        )


# --- requests / responses ----------------------------------------------------


class SimulateRequest(BaseModel):
    spec: dict
    seed: int = 0
    grid: GridModel | None = None
    irf: IrfModel = IrfModel()


class SimulateResponse(BaseModel):
    cube_b64: str
    truth: LifetimeImageModel


class FitRequest(BaseModel):
    cube_b64: str
    method: str = "lsm"
    n_components: int = 1
    irf: IrfModel = IrfModel()
    min_total: float = 100.0
    tail_start: float | None = None
    gate_width: float | None = None
    gate1_start: float | None = None
    model_b64: str | None = None  # FLMLP1 bytes for method="mlp"


class FitResponse(BaseModel):
    lifetime: LifetimeImageModel
    method: str


class PhasorRequest(BaseModel):
    cube_b64: str
    omega: float | None = None
    intensity_floor: float = 100.0


class PhasorResponse(BaseModel):
    image: PhasorImageModel


class SegmentRequest(BaseModel):
    cube_b64: str | None = None
    image: PhasorImageModel | None = None
    k: int = 2
    seed: int = 0
    max_iter: int = 300
    omega: float | None = None
    intensity_floor: float = 100.0


class SegmentResponse(BaseModel):
    labels: ArrayPayload
    centroids: ArrayPayload
    inertia: float
    iterations: int


class DaTrainRequest(BaseModel):
    healthy: list[list[float]]
    unhealthy: list[list[float]]


class DaModelPayload(BaseModel):
    weights: list[float]
    bias: float


class DaScoreRequest(BaseModel):
    model: DaModelPayload
    features: list[list[float]]


class DaScoreResponse(BaseModel):
    evi: list[float]
    labels: list[str]


class ElmTrainRequest(BaseModel):
    features: ArrayPayload
    labels: ArrayPayload
    hidden_dim: int = 100
    seed: int = 0


class ElmModelPayload(BaseModel):
    input_weights: ArrayPayload
    input_bias: ArrayPayload
    output_weights: ArrayPayload
    seed: int


class ElmPredictRequest(BaseModel):
    model: ElmModelPayload
    features: ArrayPayload


class ElmPredictResponse(BaseModel):
    predictions: ArrayPayload
    scores: ArrayPayload


class PatternRequest(BaseModel):
    side: int
    n_patterns: int
    seed: int = 0


class CsForwardRequest(BaseModel):
    cube_b64: str
    patterns: PatternRequest


class CsMeasurementModel(BaseModel):
    values: ArrayPayload
    grid: GridModel
    height: int
    width: int


class CsInvertRequest(BaseModel):
    measurement: CsMeasurementModel
    patterns: PatternRequest
    ridge: float = 0.0


class GatedStackModel(BaseModel):
    values: ArrayPayload
    grid: GridModel
    clamp_fraction: float


class CsLifetimeRequest(BaseModel):
    stack: GatedStackModel
    method: str = "lsm"
    n_components: int = 1
    irf: IrfModel = IrfModel()
    min_total: float = 100.0


class DenoiseMethodModel(BaseModel):
    kind: str  # frame_average | gaussian | median
    n_frames: int = 8
    sigma: float = 1.0
    radius: int = 1


class DenoiseRequest(BaseModel):
    frames: list[PhasorImageModel]
    method: DenoiseMethodModel
    compare_direct: bool = False
    reference_tau: float | None = None


class DenoiseResponse(BaseModel):
    denoised: PhasorImageModel
    lifetime: LifetimeImageModel
    direct_lifetime: LifetimeImageModel | None = None
    psnr_sg: float | None = None
    psnr_direct: float | None = None
    psnr_noisy: float | None = None


class CompositeRequest(BaseModel):
    lifetime: LifetimeImageModel
    intensity: ArrayPayload | None = None
    tau_min: float = 0.0
    tau_max: float = 2.0


class CompositeResponse(BaseModel):
    ppm_b64: str


class TrainMlpRequest(BaseModel):
    config: dict = Field(default_factory=dict)
    irf: IrfModel = IrfModel()
    grid: GridModel | None = None


class TrainMlpResponse(BaseModel):
    model_b64: str
    final_loss: float
    layer_sizes: list[int]


class BenchRequest(BaseModel):
    pipeline: str
    params: dict = Field(default_factory=dict)


class BenchResponse(BaseModel):
    csv: str
