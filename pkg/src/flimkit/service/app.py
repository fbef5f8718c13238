"""FastAPI service exposing the toolkit as stateless compute endpoints.

Every endpoint is a pure function of its request body, so identical
requests give identical responses and the service can be scaled or
embedded in-process (the CLI does the latter by default).  Domain
errors map to 422, malformed payloads to 400.
"""

import base64

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from .. import bench as bench_mod
from ..classify import (
    DaModel,
    QuadrantFeatures,
    da_score,
    da_train,
    elm_predict,
    elm_train,
    ElmModel,
)
from ..cs import (
    CsMeasurement,
    GatedStack,
    cs_forward,
    cs_invert,
    cs_lifetime,
    hadamard_patterns,
)
from ..decay import default_grid, synthesize_cube
from ..denoise import (
    FrameAverage,
    GaussianSmooth,
    MedianSmooth,
    composite,
    denoise_lifetime,
    denoise_sg,
    lifetime_from_phasor_image,
    psnr,
)
from ..errors import FlimError
from ..estimator import TrainConfig, mlp_batch, mlp_from_bytes, mlp_to_bytes, mlp_train
from ..fitting import batch_fit, fit_em
from ..io import cube_from_bytes, cube_to_bytes, phantom_spec_from_json
from ..phasor import phasor_image
from ..segment import kmeans_phasor
from . import schemas as s

import json

from ..decay import TcspcHistogram
from ..images import LifetimeImage

app = FastAPI(title="flimkit", version=__version__)


def _decode_cube(cube_b64: str):
    try:
        return cube_from_bytes(base64.b64decode(cube_b64))
    except FlimError as exc:
        raise HTTPException(status_code=400, detail=str(exc))


def _domain_error(exc: Exception) -> HTTPException:
    return HTTPException(status_code=422, detail=f"{type(exc).__name__}: {exc}")


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


@app.post("/simulate", response_model=s.SimulateResponse)
def simulate(req: s.SimulateRequest):
    try:
        spec = phantom_spec_from_json(json.dumps(req.spec))
        grid = req.grid.unwrap() if req.grid else default_grid()
        cube, truth = synthesize_cube(spec, req.irf.unwrap(), grid, req.seed)
    except (FlimError, ValueError, KeyError) as exc:
        raise _domain_error(exc)
    return s.SimulateResponse(
        cube_b64=base64.b64encode(cube_to_bytes(cube)).decode("ascii"),
        truth=s.LifetimeImageModel.wrap(truth),
    )


def _em_image(cube, min_total: float) -> LifetimeImage:
    height, width = cube.height, cube.width
    tau = np.zeros((height, width, 1))
    fractions = np.zeros((height, width, 1))
    intensity = cube.intensity().astype(np.float64)
    valid = np.zeros((height, width), dtype=bool)
    floor = max(min_total, 1000.0)
    import warnings

    for y in range(height):
        for x in range(width):
            if intensity[y, x] < floor:
                continue
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                tau_hat, _ = fit_em(TcspcHistogram(cube.grid, cube.counts[y, x]))
            tau[y, x, 0] = tau_hat
            fractions[y, x, 0] = 1.0
            valid[y, x] = True
    return LifetimeImage(tau, fractions, intensity, valid)


@app.post("/fit", response_model=s.FitResponse)
def fit(req: s.FitRequest):
    cube = _decode_cube(req.cube_b64)
    try:
        if req.method == "mlp":
            if not req.model_b64:
                raise ValueError("method 'mlp' needs model_b64")
            model = mlp_from_bytes(base64.b64decode(req.model_b64))
            img = mlp_batch(model, cube, min_total=req.min_total)
        elif req.method == "em":
            img = _em_image(cube, req.min_total)
        else:
            img = batch_fit(
                cube, req.irf.unwrap(), req.n_components, req.method,
                min_total=req.min_total, tail_start=req.tail_start,
                gate_width=req.gate_width, gate1_start=req.gate1_start,
            )
    except (FlimError, ValueError) as exc:
        raise _domain_error(exc)
    return s.FitResponse(lifetime=s.LifetimeImageModel.wrap(img), method=req.method)


@app.post("/phasor", response_model=s.PhasorResponse)
def phasor_endpoint(req: s.PhasorRequest):
    cube = _decode_cube(req.cube_b64)
    try:
        img = phasor_image(cube, req.omega, req.intensity_floor)
    except (FlimError, ValueError) as exc:
        raise _domain_error(exc)
    return s.PhasorResponse(image=s.PhasorImageModel.wrap(img))


@app.post("/segment", response_model=s.SegmentResponse)
def segment_endpoint(req: s.SegmentRequest):
    try:
        if req.image is not None:
            img = req.image.unwrap()
        elif req.cube_b64 is not None:
            cube = _decode_cube(req.cube_b64)
            img = phasor_image(cube, req.omega, req.intensity_floor)
        else:
            raise ValueError("segment needs either a cube or a phasor image")
        result = kmeans_phasor(img, req.k, req.seed, req.max_iter)
    except (FlimError, ValueError) as exc:
        raise _domain_error(exc)
    return s.SegmentResponse(
        labels=s.ArrayPayload.wrap(result.labels),
        centroids=s.ArrayPayload.wrap(result.centroids),
        inertia=result.inertia,
        iterations=result.iterations,
    )


@app.post("/classify/da/train", response_model=s.DaModelPayload)
def da_train_endpoint(req: s.DaTrainRequest):
    try:
        healthy = [QuadrantFeatures(np.array(v)) for v in req.healthy]
        unhealthy = [QuadrantFeatures(np.array(v)) for v in req.unhealthy]
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = da_train(healthy, unhealthy)
    except (FlimError, ValueError) as exc:
        raise _domain_error(exc)
    return s.DaModelPayload(weights=model.weights.tolist(), bias=model.bias)


@app.post("/classify/da/score", response_model=s.DaScoreResponse)
def da_score_endpoint(req: s.DaScoreRequest):
    try:
        model = DaModel(np.array(req.model.weights), req.model.bias)
        results = [
            da_score(model, QuadrantFeatures(np.array(v))) for v in req.features
        ]
    except (FlimError, ValueError) as exc:
        raise _domain_error(exc)
    return s.DaScoreResponse(
        evi=[r.evi for r in results], labels=[r.label for r in results]
    )


@app.post("/classify/elm/train", response_model=s.ElmModelPayload)
def elm_train_endpoint(req: s.ElmTrainRequest):
    try:
        model = elm_train(
            req.features.unwrap(), req.labels.unwrap(), req.hidden_dim, req.seed
        )
    except (FlimError, ValueError) as exc:
        raise _domain_error(exc)
    return s.ElmModelPayload(
        input_weights=s.ArrayPayload.wrap(model.input_weights),
        input_bias=s.ArrayPayload.wrap(model.input_bias),
        output_weights=s.ArrayPayload.wrap(model.output_weights),
        seed=model.seed,
    )


@app.post("/classify/elm/predict", response_model=s.ElmPredictResponse)
def elm_predict_endpoint(req: s.ElmPredictRequest):
    try:
        model = ElmModel(
            req.model.input_weights.unwrap(),
            req.model.input_bias.unwrap(),
            req.model.output_weights.unwrap(),
            req.model.seed,
        )
        predictions, scores = elm_predict(model, req.features.unwrap())
    except (FlimError, ValueError) as exc:
        raise _domain_error(exc)
    predictions = np.atleast_1d(np.asarray(predictions))
    scores = np.atleast_2d(scores)
    return s.ElmPredictResponse(
        predictions=s.ArrayPayload.wrap(predictions),
        scores=s.ArrayPayload.wrap(scores),
    )


def _patterns(req: s.PatternRequest):
    return hadamard_patterns(req.side, req.n_patterns, req.seed)


@app.post("/cs/forward", response_model=s.CsMeasurementModel)
def cs_forward_endpoint(req: s.CsForwardRequest):
    cube = _decode_cube(req.cube_b64)
    try:
        meas = cs_forward(cube, _patterns(req.patterns))
    except (FlimError, ValueError) as exc:
        raise _domain_error(exc)
    return s.CsMeasurementModel(
        values=s.ArrayPayload.wrap(meas.values),
        grid=s.GridModel.wrap(meas.grid),
        height=meas.height,
        width=meas.width,
    )


@app.post("/cs/invert", response_model=s.GatedStackModel)
def cs_invert_endpoint(req: s.CsInvertRequest):
    try:
        meas = CsMeasurement(
            req.measurement.values.unwrap(),
            req.measurement.grid.unwrap(),
            req.measurement.height,
            req.measurement.width,
        )
        stack = cs_invert(meas, _patterns(req.patterns), req.ridge)
    except (FlimError, ValueError) as exc:
        raise _domain_error(exc)
    return s.GatedStackModel(
        values=s.ArrayPayload.wrap(stack.values),
        grid=s.GridModel.wrap(stack.grid),
        clamp_fraction=stack.clamp_fraction,
    )


@app.post("/cs/lifetime", response_model=s.FitResponse)
def cs_lifetime_endpoint(req: s.CsLifetimeRequest):
    try:
        stack = GatedStack(
            req.stack.grid.unwrap(), req.stack.values.unwrap(),
            req.stack.clamp_fraction,
        )
        img = cs_lifetime(
            stack, req.method, req.irf.unwrap(), req.n_components,
            min_total=req.min_total,
        )
    except (FlimError, ValueError) as exc:
        raise _domain_error(exc)
    return s.FitResponse(lifetime=s.LifetimeImageModel.wrap(img), method=req.method)


def _denoise_method(model: s.DenoiseMethodModel):
    if model.kind == "frame_average":
        return FrameAverage(model.n_frames)
    if model.kind == "gaussian":
        return GaussianSmooth(model.sigma)
    if model.kind == "median":
        return MedianSmooth(model.radius)
    raise ValueError(f"unknown denoise method {model.kind!r}")


@app.post("/denoise", response_model=s.DenoiseResponse)
def denoise_endpoint(req: s.DenoiseRequest):
    try:
        method = _denoise_method(req.method)
        frames = [f.unwrap() for f in req.frames]
        if not frames:
            raise ValueError("no frames supplied")
        if isinstance(method, FrameAverage):
            source = frames
        else:
            if len(frames) != 1:
                raise ValueError(
                    f"{req.method.kind} filters take exactly one frame, "
                    f"got {len(frames)}"
                )
            source = frames[0]
        denoised = denoise_sg(source, method)
        ltimg = lifetime_from_phasor_image(denoised)
        direct = None
        psnr_sg = psnr_direct = psnr_noisy = None
        if req.compare_direct:
            direct = denoise_lifetime(source, method)
            if req.reference_tau is not None:
                truth = np.full(ltimg.valid.shape, req.reference_tau)
                noisy = lifetime_from_phasor_image(frames[0])
                psnr_sg = psnr(ltimg.tau[..., 0], truth, req.reference_tau,
                               ltimg.valid)
                psnr_direct = psnr(direct.tau[..., 0], truth, req.reference_tau,
                                   direct.valid)
                psnr_noisy = psnr(noisy.tau[..., 0], truth, req.reference_tau,
                                  noisy.valid)
    except (FlimError, ValueError) as exc:
        raise _domain_error(exc)
    return s.DenoiseResponse(
        denoised=s.PhasorImageModel.wrap(denoised),
        lifetime=s.LifetimeImageModel.wrap(ltimg),
        direct_lifetime=s.LifetimeImageModel.wrap(direct) if direct else None,
        psnr_sg=psnr_sg,
        psnr_direct=psnr_direct,
        psnr_noisy=psnr_noisy,
    )


@app.post("/composite", response_model=s.CompositeResponse)
def composite_endpoint(req: s.CompositeRequest):
    from ..io import ppm_bytes

    try:
        ltimg = req.lifetime.unwrap()
        intensity = (
            req.intensity.unwrap() if req.intensity is not None else ltimg.intensity
        )
        image = composite(intensity, ltimg, (req.tau_min, req.tau_max))
    except (FlimError, ValueError) as exc:
        raise _domain_error(exc)
    return s.CompositeResponse(
        ppm_b64=base64.b64encode(ppm_bytes(image.rgb)).decode("ascii")
    )


@app.post("/train-mlp", response_model=s.TrainMlpResponse)
def train_mlp_endpoint(req: s.TrainMlpRequest):
    try:
        cfg_kwargs = dict(req.config)
        for key in ("photon_range", "tau1_range", "tau2_range", "a1_range",
                    "hidden_dims"):
            if key in cfg_kwargs:
                cfg_kwargs[key] = tuple(cfg_kwargs[key])
        cfg = TrainConfig(**cfg_kwargs)
        grid = req.grid.unwrap() if req.grid else default_grid()
        model = mlp_train(cfg, req.irf.unwrap(), grid)
    except (FlimError, ValueError, TypeError) as exc:
        raise _domain_error(exc)
    return s.TrainMlpResponse(
        model_b64=base64.b64encode(mlp_to_bytes(model)).decode("ascii"),
        final_loss=model.final_loss,
        layer_sizes=list(model.layer_sizes),
    )


@app.post("/bench", response_model=s.BenchResponse)
def bench_endpoint(req: s.BenchRequest):
    try:
        csv = bench_mod.bench_csv(req.pipeline, **req.params)
    except (FlimError, ValueError, TypeError) as exc:
        raise _domain_error(exc)
    return s.BenchResponse(csv=csv)
