"""Command-line interface: a thin client over the analysis service.

Each subcommand reads local files, sends the work to the service (an
in-process instance by default, or --server URL), writes the returned
artifacts, and drops a RunManifest JSON next to the primary output with
parameter values, seeds, content digests, and timings.
"""

import argparse
import base64
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import io as fio
from .client import ServiceClient, ServiceError
from .errors import FlimError
from .segment import DEFAULT_PALETTE, SegmentationResult, labels_to_image
from .service import schemas as s


def _add_irf_args(parser):
    parser.add_argument("--irf", choices=["dirac", "gaussian"], default="dirac")
    parser.add_argument("--irf-center", type=float, default=1.0,
                        help="Gaussian IRF center, ns")
    parser.add_argument("--irf-fwhm", type=float, default=0.15,
                        help="Gaussian IRF FWHM, ns")


def _irf_payload(args) -> dict:
    if args.irf == "gaussian":
        return {"kind": "gaussian", "center": args.irf_center,
                "fwhm": args.irf_fwhm}
    return {"kind": "dirac"}


def _add_grid_args(parser):
    parser.add_argument("--grid-bins", type=int, default=256)
    parser.add_argument("--grid-width", type=float, default=0.0488,
                        help="bin width, ns")
    parser.add_argument("--grid-origin", type=float, default=0.0)


def _grid_payload(args) -> dict:
    return {"n_bins": args.grid_bins, "bin_width_ns": args.grid_width,
            "origin_ns": args.grid_origin}


def _cube_b64(path) -> str:
    return base64.b64encode(Path(path).read_bytes()).decode("ascii")


def _write_manifest(args, command, inputs, outputs, seeds, started):
    params = {
        k: v for k, v in vars(args).items()
        if k not in ("func", "server") and not callable(v)
    }
    manifest = fio.RunManifest(
        command=command,
        parameters={k: (str(v) if isinstance(v, Path) else v)
                    for k, v in params.items()},
        seeds=seeds,
    )
    for p in inputs:
        manifest.add_input(p)
    for p in outputs:
        manifest.add_output(p)
    manifest.timings["wall_seconds"] = round(time.perf_counter() - started, 6)
    manifest.write(fio.manifest_path_for(outputs[0]))


def _lifetime_from_model(doc: dict):
    return s.LifetimeImageModel.model_validate(doc).unwrap()


def _phasor_from_model(doc: dict):
    return s.PhasorImageModel.model_validate(doc).unwrap()


def cmd_simulate(args, client) -> int:
    started = time.perf_counter()
    spec_text = Path(args.spec).read_text()
    payload = {
        "spec": json.loads(spec_text),
        "seed": args.seed,
        "grid": _grid_payload(args),
        "irf": _irf_payload(args),
    }
    out = client.post("/simulate", payload)
    fio.atomic_write_bytes(args.out, base64.b64decode(out["cube_b64"]))
    outputs = [args.out]
    if args.truth:
        fio.export_lifetime_csv(_lifetime_from_model(out["truth"]), args.truth)
        outputs.append(args.truth)
    _write_manifest(args, "simulate", [args.spec], outputs, [args.seed], started)
    return 0


def cmd_fit(args, client) -> int:
    started = time.perf_counter()
    payload = {
        "cube_b64": _cube_b64(args.cube),
        "method": args.method,
        "n_components": args.components,
        "irf": _irf_payload(args),
        "min_total": args.min_total,
        "tail_start": args.tail_start,
        "gate_width": args.gate_width,
        "gate1_start": args.gate1_start,
    }
    inputs = [args.cube]
    if args.method == "mlp":
        if not args.model:
            print("fit: --model is required for --method mlp", file=sys.stderr)
            return 2
        payload["model_b64"] = base64.b64encode(
            Path(args.model).read_bytes()
        ).decode("ascii")
        inputs.append(args.model)
    out = client.post("/fit", payload)
    fio.export_lifetime_csv(_lifetime_from_model(out["lifetime"]), args.out)
    _write_manifest(args, "fit", inputs, [args.out], [], started)
    return 0


def cmd_phasor(args, client) -> int:
    started = time.perf_counter()
    out = client.post(
        "/phasor",
        {"cube_b64": _cube_b64(args.cube), "omega": args.omega,
         "intensity_floor": args.floor},
    )
    fio.export_phasor_csv(_phasor_from_model(out["image"]), args.out)
    _write_manifest(args, "phasor", [args.cube], [args.out], [], started)
    return 0


def cmd_segment(args, client) -> int:
    started = time.perf_counter()
    out = client.post(
        "/segment",
        {"cube_b64": _cube_b64(args.cube), "k": args.k, "seed": args.seed,
         "max_iter": args.max_iter, "omega": args.omega,
         "intensity_floor": args.floor},
    )
    labels = s.ArrayPayload.model_validate(out["labels"]).unwrap()
    centroids = s.ArrayPayload.model_validate(out["centroids"]).unwrap()
    result = SegmentationResult(
        labels=labels, centroids=centroids, inertia=out["inertia"],
        iterations=out["iterations"],
    )
    palette = (DEFAULT_PALETTE * ((args.k // len(DEFAULT_PALETTE)) + 1))[: args.k]
    fio.export_ppm(labels_to_image(result, palette), args.out)
    outputs = [args.out]
    if args.centroids_out:
        lines = ["cluster,g,s"]
        for i, (g, sv) in enumerate(centroids):
            lines.append(f"{i},{g:.9g},{sv:.9g}")
        fio.atomic_write_text(args.centroids_out, "\n".join(lines) + "\n")
        outputs.append(args.centroids_out)
    _write_manifest(args, "segment", [args.cube], outputs, [args.seed], started)
    return 0


def _read_feature_csv(path, expect_label: bool):
    rows = []
    labels = []
    with open(path) as fh:
        header = fh.readline()
        del header
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = [float(v) for v in line.split(",")]
            if expect_label:
                rows.append(parts[:-1])
                labels.append(int(parts[-1]))
            else:
                rows.append(parts)
    return rows, labels


def cmd_classify(args, client) -> int:
    started = time.perf_counter()
    if args.mode == "da-train":
        healthy, _ = _read_feature_csv(args.healthy, expect_label=False)
        unhealthy, _ = _read_feature_csv(args.unhealthy, expect_label=False)
        out = client.post(
            "/classify/da/train", {"healthy": healthy, "unhealthy": unhealthy}
        )
        fio.atomic_write_text(args.out, json.dumps(out, indent=2) + "\n")
        _write_manifest(args, "classify", [args.healthy, args.unhealthy],
                        [args.out], [], started)
    elif args.mode == "da-score":
        model = json.loads(Path(args.model).read_text())
        features, _ = _read_feature_csv(args.features, expect_label=False)
        out = client.post("/classify/da/score",
                          {"model": model, "features": features})
        lines = ["evi,label"]
        for evi, label in zip(out["evi"], out["labels"]):
            lines.append(f"{evi:.9g},{label}")
        fio.atomic_write_text(args.out, "\n".join(lines) + "\n")
        _write_manifest(args, "classify", [args.model, args.features],
                        [args.out], [], started)
    elif args.mode == "elm-train":
        features, labels = _read_feature_csv(args.train, expect_label=True)
        out = client.post(
            "/classify/elm/train",
            {
                "features": s.ArrayPayload.wrap(np.array(features)).model_dump(),
                "labels": s.ArrayPayload.wrap(np.array(labels)).model_dump(),
                "hidden_dim": args.hidden_dim,
                "seed": args.seed,
            },
        )
        fio.atomic_write_text(args.out, json.dumps(out, indent=2) + "\n")
        _write_manifest(args, "classify", [args.train], [args.out],
                        [args.seed], started)
    else:  # elm-predict
        model = json.loads(Path(args.model).read_text())
        features, _ = _read_feature_csv(args.features, expect_label=False)
        out = client.post(
            "/classify/elm/predict",
            {"model": model,
             "features": s.ArrayPayload.wrap(np.array(features)).model_dump()},
        )
        preds = s.ArrayPayload.model_validate(out["predictions"]).unwrap()
        lines = ["prediction"] + [str(int(p)) for p in preds]
        fio.atomic_write_text(args.out, "\n".join(lines) + "\n")
        _write_manifest(args, "classify", [args.model, args.features],
                        [args.out], [], started)
    return 0


def _pattern_payload(args) -> dict:
    return {"side": args.side, "n_patterns": args.patterns,
            "seed": args.pattern_seed}


def cmd_cs(args, client) -> int:
    started = time.perf_counter()
    if args.action == "forward":
        out = client.post(
            "/cs/forward",
            {"cube_b64": _cube_b64(args.cube), "patterns": _pattern_payload(args)},
        )
        fio.atomic_write_text(args.out, json.dumps(out) + "\n")
        _write_manifest(args, "cs", [args.cube], [args.out],
                        [args.pattern_seed], started)
    elif args.action == "invert":
        meas = json.loads(Path(args.measurement).read_text())
        out = client.post(
            "/cs/invert",
            {"measurement": meas, "patterns": _pattern_payload(args),
             "ridge": args.ridge},
        )
        fio.atomic_write_text(args.out, json.dumps(out) + "\n")
        _write_manifest(args, "cs", [args.measurement], [args.out],
                        [args.pattern_seed], started)
    else:  # lifetime
        stack = json.loads(Path(args.stack).read_text())
        out = client.post(
            "/cs/lifetime",
            {"stack": stack, "method": args.method,
             "n_components": args.components, "min_total": args.min_total},
        )
        fio.export_lifetime_csv(_lifetime_from_model(out["lifetime"]), args.out)
        _write_manifest(args, "cs", [args.stack], [args.out], [], started)
    return 0


def cmd_denoise(args, client) -> int:
    started = time.perf_counter()
    frames = []
    for cube_path in args.cubes:
        out = client.post(
            "/phasor",
            {"cube_b64": _cube_b64(cube_path), "omega": args.omega,
             "intensity_floor": args.floor},
        )
        frames.append(out["image"])
    method = {"kind": args.method.replace("-", "_"), "n_frames": len(frames),
              "sigma": args.sigma, "radius": args.radius}
    out = client.post(
        "/denoise",
        {"frames": frames, "method": method,
         "compare_direct": args.compare_direct,
         "reference_tau": args.reference_tau},
    )
    fio.export_phasor_csv(_phasor_from_model(out["denoised"]), args.out)
    outputs = [args.out]
    if args.lifetime_out:
        fio.export_lifetime_csv(_lifetime_from_model(out["lifetime"]),
                                args.lifetime_out)
        outputs.append(args.lifetime_out)
    if args.compare_direct and args.psnr_out:
        lines = ["metric,db",
                 f"sg,{out['psnr_sg']:.6g}",
                 f"direct,{out['psnr_direct']:.6g}",
                 f"noisy,{out['psnr_noisy']:.6g}"]
        fio.atomic_write_text(args.psnr_out, "\n".join(lines) + "\n")
        outputs.append(args.psnr_out)
    _write_manifest(args, "denoise", list(args.cubes), outputs, [], started)
    return 0


def cmd_composite(args, client) -> int:
    started = time.perf_counter()
    payload = {
        "cube_b64": _cube_b64(args.cube),
        "method": args.method,
        "n_components": args.components,
        "irf": _irf_payload(args),
        "min_total": args.min_total,
    }
    inputs = [args.cube]
    if args.method == "mlp":
        if not args.model:
            print("composite: --model is required for --method mlp",
                  file=sys.stderr)
            return 2
        payload["model_b64"] = base64.b64encode(
            Path(args.model).read_bytes()
        ).decode("ascii")
        inputs.append(args.model)
    fit_out = client.post("/fit", payload)
    out = client.post(
        "/composite",
        {"lifetime": fit_out["lifetime"], "tau_min": args.tau_min,
         "tau_max": args.tau_max},
    )
    fio.atomic_write_bytes(args.out, base64.b64decode(out["ppm_b64"]))
    _write_manifest(args, "composite", inputs, [args.out], [], started)
    return 0


def cmd_train_mlp(args, client) -> int:
    started = time.perf_counter()
    config = json.loads(Path(args.config).read_text()) if args.config else {}
    out = client.post(
        "/train-mlp",
        {"config": config, "irf": _irf_payload(args),
         "grid": _grid_payload(args)},
    )
    fio.atomic_write_bytes(args.out, base64.b64decode(out["model_b64"]))
    print(f"final training loss: {out['final_loss']:.6g}")
    inputs = [args.config] if args.config else []
    _write_manifest(args, "train-mlp", inputs, [args.out],
                    [config.get("seed", 0)], started)
    return 0


def cmd_bench(args, client) -> int:
    started = time.perf_counter()
    params = json.loads(Path(args.params).read_text()) if args.params else {}
    out = client.post("/bench", {"pipeline": args.pipeline, "params": params})
    fio.atomic_write_text(args.out, out["csv"])
    print(out["csv"], end="")
    _write_manifest(args, "bench", [], [args.out], [], started)
    return 0


def cmd_serve(args, _client) -> int:
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flimkit",
        description="FLIM analysis toolkit (thin client over the flimkit service)",
    )
    parser.add_argument("--server", default=None,
                        help="service base URL; default runs in-process")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a phantom spec into a noisy cube")
    p.add_argument("--spec", required=True, help="phantom spec JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output cube path")
    p.add_argument("--truth", default=None, help="optional ground-truth CSV")
    _add_grid_args(p)
    _add_irf_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="extract per-pixel lifetimes from a cube")
    p.add_argument("--cube", required=True)
    p.add_argument("--method", choices=["lsm", "tail", "gate", "em", "mlp"],
                   default="lsm")
    p.add_argument("--components", type=int, choices=[1, 2], default=1)
    p.add_argument("--out", required=True, help="lifetime CSV path")
    p.add_argument("--min-total", type=float, default=100.0)
    p.add_argument("--tail-start", type=float, default=None)
    p.add_argument("--gate-width", type=float, default=None)
    p.add_argument("--gate1-start", type=float, default=None)
    p.add_argument("--model", default=None, help="FLMLP1 model for --method mlp")
    _add_irf_args(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("phasor", help="per-pixel phasor transform to CSV")
    p.add_argument("--cube", required=True)
    p.add_argument("--omega", type=float, default=None)
    p.add_argument("--floor", type=float, default=100.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_phasor)

    p = sub.add_parser("segment", help="k-means phasor segmentation to a PPM map")
    p.add_argument("--cube", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iter", type=int, default=300)
    p.add_argument("--omega", type=float, default=None)
    p.add_argument("--floor", type=float, default=100.0)
    p.add_argument("--out", required=True, help="label-map PPM path")
    p.add_argument("--centroids-out", default=None)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("classify", help="distance-analysis and ELM classifiers")
    p.add_argument("--mode", required=True,
                   choices=["da-train", "da-score", "elm-train", "elm-predict"])
    p.add_argument("--healthy", default=None, help="12-feature CSV (da-train)")
    p.add_argument("--unhealthy", default=None, help="12-feature CSV (da-train)")
    p.add_argument("--train", default=None,
                   help="feature CSV with trailing integer label (elm-train)")
    p.add_argument("--model", default=None, help="model JSON (scoring modes)")
    p.add_argument("--features", default=None, help="feature CSV (scoring modes)")
    p.add_argument("--hidden-dim", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("cs", help="compressive-sensing forward/invert/lifetime")
    p.add_argument("action", choices=["forward", "invert", "lifetime"])
    p.add_argument("--cube", default=None)
    p.add_argument("--measurement", default=None)
    p.add_argument("--stack", default=None)
    p.add_argument("--side", type=int, default=32)
    p.add_argument("--patterns", type=int, default=512)
    p.add_argument("--pattern-seed", type=int, default=0)
    p.add_argument("--ridge", type=float, default=1e-3)
    p.add_argument("--method", choices=["lsm", "gate"], default="lsm")
    p.add_argument("--components", type=int, choices=[1, 2], default=1)
    p.add_argument("--min-total", type=float, default=100.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cs)

    p = sub.add_parser("denoise", help="filter S/G phasor planes of one or more cubes")
    p.add_argument("--cubes", nargs="+", required=True)
    p.add_argument("--method", choices=["frame-average", "gaussian", "median"],
                   required=True)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--radius", type=int, default=1)
    p.add_argument("--omega", type=float, default=None)
    p.add_argument("--floor", type=float, default=100.0)
    p.add_argument("--compare-direct", action="store_true")
    p.add_argument("--reference-tau", type=float, default=None)
    p.add_argument("--out", required=True, help="denoised phasor CSV")
    p.add_argument("--lifetime-out", default=None)
    p.add_argument("--psnr-out", default=None)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("composite", help="fit a cube and render the HSV composite")
    p.add_argument("--cube", required=True)
    p.add_argument("--method", choices=["lsm", "tail", "gate", "em", "mlp"],
                   default="lsm")
    p.add_argument("--components", type=int, choices=[1, 2], default=1)
    p.add_argument("--model", default=None)
    p.add_argument("--min-total", type=float, default=100.0)
    p.add_argument("--tau-min", type=float, default=0.0)
    p.add_argument("--tau-max", type=float, default=2.0)
    p.add_argument("--out", required=True, help="composite PPM path")
    _add_irf_args(p)
    p.set_defaults(func=cmd_composite)

    p = sub.add_parser("train-mlp", help="train the per-pixel estimator")
    p.add_argument("--config", default=None, help="TrainConfig JSON")
    p.add_argument("--out", required=True, help="FLMLP1 model path")
    _add_grid_args(p)
    _add_irf_args(p)
    p.set_defaults(func=cmd_train_mlp)

    p = sub.add_parser("bench", help="run a benchmark pipeline, emit CSV")
    p.add_argument("--pipeline", required=True,
                   choices=["mlp-vs-lsm", "denoise", "fit-recovery"])
    p.add_argument("--params", default=None, help="pipeline kwargs JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8430)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "serve":
        return cmd_serve(args, None)
    try:
        with ServiceClient(args.server) as client:
            return args.func(args, client)
    except (ServiceError, FlimError, OSError, ValueError,
            json.JSONDecodeError) as exc:
        print(f"flimkit {args.command}: {exc}", file=sys.stderr)
        return 1


cli_main = main

if __name__ == "__main__":
    sys.exit(main())
