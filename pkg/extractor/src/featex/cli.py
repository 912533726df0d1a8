"""featex command line: `extract` for feature CSVs, `cam-tensors` for
activation/gradient tensor pairs."""

from __future__ import annotations

import argparse
import sys


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="featex",
        description="Export deep features and heatmap tensors from pretrained CNNs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="image tree (benign/, malignant/) -> feature CSV")
    p.add_argument("--images", required=True)
    p.add_argument("--network", default=None, help="see `featex networks`")
    p.add_argument("--out", required=True)
    p.add_argument("--weights", default="imagenet", choices=["imagenet", "random"])
    p.add_argument("--seed", type=int, default=0, help="init seed for --weights random")
    p.add_argument("--magnification", default="", help="tag recorded for bookkeeping")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("cam-tensors", help="one image -> activation + gradient tensors")
    p.add_argument("--image", required=True)
    p.add_argument("--network", default=None)
    p.add_argument("--out-act", required=True)
    p.add_argument("--out-grad", required=True)
    p.add_argument("--weights", default="imagenet", choices=["imagenet", "random"])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_cam_tensors)

    p = sub.add_parser("networks", help="list supported network names")
    p.set_defaults(func=cmd_networks)

    return parser


def _weights_arg(value: str):
    return None if value == "random" else value


def cmd_extract(args) -> int:
    from .extract import ExtractionJob, extract_features
    from .networks import DEFAULT_NETWORK

    job = ExtractionJob(
        images_dir=args.images,
        network=args.network or DEFAULT_NETWORK,
        out_path=args.out,
        weights=_weights_arg(args.weights),
        seed=args.seed,
        magnification=args.magnification,
    )
    result = extract_features(job)
    print(
        f"featex: wrote {result.n_rows} rows x {result.n_features} features to {args.out}"
        + (f" ({len(result.skipped)} skipped)" if result.skipped else "")
    )
    return 0


def cmd_cam_tensors(args) -> int:
    from .camtensors import export_gradcam_tensors
    from .networks import DEFAULT_NETWORK

    result = export_gradcam_tensors(
        args.image,
        args.out_act,
        args.out_grad,
        network=args.network or DEFAULT_NETWORK,
        weights=_weights_arg(args.weights),
        seed=args.seed,
    )
    h, w, c = result.activations.shape
    print(f"featex: wrote {h}x{w}x{c} tensors (predicted class {result.predicted_class})")
    return 0


def cmd_networks(args) -> int:
    from .networks import network_names

    for name in network_names():
        print(name)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (KeyError, FileNotFoundError, ValueError, OSError) as exc:
        message = exc.args[0] if exc.args else str(exc)
        print(f"featex: error: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
