"""Command-line surface: split, train, predict, eval, grid, gradcam.

All outputs are written atomically (temp file + rename) and every command is
deterministic for fixed inputs, seeds and any worker-thread count, so repeated
runs produce byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import boosting, ensemble, gradcam, metrics
from .data import (
    DataError,
    LabeledDataset,
    _atomic_write_bytes,
    load_feature_matrix,
    read_tensor,
    save_feature_matrix,
    stratified_split,
    write_tensor,
)

ALGO_NAMES = {
    "levelwise": "level_wise",
    "leafwise": "leaf_wise",
    "oblivious": "oblivious",
}

# Table-style grid rows: X = level-wise, L = leaf-wise, C = oblivious
GRID_COMBINATIONS = ("X", "L", "C", "X&L", "X&C", "L&C", "X&L&C")
_SINGLE_FLAVOR = {"X": "level_wise", "L": "leaf_wise", "C": "oblivious"}


def _write_text(path: str, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid config ({exc})") from None
    if not isinstance(doc, dict):
        raise DataError(f"{path}: config must be a JSON object")
    return doc


def _probability_csv(ids, probs) -> str:
    lines = ["id,p_malignant"]
    lines.extend(f"{i},{repr(float(p))}" for i, p in zip(ids, probs))
    return "\n".join(lines) + "\n"


def _load_probability_csv(path: str) -> tuple[list[str], np.ndarray]:
    import csv as _csv

    with open(path, encoding="utf-8", newline="") as fh:
        reader = _csv.reader(fh)
        header = next(reader, None)
        if header != ["id", "p_malignant"]:
            raise DataError(f"{path}: malformed probability header {header!r}")
        ids, probs = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise DataError(f"{path}: row {lineno} has {len(row)} columns, expected 2")
            try:
                p = float(row[1])
            except ValueError:
                raise DataError(f"{path}: non-numeric probability at row {lineno}") from None
            if not (0.0 <= p <= 1.0):
                raise DataError(f"{path}: probability outside [0,1] at row {lineno}")
            ids.append(row[0])
            probs.append(p)
    if not ids:
        raise DataError(f"{path}: no data rows")
    return ids, np.array(probs)


def _load_labels_any(path: str) -> dict[str, int]:
    """Labels from a Feature CSV or a bare `id,label` CSV, keyed by id."""
    import csv as _csv

    with open(path, encoding="utf-8", newline="") as fh:
        header = next(_csv.reader(fh), None)
    if header == ["id", "label"]:
        out: dict[str, int] = {}
        with open(path, encoding="utf-8", newline="") as fh:
            reader = _csv.reader(fh)
            next(reader)
            for lineno, row in enumerate(reader, start=2):
                if len(row) != 2:
                    raise DataError(f"{path}: row {lineno} has {len(row)} columns, expected 2")
                if row[1] not in ("0", "1"):
                    raise DataError(f"{path}: label outside {{0,1}} at row {lineno}")
                if row[0] in out:
                    raise DataError(f"{path}: duplicate id {row[0]!r} at row {lineno}")
                out[row[0]] = int(row[1])
        if not out:
            raise DataError(f"{path}: no data rows")
        return out
    ds = load_feature_matrix(path)
    out = {}
    for i, row_id in enumerate(ds.ids):
        if row_id in out:
            raise DataError(f"{path}: duplicate id {row_id!r}")
        out[row_id] = int(ds.labels[i])
    return out


def cmd_split(args) -> int:
    ds = load_feature_matrix(args.input)
    train, test = stratified_split(ds, args.train_frac, args.seed)
    save_feature_matrix(train, args.out_train)
    save_feature_matrix(test, args.out_test)
    return 0


def cmd_train(args) -> int:
    ds = load_feature_matrix(args.train)
    config = _load_config(args.config)
    config["flavor"] = ALGO_NAMES[args.algo]
    if args.seed is not None:
        config["seed"] = args.seed
    params = boosting.params_from_json(config)
    model = boosting.train_gbdt(ds, params, n_threads=args.threads)
    boosting.save_model(model, args.out)
    return 0


def cmd_predict(args) -> int:
    ds = load_feature_matrix(args.input)
    model_paths = [p for p in args.model.split(",") if p]
    if not model_paths:
        raise DataError("at least one model file is required")
    member_probs = []
    for path in model_paths:
        model = boosting.load_model(path)
        member_probs.append(boosting.predict_proba(model, ds, n_threads=args.threads))
    combined = ensemble.soft_vote(member_probs)
    _write_text(args.out, _probability_csv(ds.ids, combined))
    return 0


def cmd_eval(args) -> int:
    ids, probs = _load_probability_csv(args.probs)
    labels_by_id = _load_labels_any(args.labels)
    missing = [i for i in ids if i not in labels_by_id]
    if missing:
        raise DataError(f"no label for id(s): {missing[:5]}")
    extra = set(labels_by_id) - set(ids)
    if extra:
        raise DataError(f"labels present for id(s) without probabilities: {sorted(extra)[:5]}")
    y = np.array([labels_by_id[i] for i in ids], dtype=np.int8)
    predicted = ensemble.decide(probs, threshold=args.threshold)
    counts = metrics.confusion(y, predicted)
    curve = metrics.roc_curve(y, probs) if len(set(y.tolist())) == 2 else None
    ev = metrics.evaluate(counts, curve, tag=args.tag)
    doc = metrics.report([ev])
    _write_text(args.out, json.dumps(doc, indent=2) + "\n")
    if args.roc:
        if curve is None:
            raise DataError("roc output requires both classes in the labels")
        _write_text(args.roc, metrics.roc_points_csv(curve))
    return 0


def _grid_eval(y_true: np.ndarray, probs: np.ndarray) -> tuple[float, float]:
    counts = metrics.confusion(y_true, ensemble.decide(probs))
    return metrics.accuracy(counts), metrics.f1(counts)


def run_grid(spec: dict, threads: int = 1) -> tuple[str, str]:
    """Train the three single flavors per magnification, evaluate the 7 combos
    from the cached probabilities, and render the two percent tables."""
    mags = spec.get("magnifications")
    if not mags:
        raise DataError("grid spec lists no magnifications")
    config = dict(spec.get("config", {}))
    if "seed" in spec:
        config["seed"] = spec["seed"]
    tags = []
    acc_cells: dict[str, list[str]] = {c: [] for c in GRID_COMBINATIONS}
    f1_cells: dict[str, list[str]] = {c: [] for c in GRID_COMBINATIONS}
    for mag in mags:
        for key in ("tag", "train", "test"):
            if key not in mag:
                raise DataError(f"grid magnification entry missing {key!r}")
        tags.append(mag["tag"])
        train_ds = load_feature_matrix(mag["train"])
        test_ds = load_feature_matrix(mag["test"])
        cached: dict[str, np.ndarray] = {}
        for letter, flavor in _SINGLE_FLAVOR.items():
            member_config = dict(config)
            member_config["flavor"] = flavor
            params = boosting.params_from_json(member_config)
            model = boosting.train_gbdt(train_ds, params, n_threads=threads)
            cached[letter] = boosting.predict_proba(model, test_ds, n_threads=threads)
        for combo in GRID_COMBINATIONS:
            members = [cached[letter] for letter in combo.split("&")]
            acc, f1_score = _grid_eval(test_ds.labels, ensemble.soft_vote(members))
            acc_cells[combo].append(
                metrics.render_percent(metrics.fraction_as_percent(acc))
            )
            f1_cells[combo].append(
                metrics.render_percent(metrics.fraction_as_percent(f1_score))
            )

    def table(cells: dict[str, list[str]]) -> str:
        lines = ["classifiers," + ",".join(tags)]
        lines.extend(f"{combo}," + ",".join(cells[combo]) for combo in GRID_COMBINATIONS)
        return "\n".join(lines) + "\n"

    return table(acc_cells), table(f1_cells)


def cmd_grid(args) -> int:
    spec = _load_config(args.spec)
    acc_csv, f1_csv = run_grid(spec, threads=args.threads)
    _write_text(args.out_acc, acc_csv)
    _write_text(args.out_f1, f1_csv)
    return 0


def cmd_gradcam(args) -> int:
    activations = read_tensor(args.activations)
    grads = read_tensor(args.gradients)
    heat = gradcam.heatmap_from_tensors(activations, grads)
    if args.image:
        image = gradcam.read_image_rgb(args.image)
        normalized = gradcam.normalize_upsample(heat, image.shape[0], image.shape[1])
        blended = gradcam.overlay(normalized, image)
        if args.out.lower().endswith((".png", ".bmp", ".tiff", ".tif")):
            gradcam.write_image_rgb(blended, args.out)
        else:
            write_tensor(normalized[:, :, None], args.out)
        if args.out_overlay:
            gradcam.write_image_rgb(blended, args.out_overlay)
    else:
        normalized = gradcam.normalize_upsample(heat, heat.shape[0], heat.shape[1])
        write_tensor(normalized[:, :, None], args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="histoboost",
        description="Gradient-boosted tree ensembles over deep-feature CSVs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="stratified train/test split of a feature CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--train-frac", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-test", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train one boosted model")
    p.add_argument("--algo", required=True, choices=sorted(ALGO_NAMES))
    p.add_argument("--train", required=True)
    p.add_argument("--config", default=None, help="JSON config; omitted fields use defaults")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write P(malignant) per row; several models soft-vote")
    p.add_argument("--model", required=True, help="model file, or comma-separated list")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="metrics report from probabilities and labels")
    p.add_argument("--probs", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.add_argument("--roc", default=None, help="also dump ROC points as CSV")
    p.add_argument("--tag", default="", help="magnification tag for the report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grid", help="train X/L/C per magnification, report the 7 combos")
    p.add_argument("--spec", required=True)
    p.add_argument("--out-acc", required=True)
    p.add_argument("--out-f1", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("gradcam", help="heatmap from activation/gradient tensor files")
    p.add_argument("--activations", required=True)
    p.add_argument("--gradients", required=True)
    p.add_argument("--image", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--out-overlay", default=None)
    p.set_defaults(func=cmd_gradcam)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except (DataError, boosting.ModelFormatError, ValueError, OSError) as exc:
        print(f"histoboost: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
