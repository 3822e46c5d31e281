import argparse
import contextlib
import logging
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np
import pandas as pd
from omegaconf.errors import OmegaConfBaseException

from . import __version__
from .analysis import iou_by_size, panoptic_quality
from .analysis.panoptic_quality import report_rows
from .codec import (
    build_uv_grid,
    contrast_ratio,
    decode_pe,
    decode_rgb_direct,
    encode_pe,
    encode_rgb_direct,
    encode_uv_classes,
)
from .eds import EDSConfig, boundary_mask, combined_boundary, eds_weights_for_boundary
from .errors import FormatError, SpectrapanError
from .gradcheck import check_gradient
from .grid import CategoryTable, Field, IdMap, WeightMask, read_field, read_panoptic_png, write_field, write_panoptic_png
from .lab import circle_ratio_series, circle_weight_ratio, generate_scene, random_scene, roundtrip_scene, run_loss_scale_suite, toy_coupled_train, toy_suite
from .lab.circles import series_dataframe
from .lab.loss_scale import suite_dataframe
from .lab.scenes import default_categories, summarize, toy_scene
from .losses import (
    affine_invariant_depth_loss,
    dice_loss,
    direct_regression_loss,
    instance_pe_loss,
    panoptic_loss,
    semantic_ce_loss,
    silog_loss,
    tv_loss_ce,
    tv_loss_regression,
)
from .pipeline import cluster_instances, fuse, panoptic_from_labels, read_panoptic, write_panoptic
from .utils import atomic_write_bytes, write_metadata_sidecar
from .utils.config import (
    Config,
    console,
    eds_from_cfg,
    fusion_from_cfg,
    load_cfg,
    loss_weights_from_cfg,
    pe_from_cfg,
    print_cfg,
    set_verbosity,
    toy_train_from_cfg,
    validate_cfg,
)
from .utils.serialize import dumps_json

logger = logging.getLogger("spectrapan")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class UsageError(Exception):
    pass


class _ParserExit(Exception):
    def __init__(self, status: int):
        super().__init__(status)
        self.status = status


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so usage errors map to exit 1.

    Help and version text go to stderr; stdout only carries the status line.
    """

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")

    def exit(self, status=0, message=None):
        if message:
            sys.stderr.write(message)
        raise _ParserExit(status)

    def _print_message(self, message, file=None):
        if message:
            sys.stderr.write(message)


def _grid(text: str) -> tuple[int, int]:
    try:
        h, w = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 80x80, got {text!r}")
    return h, w


# flag dest -> config key, per subcommand family
_CODEC_FLAGS = {"L": "codec.L", "bins": "codec.uv_bins"}
_EDS_FLAGS = {"w_min": "eds.w_min", "D": "eds.D", "backend": "eds.backend"}
_FUSION_FLAGS = {
    "merge_radius": "fusion.merge_radius",
    "min_area": "fusion.min_instance_area",
    "orphan_policy": "fusion.orphan_policy",
}
_LOSS_FLAGS = {"tv_norm": "loss.tv_norm", "lam": "loss.silog_lambda", "ignore_index": "loss.ignore_index"}
_CIRCLE_FLAGS = {"R": "lab.circles.R", "D": "lab.circles.D", "w_min": "lab.circles.w_min"}
_CONTRAST_FLAGS = {"points": "lab.contrast.points", "L": "lab.contrast.L"}
_TRAIN_FLAGS = {"steps": "lab.train.steps", "lr": "lab.train.lr", "L": "codec.L", "workers": "lab.workers"}


def _add_common(p: argparse.ArgumentParser, flags: dict[str, str]) -> None:
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="config override in dotted form, e.g. fusion.merge_radius=2")
    p.add_argument("--verbose", action="store_true", help="log progress at INFO level")
    p.add_argument("--debug", action="store_true", help="log at DEBUG level")
    p.set_defaults(flag_map=flags)


def _add_output(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("-o", "--output", type=Path, required=required)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spectrapan", description="Centroid-regression panoptic segmentation toolkit")
    parser.add_argument("--version", action="version", version=f"spectrapan {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("encode", help="instance PNG -> per-pixel centroid targets",
                       description="Tag every labeled pixel with its instance centroid: spectral embedding "
                       "concat(gamma(u), gamma(v)) with gamma(p) = (sin 2^l pi p, cos 2^l pi p), RGB-direct "
                       "((u+1)/2, (v+1)/2, 1), or u/v class bins. Void pixels get the zero vector.")
    p.add_argument("--instances", type=Path, required=True)
    p.add_argument("--mode", choices=["pe", "direct", "uv"], default="pe")
    p.add_argument("--L", type=int)
    p.add_argument("--grid", type=_grid)
    p.add_argument("--bins", type=int)
    _add_output(p)
    _add_common(p, _CODEC_FLAGS)

    p = sub.add_parser("decode", help="per-pixel predictions -> uv-grid cells or instances",
                       description="Nearest-neighbor search over the uv-grid cell centers plus the void zero "
                       "vector, distance 0.5 (|p_u - c_u| + |p_v - c_v|). Writes cell index + 1 (0 = void), "
                       "or clustered instance ids with --cluster.")
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--mode", choices=["pe", "direct"], default="pe")
    p.add_argument("--L", type=int)
    p.add_argument("--grid", type=_grid)
    p.add_argument("--cluster", action="store_true")
    p.add_argument("--merge-radius", type=float)
    p.add_argument("--min-area", type=int)
    _add_output(p)
    _add_common(p, {**_CODEC_FLAGS, **_FUSION_FLAGS})

    p = sub.add_parser("eds", help="edge distance sampling weights",
                       description="w = w_min + (1 - w_min) exp(-d^2 / D^2), d the exact Euclidean distance "
                       "to the nearest 4-connected label boundary (void transitions included).")
    p.add_argument("--instances", type=Path, required=True)
    p.add_argument("--semantics", type=Path, help="also use semantic boundaries")
    p.add_argument("--w-min", type=float)
    p.add_argument("--D", type=float)
    p.add_argument("--backend", choices=["envelope", "scipy"])
    _add_output(p)
    _add_common(p, _EDS_FLAGS)

    p = sub.add_parser("loss", help="evaluate a loss and its analytic gradient",
                       description="Losses reduce per-pixel values with the weighted mean sum(w l) / sum(w). "
                       "pe: 0.5 (|d_u| + |d_v|); ce: softmax cross-entropy; tv / tv-ce: total variation; "
                       "dice: soft DICE with fuzzy participation; affine: median / mean-absolute-deviation "
                       "aligned disparity L1; silog: mean(d^2) - lambda mean(d)^2 of log depth; panoptic: weighted sum of "
                       "semantic CE, its TV, embedding loss, its TV and DICE.")
    p.add_argument("--kind", required=True,
                   choices=["pe", "direct", "ce", "tv", "tv-ce", "dice", "affine", "silog", "panoptic"])
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--target", type=Path, help="target field (pe, direct, affine, silog)")
    p.add_argument("--instances", type=Path, help="instance PNG (pe without --target, dice)")
    p.add_argument("--labels", type=Path, help="class-index PNG (ce, panoptic)")
    p.add_argument("--semantic", type=Path, help="semantic logits field (panoptic, --pred holds the embedding)")
    p.add_argument("--weights", type=Path, help="1-channel weight field, uniform when omitted")
    p.add_argument("--tv-norm", choices=["l1", "l2", "pe"])
    p.add_argument("--lam", type=float)
    p.add_argument("--ignore-index", type=int)
    p.add_argument("--check-grad", action="store_true", help="compare with central finite differences")
    _add_output(p, required=False)
    _add_common(p, _LOSS_FLAGS)

    p = sub.add_parser("fuse", help="semantic logits + instance embeddings -> panoptic PNG",
                       description="Decode embeddings to uv-grid cells, merge cells within merge_radius, drop "
                       "groups below the area threshold, give each instance its modal thing class and every "
                       "other pixel its stuff class (one segment per stuff class).")
    p.add_argument("--semantic", type=Path, required=True)
    p.add_argument("--instance", type=Path, required=True)
    p.add_argument("--categories", type=Path, required=True)
    p.add_argument("--L", type=int)
    p.add_argument("--grid", type=_grid)
    p.add_argument("--merge-radius", type=float)
    p.add_argument("--min-area", type=int)
    p.add_argument("--orphan-policy", choices=["void", "nearest"])
    _add_output(p)
    _add_common(p, {**_CODEC_FLAGS, **_FUSION_FLAGS})

    p = sub.add_parser("eval-pq", help="panoptic quality of a prediction against the truth",
                       description="PQ = sum of matched IoU / (TP + FP/2 + FN/2) per category, matches at "
                       "IoU > 0.5 within a category, averaged over categories.")
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--truth", type=Path, required=True)
    p.add_argument("--pred-segments", type=Path)
    p.add_argument("--truth-segments", type=Path)
    p.add_argument("--format", choices=["json", "csv", "md"], default="json")
    _add_output(p, required=False)
    _add_common(p, {})

    p = sub.add_parser("synth", help="generate a synthetic scene",
                       description="Rasterize circles and rectangles (later shapes occlude earlier ones) into "
                       "instance and semantic PNGs plus the category table.")
    p.add_argument("--kind", choices=["random", "roundtrip", "toy"], default="random")
    p.add_argument("--seed", type=int)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--out-dir", type=Path, required=True)
    _add_common(p, {"seed": "seed"})

    p = sub.add_parser("lab-contrast", help="largest over smallest adjacent candidate distance",
                       description="Contrast of a 1-D candidate set: max pairwise distance / min adjacent "
                       "distance, on raw coordinates and on their spectral embedding. -o writes the ratio for every "
                       "harmonic count up to L.")
    p.add_argument("--points", type=int)
    p.add_argument("--L", type=int)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    _add_output(p, required=False)
    _add_common(p, _CONTRAST_FLAGS)

    p = sub.add_parser("lab-circles", help="EDS weight ratio of a radius-2R and a radius-R circle",
                       description="Sum of edge-distance weights inside the big circle over the sum inside the "
                       "small one; pixel counts alone give 4, boundary-dominated weights approach 2. -o writes the "
                       "ratio over D (x0.25 to x2) and over w_min (0 to 1).")
    p.add_argument("--R", type=int)
    p.add_argument("--D", type=float)
    p.add_argument("--w-min", type=float)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    _add_output(p, required=False)
    _add_common(p, _CIRCLE_FLAGS)

    p = sub.add_parser("lab-train", help="toy coupled training, IoU by instance size",
                       description="Shared linear model over random instance features, trained with spectral "
                       "embedding + EDS and with direct regression without EDS; reports mean IoU per size bin.")
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--L", type=int)
    p.add_argument("--scenes", type=int, default=2)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--progress", action="store_true")
    p.add_argument("--format", choices=["json", "csv", "md"], default="json")
    _add_output(p, required=False)
    _add_common(p, {**_TRAIN_FLAGS, "seed": "seed"})

    p = sub.add_parser("lab-loss-scale", help="cross-assignment loss against centroid distance",
                       description="Loss a border pixel would incur when predicted with the neighboring "
                       "instance's target, direct vs spectral embedding, over the fixed strip suite.")
    p.add_argument("--L", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    _add_output(p, required=False)
    _add_common(p, {"L": "lab.contrast.L", "workers": "lab.workers"})
    return parser


def _config_from_args(args: argparse.Namespace) -> Config:
    overrides = list(args.overrides)
    for dest, key in args.flag_map.items():
        value = getattr(args, dest, None)
        if value is not None:
            overrides.append(f"{key}={value}")
    grid = getattr(args, "grid", None)
    if grid is not None:
        overrides += [f"codec.grid_h={grid[0]}", f"codec.grid_w={grid[1]}"]
    cfg = load_cfg(overrides)
    validate_cfg(cfg)
    return cfg


def _read_idmap(path: Path) -> IdMap:
    return read_panoptic_png(Path(path).read_bytes())


def _read_field(path: Path) -> Field:
    return read_field(Path(path).read_bytes())


def _write_artifact(path: Path, data: bytes, argv: list[str]) -> str:
    atomic_write_bytes(path, data)
    write_metadata_sidecar(path, argv)
    return str(path)


def _write_report(path: Path, fmt: str, df: pd.DataFrame, payload: Any, argv: list[str], markdown: str = "") -> str:
    if fmt == "md":
        text = markdown + "\n"
    elif fmt == "csv":
        text = df.to_csv(index=False, float_format="%.10g", lineterminator="\n")
    else:
        text = dumps_json(payload, indent=2) + "\n"
    return _write_artifact(path, text.encode("utf-8"), argv)


def cmd_encode(args, cfg: Config, argv) -> dict:
    instances = _read_idmap(args.instances)
    if args.mode == "pe":
        field = encode_pe(instances, pe_from_cfg(cfg))
    elif args.mode == "direct":
        field = encode_rgb_direct(instances)
    else:
        u_bins, v_bins = encode_uv_classes(instances, cfg.codec.uv_bins)
        field = Field(np.stack([u_bins.ids, v_bins.ids]).astype(np.float64))
    out = _write_artifact(args.output, write_field(field), argv)
    return {"output": out, "channels": field.channels, "height": field.height, "width": field.width}


def cmd_decode(args, cfg: Config, argv) -> dict:
    pred = _read_field(args.pred)
    grid = build_uv_grid(pe_from_cfg(cfg))
    decoded = decode_pe(pred, grid) if args.mode == "pe" else decode_rgb_direct(pred, grid)
    result = cluster_instances(decoded, fusion_from_cfg(cfg)) if args.cluster else decoded.as_idmap()
    out = _write_artifact(args.output, write_panoptic_png(result), argv)
    return {"output": out, "void_pixels": int(decoded.void.sum()), "labels": int(len(result.labels()))}


def cmd_eds(args, cfg: Config, argv) -> dict:
    instances = _read_idmap(args.instances)
    if args.semantics is not None:
        boundary = combined_boundary(instances, _read_idmap(args.semantics))
    else:
        boundary = boundary_mask(instances)
    weights = eds_weights_for_boundary(boundary, eds_from_cfg(cfg))
    out = _write_artifact(args.output, write_field(weights.as_field()), argv)
    return {"output": out, "boundary_pixels": int(boundary.sum()), "weight_sum": float(weights.weights.sum())}


def _loss_fn(args, cfg: Config, pred: Field) -> Callable[[Field], Any]:
    """Resolve the chosen loss into a function of the prediction alone."""
    kind = args.kind
    h, w = pred.height, pred.width
    weights = WeightMask(_read_field(args.weights).values[0]) if args.weights else WeightMask.uniform(h, w)

    def need(flag: str):
        value = getattr(args, flag)
        if value is None:
            raise UsageError(f"--kind {kind} needs --{flag.replace('_', '-')}")
        return value

    if kind == "pe":
        if args.target is not None:
            target = _read_field(args.target)
        else:
            target = encode_pe(_read_idmap(need("instances")), pe_from_cfg(cfg))
        return lambda p: instance_pe_loss(p, target, weights)
    if kind == "direct":
        target = _read_field(need("target"))
        return lambda p: direct_regression_loss(p, target, weights)
    if kind == "ce":
        labels = _read_idmap(need("labels"))
        return lambda p: semantic_ce_loss(p, labels, weights, cfg.loss.ignore_index)
    if kind == "tv":
        return lambda p: tv_loss_regression(p, cfg.loss.tv_norm)
    if kind == "tv-ce":
        return tv_loss_ce
    if kind == "dice":
        instances = _read_idmap(need("instances"))
        pe = pe_from_cfg(cfg)
        return lambda p: dice_loss(p, instances, pe)
    target = _read_field(need("target"))
    if kind == "affine":
        return lambda p: affine_invariant_depth_loss(p, target, weights)
    return lambda p: silog_loss(p, target, weights, cfg.loss.silog_lambda)


def _panoptic_loss(args, cfg: Config, inst_pred: Field, argv) -> dict:
    if args.semantic is None or args.labels is None or args.instances is None:
        raise UsageError("--kind panoptic needs --semantic, --labels and --instances")
    if args.check_grad:
        raise UsageError("--check-grad applies to single losses, not to --kind panoptic")
    sem_logits = _read_field(args.semantic)
    semantics = _read_idmap(args.labels)
    instances = _read_idmap(args.instances)
    h, w = inst_pred.height, inst_pred.width
    weights = WeightMask(_read_field(args.weights).values[0]) if args.weights else WeightMask.uniform(h, w)
    res = panoptic_loss(
        sem_logits, semantics, inst_pred, instances, pe_from_cfg(cfg), weights, weights,
        loss_weights_from_cfg(cfg), cfg.loss.ignore_index, cfg.loss.tv_norm,
    )
    status: dict[str, Any] = {"kind": "panoptic", "value": res.value, "components": res.components}
    if args.output is not None:
        status["output"] = _write_artifact(args.output, write_field(res.instance_grad), argv)
    return status


def cmd_loss(args, cfg: Config, argv) -> dict:
    pred = _read_field(args.pred)
    if args.kind == "panoptic":
        return _panoptic_loss(args, cfg, pred, argv)
    fn = _loss_fn(args, cfg, pred)
    res = fn(pred)
    status: dict[str, Any] = {"kind": args.kind, "value": res.value}
    if args.check_grad:
        status["gradcheck"] = check_gradient(fn, pred).to_dict()
    if args.output is not None:
        status["output"] = _write_artifact(args.output, write_field(res.gradient), argv)
    return status


def cmd_fuse(args, cfg: Config, argv) -> dict:
    categories = CategoryTable.from_json(Path(args.categories).read_bytes())
    sem_logits = _read_field(args.semantic)
    inst_pred = _read_field(args.instance)
    seg = fuse(sem_logits, inst_pred, build_uv_grid(pe_from_cfg(cfg)), fusion_from_cfg(cfg, categories))
    png, table = write_panoptic(seg)
    out = _write_artifact(args.output, png, argv)
    segments = _write_artifact(args.output.with_suffix(".json"), table, argv)
    return {"output": out, "segments": segments, "n_segments": len(seg.segments)}


def _read_seg(png: Path, segments: Path | None):
    return read_panoptic(Path(png).read_bytes(), Path(segments).read_bytes() if segments else None)


def _things_only(seg) -> IdMap:
    things = [sid for sid, s in seg.segments.items() if s.is_thing]
    ids = seg.segment_map.ids
    return IdMap(np.where(np.isin(ids, things), ids, 0))


def cmd_eval_pq(args, cfg: Config, argv) -> dict:
    pred = _read_seg(args.pred, args.pred_segments)
    truth = _read_seg(args.truth, args.truth_segments)
    report = panoptic_quality(pred, truth)
    status = {"pq": report.pq, "sq": report.sq, "rq": report.rq, "tp": report.tp, "fp": report.fp, "fn": report.fn}
    sizes = iou_by_size(_things_only(pred), _things_only(truth), cfg.metrics.size_bins)
    status["iou_by_size"] = sizes.to_dict()
    if args.output is not None:
        status["output"] = _write_report(
            args.output, args.format, pd.DataFrame(report_rows(report)), report, argv, report.to_markdown()
        )
    return status


def cmd_synth(args, cfg: Config, argv) -> dict:
    seed = cfg.seed
    if args.kind == "random":
        spec = random_scene(seed, args.height, args.width)
    elif args.kind == "roundtrip":
        spec = roundtrip_scene(seed, args.height, args.width, pe_from_cfg(cfg), merge_radius=cfg.fusion.merge_radius)
    else:
        spec = toy_scene(seed)
    instances, semantics = generate_scene(spec)
    categories = default_categories()
    truth = panoptic_from_labels(instances, semantics, categories)
    png, table = write_panoptic(truth)
    out = args.out_dir
    written = [
        _write_artifact(out / "instances.png", write_panoptic_png(instances), argv),
        _write_artifact(out / "semantics.png", write_panoptic_png(semantics), argv),
        _write_artifact(out / "panoptic.png", png, argv),
        _write_artifact(out / "panoptic.json", table, argv),
        _write_artifact(out / "categories.json", (dumps_json({"categories": categories.to_json_list()}, indent=2) + "\n").encode(), argv),
        _write_artifact(out / "scene.json", (dumps_json(spec, indent=2) + "\n").encode(), argv),
    ]
    return {"outputs": written, "instances": int(len(instances.labels())), "areas": summarize(spec).areas}


def cmd_lab_contrast(args, cfg: Config, argv) -> dict:
    c = cfg.lab.contrast
    status: dict[str, Any] = {
        "points": c.points, "L": c.L, "direct": contrast_ratio(c.points), "pe": contrast_ratio(c.points, c.L)
    }
    if args.output is not None:
        # one row per harmonic count up to L, raw coordinates alongside
        series = [
            {"L": n, "points": c.points, "direct": status["direct"], "pe": contrast_ratio(c.points, n)}
            for n in range(1, c.L + 1)
        ]
        status["output"] = _write_report(args.output, args.format, pd.DataFrame(series), {"series": series}, argv)
    return status


def cmd_lab_circles(args, cfg: Config, argv) -> dict:
    c = cfg.lab.circles
    eds = EDSConfig(w_min=c.w_min, D=c.D, backend=cfg.eds.backend)
    status = circle_weight_ratio(c.R, eds).to_dict()
    if args.output is not None:
        series = circle_ratio_series(c.R, eds)
        status["output"] = _write_report(
            args.output, args.format, series_dataframe(series), {"series": [r.to_dict() for r in series]}, argv
        )
    return status


def cmd_lab_train(args, cfg: Config, argv) -> dict:
    tcfg = toy_train_from_cfg(cfg)
    scenes = toy_suite(tcfg.seed, args.scenes)
    runs = {}
    with console.status("Training toy models ...") if console.is_terminal else contextlib.nullcontext():
        runs["pe_eds"] = toy_coupled_train(scenes, "pe", True, tcfg, cfg.lab.workers, args.progress)
        runs["direct"] = toy_coupled_train(scenes, "direct", False, tcfg, cfg.lab.workers, args.progress)
    status: dict[str, Any] = {name: r.table.means for name, r in runs.items()}
    status["small_bin"] = {name: r.table.means[0] for name, r in runs.items()}
    if args.output is not None:
        frames = []
        for name, r in runs.items():
            df = r.table.to_dataframe()
            df.insert(0, "run", name)
            frames.append(df)
        payload = {name: r.to_dict() for name, r in runs.items()}
        markdown = "\n\n".join(f"## {name}\n\n{r.table.to_markdown()}" for name, r in runs.items())
        status["output"] = _write_report(
            args.output, args.format, pd.concat(frames, ignore_index=True), payload, argv, markdown
        )
    return status


def cmd_lab_loss_scale(args, cfg: Config, argv) -> dict:
    rows = run_loss_scale_suite(cfg.lab.contrast.L, cfg.lab.workers)
    status: dict[str, Any] = {"scenes": [r.to_dict() for r in rows]}
    if args.output is not None:
        status["output"] = _write_report(args.output, args.format, suite_dataframe(rows), status["scenes"], argv)
    return status


COMMANDS = {
    "encode": cmd_encode,
    "decode": cmd_decode,
    "eds": cmd_eds,
    "loss": cmd_loss,
    "fuse": cmd_fuse,
    "eval-pq": cmd_eval_pq,
    "synth": cmd_synth,
    "lab-contrast": cmd_lab_contrast,
    "lab-circles": cmd_lab_circles,
    "lab-train": cmd_lab_train,
    "lab-loss-scale": cmd_lab_loss_scale,
}


def _emit(status: dict) -> None:
    sys.stdout.write(dumps_json(status) + "\n")
    sys.stdout.flush()


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    command = None
    try:
        args = build_parser().parse_args(argv)
        command = args.command
        set_verbosity(args.verbose, args.debug)
        cfg = _config_from_args(args)
        if args.debug:
            print_cfg(cfg)
        status = COMMANDS[command](args, cfg, argv)
    except _ParserExit as e:
        # --help or --version
        command = next((a for a in argv if a in COMMANDS), None)
        _emit({"command": command, "status": "ok" if e.status == 0 else "error", "version": __version__})
        return EXIT_OK if e.status == 0 else EXIT_INVALID
    except (OSError, FormatError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        _emit({"command": command, "status": "error", "error": type(e).__name__, "message": str(e), "exit_code": EXIT_IO})
        return EXIT_IO
    except (UsageError, SpectrapanError, OmegaConfBaseException) as e:
        logger.error(f"{type(e).__name__}: {e}")
        _emit({"command": command, "status": "error", "error": type(e).__name__, "message": str(e), "exit_code": EXIT_INVALID})
        return EXIT_INVALID
    _emit({"command": command, "status": "ok", **status})
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(run())
