"""Command-line entry point: ``vg3d <subcommand> ...``.

Option values resolve as flags > ``--config`` file > built-in defaults. The
config file is JSON; top-level keys apply to every subcommand and a nested
object keyed by subcommand name (``{"eval-detect": {"iou_thresh": 0.5}}``)
applies to that one only. Keys use the option's Python name.
"""

import json
import logging
from pathlib import Path
import sys

import click
from joblib import Parallel, delayed
import numpy as np

from . import reports
from .bundles import (
    BundleError,
    read_aliases,
    read_caption_bundle,
    read_detection_bundle,
    read_grounding_bundle,
    read_jsonl,
    read_predictions,
)
from .data_prep import (
    FrameSampler,
    NoMatchError,
    fps_adaptive_sample,
    load_scene_bundle,
    select_best_frame,
)
from .evaluation.captioning import iou_gated_scores
from .evaluation.detection import score_detection
from .evaluation.grounding import score_grounding
from .fusion import (
    PatchGrid,
    TwoLayerMlp,
    fuse,
    merge_2x2,
    merged_grid_shape,
    mlp_gradient_check,
    patch_grid_shape,
    save_array,
)
from .geometry import OrientedBox3D, iou_3d

SUBCOMMANDS = ("eval-grounding", "eval-detect", "eval-caption", "prep-frames", "fuse-demo", "iou")

# options that never change report content
_NOT_ECHOED = ("jobs", "config", "out")


def _load_config(ctx, param, value):
    if value is None:
        return None
    try:
        doc = json.loads(Path(value).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise click.BadParameter(f"cannot read config: {exc}") from None
    if not isinstance(doc, dict):
        raise click.BadParameter("config must be a JSON object")
    shared = {k: v for k, v in doc.items() if k not in SUBCOMMANDS}
    ctx.default_map = {
        name: {**shared, **(doc.get(name) or {})} for name in SUBCOMMANDS
    }
    return value


def _threshold(ctx, param, value):
    values = value if isinstance(value, tuple) else (value,)
    for v in values:
        if v is not None and not 0.0 < v <= 1.0:
            raise click.BadParameter(f"{v} is not in (0, 1]")
    return value


def _header(ctx):
    return {k: (list(v) if isinstance(v, tuple) else v)
            for k, v in sorted(ctx.params.items()) if k not in _NOT_ECHOED}


def _emit(out, json_text, table_text):
    click.echo(table_text, nl=False)
    if out:
        out = Path(out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json_text)
        out.with_suffix(".txt").write_text(table_text)


def _common(f):
    f = click.option("--out", type=click.Path(dir_okay=False),
                     help="Write the JSON report here and the table next to it (.txt).")(f)
    f = click.option("--seed", type=int, default=0, show_default=True)(f)
    f = click.option("--jobs", type=click.IntRange(min=1), default=1, show_default=True,
                     help="Worker processes.")(f)
    return f


@click.group()
@click.option("--config", type=click.Path(exists=True, dir_okay=False), callback=_load_config,
              is_eager=True, expose_value=False, help="JSON config file.")
@click.option("-v", "--verbose", is_flag=True)
def main(verbose):
    """Geometry, protocol and evaluation tools for video-based 3D scene understanding."""
    logging.basicConfig(level=logging.INFO if verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command("eval-grounding")
@click.option("--pred", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--gt", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--proposals", type=click.Path(exists=True, dir_okay=False))
@click.option("--iou-thresh", "iou_thresh", type=float, multiple=True, callback=_threshold,
              help="Repeatable. Defaults to 0.25 and 0.5.")
@click.option("--refine/--no-refine", default=True, show_default=True)
@_common
@click.pass_context
def eval_grounding(ctx, pred, gt, proposals, iou_thresh, refine, jobs, seed, out):
    """Accuracy at IoU thresholds for frame-indexed grounding responses."""
    thresholds = tuple(iou_thresh) or (0.25, 0.5)
    ctx.params["iou_thresh"] = thresholds
    try:
        samples = read_grounding_bundle(gt, proposals)
        preds = read_predictions(pred)
    except (BundleError, OSError) as exc:
        raise click.ClickException(str(exc)) from None
    report = score_grounding(samples, preds, thresholds, refine, n_jobs=jobs)
    header = _header(ctx)
    _emit(out, reports.to_json(header, report.to_dict()), reports.grounding_table(header, report))


@main.command("eval-detect")
@click.option("--pred", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--gt", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--iou-thresh", "iou_thresh", type=float, default=0.25, show_default=True,
              callback=_threshold)
@click.option("--aliases", type=click.Path(exists=True, dir_okay=False),
              help="JSON object mapping category aliases to canonical names.")
@click.option("--lenient/--strict", default=True, show_default=True,
              help="Skip malformed entries instead of dropping the whole response.")
@_common
@click.pass_context
def eval_detect(ctx, pred, gt, iou_thresh, aliases, lenient, jobs, seed, out):
    """Per-class F1 and macro AP/AR/F1 from greedy matching."""
    try:
        scenes, classes = read_detection_bundle(gt)
        preds = read_predictions(pred)
        alias_table = read_aliases(aliases) if aliases else None
    except (BundleError, OSError, json.JSONDecodeError) as exc:
        raise click.ClickException(str(exc)) from None
    report = score_detection(scenes, preds, iou_thresh, classes, alias_table, lenient, n_jobs=jobs)
    header = _header(ctx)
    _emit(out, reports.to_json(header, report.to_dict()), reports.detection_table(header, report))


@main.command("eval-caption")
@click.option("--gt", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--pred", type=click.Path(exists=True, dir_okay=False),
              help="Candidate captions by object id; otherwise read from the GT records.")
@click.option("--gate", type=float, default=0.5, show_default=True, callback=_threshold)
@_common
@click.pass_context
def eval_caption(ctx, gt, pred, gate, jobs, seed, out):
    """IoU-gated CIDEr-D / BLEU-4 / ROUGE-L."""
    try:
        preds = read_predictions(pred) if pred else None
        samples = read_caption_bundle(gt, preds)
    except (BundleError, OSError) as exc:
        raise click.ClickException(str(exc)) from None
    report = iou_gated_scores(samples, gate, n_jobs=jobs)
    header = _header(ctx)
    _emit(out, reports.to_json(header, report.to_dict()), reports.caption_table(header, report))


def _scene_dirs(root):
    root = Path(root)
    if (root / "frames.txt").exists():
        return [root]
    dirs = sorted(p for p in root.iterdir() if (p / "frames.txt").exists())
    if not dirs:
        raise BundleError(f"{root}: no scene bundle (frames.txt) found")
    return dirs


def _prep_scene(scene_dir, targets, strategy, num_frames, target_fps, match_iou):
    stream, annotations = load_scene_bundle(scene_dir)
    if strategy == "uniform":
        sampler = FrameSampler("uniform", n_frames=num_frames)
        indices = sampler.fit_transform(stream)
    else:
        indices = fps_adaptive_sample(stream, target_fps)
    best = {}
    for tid, box in targets:
        if not annotations:
            best[tid] = "no-match: scene has no annotations"
            continue
        try:
            best[tid] = select_best_frame(box, annotations, stream, match_iou)
        except NoMatchError as exc:
            logging.getLogger(__name__).info("target %s skipped: %s", tid, exc)
            best[tid] = f"no-match: {exc}"
    return {"scene": scene_dir.name, "n_frames": stream.n_frames,
            "sampled_frames": [int(i) for i in indices], "best_frames": best}


@main.command("prep-frames")
@click.option("--gt", "scenes", required=True, type=click.Path(exists=True, file_okay=False),
              help="A scene bundle directory, or a directory of them.")
@click.option("--targets", type=click.Path(exists=True, dir_okay=False),
              help='JSON lines {"target_id", "scene_id", "box"} for best-frame selection.')
@click.option("--strategy", type=click.Choice(["uniform", "fps"]), default="uniform",
              show_default=True)
@click.option("--num-frames", type=click.IntRange(min=1), default=24, show_default=True)
@click.option("--target-fps", type=float, default=2.0, show_default=True)
@click.option("--match-iou", type=float, default=0.25, show_default=True, callback=_threshold)
@_common
@click.pass_context
def prep_frames(ctx, scenes, targets, strategy, num_frames, target_fps, match_iou, jobs, seed,
                out):
    """Frame sampling and best-frame selection for grounding targets."""
    try:
        dirs = _scene_dirs(scenes)
        by_scene = {}
        if targets:
            for i, rec in enumerate(read_jsonl(targets), 1):
                box = OrientedBox3D.from_array(rec["box"])
                by_scene.setdefault(str(rec.get("scene_id", "")), []).append(
                    (str(rec.get("target_id", i)), box))
        args = [(d, sorted(by_scene.get(d.name, []), key=lambda t: t[0]), strategy, num_frames,
                 target_fps, match_iou) for d in dirs]
        if jobs == 1:
            results = [_prep_scene(*a) for a in args]
        else:
            results = Parallel(n_jobs=jobs)(delayed(_prep_scene)(*a) for a in args)
    except (BundleError, OSError, KeyError, ValueError) as exc:
        raise click.ClickException(str(exc)) from None
    header = _header(ctx)
    rows = []
    for r in results:
        rows.append((f"{r['scene']} sampled", " ".join(map(str, r["sampled_frames"]))))
        rows += [(f"{r['scene']} target {t}", v) for t, v in r["best_frames"].items()]
    _emit(out, reports.to_json(header, {"task": "prep-frames", "scenes": results}),
          reports.key_value_table(header, "frame preparation", rows))


def _demo_config(seed, channels, hidden):
    """Gradient error of one seeded random MLP on one random 2x2 block batch."""
    rng = np.random.default_rng(seed)
    mlp = TwoLayerMlp.init(channels, hidden, random_state=seed)
    x = rng.uniform(-1.0, 1.0, (3, 4 * channels))
    return mlp_gradient_check(mlp, x)


@main.command("fuse-demo")
@click.option("--height", type=click.IntRange(min=1), default=448, show_default=True)
@click.option("--width", type=click.IntRange(min=1), default=448, show_default=True)
@click.option("--patch", type=click.IntRange(min=1), default=14, show_default=True)
@click.option("--channels", type=click.IntRange(min=1), default=8, show_default=True)
@click.option("--hidden", type=click.IntRange(min=1), default=16, show_default=True)
@click.option("--grad-configs", type=click.IntRange(min=1), default=10, show_default=True,
              help="Number of seeded small MLPs to gradient-check.")
@click.option("--fixtures", type=click.Path(file_okay=False),
              help="Directory to write the demo arrays to.")
@_common
@click.pass_context
def fuse_demo(ctx, height, width, patch, channels, hidden, grad_configs, fixtures, jobs, seed,
              out):
    """Shapes, zero-geometry identity and gradient check of the fusion path."""
    try:
        rows, cols = patch_grid_shape(height, width, patch)
        m_rows, m_cols = merged_grid_shape(height, width, patch)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from None
    rng = np.random.default_rng(seed)
    vis_patches = PatchGrid(rng.standard_normal((rows, cols, channels)), "visual")
    geo_patches = PatchGrid(rng.standard_normal((rows, cols, channels)), "geometry")
    vis_mlp = TwoLayerMlp.init(channels, hidden, random_state=seed)
    geo_mlp = TwoLayerMlp.init(channels, hidden, random_state=seed + 1)
    vis = merge_2x2(vis_patches, vis_mlp)
    geo = merge_2x2(geo_patches, geo_mlp)
    fused = fuse(geo, vis)
    zero = fuse(type(geo)(np.zeros_like(geo.features), "geometry-merged"), vis)
    identity_err = float(np.abs(zero.features - vis.features).max())
    seeds = [seed + i for i in range(grad_configs)]
    if jobs == 1:
        errs = [_demo_config(s, 4, 8) for s in seeds]
    else:
        errs = Parallel(n_jobs=jobs)(delayed(_demo_config)(s, 4, 8) for s in seeds)
    if fixtures:
        d = Path(fixtures)
        d.mkdir(parents=True, exist_ok=True)
        save_array(d / "visual_patches.txt", vis_patches.features)
        save_array(d / "geometry_patches.txt", geo_patches.features)
        save_array(d / "fused_tokens.txt", fused.features)
    body = {
        "task": "fuse-demo",
        "patch_grid": [rows, cols, channels],
        "merged_grid": list(fused.shape),
        "expected_merged_grid": [m_rows, m_cols, channels],
        "shape_law_holds": list(fused.shape) == [m_rows, m_cols, channels],
        "zero_geometry_max_abs_error": identity_err,
        "fused_checksum": float(fused.features.sum()),
        "gradient_check_max_rel_error": max(errs),
        "gradient_check_per_config": errs,
    }
    rows_out = [
        ("patch grid", f"{rows}x{cols}x{channels}"),
        ("merged grid", "x".join(map(str, fused.shape))),
        ("shape law holds", str(body["shape_law_holds"])),
        ("zero-geometry max abs error", f"{identity_err:.3e}"),
        ("fused checksum", body["fused_checksum"]),
        ("gradient check max rel error", f"{max(errs):.3e}"),
    ]
    _emit(out, reports.to_json(_header(ctx), body),
          reports.key_value_table(_header(ctx), "token fusion demo", rows_out))


@main.command("iou", context_settings={"ignore_unknown_options": True})
@click.argument("values", nargs=18, type=float)
def iou_cmd(values):
    """IoU of two boxes given as 9 + 9 numbers (x y z w h d yaw pitch roll)."""
    try:
        a = OrientedBox3D.from_array(values[:9])
        b = OrientedBox3D.from_array(values[9:])
    except ValueError as exc:
        raise click.ClickException(str(exc)) from None
    click.echo(f"{iou_3d(a, b):.6f}")


if __name__ == "__main__":
    sys.exit(main())
