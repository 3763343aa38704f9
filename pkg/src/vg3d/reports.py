"""Report rendering: a JSON document plus a fixed-width table, both deterministic."""

import json
import math


def _round(obj, ndigits=4):
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return str(obj)
        v = round(obj, ndigits)
        return 0.0 if v == 0 else v
    if isinstance(obj, dict):
        return {str(k): _round(v, ndigits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v, ndigits) for v in obj]
    return obj


def to_json(header, body):
    doc = {"config": header, **body}
    return json.dumps(_round(doc), indent=2, sort_keys=False) + "\n"


def _fmt(v):
    return f"{v:.4f}" if isinstance(v, float) else str(v)


def _header_lines(header):
    lines = ["# effective configuration"]
    lines += [f"#   {k} = {v}" for k, v in header.items()]
    return lines


def grounding_table(header, report):
    ts = report.thresholds
    cols = [f"Acc@{t:g}" for t in ts]
    lines = _header_lines(header)
    lines.append(f"3D visual grounding  (n = {report.n_samples})")
    lines.append(f"{'':<12}" + "".join(f"{c:>10}" for c in cols))
    lines.append(f"{'raw':<12}" + "".join(f"{_fmt(report.accuracy[t]):>10}" for t in ts))
    if report.accuracy_refined is not None:
        lines.append(f"{'refined':<12}"
                     + "".join(f"{_fmt(report.accuracy_refined[t]):>10}" for t in ts))
    misses = [r for r in report.per_sample if r.error]
    if misses:
        lines.append(f"{len(misses)} sample(s) scored as misses:")
        lines += [f"  {r.sample_id}: {r.error}" for r in misses]
    return "\n".join(lines) + "\n"


def detection_table(header, report):
    t = f"{report.iou_threshold * 100:g}"
    lines = _header_lines(header)
    lines.append(f"3D video object detection  (scenes = {report.n_scenes}, IoU >= {report.iou_threshold:g})")
    classes = list(report.class_list)
    for start in range(0, len(classes), 10):
        chunk = classes[start:start + 10]
        width = max(9, *(len(c) + 1 for c in chunk))
        lines.append(f"{'':<8}" + "".join(f"{c:>{width}}" for c in chunk))
        row = [
            _fmt(report.per_class[c][2] * 100) if c in report.per_class else "-"
            for c in chunk
        ]
        lines.append(f"{'F1':<8}" + "".join(f"{v:>{width}}" for v in row))
    ap, ar, f1 = report.macro
    lines.append(f"{'':<8}{'AP' + t:>10}{'AR' + t:>10}{'F1' + t:>10}")
    lines.append(f"{'macro':<8}{_fmt(ap * 100):>10}{_fmt(ar * 100):>10}{_fmt(f1 * 100):>10}")
    if report.skipped_classes:
        lines.append("classes absent from GT and predictions (skipped): "
                     + ", ".join(report.skipped_classes))
    for scene, warns in report.parse_warnings.items():
        lines += [f"warning [{scene}]: {w}" for w in warns]
    return "\n".join(lines) + "\n"


def caption_table(header, report):
    g = f"{report.gate:g}"
    lines = _header_lines(header)
    lines.append(f"3D dense captioning  (n = {report.n_samples})")
    lines.append(f"{'C@' + g:>10}{'B-4@' + g:>10}{'M@' + g:>10}{'R@' + g:>10}")
    lines.append(f"{_fmt(report.cider * 100):>10}{_fmt(report.bleu4 * 100):>10}"
                 f"{'n/a':>10}{_fmt(report.rouge_l * 100):>10}")
    return "\n".join(lines) + "\n"


def key_value_table(header, title, rows):
    lines = _header_lines(header)
    lines.append(title)
    width = max((len(k) for k, _ in rows), default=0)
    lines += [f"{k:<{width}}  {_fmt(v)}" for k, v in rows]
    return "\n".join(lines) + "\n"
