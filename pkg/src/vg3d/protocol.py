"""Plain-text model I/O: number rendering, task prompts and response parsing.

Response grammar accepted by the parsers::

    response  := prose? fence? payload fence? prose?
    fence     := "```json" | "```"
    payload   := JSON object (grounding) | JSON array of objects (detection)
    object    := {"frame": int, "bbox_3d" | "box_3d": [9 numbers]}
    entry     := {"label": str, "bbox_3d" | "box_3d": [9 numbers]}

Numbers may carry any decimal precision. The first balanced JSON value in
the (de-fenced) text is used; anything after it is ignored.
"""

from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
import json
import logging
import math
import numbers
import re

from .geometry import OrientedBox3D

logger = logging.getLogger(__name__)

__all__ = [
    "ParseError",
    "GroundingResponse",
    "DetectionResponse",
    "CaptionResponse",
    "format_number",
    "serialize_box",
    "build_prompt",
    "parse_grounding_response",
    "parse_detection_response",
    "parse_caption_response",
    "extract_json",
]

BOX_KEYS = ("bbox_3d", "box_3d")

_FENCE_RE = re.compile(r"```(?:json|JSON)?[ \t]*\n?(.*?)(?:```|\Z)", re.DOTALL)
_DECODER = json.JSONDecoder()


class ParseError(ValueError):
    """A model response could not be turned into a value.

    ``reason`` is a short machine-readable code: ``no_json``, ``bad_json``,
    ``wrong_type``, ``missing_key``, ``arity``, ``bad_number``, ``bad_frame``,
    ``bad_label`` or ``empty``.
    """

    def __init__(self, reason, message):
        super().__init__(message)
        self.reason = reason


@dataclass(frozen=True)
class GroundingResponse:
    frame: int
    box: OrientedBox3D


@dataclass(frozen=True)
class DetectionResponse:
    items: tuple = ()
    warnings: tuple = field(default=(), compare=False)

    def __len__(self):
        return len(self.items)


@dataclass(frozen=True)
class CaptionResponse:
    text: str


def format_number(x):
    """Render ``x`` with two decimals, rounding half away from zero.

    Rounding acts on the shortest decimal representation of the float, so
    ``1.005`` renders as ``"1.01"``. Negative zero renders as ``"0.00"``.
    """
    if isinstance(x, bool) or not isinstance(x, numbers.Real):
        raise TypeError(f"cannot format {type(x).__name__} as a number")
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot format non-finite value {x!r}")
    q = Decimal(repr(x)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
    s = f"{q:f}"
    if s == "-0.00":
        s = "0.00"
    return s


def serialize_box(box):
    """Render a box as ``[x, y, z, w, h, d, yaw, pitch, roll]`` text."""
    values = box.to_array() if isinstance(box, OrientedBox3D) else box
    return "[" + ", ".join(format_number(float(v)) for v in values) + "]"


def _images(n_frames, image_token, numbered):
    if n_frames < 1:
        raise ValueError("n_frames must be at least 1")
    if numbered:
        return "".join(f"Frame-{i}: {image_token}" for i in range(n_frames))
    return image_token * n_frames


def build_prompt(task, *, query=None, center=None, n_frames=4, image_token="<image>",
                 verbatim_typo=True):
    """Build the user prompt for ``grounding``, ``captioning`` or ``detection``.

    Parameters
    ----------
    task : str
    query : str, optional
        Referring expression; required for grounding.
    center : sequence of 3 floats, optional
        Object center in first-frame coordinates; required for captioning.
    n_frames : int, default=4
        Number of image placeholders.
    image_token : str, default="<image>"
    verbatim_typo : bool, default=True
        Keep the ``rolll`` spelling of the published detection template.
        Set to False to emit ``roll``.
    """
    if task == "grounding":
        if query is None or not str(query).strip():
            raise ValueError("grounding prompt needs a non-empty query")
        return (
            _images(n_frames, image_token, numbered=True)
            + "\nLocalize the first clear frame in the video showing the object described in the text."
            + f"\nText: {query}"
            + '\nOutput a JSON dictionary with the frame index in "frame" and its 3D bounding box'
            + ' in "box_3d" in the frame\'s coordinates.'
        )
    if task == "captioning":
        if center is None:
            raise ValueError("captioning prompt needs an object center")
        center = list(center)
        if len(center) != 3:
            raise ValueError(f"center must have 3 coordinates, got {len(center)}")
        coords = ", ".join(format_number(float(c)) for c in center)
        return (
            _images(n_frames, image_token, numbered=False)
            + f"\nCarefully watch the video and describe the object located at [{coords}] in detail."
        )
    if task == "detection":
        roll = "rolll" if verbatim_typo else "roll"
        return (
            _images(n_frames, image_token, numbered=False)
            + "\nDetect the 3D bounding boxes in the camera coordinate system of the first frame."
            + '\nOutput a json list where each entry contains the object name in "label"'
            + ' and its 3D bounding box in "box_3d".'
            + "\nThe 3D bounding box format should be [x_center, y_center, z_center,"
            + f" x_size, y_size, z_size, yaw, pitch, {roll}]."
        )
    raise ValueError(f"unknown task {task!r}")


def extract_json(text):
    """Return the first balanced JSON value in ``text``, after removing code fences."""
    if not isinstance(text, str):
        raise ParseError("wrong_type", f"response must be a string, got {type(text).__name__}")
    m = _FENCE_RE.search(text)
    body = m.group(1) if m else text
    for start, ch in enumerate(body):
        if ch in "{[":
            try:
                value, _ = _DECODER.raw_decode(body, start)
            except json.JSONDecodeError:
                continue
            return value
    if not body.strip():
        raise ParseError("empty", "response is empty")
    raise ParseError("no_json", "no JSON object or array found in response")


def _read_number(v, what):
    if isinstance(v, bool):
        raise ParseError("bad_number", f"{what}: boolean is not a number")
    if isinstance(v, numbers.Real):
        x = float(v)
    elif isinstance(v, str):
        try:
            x = float(v.strip())
        except ValueError:
            raise ParseError("bad_number", f"{what}: cannot read {v!r} as a number") from None
    else:
        raise ParseError("bad_number", f"{what}: cannot read {type(v).__name__} as a number")
    if not math.isfinite(x):
        raise ParseError("bad_number", f"{what}: non-finite value")
    return x


def _read_box(obj):
    for key in BOX_KEYS:
        if key in obj:
            raw = obj[key]
            break
    else:
        raise ParseError("missing_key", 'missing "bbox_3d" / "box_3d"')
    if not isinstance(raw, list):
        raise ParseError("wrong_type", "box must be a JSON list")
    if len(raw) != 9:
        raise ParseError("arity", f"box needs 9 numbers, got {len(raw)}")
    values = [_read_number(v, f"box[{i}]") for i, v in enumerate(raw)]
    if min(values[3:6]) < 0:
        raise ParseError("bad_number", "box size must be non-negative")
    return OrientedBox3D.from_array(values)


def parse_grounding_response(text):
    """Parse ``{"frame": k, "bbox_3d": [9 numbers]}`` from a model response."""
    obj = extract_json(text)
    if not isinstance(obj, dict):
        raise ParseError("wrong_type", "grounding response must be a JSON object")
    if "frame" not in obj:
        raise ParseError("missing_key", 'missing "frame"')
    frame = obj["frame"]
    if isinstance(frame, bool):
        raise ParseError("bad_frame", "frame index must be an integer")
    if isinstance(frame, str):
        frame = frame.strip()
        if not frame.isdigit():
            raise ParseError("bad_frame", f"frame index {frame!r} is not an integer")
        frame = int(frame)
    elif isinstance(frame, float) and frame.is_integer():
        frame = int(frame)
    if not isinstance(frame, int) or frame < 0:
        raise ParseError("bad_frame", f"frame index must be a non-negative integer, got {frame!r}")
    return GroundingResponse(frame=frame, box=_read_box(obj))


def parse_detection_response(text, lenient=True):
    """Parse a JSON list of ``{"label", "bbox_3d"}`` entries, keeping emitted order.

    With ``lenient=True`` a malformed entry is skipped and described in
    ``warnings``; otherwise the first bad entry raises :class:`ParseError`.
    """
    payload = extract_json(text)
    if not isinstance(payload, list):
        raise ParseError("wrong_type", "detection response must be a JSON list")
    items, warnings = [], []
    for i, entry in enumerate(payload):
        try:
            if not isinstance(entry, dict):
                raise ParseError("wrong_type", "entry must be a JSON object")
            label = entry.get("label")
            if not isinstance(label, str) or not label.strip():
                raise ParseError("bad_label", 'missing or empty "label"')
            items.append((label, _read_box(entry)))
        except ParseError as exc:
            if not lenient:
                raise ParseError(exc.reason, f"entry {i}: {exc}") from None
            msg = f"entry {i} skipped ({exc.reason}): {exc}"
            logger.warning(msg)
            warnings.append(msg)
    return DetectionResponse(items=tuple(items), warnings=tuple(warnings))


def parse_caption_response(text):
    if not isinstance(text, str) or not text.strip():
        raise ParseError("empty", "caption is empty")
    return CaptionResponse(text=text.strip())
