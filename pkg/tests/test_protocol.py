import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vg3d.geometry import OrientedBox3D
from vg3d.protocol import (
    ParseError,
    build_prompt,
    extract_json,
    format_number,
    parse_caption_response,
    parse_detection_response,
    parse_grounding_response,
    serialize_box,
)

GROUNDING_SAMPLE = (
    "```json\n"
    '{"frame": 12, "bbox_3d": [-0.63, -0.83, 2.43, 3.0, 0.59, 2.35, -2.32, 1.18, 3.05]}\n'
    "```"
)
DETECTION_SAMPLE = (
    "```json\n[\n"
    '    {"label": "bag", "bbox_3d": [0.0, -0.3, 1.0, 0.26, 0.26, 0.15, 1.67, 0.96, -2.98]}\n'
    "]\n```"
)


@pytest.mark.parametrize(
    "x, expected",
    [
        (0, "0.00"),
        (-2.317, "-2.32"),
        (2.43, "2.43"),
        (1.005, "1.01"),
        (-1.005, "-1.01"),
        (-0.001, "0.00"),
        (-0.0, "0.00"),
        (2.5, "2.50"),
        (123456.789, "123456.79"),
    ],
)
def test_format_number(x, expected):
    assert format_number(x) == expected


@pytest.mark.parametrize("bad", [math.nan, math.inf])
def test_format_number_rejects_non_finite(bad):
    with pytest.raises(ValueError):
        format_number(bad)


def test_serialize_unit_box():
    box = OrientedBox3D((0, 0, 0), (1, 1, 1))
    assert serialize_box(box) == "[0.00, 0.00, 0.00, 1.00, 1.00, 1.00, 0.00, 0.00, 0.00]"
    assert "1.01" in serialize_box(OrientedBox3D((1.005, 0, 0), (1, 1, 1)))


def test_serialize_round_trip_random():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        box = OrientedBox3D(rng.uniform(-10, 10, 3), rng.uniform(0, 5, 3),
                            rng.uniform(-math.pi, math.pi, 3))
        text = '{"frame": 0, "bbox_3d": ' + serialize_box(box) + "}"
        parsed = parse_grounding_response(text).box
        worst = max(worst, np.abs(parsed.to_array() - box.to_array()).max())
    assert worst <= 0.005


def test_captioning_prompt():
    prompt = build_prompt("captioning", center=(-0.89, -0.74, 2.45))
    assert prompt.endswith(
        "Carefully watch the video and describe the object located at [-0.89, -0.74, 2.45] in detail."
    )
    assert prompt.startswith("<image><image><image><image>\n")


def test_detection_prompt_keeps_published_spelling():
    expected = ("The 3D bounding box format should be [x_center, y_center, z_center, "
                "x_size, y_size, z_size, yaw, pitch, rolll].")
    assert expected in build_prompt("detection")
    fixed = build_prompt("detection", verbatim_typo=False)
    assert "pitch, roll]." in fixed and "rolll" not in fixed


def test_grounding_prompt():
    prompt = build_prompt("grounding", query="There is a beige wooden bookshelf.", n_frames=2,
                          image_token="<img>")
    assert prompt == (
        "Frame-0: <img>Frame-1: <img>\n"
        "Localize the first clear frame in the video showing the object described in the text.\n"
        "Text: There is a beige wooden bookshelf.\n"
        'Output a JSON dictionary with the frame index in "frame" and its 3D bounding box in '
        '"box_3d" in the frame\'s coordinates.'
    )


@pytest.mark.parametrize("kwargs", [{"query": ""}, {"query": "   "}, {}])
def test_grounding_prompt_needs_query(kwargs):
    with pytest.raises(ValueError):
        build_prompt("grounding", **kwargs)


def test_prompt_errors():
    with pytest.raises(ValueError):
        build_prompt("captioning")
    with pytest.raises(ValueError):
        build_prompt("segmentation")


def test_parse_grounding_sample():
    resp = parse_grounding_response(GROUNDING_SAMPLE)
    assert resp.frame == 12
    assert resp.box.to_array().tolist() == [-0.63, -0.83, 2.43, 3.0, 0.59, 2.35, -2.32, 1.18, 3.05]


def test_parse_grounding_plain():
    resp = parse_grounding_response('{"frame": 0, "bbox_3d": [0,0,0,1,1,1,0,0,0]}')
    assert resp.frame == 0
    assert resp.box == OrientedBox3D((0, 0, 0), (1, 1, 1))


def test_parse_grounding_accepts_box_3d_key_and_prose():
    text = 'Sure! The answer is {"frame": "3", "box_3d": ["1.5", 2, 3, 1, 1, 1, 0, 0, 0]} hope it helps'
    resp = parse_grounding_response(text)
    assert resp.frame == 3 and resp.box.center == (1.5, 2.0, 3.0)


@pytest.mark.parametrize(
    "text, reason",
    [
        ('{"frame": 3, "bbox_3d": [1,2,3]}', "arity"),
        ('{"bbox_3d": [0,0,0,1,1,1,0,0,0]}', "missing_key"),
        ('{"frame": 1}', "missing_key"),
        ('{"frame": -1, "bbox_3d": [0,0,0,1,1,1,0,0,0]}', "bad_frame"),
        ('{"frame": 1.5, "bbox_3d": [0,0,0,1,1,1,0,0,0]}', "bad_frame"),
        ('{"frame": 1, "bbox_3d": [0,0,0,1,1,1,0,0,"x"]}', "bad_number"),
        ('{"frame": 1, "bbox_3d": [0,0,0,1,-1,1,0,0,0]}', "bad_number"),
        ('{"frame": 1, "bbox_3d": [0,0,0,1,1,1,0,0,true]}', "bad_number"),
        ('[{"frame": 1}]', "wrong_type"),
        ("no json here", "no_json"),
        ("", "empty"),
        ('{"frame": 1, "bbox_3d": [0,0', "no_json"),
    ],
)
def test_parse_grounding_errors(text, reason):
    with pytest.raises(ParseError) as err:
        parse_grounding_response(text)
    assert err.value.reason == reason


def test_parse_detection_sample():
    resp = parse_detection_response(DETECTION_SAMPLE)
    assert len(resp) == 1
    label, box = resp.items[0]
    assert label == "bag"
    assert box.to_array().tolist() == [0.0, -0.3, 1.0, 0.26, 0.26, 0.15, 1.67, 0.96, -2.98]


def test_parse_detection_empty():
    assert parse_detection_response("```json\n[]\n```").items == ()


def test_parse_detection_lenient_and_strict():
    text = ('[{"label": "chair", "bbox_3d": [0,0,0,1,1,1,0,0,0]},'
            ' {"label": "table", "bbox_3d": [0,0,0,1,1,1,0,0]}]')
    resp = parse_detection_response(text, lenient=True)
    assert [lab for lab, _ in resp.items] == ["chair"]
    assert len(resp.warnings) == 1 and "arity" in resp.warnings[0]
    with pytest.raises(ParseError) as err:
        parse_detection_response(text, lenient=False)
    assert err.value.reason == "arity"


def test_parse_detection_keeps_order():
    text = ('[{"label": "b", "box_3d": [0,0,0,1,1,1,0,0,0]},'
            ' {"label": "a", "bbox_3d": [1,0,0,1,1,1,0,0,0]}]')
    assert [lab for lab, _ in parse_detection_response(text).items] == ["b", "a"]


def test_parse_detection_top_level_object():
    with pytest.raises(ParseError) as err:
        parse_detection_response('{"label": "bag"}')
    assert err.value.reason == "wrong_type"


def test_fence_without_language_tag():
    assert extract_json("```\n[1, 2]\n```") == [1, 2]


def test_caption_response():
    assert parse_caption_response("  A white cabinet. ").text == "A white cabinet."
    with pytest.raises(ParseError):
        parse_caption_response("   ")


@given(st.text())
def test_parsers_are_total(text):
    for parser in (parse_grounding_response, parse_detection_response):
        try:
            parser(text)
        except ParseError:
            pass


finite = st.floats(-100, 100, allow_nan=False)


@given(st.integers(0, 50), st.lists(finite, min_size=3, max_size=3),
       st.lists(st.floats(0, 10), min_size=3, max_size=3), st.lists(finite, min_size=3, max_size=3))
def test_fencing_idempotence(frame, center, size, angles):
    box = OrientedBox3D(center, size, angles)
    payload = '{"frame": %d, "bbox_3d": %s}' % (frame, serialize_box(box))
    plain = parse_grounding_response(payload)
    fenced = parse_grounding_response("```json\n" + payload + "\n```")
    prose = parse_grounding_response("Answer:\n```json\n" + payload + "\n```\nDone.")
    assert plain == fenced == prose
