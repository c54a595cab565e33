import xml.etree.ElementTree as ET

import numpy as np
import pytest

from attnlab import svg
from attnlab.diagnostics import pca_trajectories

NS = "{http://www.w3.org/2000/svg}"


def _cls(root, name):
    return [e for e in root.iter() if name in e.get("class", "").split()]


def test_single_cell_heatmap(tmp_path):
    root = ET.parse(svg.emit_svg_heatmap([[0.5]], tmp_path / "h.svg")).getroot()
    assert root.tag == NS + "svg"
    assert len(_cls(root, "cell")) == 1


def test_heatmap_cell_count(tmp_path, rng):
    root = ET.parse(svg.emit_svg_heatmap(rng.random((5, 5)), tmp_path / "h.svg", title="a & b")).getroot()
    assert len(_cls(root, "cell")) == 25


def test_heatmap_rejects_non_finite(tmp_path):
    with pytest.raises(ValueError):
        svg.emit_svg_heatmap([[np.nan]], tmp_path / "h.svg")


def _luminance(hex_color):
    r, g, b = (int(hex_color[i : i + 2], 16) for i in (1, 3, 5))
    return 0.2126 * r + 0.7152 * g + 0.0722 * b


def test_ramp_is_monotone():
    lum = [_luminance(svg.ramp_color(t)) for t in np.linspace(0, 1, 101)]
    assert all(b < a for a, b in zip(lum, lum[1:]))
    assert svg.ramp_color(0.0) == "#ffffff"


def test_arrows_and_dots(tmp_path, rng):
    start = rng.normal(size=(3, 10))
    end = start.copy()
    end[:, ::2] += 1.0
    proj = pca_trajectories(start, end, 10)
    root = ET.parse(svg.emit_svg_arrows({"em": proj}, tmp_path / "a.svg")).getroot()
    lines = _cls(root, "arrow")
    dots = _cls(root, "dot")
    assert len(lines) == 5 and len(dots) == 5
    assert all(e.get("stroke") == svg.MODE_COLORS["em"] for e in lines)


def test_arrows_per_mode_colour(tmp_path, rng):
    start = rng.normal(size=(3, 6))
    projs = {m: pca_trajectories(start, start + rng.normal(size=(3, 6)), 6) for m in ("em", "sgd")}
    root = ET.parse(svg.emit_svg_arrows(projs, tmp_path / "a.svg")).getroot()
    assert {e.get("stroke") for e in _cls(root, "sgd")} == {svg.MODE_COLORS["sgd"]}
    assert {e.get("stroke") for e in _cls(root, "em")} == {svg.MODE_COLORS["em"]}


def test_curves(tmp_path):
    root = ET.parse(svg.emit_svg_curves({"em": [2.0, 1.5, 1.2], "sgd": [2.0, 1.8, 1.6]}, tmp_path / "c.svg",
                                        hline=1.1)).getroot()
    assert len(_cls(root, "curve")) == 2
    assert len(_cls(root, "reference")) == 1
