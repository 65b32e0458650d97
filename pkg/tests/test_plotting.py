import xml.etree.ElementTree as ET

from drivevol.analysis import CorrelationEntry
from drivevol.plotting import (NEGATIVE, POSITIVE, correlation_bars_svg, expected_actual_svg,
                               render_correlation_bars, render_expected_actual)

NS = "{http://www.w3.org/2000/svg}"


def entries():
    return [CorrelationEntry("L1-Speed-Sdev", 0.6, 10), CorrelationEntry("L2-Jerk-Sdev", -0.3, 10),
            CorrelationEntry("L1-Speed-Cv", float("nan"), 2, False)]


def test_correlation_svg_colors():
    root = ET.fromstring(correlation_bars_svg(entries()))
    rects = root.findall(f"{NS}rect")
    assert [r.get("class") for r in rects] == ["pos", "neg"]
    assert rects[0].get("fill") == POSITIVE and rects[1].get("fill") == NEGATIVE


def test_expected_actual_svg():
    root = ET.fromstring(expected_actual_svg([1, 2, 3], {"fixed": [1.5, 2.0, 2.5], "random": [1, 2, 3]}))
    assert len(root.findall(f"{NS}circle")) == 6


def test_png_rendering(tmp_path):
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    render_correlation_bars(entries(), str(a))
    render_expected_actual([1, 2, 3], {"fixed": [1.5, 2.0, 2.5]}, str(b))
    assert a.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n" and b.stat().st_size > 0
