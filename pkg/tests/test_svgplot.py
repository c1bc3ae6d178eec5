import numpy as np
import pytest

from ctrlpinn import svgplot


def test_line_chart_is_deterministic():
    xs = np.linspace(0, 1, 50)
    series = [("a", xs, np.sin(xs)), ("b", xs, np.cos(xs))]
    one = svgplot.line_chart(series, title="t", x_label="x", y_label="y")
    two = svgplot.line_chart(series, title="t", x_label="x", y_label="y")
    assert one == two
    assert "<svg" in one and one.endswith("</svg>\n")


def test_constant_series_renders_horizontal_polyline():
    xs = np.linspace(0, 10, 21)
    ys = np.full(21, 3.5)
    svg = svgplot.line_chart([("flat", xs, ys)])
    polyline = [line for line in svg.splitlines() if "polyline" in line][0]
    points = polyline.split('points="')[1].split('"')[0].split()
    y_coords = {p.split(",")[1] for p in points}
    assert len(y_coords) == 1


def test_line_chart_rejects_empty_input():
    with pytest.raises(ValueError):
        svgplot.line_chart([])
    with pytest.raises(ValueError):
        svgplot.line_chart([("a", [], [])])


def test_log_scale_handles_positive_series():
    xs = np.arange(1, 6, dtype=float)
    ys = 10.0 ** (-xs)
    svg = svgplot.line_chart([("loss", xs, ys)], log_y=True)
    assert "polyline" in svg


def test_heatmap_embeds_color_scale_metadata():
    values = np.linspace(0, 1, 12).reshape(3, 4)
    svg = svgplot.heatmap(values, x_range=(0, 1), y_range=(0, 1), v_min=-2.0, v_max=2.0)
    assert "<metadata>color-scale v_min=-2.0 v_max=2.0</metadata>" in svg


def test_heatmaps_share_scale_when_pinned():
    a = np.array([[0.0, 1.0]])
    b = np.array([[1.0, 2.0]])
    lo, hi = 0.0, 2.0
    svg_a = svgplot.heatmap(a, x_range=(0, 1), y_range=(0, 1), v_min=lo, v_max=hi)
    svg_b = svgplot.heatmap(b, x_range=(0, 1), y_range=(0, 1), v_min=lo, v_max=hi)
    meta_a = [line for line in svg_a.splitlines() if "color-scale" in line]
    meta_b = [line for line in svg_b.splitlines() if "color-scale" in line]
    assert meta_a == meta_b


def test_heatmap_golden_fragment():
    # freeze a tiny render so accidental format drift is caught
    values = np.array([[0.0, 0.5], [1.0, 0.25]])
    svg = svgplot.heatmap(values, x_range=(0, 1), y_range=(0, 1), width=120, height=110)
    assert svg == svgplot.heatmap(values, x_range=(0, 1), y_range=(0, 1), width=120, height=110)
    assert 'fill="#0d0887"' in svg  # the low end of the documented colormap
    assert 'fill="#fee825"' in svg  # the high end


def test_heatmap_rejects_bad_input():
    with pytest.raises(ValueError):
        svgplot.heatmap(np.zeros((0, 0)), x_range=(0, 1), y_range=(0, 1))
    with pytest.raises(ValueError):
        svgplot.heatmap(np.zeros(4), x_range=(0, 1), y_range=(0, 1))


def test_colormap_endpoints_and_monotone_blue_channel():
    assert svgplot.colormap(0.0) == "#0d0887"
    assert svgplot.colormap(1.0) == "#fee825"
    assert svgplot.colormap(-5) == svgplot.colormap(0.0)
    assert svgplot.colormap(7) == svgplot.colormap(1.0)


def test_write(tmp_path):
    path = tmp_path / "x.svg"
    svgplot.write(path, svgplot.line_chart([("a", [0, 1], [0, 1])]))
    assert path.read_text().startswith("<svg")
