import json
import math
import xml.etree.ElementTree as ET

import jsonschema
import numpy as np
import pytest

from facetaudit.errors import FacetAuditError, GeometryError
from facetaudit.facets import FacetCounts, FacetSpec, LabelDistribution
from facetaudit.metrics import BiasMetrics, MetricCell
from facetaudit.report import (
    ChoroplethStyle,
    GeometrySet,
    Thresholds,
    dumps_report,
    emit_report,
    flag_disagreement,
    interpolate,
    load_geometry,
    load_report,
    parse_svg_color,
    render_choropleth,
    render_prediction_analysis,
    report_schema,
    svg_color,
)
from facetaudit.report.svg import PLOT_BOTTOM, PLOT_TOP, color_position, format_value

from conftest import REGIONS, build_report, separable_groups

NS = {"s": "http://www.w3.org/2000/svg"}


@pytest.fixture(scope="module")
def report():
    return build_report(separable_groups(120, REGIONS, seed=8))


def cell(ci, kl, ks, group="G"):
    return MetricCell(group, "race", BiasMetrics(ci, kl, ks, "0"), FacetCounts(1, 1, 0), LabelDistribution(("0", "1"), (1, 0), (1, 0)))


class TestFlag:
    @pytest.mark.parametrize(
        "ci,kl,ks,flagged",
        [
            (0.5, 0.01, 0.05, True),
            (-0.5, 0.01, 0.05, True),
            (0.3, 0.05, 0.1, True),
            (0.29, 0.01, 0.05, False),
            (0.5, 0.06, 0.05, False),
            (0.5, 0.01, 0.11, False),
            (0.5, math.inf, 0.05, False),
        ],
    )
    def test_rule(self, ci, kl, ks, flagged):
        assert bool(flag_disagreement([cell(ci, kl, ks)])) is flagged

    def test_null_never_flagged(self):
        assert flag_disagreement([MetricCell("G", "race", None, reason="no facet members")]) == []

    def test_custom_thresholds(self):
        assert flag_disagreement([cell(0.2, 0.01, 0.05)], Thresholds(ci_high=0.1))


class TestDocument:
    def test_schema_valid(self, report):
        doc = json.loads(dumps_report(report))
        jsonschema.validate(doc, report_schema())
        assert doc["schema_version"] == 1
        assert len(doc["metric_cells"]) == 5
        assert len(doc["evaluation"]["cells"]) == 25

    def test_byte_identical(self, report):
        assert dumps_report(report) == dumps_report(report)

    def test_round_trip(self, report, tmp_path):
        path = emit_report(report, tmp_path / "r" / "report.json")
        again = load_report(path)
        assert dumps_report(again) == path.read_text(encoding="utf-8")

    def test_infinity_round_trip(self, report, tmp_path):
        doc = json.loads(dumps_report(report))
        doc["metric_cells"][0]["metrics"]["kl_nats"] = "Infinity"
        jsonschema.validate(doc, report_schema())
        path = tmp_path / "inf.json"
        path.write_text(json.dumps(doc))
        assert math.isinf(load_report(path).cells[0].metrics.kl_nats)

    def test_missing_cell(self, report):
        from facetaudit.report import BiasReport

        with pytest.raises(ValueError, match="missing"):
            BiasReport(report.run, report.ingest, report.groups, report.facets, report.cells[:-1])

    def test_bad_version(self, report, tmp_path):
        doc = json.loads(dumps_report(report))
        doc["schema_version"] = 99
        path = tmp_path / "v.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(FacetAuditError, match="schema version"):
            load_report(path)

    def test_metric_values(self, report):
        values = report.metric_values("ci", "attr")
        assert list(values) == REGIONS


def square(x, y):
    return [[[x, y], [x + 1, y], [x + 1, y + 1], [x, y + 1], [x, y]]]


def geometry(names):
    return GeometrySet.from_geojson(
        {
            "type": "FeatureCollection",
            "features": [
                {"type": "Feature", "properties": {"name": n}, "geometry": {"type": "Polygon", "coordinates": square(i, 0)}}
                for i, n in enumerate(names)
            ],
        }
    )


def fills(svg):
    root = ET.fromstring(svg)
    return {p.get("data-group"): p.get("fill") for p in root.iter("{http://www.w3.org/2000/svg}path")}


class TestColors:
    def test_ramp_ends(self):
        assert interpolate("#000000", "#ffffff", 0) == (0, 0, 0)
        assert interpolate("#000000", "#ffffff", 1) == (255, 255, 255)

    def test_svg_color_round_trip(self):
        rgb = (12.5, 200.0, 33.3)
        assert parse_svg_color(svg_color(rgb)) == pytest.approx(rgb, abs=1e-3)

    def test_position(self):
        assert color_position(5, 0, 10) == 0.5
        assert color_position(3, 3, 3) == 0.0
        assert color_position(math.inf, 0, 1) == 1.0

    def test_format(self):
        assert format_value(None) == "n/a"
        assert format_value(math.inf) == "inf"
        assert format_value(0.12345) == "0.123"


class TestChoropleth:
    def test_min_mid_max(self):
        svg = render_choropleth({"A": 0.0, "B": 0.5, "C": 1.0}, geometry("ABC"), ChoroplethStyle("t", "#000000", "#ff8040"))
        f = fills(svg)
        assert parse_svg_color(f["A"]) == pytest.approx((0, 0, 0), abs=1e-3)
        assert parse_svg_color(f["C"]) == pytest.approx((255, 128, 64), abs=1e-3)
        assert parse_svg_color(f["B"]) == pytest.approx((127.5, 64, 32), abs=1e-3)

    def test_null_is_hatched(self):
        svg = render_choropleth({"A": None, "B": 0.4}, geometry("AB"), ChoroplethStyle())
        assert fills(svg)["A"] == "url(#null-hatch)"
        assert 'data-value="n/a"' in svg

    def test_degenerate_range_single_tick(self):
        svg = render_choropleth({"A": 0.2, "B": 0.2}, geometry("AB"), ChoroplethStyle("t", "#000000", "#ffffff"))
        root = ET.fromstring(svg)
        ticks = [t for t in root.iter("{http://www.w3.org/2000/svg}text") if t.get("class") == "tick"]
        assert len(ticks) == 1
        assert parse_svg_color(fills(svg)["A"]) == pytest.approx((0, 0, 0), abs=1e-3)

    def test_fixed_range(self):
        svg = render_choropleth({"A": 0.5}, geometry("A"), ChoroplethStyle("t", "#000000", "#ffffff", (0.0, 2.0)))
        assert parse_svg_color(fills(svg)["A"]) == pytest.approx((63.75,) * 3, abs=1e-3)

    def test_extra_region_grey(self):
        svg = render_choropleth({"A": 0.5}, geometry("AB"), ChoroplethStyle())
        assert fills(svg)["B"] == "#dddddd"

    def test_unmatched_group(self):
        with pytest.raises(GeometryError, match="Z"):
            render_choropleth({"Z": 0.1}, geometry("AB"), ChoroplethStyle())

    def test_deterministic(self):
        g = geometry("AB")
        assert render_choropleth({"A": 0.1, "B": 0.2}, g, ChoroplethStyle()) == render_choropleth({"A": 0.1, "B": 0.2}, g, ChoroplethStyle())


class TestGeometry:
    def test_builtin(self):
        g = load_geometry("builtin:brazil_regions")
        assert sorted(g.names) == sorted(REGIONS)
        g.require(REGIONS)

    def test_unclosed_ring(self):
        doc = {"type": "FeatureCollection", "features": [
            {"type": "Feature", "properties": {"name": "A"}, "geometry": {"type": "Polygon", "coordinates": [[[0, 0], [1, 0], [1, 1], [0, 1]]]}}
        ]}
        with pytest.raises(GeometryError, match="closed"):
            GeometrySet.from_geojson(doc)

    def test_missing_file(self, tmp_path):
        with pytest.raises(GeometryError):
            load_geometry(tmp_path / "none.geojson")


class TestPredictionChart:
    def test_bar_heights_parse_back(self, report):
        facet = report.facets[0]
        c = report.evaluation.cell("North", "South")
        svg = render_prediction_analysis(c, facet)
        root = ET.fromstring(svg)
        bars = [r for r in root.iter("{http://www.w3.org/2000/svg}rect") if r.get("data-facet")]
        assert len(bars) == 8
        conf = c.confusion["attr"]
        for bar in bars:
            side = conf.a if bar.get("data-facet") == "a" else conf.d
            rate = float(bar.get("height")) / (PLOT_BOTTOM - PLOT_TOP)
            assert rate == pytest.approx(side.rates[bar.get("data-outcome")], abs=1e-3)
            assert float(bar.get("y")) + float(bar.get("height")) == pytest.approx(PLOT_BOTTOM, abs=2e-3)

    def test_null_cell_no_chart(self, report):
        from facetaudit.evaluation import EvalCell

        assert render_prediction_analysis(EvalCell("A", "B", reason="x"), report.facets[0]) is None
