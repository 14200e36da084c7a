from .document import (
    REPORT_SCHEMA_VERSION,
    BiasReport,
    Disagreement,
    Thresholds,
    dumps_report,
    emit_report,
    flag_disagreement,
    load_report,
    report_schema,
)
from .geometry import GeometrySet, load_geometry
from .svg import (
    ChoroplethStyle,
    color_position,
    interpolate,
    parse_svg_color,
    svg_color,
    render_choropleth,
    render_prediction_analysis,
    save_figure,
    slug,
)

__all__ = [
    "REPORT_SCHEMA_VERSION",
    "BiasReport",
    "ChoroplethStyle",
    "Disagreement",
    "GeometrySet",
    "Thresholds",
    "color_position",
    "dumps_report",
    "emit_report",
    "flag_disagreement",
    "interpolate",
    "load_geometry",
    "load_report",
    "parse_svg_color",
    "svg_color",
    "render_choropleth",
    "render_prediction_analysis",
    "report_schema",
    "save_figure",
    "slug",
]
