"""Plain-text reports and gnuplot scripts rendered from jinja2 templates."""

from __future__ import annotations

import logging
import re
from datetime import datetime
from pathlib import Path

from jinja2 import Environment, StrictUndefined

logger = logging.getLogger(__name__)

WIDTH = 78

_env = Environment(trim_blocks=True, lstrip_blocks=True, keep_trailing_newline=True, undefined=StrictUndefined)


def _fmt(value, spec: str = ".6g") -> str:
    if value is None:
        width = re.match(r"\d*", spec.lstrip("+-")).group()
        return "n/a".rjust(int(width or 0))
    return format(value, spec)


_env.filters["g"] = _fmt

ANALYSIS_REPORT = _env.from_string("""\
╔{{ '=' * width }}╗
║{{ ' ' * width }}║
║{{ 'OPTICAL SKYRMION ANALYSIS REPORT'.center(width) }}║
║{{ ' ' * width }}║
╚{{ '=' * width }}╝

Report Generated: {{ generated }}
Input: {{ source }}

{{ '=' * (width + 2) }}
RESULT
{{ '=' * (width + 2) }}

  N                  = {{ result.n_skyrmion | g('.6f') }}
  |N|                = {{ result.n_skyrmion | abs | g('.6f') }}
  uncertainty        = {{ result.uncertainty | g('.6f') }}
    truncation       = {{ prov.truncation_estimate | g('.3e') }}
    statistical      = {{ prov.statistical_uncertainty | g('.3e') }}
  integration radius = {{ result.integration_radius | g('.6f') }} (auto {{ prov.auto_radius | g('.6f') }})
  center             = ({{ result.center[0] | g('.6f') }}, {{ result.center[1] | g('.6f') }})
  pixels / coverage  = {{ result.pixel_count }} / {{ (100 * result.coverage) | g('.1f') }}%
  floor_rel / eta    = {{ prov.floor_rel | g }} / {{ prov.eta | g }}
  smoothing          = {{ prov.get('smoothing_px') | g }} px
  quantized input    = {{ prov.quantized }}

{{ '=' * (width + 2) }}
CROSS-CHECK
{{ '=' * (width + 2) }}

{% if cross %}
  M_z = 0 ring radius = {{ cross.get("equator_radius") | g(".6f") }}
  vorticity           = {{ cross.get("vorticity", "n/a") }}
  boundary formula N  = {{ cross.get("boundary_number") | g(".6f") }}
{% else %}
  skipped (no M_z = 0 ring found)
{% endif %}

{{ '=' * (width + 2) }}
CALIBRATION ({{ calibration.method }}, reference I{{ calibration.reference }})
{{ '=' * (width + 2) }}

{% for key, offset in calibration.offsets.items() %}
  I{{ key }}  dx = {{ offset[0] | g('+.4f') }} px  dy = {{ offset[1] | g('+.4f') }} px{% if key in calibration.skipped %}  (dark, skipped){% endif %}

{% endfor %}
  residual = {{ calibration.residual | g('.4f') }} px

{{ '=' * (width + 2) }}
RADIUS SWEEP
{{ '=' * (width + 2) }}

  {{ 'radius'.rjust(12) }} {{ 'N'.rjust(12) }} {{ 'uncertainty'.rjust(12) }} {{ 'pixels'.rjust(8) }}
{% for row in sweep %}
  {{ row.integration_radius | g('12.6f') }} {{ row.n_skyrmion | g('12.6f') }} {{ row.uncertainty | g('12.3e') }} {{ (row.pixel_count | string).rjust(8) }}
{% endfor %}

{{ '=' * (width + 2) }}
END OF REPORT
{{ '=' * (width + 2) }}
{% if artifacts %}

Artifacts:
{% for name, path in artifacts.items() %}
  • {{ name }}: {{ path }}
{% endfor %}
{% endif %}
""")

FIG3_SCRIPT = _env.from_string("""\
# gnuplot script: skyrmion number against the OAM difference
set datafile separator ","
set terminal pngcairo size 800,600
set output "{{ png_name }}"
set xlabel "Delta l"
set ylabel "N"
set key top left
set xrange [0:{{ xmax }}]
set yrange [0:{{ xmax }}]
set grid
plot x title "N = Delta l" with lines lw 2 lc rgb "#1f77b4", \\
     "{{ csv_name }}" using 1:2 skip 1 title "ideal" with points pt 7 lc rgb "#1f77b4", \\
     "{{ csv_name }}" using 1:3:4 skip 1 title "degraded" with yerrorbars pt 5 lc rgb "#d62728"
""")

FIG3_TABLE = _env.from_string("""\
{{ 'delta_l'.rjust(8) }} {{ 'N_ideal'.rjust(10) }} {{ 'N_degraded'.rjust(11) }} {{ 'uncertainty'.rjust(12) }}
{% for row in rows %}
{{ (row.delta_l | string).rjust(8) }} {{ row.N_ideal | g('10.4f') }} {{ row.N_degraded | g('11.4f') }} {{ row.uncertainty | g('12.4f') }}
{% endfor %}
""")


def render_analysis_report(products, source: str = "", artifacts: dict | None = None) -> str:
    prov = products.result.provenance
    return ANALYSIS_REPORT.render(
        width=WIDTH,
        generated=datetime.now().strftime("%Y-%m-%d %H:%M:%S"),
        source=source or prov.get("input", {}).get("source", "in-memory measurement set"),
        result=products.result,
        prov=prov,
        cross=prov.get("cross_check") or {},
        calibration=products.calibration,
        sweep=products.sweep,
        artifacts=artifacts or {},
    )


def write_analysis_report(products, path, artifacts: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    artifacts = {name: str(p) for name, p in (artifacts or products.artifacts).items()}
    path.write_text(render_analysis_report(products, artifacts=artifacts), encoding="utf-8")
    logger.info(f"Analysis report saved to {path}")
    return path


def write_fig3_script(path, csv_name: str = "fig3.csv", max_delta: int = 12) -> Path:
    path = Path(path)
    script = FIG3_SCRIPT.render(csv_name=csv_name, png_name=Path(csv_name).with_suffix(".png").name,
                                xmax=max_delta + 2)
    path.write_text(script, encoding="utf-8")
    return path


def format_fig3_table(table) -> str:
    """Console rendering of the reproduction table; NaN cells are failed rows."""
    rows = []
    for record in table.to_dict(orient="records"):
        rows.append({k: (None if isinstance(v, float) and v != v else v) for k, v in record.items()})
    return FIG3_TABLE.render(rows=rows)
