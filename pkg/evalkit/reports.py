"""
Result writers: ROC CSV and SVG, error tables as text and CSV, datasets as CSV.

All output is plain text with LF line endings and a fixed layout so the
same results always produce the same bytes.
"""

from __future__ import annotations

import csv
import io
import logging
from pathlib import Path
from typing import Mapping, Sequence, Union

from django.utils.html import escape

from cascade.models import encode_real
from svm.models import Dataset

from .models import ErrorTable, RocPoint

logger = logging.getLogger(__name__)

ROC_FIELDS = ["threshold", "false_detections", "detection_rate"]
ERROR_FIELDS = ["model", "fd_target", "error_rate"]

# line colours, cycled per curve
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")
SVG_WIDTH, SVG_HEIGHT = 640, 480
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 64, 160, 32, 56


def _write_text(path: Union[str, Path], text: str) -> Path:
    path = Path(path)
    path.write_bytes(text.encode("utf-8"))
    logger.info(f"wrote {path}")
    return path


def _csv_text(fields: Sequence[str], rows) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buffer.getvalue()


def _real(value: float) -> str:
    encoded = encode_real(value)
    return encoded if isinstance(encoded, str) else repr(encoded)


def roc_csv(points: Sequence[RocPoint]) -> str:
    return _csv_text(
        ROC_FIELDS,
        (
            {
                "threshold": _real(p.threshold),
                "false_detections": p.false_detections,
                "detection_rate": repr(p.detection_rate),
            }
            for p in points
        ),
    )


def write_roc_csv(points: Sequence[RocPoint], path: Union[str, Path]) -> Path:
    return _write_text(path, roc_csv(points))


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def roc_svg(curves: Mapping[str, Sequence[RocPoint]], title: str = "ROC") -> str:
    """
    Step plot of detection rate against false detections, one polyline per
    curve, with a legend on the right.
    """
    plot_w = SVG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = SVG_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
    max_fd = max((p.false_detections for points in curves.values() for p in points), default=0)
    x_max = max(1, max_fd)

    def sx(fd: float) -> float:
        return MARGIN_LEFT + plot_w * fd / x_max

    def sy(rate: float) -> float:
        return MARGIN_TOP + plot_h * (1.0 - rate)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" '
        f'viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{SVG_WIDTH}" height="{SVG_HEIGHT}" fill="white"/>',
        f'<text x="{SVG_WIDTH // 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="black"/>',
    ]
    for k in range(5):
        rate = k / 4
        fd = x_max * k / 4
        out.append(
            f'<text x="{MARGIN_LEFT - 6}" y="{_fmt(sy(rate) + 4)}" text-anchor="end">{rate:.2f}</text>'
        )
        out.append(
            f'<text x="{_fmt(sx(fd))}" y="{MARGIN_TOP + plot_h + 18}" text-anchor="middle">{fd:g}</text>'
        )
    out.append(
        f'<text x="{MARGIN_LEFT + plot_w // 2}" y="{SVG_HEIGHT - 12}" text-anchor="middle">false detections</text>'
    )
    out.append(
        f'<text x="16" y="{MARGIN_TOP + plot_h // 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {MARGIN_TOP + plot_h // 2})">detection rate</text>'
    )

    for i, (name, points) in enumerate(curves.items()):
        colour = PALETTE[i % len(PALETTE)]
        ordered = sorted(points, key=lambda p: (p.false_detections, p.detection_rate))
        coords = []
        previous_y = None
        for p in ordered:
            x, y = _fmt(sx(p.false_detections)), _fmt(sy(p.detection_rate))
            if previous_y is not None:
                coords.append(f"{x},{previous_y}")
            coords.append(f"{x},{y}")
            previous_y = y
        if coords:
            out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="2" points="{" ".join(coords)}"/>')
        ly = MARGIN_TOP + 16 + 18 * i
        lx = SVG_WIDTH - MARGIN_RIGHT + 12
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 20}" y2="{ly - 4}" stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_roc_svg(curves: Mapping[str, Sequence[RocPoint]], path: Union[str, Path], title: str = "ROC") -> Path:
    return _write_text(path, roc_svg(curves, title))


def error_table_text(table: ErrorTable) -> str:
    """
    Aligned plain text: one row per model, one column per false-detection
    target, error rates in percent.
    """
    header = ["model", *(f"fd={t}" for t in table.fd_targets)]
    rows = [[name, *(table.cell(name, t).formatted() for t in table.fd_targets)] for name in table.models]
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]

    def line(cols: Sequence[str]) -> str:
        first = cols[0].ljust(widths[0])
        rest = [c.rjust(w) for c, w in zip(cols[1:], widths[1:])]
        return "  ".join([first, *rest]).rstrip()

    return "".join(f"{line(r)}\n" for r in [header, *rows])


def write_error_table(table: ErrorTable, text_path: Union[str, Path], csv_path: Union[str, Path]) -> None:
    _write_text(text_path, error_table_text(table))
    _write_text(csv_path, _csv_text(ERROR_FIELDS, table.rows()))


def dataset_csv(data: Dataset) -> str:
    fields = [f"x{j}" for j in range(data.dimension)] + ["label"]
    rows = (
        {**{f"x{j}": repr(float(v)) for j, v in enumerate(point)}, "label": int(label)}
        for point, label in zip(data.points, data.labels)
    )
    return _csv_text(fields, rows)


def write_dataset(data: Dataset, path: Union[str, Path]) -> Path:
    return _write_text(path, dataset_csv(data))
