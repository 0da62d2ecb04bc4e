"""
    emit.py

    Output writers: CSV via pandas, JSON with sorted keys, and small static
    SVG charts built with lxml. File bodies carry no timestamps so that
    identical runs produce identical bytes.
"""
# This source file is part of the policybound open source project
#
# Copyright 2026 the policybound project authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
#

import json
import logging
import math
import os

import lxml.etree as le
import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

SVG_NS = "http://www.w3.org/2000/svg"
SIGN_COLORS = {
    "strictly_negative": "#c0392b",
    "strictly_positive": "#27ae60",
    "indeterminate": "#7f8c8d",
}
VERSION_COLORS = {1: "#2874a6", 2: "#d35400"}


def _ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def csv_text(frame):
    # RFC 4180: CRLF record separators, fields with commas or quotes quoted.
    return frame.to_csv(index=False, lineterminator="\r\n", float_format="%.10g")


def write_csv(frame, path):
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="") as fout:
        fout.write(csv_text(frame))
    logger.info("wrote {} rows to {}".format(len(frame), path))


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def json_text(obj):
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def write_json(obj, path):
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as fout:
        fout.write(json_text(obj))
    logger.info("wrote {}".format(path))


def bounds_frame(primary, dots=None):
    """
    One row per unit: the interval at the chosen Z, then lo/hi columns for
    each Z of the dot grid (lo@1, hi@1, lo@1.5, ...).
    """
    rows = []
    for i, b in enumerate(primary):
        row = b.as_row()
        row["Z"] = b.rule.Z if b.rule is not None else float("nan")
        for dot in (dots[i] if dots else ()):
            row["lo@{:g}".format(dot.rule.Z)] = dot.lo
            row["hi@{:g}".format(dot.rule.Z)] = dot.hi
        rows.append(row)
    frame = pd.DataFrame.from_records(rows)
    head = ["unit", "Z", "point", "lo", "hi", "sign", "rule", "strategy"]
    return frame[head + [c for c in frame.columns if c not in head]]


class _Canvas(object):
    def __init__(self, width, height, lo, hi, margin_left=60, margin=20):
        span = hi - lo if hi > lo else 1.0
        pad = 0.05 * span
        self.lo, self.hi = lo - pad, hi + pad
        self.width, self.height = width, height
        self.left, self.margin = margin_left, margin
        self.root = le.Element(
            "{%s}svg" % SVG_NS,
            nsmap={None: SVG_NS},
            width=str(width),
            height=str(height),
            viewBox="0 0 {} {}".format(width, height),
        )

    def x(self, value):
        usable = self.width - self.left - self.margin
        return self.left + usable * (value - self.lo) / (self.hi - self.lo)

    def add(self, tag, **attrs):
        return le.SubElement(self.root, "{%s}%s" % (SVG_NS, tag), {k: _fmt(v) for k, v in attrs.items()})

    def text(self, x, y, content, **attrs):
        node = self.add("text", x=x, y=y, **attrs)
        node.text = content
        return node

    def tostring(self):
        return le.tostring(self.root, pretty_print=True, xml_declaration=True, encoding="UTF-8")


def _fmt(value):
    if isinstance(value, float):
        return "{:.2f}".format(value)
    return str(value)


def write_svg(canvas, path):
    _ensure_parent(path)
    with open(path, "wb") as fout:
        fout.write(canvas.tostring())
    logger.info("wrote {}".format(path))


def bounds_svg(bounds_by_unit, row_height=14):
    """
    Horizontal interval per unit at its widest Z, colored by that
    interval's sign, with ticks at every Z's endpoints.
    """
    bounds_by_unit = [b for b in bounds_by_unit if b]
    lo = min(min(x.lo for x in b) for b in bounds_by_unit)
    hi = max(max(x.hi for x in b) for b in bounds_by_unit)
    lo, hi = min(lo, 0.0), max(hi, 0.0)
    height = row_height * (len(bounds_by_unit) + 2)
    canvas = _Canvas(640, height, lo, hi)
    canvas.add("line", x1=canvas.x(0.0), x2=canvas.x(0.0), y1=0, y2=height, stroke="black")
    for i, bounds in enumerate(bounds_by_unit):
        y = row_height * (i + 1.5)
        widest = max(bounds, key=lambda b: b.hi - b.lo)
        color = SIGN_COLORS[widest.sign.value]
        canvas.text(4, y + 4, widest.unit, **{"font-size": 10})
        canvas.add("line", x1=canvas.x(widest.lo), x2=canvas.x(widest.hi), y1=y, y2=y, stroke=color)
        for b in bounds:
            for end in (b.lo, b.hi):
                canvas.add("circle", cx=canvas.x(end), cy=y, r=2, fill=SIGN_COLORS[b.sign.value])
        canvas.add("rect", x=canvas.x(widest.point) - 2, y=y - 2, width=4, height=4, fill="black")
    return canvas


def counts_svg(counts, row_height=14):
    """Diverging bars: strictly negative counts left of zero, positive right."""
    top = max(8, int(counts[["negative", "positive"]].to_numpy().max()))
    height = row_height * (len(counts) + 2)
    canvas = _Canvas(480, height, -top, top)
    canvas.add("line", x1=canvas.x(0.0), x2=canvas.x(0.0), y1=0, y2=height, stroke="black")
    for i, row in enumerate(counts.itertuples(index=False)):
        y = row_height * (i + 1)
        canvas.text(4, y + 10, str(row.state), **{"font-size": 10})
        if row.negative:
            canvas.add("rect", x=canvas.x(-row.negative), y=y, width=canvas.x(0) - canvas.x(-row.negative),
                       height=row_height - 4, fill=SIGN_COLORS["strictly_negative"])
        if row.positive:
            canvas.add("rect", x=canvas.x(0), y=y, width=canvas.x(row.positive) - canvas.x(0),
                       height=row_height - 4, fill=SIGN_COLORS["strictly_positive"])
    return canvas


def illustration_svg(illustration, width=640, height=400):
    grid, scatter = illustration.grid, illustration.scatter
    ys = np.concatenate([scatter["ite"].to_numpy(), grid["mixture_cate"].to_numpy()])
    y_lo, y_hi = float(ys.min()), float(ys.max())
    canvas = _Canvas(width, height, float(grid["x"].min()), float(grid["x"].max()), margin_left=20)

    def y(value):
        return height - 20 - (height - 40) * (value - y_lo) / ((y_hi - y_lo) or 1.0)

    for row in scatter.itertuples(index=False):
        if grid["x"].min() <= row.x <= grid["x"].max():
            canvas.add("circle", cx=canvas.x(row.x), cy=y(row.ite), r=1.5,
                       fill=VERSION_COLORS[int(row.m1)], **{"fill-opacity": 0.5})
    for column, color in (("cate_1", VERSION_COLORS[1]), ("cate_2", VERSION_COLORS[2]),
                          ("mixture_cate", "black"), ("projection_cate", "#7f8c8d")):
        points = " ".join("{:.2f},{:.2f}".format(canvas.x(a), y(b)) for a, b in zip(grid["x"], grid[column]))
        canvas.add("polyline", points=points, fill="none", stroke=color)
    return canvas
