"""
sats module for drawing critical difference diagrams and top-k bar charts
as standalone SVG

Output is a pure function of the input, so the same report or aggregate
always gives the same bytes.
"""

# pylint: disable=too-many-arguments,too-many-locals

import math
import logging
import xml.sax.saxutils

logger = logging.getLogger(__name__)

GREY = "#8c8c8c"
BLUE = "#1f77b4"
INK = "#000000"

FONT_SIZE = 12
CHAR_WIDTH = 0.6 # of the font size, sans-serif average
ROW = 20

METRICS = ["relative_mean_attr", "relative_mean_rank", "absolute_mean_attr", "absolute_mean_rank"]

class RenderError(Exception):
    """
    Render Error which captures what couldn't be drawn
    """

    def __init__(self, subject, message):

        self.subject = subject
        self.message = message
        super().__init__(self.message)

class DegenerateReport(RenderError):
    """
    Report with fewer than two names
    """

def number(value):
    """
    Fixed decimals so coordinates never depend on float repr
    """

    text = f"{value:.2f}"

    return "0.00" if text == "-0.00" else text

def text_width(text, size=FONT_SIZE):
    """
    Approximate rendered width of text
    """

    return len(text) * size * CHAR_WIDTH

class Svg:
    """
    Small SVG 1.1 document builder
    """

    def __init__(self, width, height):

        self.width = width
        self.height = height
        self.parts = []

    @staticmethod
    def attributes(css_class=None, **attributes):
        """
        Attributes as XML, in the given order
        """

        if css_class:
            attributes = {"class": css_class, **attributes}

        return " ".join(
            f'{name.replace("_", "-")}={xml.sax.saxutils.quoteattr(number(value) if isinstance(value, float) else str(value))}'
            for name, value in attributes.items()
        )

    def group_start(self, css_class=None, x=0.0, y=0.0):
        """
        Opens a group, translated if x or y are given
        """

        attributes = {"transform": f"translate({number(x)},{number(y)})"} if x or y else {}

        self.parts.append(f"<g {self.attributes(css_class, **attributes)}>" if css_class or attributes else "<g>")

    def group_end(self):
        """
        Closes a group
        """

        self.parts.append("</g>")

    def rect(self, x, y, width, height, fill, css_class=None):
        """
        Filled rectangle
        """

        self.parts.append(f"<rect {self.attributes(css_class, x=float(x), y=float(y), width=float(width), height=float(height), fill=fill)}/>")

    def line(self, x1, y1, x2, y2, stroke=INK, stroke_width=1.0, css_class=None):
        """
        Straight line
        """

        self.parts.append(f"<line {self.attributes(css_class, x1=float(x1), y1=float(y1), x2=float(x2), y2=float(y2), stroke=stroke, stroke_width=float(stroke_width))}/>")

    def text(self, x, y, string, anchor="start", size=FONT_SIZE, css_class=None):
        """
        Escaped text
        """

        attributes = self.attributes(css_class, x=float(x), y=float(y), text_anchor=anchor, font_size=size)

        self.parts.append(f"<text {attributes}>{xml.sax.saxutils.escape(str(string))}</text>")

    def get(self):
        """
        The whole document
        """

        width, height = number(float(self.width)), number(float(self.height))

        return "\n".join([
            '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
            f'<svg version="1.1" xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif">',
            f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
            *self.parts,
            "</svg>",
            ""
        ])

def nice_number(value, rounding):
    """
    A 1, 2, 5 or 10 times power of ten close to value
    """

    exponent = math.floor(math.log10(value))
    fraction = value / 10 ** exponent

    if rounding:
        nice = 1 if fraction < 1.5 else 2 if fraction < 3 else 5 if fraction < 7 else 10
    else:
        nice = 1 if fraction <= 1 else 2 if fraction <= 2 else 5 if fraction <= 5 else 10

    return nice * 10 ** exponent

def nice_ticks(low, high, count=5):
    """
    Evenly spaced round tick values covering [low, high]
    """

    if high < low:
        low, high = high, low

    if high == low:
        high = low + 1

    spread = nice_number(high - low, False)
    step = nice_number(spread / max(count - 1, 1), True)

    decimals = max(0, -math.floor(math.log10(step)))

    start = math.floor(low / step)
    end = math.ceil(high / step)

    return [round(index * step, decimals) for index in range(start, end + 1)]

def label(report, name, counts=True):
    """
    Name, with relative mean rank and appearance count in brackets if known
    """

    if not counts or not report.relative_mean_ranks or not report.appearance_counts:
        return name

    relative = report.relative_mean_ranks.get(name)
    appearances = report.appearance_counts.get(name)

    if relative is None or appearances is None:
        return name

    return f"{name} ({relative:.2f}, {appearances})"

def render_cd_diagram(report, counts=True, width=None, height=None):
    """
    Critical difference diagram: rank axis from 1 on the left to k, names
    hanging off it on alternate halves, a bar under each clique of two or more
    """

    names = list(report.segment_names)
    count = len(names)

    if count < 2:
        raise DegenerateReport(report, f"need at least 2 names to draw, got {count}")

    labels = [label(report, name, counts) for name in names]

    half = (count + 1) // 2

    margin = max(text_width(text) for text in labels) + 20
    width = width or max(600, 2 * margin + 40 * (count - 1))

    bars = [clique for clique in report.cliques if len(clique) > 1]

    axis = 40.0
    top = axis + 16 + 8 * len(bars)
    height = height or top + ROW * (half + 1)

    left, right = margin, width - margin

    if right <= left:
        raise RenderError(width, f"width {width} too narrow for labels")

    def place(rank):
        return left + (rank - 1) / (count - 1) * (right - left)

    svg = Svg(width, height)

    svg.group_start("axis")
    svg.line(left, axis, right, axis, css_class="axis-line")

    for tick in range(1, count + 1):
        svg.line(place(tick), axis - 5, place(tick), axis, css_class="tick")
        svg.text(place(tick), axis - 8, str(tick), anchor="middle", size=10, css_class="tick-label")

    svg.group_end()

    svg.group_start("cliques")

    for row, clique in enumerate(bars):
        ranks = [report.mean_ranks[name] for name in clique]
        svg.rect(place(min(ranks)) - 3, axis + 10 + 8 * row, place(max(ranks)) - place(min(ranks)) + 6, 3, INK, css_class="clique-bar")

    svg.group_end()

    svg.group_start("labels")

    for index, (name, text) in enumerate(zip(names, labels)):

        x = place(report.mean_ranks[name])

        if index < half:
            y = top + ROW * (index + 1)
            end, anchor = left - 10, "end"
        else:
            y = top + ROW * (count - index)
            end, anchor = right + 10, "start"

        svg.line(x, axis, x, y, css_class="leader")
        svg.line(x, y, end, y, css_class="leader")
        svg.text(end + (-4 if anchor == "end" else 4), y + 4, text, anchor=anchor, css_class="segment-label")

    svg.group_end()

    return svg.get()

def ranked(aggregate, metric):
    """
    Rows most influential first: largest attribution, or smallest rank
    """

    if metric not in METRICS:
        raise RenderError(metric, f"metric {metric} not in {METRICS}")

    if not aggregate.rows:
        raise RenderError(aggregate, "aggregate has no rows")

    if any(getattr(row, metric) is None for row in aggregate.rows):
        raise RenderError(metric, f"aggregate has no {metric} values")

    sign = 1 if metric.endswith("rank") else -1

    return sorted(aggregate.rows, key=lambda row: (sign * getattr(row, metric), row.name))

def draw_bars(svg, aggregate, top_k, highlight, metric, width, title=None):
    """
    Draws a bar chart into svg at the current origin, returning its height
    """

    rows = ranked(aggregate, metric)[:top_k]

    if highlight is not None and highlight not in aggregate.names:
        logger.warning("highlight %s not in aggregate, drawing without it", highlight)
        highlight = None

    left = max(text_width(row.name) for row in rows) + 20
    right = width - 20
    top = 30.0 if title else 10.0

    ticks = nice_ticks(0.0, max(getattr(row, metric) for row in rows))

    def place(value):
        return left + (value - ticks[0]) / (ticks[-1] - ticks[0]) * (right - left)

    if title:
        svg.text(width / 2, 18, title, anchor="middle", css_class="panel-title")

    svg.group_start("bars")

    for index, row in enumerate(rows):

        y = top + ROW * index

        chosen = row.name == highlight

        svg.text(left - 6, y + 14, row.name, anchor="end", css_class="bar-label")
        svg.rect(left, y + 3, place(getattr(row, metric)) - left, ROW - 6, BLUE if chosen else GREY, css_class="bar highlight" if chosen else "bar")

    svg.group_end()

    bottom = top + ROW * len(rows) + 4

    svg.group_start("axis")
    svg.line(left, bottom, right, bottom, css_class="axis-line")

    decimals = max(0, -math.floor(math.log10(ticks[1] - ticks[0]) + 1e-9))

    for tick in ticks:
        svg.line(place(tick), bottom, place(tick), bottom + 5, css_class="tick")
        svg.text(place(tick), bottom + 18, f"{tick:.{decimals}f}", anchor="middle", size=10, css_class="tick-label")

    svg.text((left + right) / 2, bottom + 36, metric.replace("_", " "), anchor="middle", css_class="axis-title")

    svg.group_end()

    return bottom + 46

def render_bar_chart(aggregate, top_k=7, highlight=None, metric="relative_mean_attr", width=None, height=None, title=None):
    """
    Horizontal bars for the top_k most influential names, highlight in blue
    """

    if top_k < 1:
        raise RenderError(top_k, f"top_k must be at least 1, got {top_k}")

    width = width or 480

    shown = min(top_k, len(aggregate.rows))

    svg = Svg(width, height or (30 if title else 10) + ROW * shown + 50)

    draw_bars(svg, aggregate, top_k, highlight, metric, width, title)

    return svg.get()

def render_bar_panels(aggregates, top_k=7, highlight=None, metric="relative_mean_attr", columns=2, panel_width=None):
    """
    Grid of bar charts, one per aggregate, titled by class label and method
    """

    aggregates = list(aggregates)

    if not aggregates:
        raise RenderError(aggregates, "no aggregates to draw")

    if top_k < 1:
        raise RenderError(top_k, f"top_k must be at least 1, got {top_k}")

    if columns < 1:
        raise RenderError(columns, f"columns must be at least 1, got {columns}")

    panel_width = panel_width or 480
    panel_height = 30 + ROW * min(top_k, max(len(aggregated.rows) for aggregated in aggregates)) + 50

    columns = min(columns, len(aggregates))
    rows = math.ceil(len(aggregates) / columns)

    svg = Svg(panel_width * columns, panel_height * rows)

    for index, aggregated in enumerate(aggregates):

        title = " / ".join(str(part) for part in (aggregated.class_label, aggregated.method_tag) if part is not None) or "all"

        svg.group_start("panel", x=float(panel_width * (index % columns)), y=float(panel_height * (index // columns)))
        draw_bars(svg, aggregated, top_k, highlight, metric, panel_width, title)
        svg.group_end()

    return svg.get()
