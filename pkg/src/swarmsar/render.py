"""Static SVG snapshots of survey points, routes and the fire boundary."""

from __future__ import annotations

import colorsys
import json
import xml.etree.ElementTree as ET
from pathlib import Path

__all__ = ["FrameFormatError", "read_records", "render_svg", "render_file"]

_PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


class FrameFormatError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _color(k: int) -> str:
    if k < len(_PALETTE):
        return _PALETTE[k]
    r, g, b = colorsys.hls_to_rgb((k * 0.618034) % 1.0, 0.45, 0.65)
    return "#{:02x}{:02x}{:02x}".format(int(r * 255), int(g * 255), int(b * 255))


def read_records(path) -> list[dict]:
    """Parse a line-delimited frame stream, naming the first bad line."""
    records = []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FrameFormatError(n, f"not valid JSON ({exc.msg})") from None
            if not isinstance(rec, dict) or rec.get("kind") not in ("plan", "frame", "update", "summary"):
                raise FrameFormatError(n, "record has no recognised 'kind'")
            if rec["kind"] == "frame" and not {"t_s", "uavs"} <= rec.keys():
                raise FrameFormatError(n, "frame record lacks t_s or uavs")
            if rec["kind"] == "plan" and not {"points", "routes", "launch"} <= rec.keys():
                raise FrameFormatError(n, "plan record lacks points, routes or launch")
            records.append(rec)
    if not records:
        raise FrameFormatError(0, "no records")
    return records


def _pick(records, time_s, update_index=None):
    plans = [r for r in records if r["kind"] == "plan"]
    if update_index is not None:
        plans = [r for r in plans if r["update_index"] == update_index]
    frames = [r for r in records if r["kind"] == "frame"]
    if not plans:
        raise FrameFormatError(0, "stream holds no matching plan record")
    plan = plans[0]
    for p in plans:
        if p["t_s"] <= time_s:
            plan = p
    frame = None
    for f in frames:
        if f.get("update_index") == plan["update_index"] and f["t_s"] <= time_s + 1e-9:
            if frame is None or f["t_s"] >= frame["t_s"]:
                frame = f
    return plan, frame


def render_svg(records: list[dict], time_s: float = 0.0, update_index: int | None = None, width_px: int = 800) -> str:
    """SVG of the latest plan at or before ``time_s`` with UAVs at their positions then.

    Snapshot streams restart time at every update index; pass ``update_index``
    to choose one, otherwise the last plan issued at or before ``time_s`` wins.
    """
    plan, frame = _pick(records, time_s, update_index)
    points = {int(pid): (x, y) for pid, x, y in plan["points"]}
    cells = plan.get("boundary", {}).get("cells", [])
    res = plan.get("boundary", {}).get("resolution_m", 0.0)
    launch = tuple(plan["launch"])
    uav_pos = [(u["x_m"], u["y_m"]) for u in frame["uavs"]] if frame else []

    xs = [p[0] for p in points.values()] + [c[0] for c in cells] + [launch[0]] + [p[0] for p in uav_pos]
    ys = [p[1] for p in points.values()] + [c[1] for c in cells] + [launch[1]] + [p[1] for p in uav_pos]
    pad = max(plan.get("cell_size_m", 450.0), 1.0)
    x0, x1 = min(xs) - pad, max(xs) + pad
    y0, y1 = min(ys) - pad, max(ys) + pad
    scale = width_px / (x1 - x0)
    height_px = (y1 - y0) * scale

    def sx(x):
        return round((x - x0) * scale, 2)

    def sy(y):
        return round((y1 - y) * scale, 2)

    svg = ET.Element(
        "svg",
        xmlns="http://www.w3.org/2000/svg",
        width=str(width_px),
        height=str(round(height_px)),
        viewBox=f"0 0 {width_px} {round(height_px, 2)}",
    )
    ET.SubElement(svg, "title").text = f"update {plan['update_index']}, t = {time_s:g} s"
    ET.SubElement(svg, "rect", width="100%", height="100%", fill="#ffffff")

    fire = ET.SubElement(svg, "g", id="fire-boundary", fill="#f4a261", stroke="#e76f51")
    side = max(res * scale, 0.5)
    for cx, cy in cells:
        ET.SubElement(fire, "rect", x=str(round(sx(cx) - side / 2, 2)), y=str(round(sy(cy) - side / 2, 2)),
                      width=str(round(side, 2)), height=str(round(side, 2)))

    owned = set()
    routes = plan["routes"]
    for key in sorted(routes, key=lambda k: int(k.split("_")[1])):
        idx = int(key.split("_")[1])
        wps = [w for w in routes[key]["waypoints"] if w in points]
        if not wps:
            continue
        owned.update(wps)
        color = _color(idx)
        start = routes[key]["start"]
        coords = [start] + [points[w] for w in wps]
        ET.SubElement(
            svg, "polyline", {"class": "route", "data-uav": str(idx), "fill": "none", "stroke": color,
                              "stroke-width": "1.5", "points": " ".join(f"{sx(x)},{sy(y)}" for x, y in coords)},
        )
        group = ET.SubElement(svg, "g", {"class": "uav-points", "data-uav": str(idx), "fill": color})
        for w in wps:
            ET.SubElement(group, "circle", cx=str(sx(points[w][0])), cy=str(sy(points[w][1])), r="3")

    rest = [pid for pid in points if pid not in owned]
    if rest:
        group = ET.SubElement(svg, "g", {"class": "unassigned-points", "fill": "#999999"})
        for pid in rest:
            ET.SubElement(group, "circle", cx=str(sx(points[pid][0])), cy=str(sy(points[pid][1])), r="2")

    egs = ET.SubElement(svg, "g", id="egs")
    ET.SubElement(egs, "rect", x=str(sx(launch[0]) - 6), y=str(sy(launch[1]) - 6), width="12", height="12",
                  fill="#000000")

    uavs = ET.SubElement(svg, "g", id="uavs")
    for k, (x, y) in enumerate(uav_pos):
        ET.SubElement(uavs, "circle", {"class": "uav", "data-uav": str(k), "cx": str(sx(x)), "cy": str(sy(y)),
                                       "r": "5", "fill": "none", "stroke": _color(k), "stroke-width": "2"})

    return ET.tostring(svg, encoding="unicode")


def render_file(frames_path, svg_path, time_s: float = 0.0, update_index: int | None = None) -> None:
    svg = render_svg(read_records(frames_path), time_s, update_index)
    Path(svg_path).write_text('<?xml version="1.0" encoding="UTF-8"?>\n' + svg + "\n")
