#!/usr/bin/env python3
"""
Set figures
Plain SVG 1.1 drawings of 𝒳∞, 𝒳_N, the sampled 𝒳̃_N region and 𝕏_f, and their re-import
"""

import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from errors import Unsupported
from geometry import bounding_box, contains_points, vrep_from_hrep
from terminal import TerminalSet, tilde_region

logger = logging.getLogger(__name__)

SVG_NS = "http://www.w3.org/2000/svg"
CANVAS = 600
MARGIN = 30
# drawing order, outermost first
LAYERS = (
    ("xinf", "#2ca02c", "𝒳∞"),
    ("xn", "#d62728", "𝒳_N"),
    ("tilde", "#17becf", "𝒳̃_N"),
    ("xf", "#1f77b4", "𝕏_f"),
)


@dataclass
class FigureRegions:
    xinf: np.ndarray
    xn: np.ndarray
    tilde: np.ndarray
    cell: float
    ellipse_P: np.ndarray
    ellipse_alpha: float


def figure_regions(assets, grid: Optional[int] = None, jobs: int = 1) -> FigureRegions:
    """Vertices of 𝒳∞ and 𝒳_N plus the grid points of the bounding box of 𝒳∞ that lie in 𝒳̃_N"""
    if assets.config.A.shape[0] != 2:
        raise Unsupported("figures are drawn for 2-D states")
    grid = grid or assets.config.grid
    xinf = vrep_from_hrep(assets.pclf.polytope).vertices.T
    xn = vrep_from_hrep(assets.controllable).vertices.T
    lower, upper = bounding_box(assets.pclf.polytope)
    axes = [np.linspace(lower[i], upper[i], grid) for i in range(2)]
    points = np.array(np.meshgrid(*axes)).reshape(2, -1).T
    points = points[contains_points(assets.pclf.polytope, points, 0.0)]
    mask = tilde_region(assets.controller("tilde"), points, assets.terminal, jobs=jobs)
    logger.info("tilde region: %d of %d grid points", int(mask.sum()), len(points))
    cell = float(np.max(upper - lower)) / max(grid - 1, 1)
    return FigureRegions(xinf=xinf, xn=xn, tilde=points[mask], cell=cell,
                         ellipse_P=assets.terminal.P, ellipse_alpha=assets.terminal.alpha)


def _ellipse_geometry(P: np.ndarray, alpha: float):
    values, vectors = np.linalg.eigh(P)
    radii = np.sqrt(alpha / values)
    angle = float(np.degrees(np.arctan2(vectors[1, 0], vectors[0, 0])))
    return radii, angle


def _fmt(value: float) -> str:
    return f"{value:.9g}"


def _points_attr(points: np.ndarray) -> str:
    return " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in points)


def render_svg(regions: FigureRegions, title: str = "") -> str:
    """SVG text; one world-coordinate group (y up) per layer, ids as in LAYERS"""
    lower = np.min(regions.xinf, axis=0)
    upper = np.max(regions.xinf, axis=0)
    span = float(np.max(upper - lower))
    s = (CANVAS - 2 * MARGIN) / span
    tx = MARGIN - s * lower[0]
    ty = CANVAS - MARGIN + s * lower[1]

    root = ET.Element("svg", {"xmlns": SVG_NS, "version": "1.1", "width": str(CANVAS),
                              "height": str(CANVAS), "viewBox": f"0 0 {CANVAS} {CANVAS}"})
    if title:
        ET.SubElement(root, "title").text = title
    world = ET.SubElement(root, "g", {"id": "world",
                                      "transform": f"matrix({_fmt(s)} 0 0 {_fmt(-s)} {_fmt(tx)} {_fmt(ty)})"})
    stroke = _fmt(1.0 / s)
    for layer, color, label in LAYERS:
        group = ET.SubElement(world, "g", {"id": layer, "fill": color, "stroke": color})
        ET.SubElement(group, "desc").text = label
        if layer in ("xinf", "xn"):
            ET.SubElement(group, "polygon", {"points": _points_attr(getattr(regions, layer)),
                                              "fill-opacity": "0.35", "stroke-width": stroke})
        elif layer == "tilde":
            r = _fmt(regions.cell / 3.0)
            for x, y in regions.tilde:
                ET.SubElement(group, "circle", {"cx": _fmt(x), "cy": _fmt(y), "r": r, "stroke": "none"})
        else:
            radii, angle = _ellipse_geometry(regions.ellipse_P, regions.ellipse_alpha)
            ET.SubElement(group, "ellipse", {"cx": "0", "cy": "0", "rx": _fmt(radii[0]), "ry": _fmt(radii[1]),
                                              "transform": f"rotate({_fmt(angle)})", "stroke-width": stroke})
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


def write_figure(assets, path, grid: Optional[int] = None, jobs: int = 1) -> FigureRegions:
    regions = figure_regions(assets, grid, jobs)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(render_svg(regions, f"{assets.config.name}: sets"))
    return regions


def read_svg_regions(path, ellipse_points: int = 360) -> Dict[str, np.ndarray]:
    """World-coordinate points (rows) per layer id; the ellipse comes back as a sampled boundary"""
    tree = ET.parse(path)
    ns = {"svg": SVG_NS}
    regions: Dict[str, np.ndarray] = {}
    for group in tree.getroot().iterfind(".//svg:g[@id='world']/svg:g", ns):
        layer = group.get("id")
        polygon = group.find("svg:polygon", ns)
        if polygon is not None:
            pairs = [p.split(",") for p in polygon.get("points").split()]
            regions[layer] = np.array(pairs, dtype=float)
            continue
        circles = group.findall("svg:circle", ns)
        if circles or layer == "tilde":
            regions[layer] = np.array([[float(c.get("cx")), float(c.get("cy"))] for c in circles]).reshape(-1, 2)
            continue
        ellipse = group.find("svg:ellipse", ns)
        if ellipse is not None:
            rx, ry = float(ellipse.get("rx")), float(ellipse.get("ry"))
            angle = np.radians(float(ellipse.get("transform")[len("rotate("):-1]))
            theta = 2.0 * np.pi * np.arange(ellipse_points) / ellipse_points
            local = np.vstack([rx * np.cos(theta), ry * np.sin(theta)])
            rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
            regions[layer] = (rot @ local).T + np.array([float(ellipse.get("cx")), float(ellipse.get("cy"))])
    return regions


def terminal_boundary(ts: TerminalSet, count: int = 360) -> np.ndarray:
    """Points on {xᵀPx = α}, as rows"""
    radii, angle = _ellipse_geometry(ts.P, ts.alpha)
    theta = 2.0 * np.pi * np.arange(count) / count
    a = np.radians(angle)
    rot = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    return (rot @ np.vstack([radii[0] * np.cos(theta), radii[1] * np.sin(theta)])).T
