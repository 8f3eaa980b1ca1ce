"""Cross-section meshes: generation, normalization and quadrature.

All cross-sections are straight-edged triangulations of a simply connected
planar domain, normalized to unit area with centroid at the origin and
principal axes aligned with the coordinate axes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

TOL_GEOM = 1e-10

# Symmetric 6-point rule of degree 4 on the reference triangle (barycentric).
_A1, _W1 = 0.445948490915965, 0.223381589678011
_A2, _W2 = 0.091576213509771, 0.109951743655322
QUAD_BARY = np.array([
    [_A1, _A1, 1 - 2 * _A1],
    [_A1, 1 - 2 * _A1, _A1],
    [1 - 2 * _A1, _A1, _A1],
    [_A2, _A2, 1 - 2 * _A2],
    [_A2, 1 - 2 * _A2, _A2],
    [1 - 2 * _A2, _A2, _A2],
])
QUAD_WEIGHTS = np.array([_W1, _W1, _W1, _W2, _W2, _W2])


class DegenerateMesh(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class NormalizationTransform:
    """x_normalized = scale * rot(-rotation_angle) @ (x_raw + translation)."""

    translation: np.ndarray
    rotation_angle: float
    scale: float
    ambiguous_axes: bool = False

    def apply(self, pts: np.ndarray) -> np.ndarray:
        c, s = np.cos(self.rotation_angle), np.sin(self.rotation_angle)
        rot = np.array([[c, s], [-s, c]])
        return self.scale * (np.asarray(pts, float) + self.translation) @ rot.T

    def undo(self, pts: np.ndarray) -> np.ndarray:
        c, s = np.cos(self.rotation_angle), np.sin(self.rotation_angle)
        rot = np.array([[c, s], [-s, c]])
        return (np.asarray(pts, float) / self.scale) @ rot - self.translation


@dataclass(frozen=True, eq=False)
class CrossSection:
    vertices: np.ndarray  # (nv, 2)
    triangles: np.ndarray  # (nt, 3), counter-clockwise
    boundary_edges: np.ndarray = field(init=False)  # (nb, 2), interior on the left
    boundary_normals: np.ndarray = field(init=False)  # (nb, 2), outward unit
    measure: float = field(init=False)
    m2: float = field(init=False)
    m3: float = field(init=False)
    quadrature_order: int = 4

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        areas = triangle_areas(v, t)
        if np.any(areas <= 1e-12 * np.abs(areas).mean()):
            raise DegenerateMesh("degenerate or inverted triangle")
        edges, normals = _boundary(v, t)
        object.__setattr__(self, "boundary_edges", edges)
        object.__setattr__(self, "boundary_normals", normals)
        mom = polygon_moments(v, t)
        object.__setattr__(self, "measure", mom["area"])
        object.__setattr__(self, "m2", mom["x2x2"])
        object.__setattr__(self, "m3", mom["x3x3"])

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def mesh_size(self) -> float:
        e = self.vertices[self.triangles[:, [1, 2, 0]]] - self.vertices[self.triangles]
        return float(np.linalg.norm(e, axis=-1).max())

    def moments(self) -> dict:
        return polygon_moments(self.vertices, self.triangles)

    def check(self, tol: float = TOL_GEOM) -> list[str]:
        """Return the list of violated normalization conditions (empty if valid)."""
        mom = self.moments()
        bad = []
        if abs(mom["area"] - 1) > tol:
            bad.append(f"measure={mom['area']!r}")
        for key in ("x2", "x3", "x2x3"):
            if abs(mom[key]) > tol:
                bad.append(f"int {key}={mom[key]!r}")
        if self.m2 <= 0 or self.m3 <= 0:
            bad.append("non-positive second moment")
        return bad

    def quadrature(self):
        """Physical quadrature points (nt, nq, 2) and weights (nt, nq)."""
        p = self.vertices[self.triangles]  # (nt, 3, 2)
        pts = np.einsum("qa,tad->tqd", QUAD_BARY, p)
        w = triangle_areas(self.vertices, self.triangles)[:, None] * QUAD_WEIGHTS[None, :]
        return pts, w

    def stats(self) -> dict:
        return {
            "n_vertices": self.n_vertices,
            "n_triangles": self.n_triangles,
            "n_boundary_edges": len(self.boundary_edges),
            "h_max": self.mesh_size,
            "measure": self.measure,
            "m2": self.m2,
            "m3": self.m3,
        }


def triangle_areas(v: np.ndarray, t: np.ndarray) -> np.ndarray:
    a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def polygon_moments(v: np.ndarray, t: np.ndarray) -> dict:
    """Exact moments up to order two of the triangulated region."""
    a = triangle_areas(v, t)
    p = v[t]  # (nt, 3, 2)
    s = p.sum(axis=1)
    # int_T x_i x_j = A/12 * (sum_a x_i^a x_j^a + (sum x_i)(sum x_j))
    def second(i, j):
        return float(np.sum(a / 12 * (np.einsum("ta,ta->t", p[:, :, i], p[:, :, j]) + s[:, i] * s[:, j])))
    return {
        "area": float(a.sum()),
        "x2": float(np.sum(a * s[:, 0] / 3)),
        "x3": float(np.sum(a * s[:, 1] / 3)),
        "x2x2": second(0, 0),
        "x3x3": second(1, 1),
        "x2x3": second(0, 1),
    }


def _boundary(v, t):
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    key = np.sort(e, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    if np.any(counts > 2):
        raise DegenerateMesh("non-manifold edge (shared by more than two triangles)")
    # a conforming, consistently oriented mesh traverses every interior edge once each way
    interior = counts[inv] == 2
    ie = e[interior]
    fwd = {tuple(x) for x in ie.tolist()}
    if len(fwd) != len(ie) or any((b, a) not in fwd for a, b in fwd):
        raise DegenerateMesh("inconsistent triangle orientation")
    b = e[counts[inv] == 1]
    d = v[b[:, 1]] - v[b[:, 0]]
    n = np.stack([d[:, 1], -d[:, 0]], axis=1)
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    return b, n


def normalize(raw_vertices, raw_triangles) -> tuple[CrossSection, NormalizationTransform]:
    """Shift to the centroid, rotate to principal axes, scale to unit area."""
    v = np.asarray(raw_vertices, dtype=float)
    t = np.asarray(raw_triangles, dtype=np.int64)
    a = triangle_areas(v, t)
    if np.all(a < 0):
        t = t[:, [0, 2, 1]]
        a = -a
    if np.any(a <= 1e-12 * np.abs(a).mean()):
        raise DegenerateMesh("zero-area or inverted triangle")
    mom = polygon_moments(v, t)
    area = mom["area"]
    c = np.array([mom["x2"], mom["x3"]]) / area
    i22 = mom["x2x2"] - area * c[0] ** 2
    i33 = mom["x3x3"] - area * c[1] ** 2
    i23 = mom["x2x3"] - area * c[0] * c[1]
    scale = 1.0 / np.sqrt(area)
    # moments are compared after scaling to unit area
    s4 = scale ** 4
    ambiguous = abs(i22 - i33) * s4 <= 1e-12 and abs(i23) * s4 <= 1e-12
    if ambiguous:
        theta = 0.0
        log.info("principal axes ambiguous; keeping input orientation")
    else:
        theta = 0.5 * np.arctan2(2 * i23, i22 - i33)
        # pick the representative in (-pi/4, pi/4] so diagonal input stays fixed
        if theta > np.pi / 4:
            theta -= np.pi / 2
        elif theta <= -np.pi / 4:
            theta += np.pi / 2
        if abs(i23) * s4 <= 1e-15:
            theta = 0.0
    tr = NormalizationTransform(translation=-c, rotation_angle=float(theta), scale=float(scale),
                                ambiguous_axes=bool(ambiguous))
    return CrossSection(tr.apply(v), t), tr


def _renormalized(v, t) -> CrossSection:
    cs, _ = normalize(v, t)
    return cs


def generate_disk(refinement: int) -> CrossSection:
    """Disk of unit area; 4*refinement concentric rings with 6j nodes on ring j.

    The layout is invariant under rotation by 60 degrees, so the product moment
    vanishes and m2 == m3 up to round-off.
    """
    if refinement < 1:
        raise ValueError("refinement must be >= 1")
    n = 4 * refinement
    radius = 1 / np.sqrt(np.pi)
    rings = [np.array([0])]
    pts = [np.zeros(2)]
    idx = 1
    for j in range(1, n + 1):
        m = 6 * j
        ang = 2 * np.pi * np.arange(m) / m
        r = radius * j / n
        pts.extend(np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1))
        rings.append(np.arange(idx, idx + m))
        idx += m
    v = np.array(pts)
    tris = []
    for j in range(1, n + 1):
        tris.extend(_stitch(rings[j - 1], rings[j], j - 1, j))
    t = np.array(tris, dtype=np.int64)
    # scale so the inscribed polygon has unit measure; vertices stay on one circle
    area = triangle_areas(v, t).sum()
    cs = CrossSection(v / np.sqrt(area), t)
    return cs


def _stitch(inner, outer, ji, jo):
    """Triangulate the annulus between two rings by merging in angle order."""
    no = len(outer)
    if ji == 0:
        return [(inner[0], outer[k], outer[(k + 1) % no]) for k in range(no)]
    ni = len(inner)
    tris = []
    a, b = 0, 0  # steps taken on inner / outer ring
    while a < ni or b < no:
        # angles of the next candidate vertices, in units of full turns
        ta = (a + 1) / ni if a < ni else np.inf
        tb = (b + 1) / no if b < no else np.inf
        i0, i1 = inner[a % ni], inner[(a + 1) % ni]
        o0, o1 = outer[b % no], outer[(b + 1) % no]
        if tb <= ta + 1e-12:  # ties advance the outer ring
            tris.append((i0, o0, o1))
            b += 1
        else:
            tris.append((i0, o0, i1))
            a += 1
    return tris


def generate_rectangle(aspect: float, refinement: int) -> CrossSection:
    """Unit-area rectangle of side ratio ``aspect`` (x2 side / x3 side), criss-cross cells."""
    if aspect <= 0:
        raise ValueError("aspect must be positive")
    if refinement < 1:
        raise ValueError("refinement must be >= 1")
    width, height = np.sqrt(aspect), 1 / np.sqrt(aspect)
    short = min(width, height)
    nx = max(1, int(round(4 * refinement * width / short)))
    ny = max(1, int(round(4 * refinement * height / short)))
    xs = np.linspace(-width / 2, width / 2, nx + 1)
    ys = np.linspace(-height / 2, height / 2, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    corners = np.stack([X.ravel(), Y.ravel()], axis=1)
    centres = np.stack(np.meshgrid(0.5 * (xs[:-1] + xs[1:]), 0.5 * (ys[:-1] + ys[1:]), indexing="ij"),
                       axis=-1).reshape(-1, 2)
    v = np.concatenate([corners, centres])
    node = lambda i, j: i * (ny + 1) + j  # noqa: E731
    tris = []
    for i in range(nx):
        for j in range(ny):
            c = len(corners) + i * ny + j
            a, b, d, e = node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)
            tris += [(a, b, c), (b, d, c), (d, e, c), (e, a, c)]
    return CrossSection(v, np.array(tris, dtype=np.int64))


def integrate(cs: CrossSection, f) -> float:
    """Integrate a callable f(points (..., 2)) or vertex values over the cross-section.

    Vertex values are interpolated linearly; for quadratic nodal data use
    :class:`rodlim.fem.Spaces`.
    """
    pts, w = cs.quadrature()
    if callable(f):
        vals = np.asarray(f(pts), dtype=float)
    else:
        f = np.asarray(f, dtype=float)
        if f.shape[0] != cs.n_vertices:
            raise ValueError("nodal values must be given at the mesh vertices")
        vals = np.einsum("qa,ta->tq", QUAD_BARY, f[cs.triangles])
    return float(np.sum(w * vals))


def read_mesh(path) -> tuple[np.ndarray, np.ndarray]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    nv, nt = map(int, lines[0].split())
    v = np.array([list(map(float, ln.split())) for ln in lines[1:1 + nv]])
    t = np.array([list(map(int, ln.split())) for ln in lines[1 + nv:1 + nv + nt]], dtype=np.int64)
    if v.shape != (nv, 2) or t.shape != (nt, 3):
        raise ValueError(f"malformed mesh file {path}")
    return v, t


def format_mesh(cs: CrossSection) -> str:
    out = [f"{cs.n_vertices} {cs.n_triangles}"]
    out += [f"{x:.17g} {y:.17g}" for x, y in cs.vertices]
    out += [f"{a} {b} {c}" for a, b, c in cs.triangles]
    return "\n".join(out) + "\n"


def load_mesh(path) -> CrossSection:
    v, t = read_mesh(path)
    cs, tr = normalize(v, t)
    if tr.scale != 1.0 or np.any(tr.translation) or tr.rotation_angle:
        log.info("mesh %s normalized: %s", path, tr)
    return cs
