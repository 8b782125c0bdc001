"""Lattice-aligned polygonal domains and their classification on the fine grid.

Every domain is a union of fine lattice triangles, so a fine cell is either
entirely inside or entirely outside.  Classification therefore reduces to a
point-in-polygon test at the cell barycenter.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from fractions import Fraction
from typing import Sequence

import numpy as np
import shapely
from shapely.geometry import LineString, MultiLineString, Polygon, box
from shapely.ops import unary_union


class ResolutionError(ValueError):
    """The fine spacing cannot represent the requested geometry."""


class CellClass(IntEnum):
    OUTSIDE = 0
    CUT = 1
    INTERIOR = 2


@dataclass(frozen=True)
class BcTag:
    """Boundary condition on a part of the boundary.

    ``kind`` is ``"dirichlet"`` or ``"robin"``; a Neumann condition is a Robin
    condition with ``kappa == 0``.
    """

    kind: str
    kappa: float = 0.0

    def __post_init__(self):
        if self.kind not in ("dirichlet", "robin"):
            raise ValueError(f"unknown boundary condition kind {self.kind!r}")
        if self.kappa < 0:
            raise ValueError("Robin coefficient must be nonnegative")

    @property
    def is_dirichlet(self) -> bool:
        return self.kind == "dirichlet"


DIRICHLET = BcTag("dirichlet")
NEUMANN = BcTag("robin", 0.0)


def Robin(kappa: float) -> BcTag:
    return BcTag("robin", float(kappa))


@dataclass(frozen=True)
class Horizontal:
    """Clip the L-shape to ``x <= 1 - r``."""

    r: float

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError("cut length must be positive")


@dataclass(frozen=True)
class Circular:
    """Remove the ball ``B(center, r)`` (rasterized on the fine lattice)."""

    center: tuple[float, float]
    r: float

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError("cut radius must be positive")


CutSpec = Horizontal | Circular


@dataclass(frozen=True)
class BoundaryRule:
    """Assigns ``tag`` to boundary pieces whose midpoint lies on ``on``."""

    tag: BcTag
    on: object  # shapely geometry

    def matches(self, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        return shapely.dwithin(self.on, shapely.points(points), tol)


@dataclass(frozen=True, eq=False)
class DomainShape:
    kind: str
    params: dict
    region: object  # shapely (Multi)Polygon
    h: float
    box: tuple[float, float, float]  # (x0, y0, width) of the background square
    rules: tuple[BoundaryRule, ...] = ()
    default_tag: BcTag = DIRICHLET
    singular_points: tuple[tuple[float, float], ...] = ()
    gamma: object = None  # distinguished boundary piece (PF analysis)
    squares: tuple = field(default=(), repr=False)

    def __post_init__(self):
        shapely.prepare(self.region)
        if not any(t.is_dirichlet for t in self.tags()) and all(
            t.kappa == 0 for t in self.tags()
        ):
            raise ValueError("pure Neumann problem: need a Dirichlet part or kappa > 0")

    def tags(self) -> list[BcTag]:
        return [r.tag for r in self.rules] + [self.default_tag]

    @property
    def area(self) -> float:
        return float(self.region.area)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Closed point-in-domain test (boundary points belong to the domain)."""
        points = np.asarray(points, dtype=float)
        return shapely.intersects_xy(self.region, points[..., 0], points[..., 1])

    def tag_at(self, midpoints: np.ndarray) -> list[BcTag]:
        """Boundary tag for each boundary piece given by its midpoint."""
        midpoints = np.atleast_2d(midpoints)
        out = [self.default_tag] * len(midpoints)
        assigned = np.zeros(len(midpoints), dtype=bool)
        for rule in self.rules:
            hit = rule.matches(midpoints) & ~assigned
            for i in np.flatnonzero(hit):
                out[i] = rule.tag
            assigned |= hit
        return out

    def tag_arrays(self, midpoints: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized :meth:`tag_at`: (is_dirichlet, kappa) per midpoint."""
        midpoints = np.atleast_2d(midpoints)
        dirichlet = np.full(len(midpoints), self.default_tag.is_dirichlet)
        kappa = np.full(len(midpoints), self.default_tag.kappa)
        assigned = np.zeros(len(midpoints), dtype=bool)
        for rule in self.rules:
            hit = rule.matches(midpoints) & ~assigned
            dirichlet[hit] = rule.tag.is_dirichlet
            kappa[hit] = rule.tag.kappa
            assigned |= hit
        return dirichlet, kappa

    def boundary_segments(self) -> tuple[np.ndarray, list[BcTag]]:
        """Boundary split into pieces of length ``h`` with their tags.

        Returns an array of shape ``(n, 2, 2)`` of segment endpoints.
        """
        segs = []
        for ring in _rings(self.region):
            coords = np.asarray(ring.coords)
            for p, q in zip(coords[:-1], coords[1:]):
                nseg = max(1, int(round(np.max(np.abs(q - p)) / self.h)))
                t = np.linspace(0.0, 1.0, nseg + 1)[:, None]
                pts = p + t * (q - p)
                segs.append(np.stack([pts[:-1], pts[1:]], axis=1))
        segs = np.concatenate(segs) if segs else np.zeros((0, 2, 2))
        return segs, self.tag_at(segs.mean(axis=1))


def _rings(geom):
    polys = getattr(geom, "geoms", [geom])
    for poly in polys:
        yield poly.exterior
        yield from poly.interiors


def _check_lattice(lengths: Sequence[float], h: float, what: str) -> None:
    for ell in lengths:
        q = Fraction(ell).limit_denominator(1 << 30) / Fraction(h).limit_denominator(1 << 30)
        if q.denominator != 1:
            raise ResolutionError(f"h={h} does not resolve {what} (length {ell})")


UNIT_BOX = (0.0, 0.0, 1.0)


def unit_square(h: float, tag: BcTag = DIRICHLET) -> DomainShape:
    _check_lattice([1.0], h, "unit square")
    return DomainShape("UnitSquare", {}, box(0, 0, 1, 1), h, UNIT_BOX, default_tag=tag)


LSHAPE = box(0, 0, 1, 1).difference(box(0.5, 0, 1, 0.5))


def l_shape(h: float) -> DomainShape:
    _check_lattice([0.5], h, "L-shape")
    return DomainShape(
        "LShape", {}, LSHAPE, h, UNIT_BOX, singular_points=((0.5, 0.5),)
    )


def slit(h: float) -> DomainShape:
    """Unit square with a slot of width ``h`` from (0.5, 0) to (0.5, 0.5)."""
    _check_lattice([0.5], h, "slit")
    region = box(0, 0, 1, 1).difference(box(0.5, 0, 0.5 + h, 0.5))
    return DomainShape("Slit", {}, region, h, UNIT_BOX, singular_points=((0.5, 0.5),))


def fractal_squares(levels: int) -> list[tuple[int, tuple[float, float, float]]]:
    """Squares ``(level, (x, y, side))`` of the recursive square tree.

    The root is the unit square attached to the bottom edge; every square
    spawns three half-size children centered on its three sides facing away
    from its parent.
    """
    # direction vectors: 0=down, 1=right, 2=up, 3=left
    dirs = [(0, -1), (1, 0), (0, 1), (-1, 0)]
    out = [(0, (0.0, 0.0, 1.0))]
    front = [((0.0, 0.0, 1.0), 2)]  # root grows upward, away from its bottom edge
    for level in range(1, levels + 1):
        nxt = []
        for (x, y, s), outward in front:
            cx, cy = x + s / 2, y + s / 2
            c = s / 2
            for d in (outward, (outward + 1) % 4, (outward + 3) % 4):
                dx, dy = dirs[d]
                # child center sits one half-child beyond the parent side
                ccx = cx + dx * (s / 2 + c / 2)
                ccy = cy + dy * (s / 2 + c / 2)
                sq = (ccx - c / 2, ccy - c / 2, c)
                out.append((level, sq))
                nxt.append((sq, d))
        front = nxt
    return out


def fractal(levels: int, h: float, kappa: float = 10.0) -> DomainShape:
    if levels < 0:
        raise ValueError("levels must be nonnegative")
    squares = fractal_squares(levels)
    _check_lattice([abs(v) for _, sq in squares for v in sq if v], h, "fractal")
    region = unary_union([box(x, y, x + s, y + s) for _, (x, y, s) in squares])
    region = shapely.normalize(region)
    xmin, ymin, xmax, ymax = region.bounds
    x0 = np.floor(xmin * 2) / 2
    y0 = np.floor(ymin * 2) / 2
    width = max(np.ceil(xmax * 2) / 2 - x0, np.ceil(ymax * 2) / 2 - y0)
    root_sides = MultiLineString(
        [[(0, 0), (1, 0)], [(0, 0), (0, 1)], [(1, 0), (1, 1)]]
    )
    return DomainShape(
        "Fractal",
        {"levels": levels, "kappa": kappa},
        region,
        h,
        (float(x0), float(y0), float(width)),
        rules=(BoundaryRule(DIRICHLET, root_sides),),
        default_tag=Robin(kappa),
        gamma=LineString([(0, 0), (1, 0)]),
        squares=tuple(squares),
    )


def sawtooth(
    teeth_exponent: int, h: float, tooth_length: float = 0.25, teeth_tag: BcTag = DIRICHLET
) -> DomainShape:
    """Unit square whose right side is replaced by a comb of thin teeth.

    Teeth have height ``2**-teeth_exponent`` and alternate with voids of the
    same height, starting with a tooth at the bottom.
    """
    eta = 2.0 ** -teeth_exponent
    if teeth_exponent < 1:
        raise ValueError("need at least one tooth/void pair")
    _check_lattice([eta, tooth_length, 1 - tooth_length], h, "saw teeth")
    body_right = 1.0 - tooth_length
    parts = [box(0, 0, body_right, 1)]
    for j in range(2 ** (teeth_exponent - 1)):
        parts.append(box(body_right, 2 * j * eta, 1, (2 * j + 1) * eta))
    region = shapely.normalize(unary_union(parts))
    saw_zone = box(body_right, -1, 2, 2)
    return DomainShape(
        "SawTooth",
        {"teeth_exponent": teeth_exponent, "tooth_length": tooth_length},
        region,
        h,
        UNIT_BOX,
        rules=(BoundaryRule(teeth_tag, saw_zone),),
        default_tag=DIRICHLET,
        gamma=LineString([(0, 0), (0, 1)]),
    )


def _ball_cells(center, r, h):
    """Union of fine lattice triangles whose barycenter lies in ``B(center, r)``."""
    cx, cy = center
    lo_i = int(np.floor((cx - r) / h)) - 1
    lo_j = int(np.floor((cy - r) / h)) - 1
    n = int(np.ceil(2 * r / h)) + 3
    ii, jj = np.meshgrid(np.arange(lo_i, lo_i + n), np.arange(lo_j, lo_j + n), indexing="ij")
    tris = []
    for t, (bx, by) in enumerate(((2 / 3, 1 / 3), (1 / 3, 2 / 3))):
        px = (ii + bx) * h
        py = (jj + by) * h
        inside = (px - cx) ** 2 + (py - cy) ** 2 < r * r
        for i, j in zip(ii[inside], jj[inside]):
            x, y = i * h, j * h
            if t == 0:
                tris.append(Polygon([(x, y), (x + h, y), (x + h, y + h)]))
            else:
                tris.append(Polygon([(x, y), (x + h, y + h), (x, y + h)]))
    return unary_union(tris)


def cut_l_shape(cut: CutSpec, h: float, bc: str = "DD") -> DomainShape:
    """L-shape cut by a vertical line or a ball around the re-entrant corner.

    ``bc`` is two letters from {D, N}: the condition on the cut boundary and
    on the remaining boundary.
    """
    if len(bc) != 2 or set(bc) - {"D", "N"}:
        raise ValueError(f"bc must be two letters from D/N, got {bc!r}")
    tags = {"D": DIRICHLET, "N": NEUMANN}
    if isinstance(cut, Horizontal):
        _check_lattice([cut.r], h, "horizontal cut")
        if not 0 < cut.r < 0.5:
            raise ValueError("horizontal cut must satisfy 0 < r < 0.5")
        region = LSHAPE.intersection(box(0, 0, 1 - cut.r, 1))
        cut_line = LineString([(1 - cut.r, 0.5), (1 - cut.r, 1)])
        params = {"cut": "horizontal", "r": cut.r}
    elif isinstance(cut, Circular):
        if cut.r < h:
            raise ResolutionError("ball radius below the fine spacing")
        removed = _ball_cells(cut.center, cut.r, h).intersection(LSHAPE)
        region = LSHAPE.difference(removed)
        cut_line = removed.boundary.intersection(region.boundary)
        params = {"cut": "circular", "r": cut.r, "center": tuple(cut.center)}
    else:
        raise TypeError(f"unknown cut {cut!r}")
    region = shapely.normalize(region)
    params["bc"] = bc
    return DomainShape(
        "CutLShape",
        params,
        region,
        h,
        UNIT_BOX,
        rules=(BoundaryRule(tags[bc[0]], cut_line),),
        default_tag=tags[bc[1]],
        singular_points=((0.5, 0.5),),
    )


def polygon_shape(region, h: float, box_=UNIT_BOX, gamma=None, kind="Polygon") -> DomainShape:
    """Arbitrary lattice polygon, all-Dirichlet; used for test domains."""
    return DomainShape(kind, {}, shapely.normalize(region), h, box_, gamma=gamma)


def dumbbell(neck_width: float, h: float) -> DomainShape:
    """Two squares joined by a thin horizontal neck of the given width."""
    _check_lattice([neck_width / 2, 0.375, 0.3125], h, "dumbbell")
    left = box(0, 0.3125, 0.375, 0.6875)
    right = box(0.625, 0.3125, 1.0, 0.6875)
    neck = box(0.375, 0.5 - neck_width / 2, 0.625, 0.5 + neck_width / 2)
    region = unary_union([left, neck, right])
    return polygon_shape(
        region, h, gamma=LineString([(0, 0.3125), (0, 0.6875)]), kind="Dumbbell"
    )


def build_shape(kind: str, h: float, **params) -> DomainShape:
    """Construct one of the experiment domains at fine spacing ``h``."""
    key = kind.lower().replace("_", "")
    if key == "unitsquare":
        return unit_square(h)
    if key == "lshape":
        return l_shape(h)
    if key == "slit":
        return slit(h)
    if key == "fractal":
        return fractal(int(params.get("levels", 3)), h, float(params.get("kappa", 10.0)))
    if key == "sawtooth":
        tag = params.get("teeth_bc", "D")
        teeth_tag = DIRICHLET if tag in ("D", "dirichlet") else NEUMANN
        return sawtooth(
            int(params.get("teeth_exponent", 5)),
            h,
            float(params.get("tooth_length", 0.25)),
            teeth_tag,
        )
    if key == "cutlshape":
        cut = params["cut"]
        return cut_l_shape(cut, h, params.get("bc", "DD"))
    if key == "dumbbell":
        return dumbbell(float(params["neck_width"]), h)
    raise ValueError(f"unknown shape kind {kind!r}")


def fine_barycenters(x0: float, y0: float, n_side: int, h: float) -> np.ndarray:
    """Barycenters of all fine cells of an ``n_side`` x ``n_side`` lattice.

    Cell ``2*(i + n_side*j) + t`` is the lower-right (t=0) or upper-left (t=1)
    triangle of lattice square (i, j).
    """
    i, j = np.meshgrid(np.arange(n_side), np.arange(n_side), indexing="xy")
    i = i.ravel()
    j = j.ravel()
    bc = np.empty((2 * n_side * n_side, 2))
    bc[0::2, 0] = x0 + (i + 2 / 3) * h
    bc[0::2, 1] = y0 + (j + 1 / 3) * h
    bc[1::2, 0] = x0 + (i + 1 / 3) * h
    bc[1::2, 1] = y0 + (j + 2 / 3) * h
    return bc


def classify_fine_cells(shape: DomainShape, barycenters: np.ndarray) -> np.ndarray:
    """Boolean mask, True for fine cells inside the domain."""
    return shape.contains(barycenters)


def classify_coarse_cells(inside_children: np.ndarray, parent: np.ndarray, n_coarse: int) -> np.ndarray:
    """Interior/Cut/Outside from the inside flags of the fine children."""
    total = np.bincount(parent, minlength=n_coarse)
    inside = np.bincount(parent, weights=inside_children.astype(float), minlength=n_coarse)
    out = np.full(n_coarse, CellClass.CUT, dtype=np.int8)
    out[inside == total] = CellClass.INTERIOR
    out[inside == 0] = CellClass.OUTSIDE
    return out


def export_boundary_csv(shape: DomainShape, path) -> None:
    """Write boundary pieces as ``x0,y0,x1,y1,kind,kappa`` rows."""
    segs, tags = shape.boundary_segments()
    with open(path, "w") as fh:
        fh.write("x0,y0,x1,y1,kind,kappa\n")
        for (p, q), tag in zip(segs, tags):
            fh.write(f"{float(p[0])!r},{float(p[1])!r},{float(q[0])!r},{float(q[1])!r},{tag.kind},{float(tag.kappa)!r}\n")
