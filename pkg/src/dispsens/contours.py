"""Rectangular sensitivity grids and zero-level curve extraction.

Grids are evaluated on a cartesian product of two sensitivity-parameter
axes. Level curves are traced by marching squares with linear edge
interpolation; the surfaces swept here are bilinear within a cell, so the
interpolated crossing on each edge is exact up to rounding.
"""

import csv
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Curve:
    """One polyline in parameter space. `points` is a (k, 2) array of
    (x, y) pairs in axis units."""

    curve_id: str
    points: np.ndarray


@dataclass(frozen=True)
class MarkedPoint:
    point_id: str
    x: float
    y: float


@dataclass(frozen=True)
class SensitivityGrid:
    """A 2-D parameter sweep with derived level curves.

    values maps a column name to an (nx, ny) array with value[i, j]
    evaluated at (x[i], y[j]).
    """

    x_name: str
    y_name: str
    x: np.ndarray
    y: np.ndarray
    values: dict
    curves: tuple = ()
    points: tuple = ()

    @property
    def shape(self):
        return len(self.x), len(self.y)

    def write_csv(self, path, columns=None):
        """Write the grid long-form: one row per (x, y) cell, x-major."""
        columns = list(columns or self.values.keys())
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([self.x_name, self.y_name] + columns)
            for i, xv in enumerate(self.x):
                for j, yv in enumerate(self.y):
                    row = [repr(float(xv)), repr(float(yv))]
                    row += [repr(float(self.values[c][i, j])) for c in columns]
                    writer.writerow(row)

    def write_curves_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["curve_id", self.x_name, self.y_name])
            for curve in self.curves:
                for xv, yv in curve.points:
                    writer.writerow([curve.curve_id, repr(float(xv)), repr(float(yv))])
            for pt in self.points:
                writer.writerow([pt.point_id, repr(float(pt.x)), repr(float(pt.y))])


def _interp(a, b, fa, fb):
    # crossing of the segment (a, fa) -> (b, fb); fa and fb straddle zero
    t = fa / (fa - fb)
    return a + t * (b - a)


# Edge keys: 0 bottom, 1 right, 2 top, 3 left (cell-local). The case table
# maps the corner-sign index to pairs of crossed edges.
_CASES = {
    1: [(3, 0)], 2: [(0, 1)], 3: [(3, 1)], 4: [(1, 2)],
    6: [(0, 2)], 7: [(3, 2)], 8: [(2, 3)], 9: [(0, 2)],
    11: [(1, 2)], 12: [(3, 1)], 13: [(0, 1)], 14: [(3, 0)],
}
# corner order for the index: (i,j)=1, (i+1,j)=2, (i+1,j+1)=4, (i,j+1)=8


def _edge_root(func, fixed, lo, hi, f_lo, f_hi, vertical):
    """Bisect func to the sign change along one grid edge.

    `vertical` edges vary y at fixed x; horizontal edges vary x at fixed y.
    Assumes f_lo and f_hi straddle zero (one may be exactly zero).
    """
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        f_mid = func(fixed, mid) if vertical else func(mid, fixed)
        if f_mid == 0.0:
            return mid
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
        if hi - lo <= 1e-14 * max(abs(hi), abs(lo), 1.0):
            break
    return 0.5 * (lo + hi)


def zero_contours(x, y, f, func=None):
    """Trace the zero level set of f over the grid (x_i, y_j).

    Parameters
    ----------
    x, y : 1-D arrays of axis values
    f : (len(x), len(y)) array, f[i, j] = F(x[i], y[j])
    func : callable F(x, y), optional
        When given, each edge crossing found by linear interpolation is
        polished by bisecting F along the edge, so curved surfaces get
        crossings accurate to full precision, not just O(h^2).

    Returns
    -------
    list of (k, 2) arrays
        Polylines of (x, y) points, stitched from cell segments.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    nx, ny = f.shape
    pos = f >= 0.0

    segments = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            c00, c10 = pos[i, j], pos[i + 1, j]
            c11, c01 = pos[i + 1, j + 1], pos[i, j + 1]
            idx = (1 if c00 else 0) + (2 if c10 else 0) + (4 if c11 else 0) + (8 if c01 else 0)
            if idx in (0, 15):
                continue
            f00, f10 = f[i, j], f[i + 1, j]
            f11, f01 = f[i + 1, j + 1], f[i, j + 1]

            def cross(a, b, fa, fb, fixed, vertical):
                if func is None:
                    return _interp(a, b, fa, fb)
                return _edge_root(func, fixed, a, b, fa, fb, vertical)

            def edge_point(e):
                if e == 0:    # bottom: (i,j)-(i+1,j)
                    return (cross(x[i], x[i + 1], f00, f10, y[j], False), y[j])
                if e == 1:    # right: (i+1,j)-(i+1,j+1)
                    return (x[i + 1], cross(y[j], y[j + 1], f10, f11, x[i + 1], True))
                if e == 2:    # top: (i,j+1)-(i+1,j+1)
                    return (cross(x[i], x[i + 1], f01, f11, y[j + 1], False), y[j + 1])
                return (x[i], cross(y[j], y[j + 1], f00, f01, x[i], True))  # left

            if idx in (5, 10):
                # saddle: disambiguate with the cell-center sign
                center_pos = (f00 + f10 + f01 + f11) / 4.0 >= 0.0
                if idx == 5:
                    pairs = [(3, 2), (0, 1)] if center_pos else [(3, 0), (1, 2)]
                else:
                    pairs = [(0, 3), (1, 2)] if center_pos else [(0, 1), (2, 3)]
            else:
                pairs = _CASES[idx]
            for ea, eb in pairs:
                segments.append((edge_point(ea), edge_point(eb)))

    return _stitch(segments, x, y)


def _stitch(segments, x, y):
    if not segments:
        return []
    span = max(float(x[-1] - x[0]), float(y[-1] - y[0]), 1.0)
    scale = 1e12 / span

    def key(pt):
        return (round(pt[0] * scale), round(pt[1] * scale))

    adjacency = {}
    for s, (a, b) in enumerate(segments):
        adjacency.setdefault(key(a), []).append((s, 0))
        adjacency.setdefault(key(b), []).append((s, 1))

    used = [False] * len(segments)
    chains = []
    for s in range(len(segments)):
        if used[s]:
            continue
        used[s] = True
        chain = [segments[s][0], segments[s][1]]
        # extend forward then backward
        for forward in (True, False):
            while True:
                endpoint = chain[-1] if forward else chain[0]
                nxt = None
                for seg_id, end in adjacency.get(key(endpoint), ()):
                    if not used[seg_id]:
                        nxt = (seg_id, end)
                        break
                if nxt is None:
                    break
                seg_id, end = nxt
                used[seg_id] = True
                other = segments[seg_id][1 - end]
                if forward:
                    chain.append(other)
                else:
                    chain.insert(0, other)
        chains.append(np.array(chain, dtype=np.float64))
    return chains
