"""Grid-based convex analysis.

A :class:`GridFunction` is an extended-real function sampled on a strictly
increasing grid.  Off the grid span the function is taken to be ``+inf``,
and between grid points it is interpolated linearly; conjugation is exact
for that piecewise-linear extension, which makes every operation here
reproducible and oracle-checkable.

The operations: Legendre-Fenchel transform (hull + slope scan, with an
O(n*m) brute-force twin kept as the testing oracle), greatest convex
lower-semicontinuous minorant, one-sided derivatives and their merged
range, effective domains, an essential-smoothness diagnostic, and infima
over open regions (the proper-convex-lsc restriction lemma check).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .extreal import INF, NEG_INF, ext_abs_diff
from .measures import RegionSet

DEFAULT_KINK_FLOOR = 1e-6
DEFAULT_KINK_FACTOR = 8.0
DEFAULT_SLOPE_DIVERGENCE = 1e6
RANGE_MERGE_FACTOR = 8.0


class GridFormatError(ValueError):
    """Raised when a grid-function file cannot be parsed."""


@dataclass(frozen=True)
class GridFunction:
    """Extended-real values on a strictly increasing grid."""

    xs: np.ndarray
    values: np.ndarray
    label: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if xs.ndim != 1 or vals.ndim != 1 or xs.shape != vals.shape:
            raise ValueError("xs and values must be 1-D arrays of equal length")
        if xs.size < 2:
            raise ValueError("a grid function needs at least two points")
        if np.any(np.diff(xs) <= 0):
            raise ValueError("grid must be strictly increasing")
        if np.any(np.isnan(vals)):
            raise ValueError("values must not contain NaN")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "values", vals)

    @property
    def finite_mask(self) -> np.ndarray:
        return np.isfinite(self.values)

    @property
    def is_proper(self) -> bool:
        """At least one finite value and no -inf anywhere."""
        return bool(self.finite_mask.any()) and not bool(
            np.any(np.isneginf(self.values))
        )

    def index_nearest(self, x: float) -> int:
        return int(np.argmin(np.abs(self.xs - x)))

    def value_near(self, x: float) -> float:
        return float(self.values[self.index_nearest(x)])

    def restrict_open(self, lo: float, hi: float, label: str = "") -> "GridFunction":
        """Sub-grid of the points strictly inside (lo, hi)."""
        mask = (self.xs > lo) & (self.xs < hi)
        if mask.sum() < 2:
            raise ValueError(f"fewer than two grid points inside ({lo}, {hi})")
        return GridFunction(self.xs[mask], self.values[mask], label or self.label)

    def with_label(self, label: str) -> "GridFunction":
        return GridFunction(self.xs, self.values, label, dict(self.meta))


# ---------------------------------------------------------------------------
# hulls and conjugates
# ---------------------------------------------------------------------------


def _finite_points(f: GridFunction) -> tuple[np.ndarray, np.ndarray]:
    mask = f.finite_mask
    return f.xs[mask], f.values[mask]


def _require_proper(f: GridFunction) -> None:
    if not f.is_proper:
        raise ValueError(
            f"grid function {f.label!r} is improper "
            "(needs a finite value and no -inf entries)"
        )


def lower_hull_vertices(f: GridFunction) -> tuple[np.ndarray, np.ndarray]:
    """Vertices of the lower convex hull of the finite points (monotone chain)."""
    _require_proper(f)
    xs, vs = _finite_points(f)
    keep_x: list[float] = []
    keep_v: list[float] = []
    for x, v in zip(xs, vs):
        while len(keep_x) >= 2:
            x1, v1 = keep_x[-2], keep_v[-2]
            x2, v2 = keep_x[-1], keep_v[-1]
            # pop the middle point when it lies on or above chord (x1,v1)-(x,v)
            if (v2 - v1) * (x - x1) >= (v - v1) * (x2 - x1):
                keep_x.pop()
                keep_v.pop()
            else:
                break
        keep_x.append(float(x))
        keep_v.append(float(v))
    return np.array(keep_x), np.array(keep_v)


def convex_lsc_hull(f: GridFunction) -> GridFunction:
    """Greatest convex minorant of the grid function, +inf off its domain.

    Lower semicontinuity at the effective-domain endpoints holds by
    construction for the piecewise-linear extension: the endpoint values are
    hull vertices, so they equal the limit from inside.
    """
    hx, hv = lower_hull_vertices(f)
    out = np.full_like(f.values, INF)
    inside = (f.xs >= hx[0]) & (f.xs <= hx[-1])
    if hx.size == 1:
        out[inside] = hv[0]
    else:
        out[inside] = np.interp(f.xs[inside], hx, hv)
    return GridFunction(f.xs, out, label=f"hull({f.label})" if f.label else "hull")


def _hull_slopes(hx: np.ndarray, hv: np.ndarray) -> np.ndarray:
    return np.diff(hv) / np.diff(hx)


def lf_transform(f: GridFunction, dual_grid: Sequence[float]) -> GridFunction:
    """Legendre-Fenchel transform ``f*(x) = sup_l (l*x - f(l))``.

    Exact conjugate of the piecewise-linear extension of ``f`` (+inf off the
    grid): the lower hull of the finite points is built first, then each dual
    point is matched to the hull vertex whose slope interval contains it.
    Ties are broken toward the smaller abscissa.  Dual points outside the
    hull's slope range are flagged in ``meta['off_slope_range']``: there the
    conjugate is governed by the grid truncation rather than by the sampled
    function, so values are kept (they are exact for the extension) but
    marked untrusted.
    """
    dual = np.asarray(dual_grid, dtype=float)
    if dual.ndim != 1 or dual.size < 2 or np.any(np.diff(dual) <= 0):
        raise ValueError("dual_grid must be strictly increasing with >= 2 points")
    hx, hv = lower_hull_vertices(f)
    if hx.size == 1:
        vals = dual * hx[0] - hv[0]
        off = np.zeros(dual.shape, dtype=bool)
    else:
        slopes = _hull_slopes(hx, hv)
        j = np.searchsorted(slopes, dual, side="left")
        vals = dual * hx[j] - hv[j]
        off = (dual < slopes[0]) | (dual > slopes[-1])
    label = f"{f.label}*" if f.label else "conjugate"
    return GridFunction(dual, vals, label=label, meta={"off_slope_range": off.tolist()})


def brute_force_conjugate(
    f: GridFunction, dual_grid: Sequence[float], chunk: int = 256
) -> GridFunction:
    """O(n*m) conjugate oracle: direct sup over grid points per dual point."""
    _require_proper(f)
    dual = np.asarray(dual_grid, dtype=float)
    if dual.ndim != 1 or dual.size < 2 or np.any(np.diff(dual) <= 0):
        raise ValueError("dual_grid must be strictly increasing with >= 2 points")
    xs, vs = _finite_points(f)
    vals = np.empty(dual.shape, dtype=float)
    for i0 in range(0, dual.size, chunk):
        i1 = min(i0 + chunk, dual.size)
        block = dual[i0:i1, None] * xs[None, :] - vs[None, :]
        vals[i0:i1] = block.max(axis=1)
    label = f"{f.label}* (brute)" if f.label else "conjugate (brute)"
    return GridFunction(dual, vals, label=label)


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------


def one_sided_derivatives(f: GridFunction, at: int) -> tuple[float, float]:
    """Finite-difference one-sided slopes at a grid index with finite value.

    The left slope is ``-inf`` at the left edge of the effective domain (the
    off-grid +inf convention) and symmetrically ``+inf`` on the right.
    """
    if not (0 <= at < f.xs.size):
        raise IndexError(f"index {at} out of range")
    v = f.values[at]
    if not np.isfinite(v):
        raise ValueError(f"value at index {at} is not finite")
    if at == 0 or np.isposinf(f.values[at - 1]):
        left = NEG_INF
    else:
        left = float((v - f.values[at - 1]) / (f.xs[at] - f.xs[at - 1]))
    if at == f.xs.size - 1 or np.isposinf(f.values[at + 1]):
        right = INF
    else:
        right = float((f.values[at + 1] - v) / (f.xs[at + 1] - f.xs[at]))
    return left, right


def chord_slopes(f: GridFunction) -> np.ndarray:
    """Slopes between consecutive grid points where both values are finite."""
    mask = f.finite_mask
    both = mask[:-1] & mask[1:]
    dx = np.diff(f.xs)[both]
    with np.errstate(invalid="ignore"):
        dv = np.diff(f.values)[both]
    return dv / dx


@dataclass(frozen=True)
class DerivativeRange:
    """Closure of the attained one-sided slopes, merged into components.

    Components are closed intervals (possibly single points).  ``merge_gap``
    records the gap below which neighboring slopes were joined; set coverage
    queries should allow at least this much slack.
    """

    components: tuple[tuple[float, float], ...]
    merge_gap: float

    @property
    def is_empty(self) -> bool:
        return len(self.components) == 0

    def distance(self, x: float) -> float:
        if self.is_empty:
            return INF
        best = INF
        for lo, hi in self.components:
            if lo <= x <= hi:
                return 0.0
            best = min(best, abs(x - lo), abs(x - hi))
        return best

    def covers(self, x: float, slack: float = 0.0) -> bool:
        return self.distance(x) <= slack

    @property
    def span(self) -> tuple[float, float]:
        if self.is_empty:
            raise ValueError("empty derivative range has no span")
        return self.components[0][0], self.components[-1][1]


def derivative_range(
    f: GridFunction,
    G: tuple[float, float],
    merge_gap: float | None = None,
) -> DerivativeRange:
    """Range of one-sided slopes of the restriction of ``f`` to open ``G``.

    Collects the chord slopes between consecutive finite grid points inside
    ``G`` and merges slopes whose gap is below ``merge_gap`` into closed
    intervals.  The default gap is ``8 * median(slope gaps)``: for a smooth
    sample the gaps are all of the same O(h) order, so the range fuses into
    one interval, while a kink contributes an O(1) jump far above the median
    (which stays 0 or O(h)) and survives as a component boundary.  The
    result is a closure: exact ranges are not grid-decidable.
    """
    lo, hi = G
    mask = (f.xs > lo) & (f.xs < hi) & f.finite_mask
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise ValueError(f"open interval ({lo}, {hi}) misses the grid")
    adjacent = idx[:-1][np.diff(idx) == 1]
    slopes = (f.values[adjacent + 1] - f.values[adjacent]) / (
        f.xs[adjacent + 1] - f.xs[adjacent]
    )
    slopes = np.sort(slopes[np.isfinite(slopes)])
    if slopes.size == 0:
        return DerivativeRange((), 0.0)
    if merge_gap is None:
        gaps = np.diff(slopes)
        span = float(abs(slopes[-1] - slopes[0]))
        floor = 1e-12 * max(1.0, span)
        merge_gap = (
            max(RANGE_MERGE_FACTOR * float(np.median(gaps)), floor)
            if gaps.size
            else 0.0
        )
    components: list[tuple[float, float]] = []
    start = prev = float(slopes[0])
    for s in slopes[1:]:
        s = float(s)
        if s - prev > merge_gap:
            components.append((start, prev))
            start = s
        prev = s
    components.append((start, prev))
    return DerivativeRange(tuple(components), merge_gap)


# ---------------------------------------------------------------------------
# domains
# ---------------------------------------------------------------------------


def _finite_runs(f: GridFunction) -> list[tuple[int, int]]:
    """Maximal runs [i, j] of consecutive finite values (inclusive)."""
    mask = f.finite_mask
    runs = []
    i = 0
    n = mask.size
    while i < n:
        if mask[i]:
            j = i
            while j + 1 < n and mask[j + 1]:
                j += 1
            runs.append((i, j))
            i = j + 1
        else:
            i += 1
    return runs


def effective_domain(f: GridFunction) -> RegionSet:
    """Grid cells with finite values, merged into closed intervals."""
    from .measures import Interval

    runs = _finite_runs(f)
    return RegionSet(
        tuple(Interval(float(f.xs[i]), float(f.xs[j])) for i, j in runs)
    )


def interior_effective_domain(f: GridFunction) -> RegionSet:
    """Effective domain with one boundary grid cell dropped on each side."""
    from .measures import Interval

    runs = _finite_runs(f)
    pieces = []
    for i, j in runs:
        if j - i >= 2:
            pieces.append(Interval(float(f.xs[i + 1]), float(f.xs[j - 1])))
    return RegionSet(tuple(pieces))


def interior_mask(mask: np.ndarray) -> np.ndarray:
    """Drop the first and last index of every True-run."""
    out = mask.copy()
    n = mask.size
    i = 0
    while i < n:
        if mask[i]:
            j = i
            while j + 1 < n and mask[j + 1]:
                j += 1
            out[i] = False
            out[j] = False
            i = j + 1
        else:
            i += 1
    return out


def is_convex_table(f: GridFunction, tol: float = 1e-9) -> bool:
    """Numerically convex: contiguous finite part with nondecreasing slopes."""
    runs = _finite_runs(f)
    if len(runs) != 1:
        return False
    s = chord_slopes(f)
    if s.size < 2:
        return True
    return bool(np.all(np.diff(s) >= -tol))


# ---------------------------------------------------------------------------
# essential smoothness
# ---------------------------------------------------------------------------


def essential_smoothness_check(
    f: GridFunction,
    kink_floor: float = DEFAULT_KINK_FLOOR,
    kink_factor: float = DEFAULT_KINK_FACTOR,
    divergence_threshold: float = DEFAULT_SLOPE_DIVERGENCE,
) -> tuple[bool, dict]:
    """Essential-smoothness diagnostic for a convex grid function.

    Three clauses:

    1. the effective domain is an interval with nonempty interior;
    2. no interior kink: the one-sided slope jump at each interior point
       must not exceed ``max(kink_floor * (1+|l|+|r|), kink_factor * median
       jump)`` -- the median term separates genuine kinks from the O(h)
       slope increments of a smooth sample, the floor absorbs window noise;
    3. at each *witnessed* finite domain boundary (an explicit +inf cell
       beyond it on the grid) the adjacent slope magnitude must reach
       ``divergence_threshold``.  A domain that runs to the edge of the grid
       leaves no witnessed boundary: the function may well continue, so no
       divergence is required there.
    """
    runs = _finite_runs(f)
    diag: dict = {
        "domain_is_interval": len(runs) == 1,
        "nonempty_interior": False,
        "kink_points": [],
        "boundary_failures": [],
        "witnessed_boundaries": [],
    }
    if len(runs) != 1:
        return False, diag
    i0, j0 = runs[0]
    diag["nonempty_interior"] = j0 > i0
    if j0 == i0:
        return False, diag

    slopes = (f.values[i0 + 1 : j0 + 1] - f.values[i0:j0]) / (
        f.xs[i0 + 1 : j0 + 1] - f.xs[i0:j0]
    )
    jumps = np.diff(slopes)
    if jumps.size:
        med = float(np.median(jumps))
        for k, jump in enumerate(jumps):
            left, right = float(slopes[k]), float(slopes[k + 1])
            threshold = max(
                kink_floor * (1.0 + abs(left) + abs(right)), kink_factor * med
            )
            if jump > threshold:
                diag["kink_points"].append(
                    {"x": float(f.xs[i0 + 1 + k]), "left": left, "right": right}
                )

    if i0 > 0:  # witnessed left boundary
        diag["witnessed_boundaries"].append(float(f.xs[i0]))
        if abs(slopes[0]) < divergence_threshold:
            diag["boundary_failures"].append(
                {"x": float(f.xs[i0]), "slope": float(slopes[0])}
            )
    if j0 < f.xs.size - 1:  # witnessed right boundary
        diag["witnessed_boundaries"].append(float(f.xs[j0]))
        if abs(slopes[-1]) < divergence_threshold:
            diag["boundary_failures"].append(
                {"x": float(f.xs[j0]), "slope": float(slopes[-1])}
            )

    holds = (
        diag["nonempty_interior"]
        and not diag["kink_points"]
        and not diag["boundary_failures"]
    )
    return holds, diag


# ---------------------------------------------------------------------------
# infima over open sets
# ---------------------------------------------------------------------------


def inf_over_open(f: GridFunction, region: RegionSet) -> float:
    """Infimum of the piecewise-linear extension of ``f`` over a region.

    Uses the continuity of the extension on its domain: open interval ends
    contribute their limits, single touch points only count when the region
    actually contains them.  ``inf over the empty set = +inf``.
    """
    xs, vs = _finite_points(f)
    if xs.size == 0:
        return INF
    a, b = float(xs[0]), float(xs[-1])

    def interp(x: float) -> float:
        return float(np.interp(x, xs, vs))

    best = INF
    for iv in region.intervals:
        lo_eff = max(iv.lo, a)
        hi_eff = min(iv.hi, b)
        if lo_eff > hi_eff:
            continue
        if lo_eff == hi_eff:
            if iv.contains(lo_eff):
                best = min(best, interp(lo_eff))
            continue
        best = min(best, interp(lo_eff), interp(hi_eff))
        i0 = int(np.searchsorted(xs, lo_eff, side="right"))
        i1 = int(np.searchsorted(xs, hi_eff, side="left"))
        if i1 > i0:
            best = min(best, float(vs[i0:i1].min()))
    return best


def conv_lemma_check(
    f: GridFunction, region: RegionSet, tol: float = 1e-9
) -> tuple[bool, float, float]:
    """Check inf over G == inf over G intersected with int dom(f).

    Valid for proper convex lsc grid functions whose domain has nonempty
    interior and open regions G; both infima are returned.
    """
    runs = _finite_runs(f)
    pieces = []
    for i, j in runs:
        if j > i:
            pieces.append(
                RegionSet.open(float(f.xs[i]), float(f.xs[j])).intervals[0]
            )
    int_dom = RegionSet(tuple(pieces))
    lhs = inf_over_open(f, region)
    rhs = inf_over_open(f, region.intersect(int_dom))
    return ext_abs_diff(lhs, rhs) <= tol, lhs, rhs


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------


def save_grid_csv(f: GridFunction, path) -> None:
    """Write ``x,value`` lines; +-inf as literal ``inf`` / ``-inf``."""
    with open(path, "w", encoding="utf-8") as fh:
        for x, v in zip(f.xs, f.values):
            fh.write(f"{float(x)!r},{float(v)!r}\n")


def load_grid_csv(path, label: str = "") -> GridFunction:
    """Read a ``x,value`` file; enforces a strictly increasing grid."""
    xs: list[float] = []
    vals: list[float] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise GridFormatError(
                    f"{path}:{lineno}: expected 'x,value', got {raw.strip()!r}"
                )
            try:
                x, v = float(parts[0]), float(parts[1])
            except ValueError as exc:
                raise GridFormatError(f"{path}:{lineno}: {exc}") from exc
            if xs and x <= xs[-1]:
                raise GridFormatError(
                    f"{path}:{lineno}: grid must be strictly increasing"
                )
            xs.append(x)
            vals.append(v)
    if len(xs) < 2:
        raise GridFormatError(f"{path}: need at least two grid points")
    return GridFunction(np.array(xs), np.array(vals), label=label)
