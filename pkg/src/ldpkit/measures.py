"""Finite-support sub-probability measures, regions, and scaled nets.

The basic object is a measure with finitely many atoms on the real line and
total mass at most one.  Masses are kept in log scale internally: the
worked example families push atom masses far below the smallest positive
double (e.g. ``exp(-k**2)`` for index ``k`` in the thousands), so a linear
representation would silently flush them to zero.  Linear masses are always
available through :attr:`FiniteSupportMeasure.masses`.

A :class:`ScaledMeasureNet` is an indexed family ``k -> (measure, t_k)``
with a strictly decreasing positive scale ``t_k -> 0``.  The three built-in
nets (fair two-point coin, escaping three-atom family, iid empirical mean)
are the standard test beds for free-energy and rate-function estimation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from scipy.special import logsumexp

from .extreal import INF, NEG_INF

ATOM_MERGE_TOL = 1e-12
MASS_SLACK = 1e-9


class MeasureFormatError(ValueError):
    """Raised when a measure file cannot be parsed."""


def _merge_atoms(locations: np.ndarray, log_masses: np.ndarray):
    """Sort atoms and merge locations closer than ATOM_MERGE_TOL."""
    order = np.argsort(locations, kind="stable")
    locs = locations[order]
    logm = log_masses[order]
    if locs.size == 0:
        return locs, logm
    # group boundaries where the gap exceeds the merge tolerance
    starts = np.flatnonzero(np.concatenate(([True], np.diff(locs) > ATOM_MERGE_TOL)))
    if starts.size == locs.size:
        return locs, logm
    merged_locs = locs[starts]
    merged_logm = np.logaddexp.reduceat(logm, starts)
    return merged_locs, merged_logm


@dataclass(frozen=True)
class FiniteSupportMeasure:
    """Sub-probability measure with finitely many atoms.

    Parameters
    ----------
    locations : ndarray
        Strictly increasing atom locations.
    log_masses : ndarray
        Natural-log masses, all finite (every atom carries positive mass).
    """

    locations: np.ndarray
    log_masses: np.ndarray

    def __post_init__(self):
        locs = np.asarray(self.locations, dtype=float)
        logm = np.asarray(self.log_masses, dtype=float)
        if locs.ndim != 1 or logm.ndim != 1 or locs.shape != logm.shape:
            raise ValueError("locations and log_masses must be 1-D of equal length")
        if np.any(np.isneginf(logm)) or np.any(np.isnan(logm)) or np.any(logm == INF):
            raise ValueError("every atom must carry a positive finite mass")
        if locs.size and np.any(np.diff(locs) <= 0):
            raise ValueError("locations must be strictly increasing")
        total = logsumexp(logm) if logm.size else NEG_INF
        if total > math.log1p(MASS_SLACK):
            raise ValueError(f"total mass exp({total}) exceeds 1")
        object.__setattr__(self, "locations", locs)
        object.__setattr__(self, "log_masses", logm)

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_atoms(cls, atoms: Iterable[tuple[float, float]]) -> "FiniteSupportMeasure":
        """Build from (location, mass) pairs; nearby atoms are merged."""
        pairs = list(atoms)
        locs = np.array([p[0] for p in pairs], dtype=float)
        masses = np.array([p[1] for p in pairs], dtype=float)
        if np.any(masses <= 0):
            raise ValueError("masses must be strictly positive")
        with np.errstate(divide="ignore"):
            logm = np.log(masses)
        locs, logm = _merge_atoms(locs, logm)
        return cls(locs, logm)

    @classmethod
    def from_log_atoms(cls, atoms: Iterable[tuple[float, float]]) -> "FiniteSupportMeasure":
        """Build from (location, log_mass) pairs; nearby atoms are merged."""
        pairs = list(atoms)
        locs = np.array([p[0] for p in pairs], dtype=float)
        logm = np.array([p[1] for p in pairs], dtype=float)
        locs, logm = _merge_atoms(locs, logm)
        return cls(locs, logm)

    @classmethod
    def dirac(cls, location: float, mass: float = 1.0) -> "FiniteSupportMeasure":
        return cls.from_atoms([(location, mass)])

    # -- views -------------------------------------------------------------

    @property
    def masses(self) -> np.ndarray:
        """Linear-scale masses (may underflow to 0 for display purposes)."""
        return np.exp(self.log_masses)

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.locations.tolist(), self.masses.tolist()))

    @property
    def log_total_mass(self) -> float:
        if self.log_masses.size == 0:
            return NEG_INF
        return float(logsumexp(self.log_masses))

    @property
    def total_mass(self) -> float:
        return float(np.exp(self.log_total_mass))

    def is_probability(self, tol: float = MASS_SLACK) -> bool:
        return abs(self.log_total_mass) <= tol

    def normalized(self) -> "FiniteSupportMeasure":
        """Rescale to exact total mass 1 (log-total subtracted)."""
        total = self.log_total_mass
        if total == NEG_INF:
            raise ValueError("cannot normalize the zero measure")
        return FiniteSupportMeasure(self.locations, self.log_masses - total)

    # -- mass queries --------------------------------------------------------

    def log_mass_in_open_interval(self, lo: float, hi: float) -> float:
        """log of the mass carried by the open interval (lo, hi)."""
        i0 = int(np.searchsorted(self.locations, lo, side="right"))
        i1 = int(np.searchsorted(self.locations, hi, side="left"))
        if i1 <= i0:
            return NEG_INF
        return float(logsumexp(self.log_masses[i0:i1]))

    def log_mass_in(self, region: "RegionSet") -> float:
        mask = region.mask(self.locations)
        if not mask.any():
            return NEG_INF
        return float(logsumexp(self.log_masses[mask]))


# ---------------------------------------------------------------------------
# regions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    lo_open: bool = False
    hi_open: bool = False

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty interval: lo={self.lo} > hi={self.hi}")
        if self.lo == self.hi and (self.lo_open or self.hi_open):
            raise ValueError("degenerate interval must be closed on both sides")

    def contains(self, x: float) -> bool:
        above = x > self.lo if self.lo_open else x >= self.lo
        below = x < self.hi if self.hi_open else x <= self.hi
        return above and below

    def mask(self, xs: np.ndarray) -> np.ndarray:
        above = xs > self.lo if self.lo_open else xs >= self.lo
        below = xs < self.hi if self.hi_open else xs <= self.hi
        return above & below

    def intersect(self, other: "Interval") -> "Interval | None":
        if self.lo > other.lo or (self.lo == other.lo and self.lo_open):
            lo, lo_open = self.lo, self.lo_open
        else:
            lo, lo_open = other.lo, other.lo_open
        if self.hi < other.hi or (self.hi == other.hi and self.hi_open):
            hi, hi_open = self.hi, self.hi_open
        else:
            hi, hi_open = other.hi, other.hi_open
        if lo > hi or (lo == hi and (lo_open or hi_open)):
            return None
        return Interval(lo, hi, lo_open, hi_open)


@dataclass(frozen=True)
class RegionSet:
    """Disjoint, sorted union of intervals (open/closed ends, +-inf allowed)."""

    intervals: tuple[Interval, ...] = ()

    def __post_init__(self):
        ivs = tuple(self.intervals)
        for a, b in zip(ivs, ivs[1:]):
            if b.lo < a.hi or (b.lo == a.hi and not (a.hi_open or b.lo_open)):
                raise ValueError("intervals must be sorted and pairwise disjoint")
        object.__setattr__(self, "intervals", ivs)

    @classmethod
    def empty(cls) -> "RegionSet":
        return cls(())

    @classmethod
    def closed(cls, lo: float, hi: float) -> "RegionSet":
        return cls((Interval(lo, hi, False, False),))

    @classmethod
    def open(cls, lo: float, hi: float) -> "RegionSet":
        return cls((Interval(lo, hi, True, True),))

    @classmethod
    def point(cls, x: float) -> "RegionSet":
        return cls((Interval(x, x, False, False),))

    @classmethod
    def open_ball(cls, center: float, radius: float) -> "RegionSet":
        return cls.open(center - radius, center + radius)

    @classmethod
    def complement_of_closed(cls, lo: float, hi: float) -> "RegionSet":
        """The two open rays around the closed interval [lo, hi]."""
        return cls(
            (Interval(NEG_INF, lo, True, True), Interval(hi, INF, True, True))
        )

    @property
    def is_empty(self) -> bool:
        return len(self.intervals) == 0

    def contains(self, x: float) -> bool:
        return any(iv.contains(x) for iv in self.intervals)

    def mask(self, xs: np.ndarray) -> np.ndarray:
        out = np.zeros(xs.shape, dtype=bool)
        for iv in self.intervals:
            out |= iv.mask(xs)
        return out

    def intersect(self, other: "RegionSet") -> "RegionSet":
        pieces = []
        for a in self.intervals:
            for b in other.intervals:
                c = a.intersect(b)
                if c is not None:
                    pieces.append(c)
        return RegionSet(tuple(pieces))


# ---------------------------------------------------------------------------
# the two basic powered quantities
# ---------------------------------------------------------------------------


def exp_power_integral(measure: FiniteSupportMeasure, tilt, t: float) -> float:
    """Scaled log-integral ``t * log( sum_i m_i exp(h(x_i)/t) )``.

    Evaluated by shifting out the maximal exponent (log-sum-exp), so the
    result never overflows even for exponents of size 1e8.  Returns ``-inf``
    for the zero measure or when the tilt is -inf on the whole support.

    Parameters
    ----------
    measure : FiniteSupportMeasure
    tilt : TiltFunction
        Any object with an ``eval_array`` method mapping locations to
        values in [-inf, +inf).
    t : float
        Scale, must be positive.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    if measure.locations.size == 0:
        return NEG_INF
    h = tilt.eval_array(measure.locations)
    expo = measure.log_masses + h / t
    val = float(logsumexp(expo))
    if val == NEG_INF:
        return NEG_INF
    return t * val


def region_power_mass(measure: FiniteSupportMeasure, region: RegionSet, t: float) -> float:
    """Powered region mass ``mu(region) ** t`` with ``0 ** t = 0``."""
    if t <= 0:
        raise ValueError("t must be positive")
    logm = measure.log_mass_in(region)
    if logm == NEG_INF:
        return 0.0
    return float(np.exp(t * logm))


# ---------------------------------------------------------------------------
# scaled nets
# ---------------------------------------------------------------------------


class ScaledMeasureNet:
    """Indexed family ``k -> (measure_k, t_k)`` with ``t_k`` decreasing to 0.

    ``t_of`` must be strictly decreasing in ``k``; this is spot-checked at
    construction and otherwise trusted.  Measures are built lazily and cached.
    """

    def __init__(
        self,
        t_of: Callable[[int], float],
        measure_of: Callable[[int], FiniteSupportMeasure],
        max_index: int = 1_000_000,
        label: str = "net",
    ):
        if max_index < 2:
            raise ValueError("max_index must be at least 2")
        probe = [t_of(k) for k in (1, 2, max(3, max_index // 2), max_index)]
        if any(t <= 0 for t in probe):
            raise ValueError("t(k) must be positive")
        if any(b >= a for a, b in zip(probe, probe[1:])):
            raise ValueError("t(k) must be strictly decreasing")
        self._t_of = t_of
        self._measure_of = measure_of
        self._cache: dict[int, FiniteSupportMeasure] = {}
        self.max_index = max_index
        self.label = label

    def t(self, k: int) -> float:
        self._check_index(k)
        return float(self._t_of(k))

    def measure(self, k: int) -> FiniteSupportMeasure:
        self._check_index(k)
        m = self._cache.get(k)
        if m is None:
            m = self._measure_of(k)
            self._cache[k] = m
        return m

    def at(self, k: int) -> tuple[FiniteSupportMeasure, float]:
        return self.measure(k), self.t(k)

    def _check_index(self, k: int) -> None:
        if not (1 <= k <= self.max_index):
            raise IndexError(f"index {k} outside [1, {self.max_index}]")

    def index_range_for_t(self, t_max: float, t_min: float) -> tuple[int, int]:
        """Smallest index with t <= t_max, largest index with t >= t_min."""
        if not (0 < t_min < t_max):
            raise ValueError("need 0 < t_min < t_max")
        lo, hi = 1, self.max_index
        if self._t_of(1) <= t_max:
            start = 1
        else:
            while lo + 1 < hi:  # first k with t(k) <= t_max
                mid = (lo + hi) // 2
                if self._t_of(mid) <= t_max:
                    hi = mid
                else:
                    lo = mid
            start = hi
        lo, hi = 1, self.max_index
        if self._t_of(self.max_index) >= t_min:
            end = self.max_index
        else:
            while lo + 1 < hi:  # last k with t(k) >= t_min
                mid = (lo + hi) // 2
                if self._t_of(mid) >= t_min:
                    lo = mid
                else:
                    hi = mid
            end = lo
        if start >= end:
            raise ValueError("t-range selects fewer than two indices")
        return start, end


def coin_example_net(max_index: int = 1_000_000) -> ScaledMeasureNet:
    """Fair two-point net: atoms at -1 and +1 with mass 1/2 each, t_k = 1/k."""
    coin = FiniteSupportMeasure.from_atoms([(-1.0, 0.5), (1.0, 0.5)])
    return ScaledMeasureNet(
        t_of=lambda k: 1.0 / k,
        measure_of=lambda k: coin,
        max_index=max_index,
        label="coin",
    )


def demzei_example_net(
    log_p_of: Callable[[float], float] | None = None,
    eps_of: Callable[[int], float] | None = None,
    max_index: int = 1_000_000,
) -> ScaledMeasureNet:
    """Three-atom family whose outer atoms escape to +-infinity.

    At scale ``eps`` the measure puts mass ``1 - 2 p`` at 0 and mass ``p``
    at the two locations ``+-(eps * log p)``; the schedule must satisfy
    ``eps * log p(eps) -> -inf``.  Defaults: ``eps_k = 1/k`` and
    ``log p(eps) = -1/eps**2``, so the outer atoms sit at ``-+k`` with
    log-mass ``-k**2``.
    """
    if log_p_of is None:
        log_p_of = lambda eps: -1.0 / (eps * eps)
    if eps_of is None:
        eps_of = lambda k: 1.0 / k

    def build(k: int) -> FiniteSupportMeasure:
        eps = eps_of(k)
        logp = log_p_of(eps)
        if logp >= math.log(0.5):
            raise ValueError(f"schedule gives 2*p(eps) >= 1 at index {k}")
        p = math.exp(logp)
        log_center = math.log1p(-2.0 * p) if p > 0 else 0.0
        # -0.0 from log1p(-0.0) is normalized to 0.0
        log_center += 0.0
        outer = eps * logp  # negative, diverging
        return FiniteSupportMeasure.from_log_atoms(
            [(outer, logp), (0.0, log_center), (-outer, logp)]
        )

    return ScaledMeasureNet(
        t_of=eps_of, measure_of=build, max_index=max_index, label="dem-zei"
    )


class _IidMeanBuilder:
    """Exact law of the empirical mean of n iid draws from a base measure.

    Keeps a rolling n-fold convolution of the unscaled sum law; colliding
    locations are combined in log scale, so masses as small as exp(-n) stay
    exact.  Support growth is linear for lattice bases and combinatorial in
    general.
    """

    def __init__(self, base: FiniteSupportMeasure):
        if not base.is_probability():
            raise ValueError("iid mean net requires a probability base measure")
        self.base = base.normalized()
        self._n = 1
        self._sum_locs = self.base.locations.copy()
        self._sum_logm = self.base.log_masses.copy()

    def __call__(self, n: int) -> FiniteSupportMeasure:
        if n < self._n:
            # restart; accesses are normally monotone in n
            self._n = 1
            self._sum_locs = self.base.locations.copy()
            self._sum_logm = self.base.log_masses.copy()
        while self._n < n:
            locs = (self._sum_locs[:, None] + self.base.locations[None, :]).ravel()
            logm = (self._sum_logm[:, None] + self.base.log_masses[None, :]).ravel()
            self._sum_locs, self._sum_logm = _merge_atoms(locs, logm)
            self._n += 1
        return FiniteSupportMeasure(self._sum_locs / n, self._sum_logm).normalized()


def iid_mean_example_net(base: FiniteSupportMeasure, max_n: int) -> ScaledMeasureNet:
    """Empirical-mean net: mu_n = law of (X_1 + ... + X_n)/n, t_n = 1/n."""
    builder = _IidMeanBuilder(base)
    return ScaledMeasureNet(
        t_of=lambda n: 1.0 / n,
        measure_of=builder,
        max_index=max_n,
        label="iid-mean",
    )


def bernoulli_half_base() -> FiniteSupportMeasure:
    return FiniteSupportMeasure.from_atoms([(0.0, 0.5), (1.0, 0.5)])


# ---------------------------------------------------------------------------
# tail condition
# ---------------------------------------------------------------------------


def tail_condition_check(net, family, M: float, eps: float, window) -> tuple[bool, list]:
    """Uniform tail check over a tilt family.

    For each tilt ``h`` estimates ``limsup mu^t(exp(h/t) 1_{h > M})`` by the
    maximum of the restricted scaled log-integral over the window, then
    compares ``exp(estimate)`` against ``eps``.  Returns the overall flag and
    the list of failing ``(tilt, estimate)`` witnesses; an empty family holds
    vacuously.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    indices = window.indices(net)
    samples = [net.at(k) for k in indices]
    witnesses = []
    for tilt in family.members:
        best = NEG_INF
        for m, t in samples:
            h = tilt.eval_array(m.locations)
            mask = h > M
            if not mask.any():
                continue
            expo = m.log_masses[mask] + h[mask] / t
            val = t * float(logsumexp(expo))
            if val > best:
                best = val
        estimate = float(np.exp(best)) if best != NEG_INF else 0.0
        if not estimate < eps:
            witnesses.append((tilt, estimate))
    return (len(witnesses) == 0), witnesses


# ---------------------------------------------------------------------------
# measure files
# ---------------------------------------------------------------------------


def load_measure(path) -> FiniteSupportMeasure:
    """Read a ``location,mass`` text file ('#' comments, blank lines ok)."""
    atoms: list[tuple[float, float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise MeasureFormatError(
                    f"{path}:{lineno}: expected 'location,mass', got {raw.strip()!r}"
                )
            try:
                loc, mass = float(parts[0]), float(parts[1])
            except ValueError as exc:
                raise MeasureFormatError(f"{path}:{lineno}: {exc}") from exc
            if atoms and loc <= atoms[-1][0]:
                raise MeasureFormatError(
                    f"{path}:{lineno}: locations must be strictly increasing"
                )
            atoms.append((loc, mass))
    if not atoms:
        raise MeasureFormatError(f"{path}: no atoms found")
    return FiniteSupportMeasure.from_atoms(atoms)


def save_measure(measure: FiniteSupportMeasure, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for loc, mass in measure.atoms:
            fh.write(f"{loc!r},{mass!r}\n")
