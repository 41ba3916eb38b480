"""Free-energy (scaled log-moment) estimation along a net.

For a tilt ``h`` the net of scaled log-integrals
``v_k = t_k * log( integral exp(h/t_k) d mu_k )`` has a log-liminf and a
log-limsup; when the two coincide the common value is the free energy of
``h``.  This module estimates those limits from a finite tail window of the
net:

* the window is a geometric subsample of indices (a cofinal subsequence),
* ``liminf``/``limsup`` are estimated by the min/max of the sampled values,
* the sample at the finest index is kept as the representative ``value``,
* a monotone run of samples blowing past a divergence threshold is
  classified as the limit ``+inf`` (and symmetrically ``-inf``).

The estimators never average: a window whose min/max bracket is wider than
the requested tolerance is flagged as not converged.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .convex import GridFunction
from .extreal import INF, NEG_INF
from .measures import ScaledMeasureNet, exp_power_integral
from .tilts import TiltFamily, TiltFunction, linear_family, two_slope_param_arrays

DEFAULT_TOL = 1e-6
DEFAULT_DIVERGENCE_THRESHOLD = 1e12
DIVERGENCE_RUN = 5
_MEMBER_CHUNK = 512


@dataclass(frozen=True)
class WindowSpec:
    """Tail window of a net: index range plus a geometric sample budget."""

    start_index: int
    end_index: int
    max_samples: int = 48

    def __post_init__(self):
        if self.start_index < 1:
            raise ValueError("start_index must be at least 1")
        if self.start_index >= self.end_index:
            raise ValueError("window needs start_index < end_index")
        if self.max_samples < 2:
            raise ValueError("max_samples must be at least 2")

    def indices(self, net: ScaledMeasureNet) -> np.ndarray:
        if self.end_index > net.max_index:
            raise ValueError(
                f"window end {self.end_index} outside the net's range "
                f"[1, {net.max_index}]"
            )
        count = min(self.max_samples, self.end_index - self.start_index + 1)
        ks = np.geomspace(self.start_index, self.end_index, count)
        return np.unique(np.round(ks).astype(int))


def window_for_t_range(
    net: ScaledMeasureNet, t_max: float, t_min: float, max_samples: int = 48
) -> WindowSpec:
    """Window covering the indices with t in [t_min, t_max]."""
    start, end = net.index_range_for_t(t_max, t_min)
    return WindowSpec(start, end, max_samples)


@dataclass(frozen=True)
class LimitEstimate:
    """Bracketed limit of a scalar net.

    ``liminf_est``/``limsup_est`` are the min/max over the sampled window,
    ``value`` is the sample at the finest index (the best single estimate),
    and ``converged`` means the bracket is tighter than the tolerance used,
    or both ends are the same infinity.
    """

    liminf_est: float
    limsup_est: float
    value: float
    converged: bool
    spread: float
    samples: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if self.liminf_est > self.limsup_est:
            raise ValueError("liminf_est must not exceed limsup_est")


def estimate_limit(
    ts: Sequence[float],
    values: Sequence[float],
    tol: float = DEFAULT_TOL,
    divergence_threshold: float = DEFAULT_DIVERGENCE_THRESHOLD,
    divergence_run: int = DIVERGENCE_RUN,
) -> LimitEstimate:
    """Classify a sampled tail of a scalar net (see module docstring)."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    vals = [float(v) for v in values]
    samples = tuple(zip([float(t) for t in ts], vals))
    arr = np.array(vals, dtype=float)

    def _diverges(sign: float) -> bool:
        v = sign * arr
        if v[-1] <= divergence_threshold and not np.isposinf(v[-1]):
            return False
        run = min(divergence_run, len(v))
        tail = v[-run:]
        return bool(np.all(np.diff(tail) > 0)) or bool(np.all(np.isposinf(tail)))

    if np.all(np.isneginf(arr)):
        return LimitEstimate(NEG_INF, NEG_INF, NEG_INF, True, 0.0, samples)
    if _diverges(+1.0):
        return LimitEstimate(INF, INF, INF, True, 0.0, samples)
    if _diverges(-1.0):
        return LimitEstimate(NEG_INF, NEG_INF, NEG_INF, True, 0.0, samples)

    lo = float(arr.min())
    hi = float(arr.max())
    spread = hi - lo
    converged = bool(np.isfinite(lo) and np.isfinite(hi) and spread <= tol)
    return LimitEstimate(lo, hi, vals[-1], converged, spread, samples)


def lambda_of(
    net: ScaledMeasureNet,
    tilt: TiltFunction,
    window: WindowSpec,
    tol: float = DEFAULT_TOL,
    divergence_threshold: float = DEFAULT_DIVERGENCE_THRESHOLD,
) -> LimitEstimate:
    """Estimate the free energy of a single tilt along the net."""
    ks = window.indices(net)
    ts = [net.t(int(k)) for k in ks]
    vals = [exp_power_integral(net.measure(int(k)), tilt, t) for k, t in zip(ks, ts)]
    return estimate_limit(ts, vals, tol, divergence_threshold)


def _family_sample_matrix(
    family: TiltFamily, locs: np.ndarray, logm: np.ndarray, t: float
) -> np.ndarray:
    """Values of the scaled log-integral for every member at one net index."""
    members = family.members
    out = np.empty(len(members), dtype=float)

    if family.kind in ("linear", "two_slope"):
        if family.kind == "linear":
            lam = np.array([m.lam for m in members], dtype=float)
            nu = lam
        else:
            lam, nu = two_slope_param_arrays(family)
        for i0 in range(0, len(members), _MEMBER_CHUNK):
            i1 = min(i0 + _MEMBER_CHUNK, len(members))
            h = np.where(
                locs[None, :] <= 0.0,
                lam[i0:i1, None] * locs[None, :],
                nu[i0:i1, None] * locs[None, :],
            )
            expo = logm[None, :] + h / t
            out[i0:i1] = t * logsumexp(expo, axis=1)
        return out

    if family.kind == "union":
        pieces = [
            _family_sample_matrix(part, locs, logm, t) for part in family.parts
        ]
        return np.concatenate(pieces) if pieces else out

    for i, member in enumerate(members):
        expo = logm + member.eval_array(locs) / t
        v = float(logsumexp(expo))
        out[i] = NEG_INF if v == NEG_INF else t * v
    return out


def lambda_family_table(
    net: ScaledMeasureNet,
    family: TiltFamily,
    window: WindowSpec,
    tol: float = DEFAULT_TOL,
    divergence_threshold: float = DEFAULT_DIVERGENCE_THRESHOLD,
) -> list[LimitEstimate]:
    """Free-energy estimates for every member of a family.

    Equivalent to calling :func:`lambda_of` member by member, but the
    built-in parametric kinds are evaluated as vectorized blocks.
    """
    ks = window.indices(net)
    ts = np.array([net.t(int(k)) for k in ks])
    per_sample = []
    for k, t in zip(ks, ts):
        m = net.measure(int(k))
        per_sample.append(_family_sample_matrix(family, m.locations, m.log_masses, t))
    value_rows = np.vstack(per_sample)  # samples x members
    return [
        estimate_limit(ts, value_rows[:, j], tol, divergence_threshold)
        for j in range(len(family.members))
    ]


def L_grid(
    net: ScaledMeasureNet,
    G: tuple[float, float],
    resolution: int,
    window: WindowSpec,
    tol: float = DEFAULT_TOL,
    divergence_threshold: float = DEFAULT_DIVERGENCE_THRESHOLD,
    label: str = "L",
) -> GridFunction:
    """Sample the free energy of linear tilts on a grid inside open G.

    The returned grid function carries the representative values; per-point
    convergence flags and the liminf/limsup brackets are stored in ``meta``.
    Diverging entries are recorded as ``+inf``.
    """
    family = linear_family(G[0], G[1], resolution)
    estimates = lambda_family_table(net, family, window, tol, divergence_threshold)
    xs = np.array([m.lam for m in family.members], dtype=float)
    values = np.array([e.value for e in estimates], dtype=float)
    meta = {
        "converged": [e.converged for e in estimates],
        "liminf": [e.liminf_est for e in estimates],
        "limsup": [e.limsup_est for e in estimates],
        "window": (window.start_index, window.end_index, window.max_samples),
        "tol": tol,
    }
    return GridFunction(xs, values, label=label, meta=meta)
