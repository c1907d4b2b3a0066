"""Polynomial-time closed form of the average delivery rate.

For popularity-first placements the expected rate is linear in the placement
entries: E[rate] = sum_{n,l} g[n,l] * a[n,l].  The coefficient matrix g splits
into a baseline term (every subset's message, a telescoping power of tail
probabilities) minus a correction for the skipped redundant messages.  The
correction is driven by the joint probabilities P[i,u,n] that the demand has u
distinct requests and that file n is requested by the i-th non-leader user
when non-leaders are ranked by decreasing popularity of their request
(ascending file index; index breaks popularity ties).  P is obtained by exact
enumeration over demand multiset classes rather than a combinatorial formula.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .delivery import ENUMERATION_GUARD, demand_classes
from .lp import SizeGuardError
from .model import Instance, PlacementLike, as_matrix, binom, is_popularity_first


@dataclass(frozen=True)
class RateCoefficients:
    """Average-rate coefficients for one (N, K, popularity) triple.

    ``g`` is the N x (K+1) matrix for the redundancy-removing scheme, ``g_ccs``
    the baseline-only first term, and ``p_iun[i, u, n]`` the redundant-request
    probabilities (1-based axes; index 0 unused).
    """

    g: np.ndarray
    g_ccs: np.ndarray
    p_iun: np.ndarray


_cache: dict[tuple[int, int, bytes], RateCoefficients] = {}
_cache_lock = threading.Lock()


def redundancy_probabilities(inst: Instance) -> np.ndarray:
    """P[i, u, n] by exact enumeration over demand classes.

    For each class: u is the number of distinct requests; removing one copy of
    each distinct file leaves the non-leader request multiset, sorted ascending
    by file index (most popular first).  The class probability accumulates at
    every position i of that list.
    """
    n, k = inst.n_files, inst.n_users
    if n ** k > ENUMERATION_GUARD:
        raise SizeGuardError(f"N^K = {n ** k} exceeds the exact-enumeration guard")
    p_iun = np.zeros((k + 1, k + 1, n + 1))
    for rep, prob in demand_classes(inst):
        seen: set[int] = set()
        redundant = []
        for f in rep:  # rep is sorted ascending, so `redundant` is too
            if f in seen:
                redundant.append(f)
            else:
                seen.add(f)
        u = len(seen)
        for i, f in enumerate(redundant, start=1):
            p_iun[i, u, f] += prob
    return p_iun


def g_coefficients(inst: Instance) -> RateCoefficients:
    """Rate coefficients for the instance, cached per (N, K, popularity)."""
    key = (inst.n_files, inst.n_users, inst.popularity.tobytes())
    with _cache_lock:
        hit = _cache.get(key)
    if hit is not None:
        return hit

    n, k = inst.n_files, inst.n_users
    p = inst.popularity
    tails = np.concatenate([np.cumsum(p[::-1])[::-1], [0.0]])  # tails[n-1] = sum_{n'>=n} p

    g_ccs = np.zeros((n, k + 1))
    for fi in range(n):
        for l in range(k):
            g_ccs[fi, l] = binom(k, l + 1) * (
                tails[fi] ** (l + 1) - tails[fi + 1] ** (l + 1))

    # Removed redundant messages: at level l there are C(K-u-i, l) redundant
    # subsets of size l+1 whose padded size is set by the i-th ranked
    # non-leader request, so that request's file absorbs coefficient
    # C(K-u-i, l) -- summed over ranks this recovers the C(K-u, l+1)
    # redundant subsets of the level.
    p_iun = redundancy_probabilities(inst)
    correction = np.zeros((n, k + 1))
    for u in range(1, min(n, k) + 1):
        for l in range(0, k - u):
            for i in range(1, k - u + 1):
                inner = binom(k - u - i, l)
                if inner == 0:
                    continue
                correction[:, l] += inner * p_iun[i, u, 1:]

    coeffs = RateCoefficients(g=g_ccs - correction, g_ccs=g_ccs, p_iun=p_iun)
    with _cache_lock:
        _cache[key] = coeffs
    return coeffs


def _require_popularity_first(a: PlacementLike) -> np.ndarray:
    m = as_matrix(a)
    if not is_popularity_first(m):
        raise ValueError("closed-form rates require a popularity-first placement")
    return m


def avg_rate_closed(inst: Instance, a: PlacementLike) -> float:
    """Closed-form expected rate of the redundancy-removing scheme."""
    m = _require_popularity_first(a)
    return float(np.sum(g_coefficients(inst).g * m))


def avg_rate_ccs_closed(inst: Instance, a: PlacementLike) -> float:
    """Closed-form expected rate of the all-subsets baseline scheme."""
    m = _require_popularity_first(a)
    return float(np.sum(g_coefficients(inst).g_ccs * m))
