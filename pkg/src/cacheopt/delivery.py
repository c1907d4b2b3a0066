"""Exact per-demand and expected delivery rates.

Two delivery strategies are evaluated on the same placement:

* the baseline scheme sends one coded message per nonempty user subset
  (``rate_ccs``);
* the redundancy-removing scheme skips messages for subsets disjoint from a
  leader group covering the distinct requests (``rate_mccs``).

Messages mixing subfiles of different sizes are padded to the largest subfile,
so a message for subset S at level l costs max_{k in S} a_{d_k, l}.
Expectations over random demands are computed exactly by grouping the N^K
demand vectors into multiset equivalence classes (every rate here is invariant
under user relabeling) and weighting each class by its multinomial probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, combinations_with_replacement
from typing import Callable, Iterator

import numpy as np

from .lp import SizeGuardError
from .model import (
    DemandLike,
    DistinctSet,
    Instance,
    PlacementLike,
    as_matrix,
    as_requests,
    binom,
    is_popularity_first,
)

ENUMERATION_GUARD = 10 ** 7


@dataclass(frozen=True)
class LeaderGroup:
    """One requester per distinct file; lowest user index breaks ties."""

    users: tuple[int, ...]


@dataclass(frozen=True)
class RedundancyProfile:
    """Redundant-request counts of a demand.

    ``distinct`` lists the distinct files in nonincreasing popularity order
    (ascending file index); ``per_file[i]`` counts the redundant requests for
    the i-th of them; ``cumulative[i]`` is the running total with
    ``cumulative[0] == 0``.
    """

    distinct: tuple[int, ...]
    per_file: tuple[int, ...]
    cumulative: tuple[int, ...]


def distinct_set(d: DemandLike) -> DistinctSet:
    return DistinctSet(tuple(as_requests(d)))


def leader_group(d: DemandLike) -> LeaderGroup:
    """The deterministic leader group: for each distinct file, its first requester."""
    requests = as_requests(d)
    first: dict[int, int] = {}
    for user, f in enumerate(requests, start=1):
        if f not in first:
            first[f] = user
    return LeaderGroup(tuple(sorted(first.values())))


def redundancy_profile(d: DemandLike) -> RedundancyProfile:
    requests = as_requests(d)
    files = sorted(set(requests))
    per_file = tuple(requests.count(f) - 1 for f in files)
    cum = [0]
    for v in per_file:
        cum.append(cum[-1] + v)
    return RedundancyProfile(tuple(files), per_file, tuple(cum))


def coded_message_size(subset, d: DemandLike, a: PlacementLike) -> float:
    """Size of the padded message for user subset ``subset`` (1-based users)."""
    users = tuple(subset)
    if not users:
        raise ValueError("subset must be nonempty")
    requests = as_requests(d)
    m = as_matrix(a)
    l = len(users) - 1
    return float(max(m[requests[k - 1] - 1, l] for k in users))


def _rate_with_leaders(requests: tuple[int, ...], m: np.ndarray,
                       leaders: tuple[int, ...] | None) -> float:
    """Sum of padded message sizes over subsets meeting ``leaders`` (all if None)."""
    k_users = len(requests)
    leader_set = set(leaders) if leaders is not None else None
    total = 0.0
    rows = [m[f - 1] for f in requests]
    for size in range(1, k_users + 1):
        l = size - 1
        for subset in combinations(range(k_users), size):
            if leader_set is not None and not any((u + 1) in leader_set for u in subset):
                continue
            total += max(rows[u][l] for u in subset)
    return total


def rate_mccs(d: DemandLike, a: PlacementLike) -> float:
    """Delivery rate with redundant messages skipped."""
    requests = as_requests(d)
    return _rate_with_leaders(requests, as_matrix(a), leader_group(requests).users)


def rate_ccs(d: DemandLike, a: PlacementLike) -> float:
    """Delivery rate with one message per nonempty user subset."""
    requests = as_requests(d)
    return _rate_with_leaders(requests, as_matrix(a), None)


def rate_mccs_lemma3(d: DemandLike, a: PlacementLike) -> float:
    """The redundancy-counting form of rate_mccs, valid for popularity-first a.

    With distinct files phi(1..u) in decreasing popularity and cumulative
    redundant-request counts Nhat, the messages regroup so that a_{phi(i),l}
    carries coefficient
        sum_{j=i..u} C(K-j-Nhat(i-1), l)  -  sum_{j=i+1..u} C(K-j-Nhat(i), l).
    Equals rate_mccs(d, a) exactly for every popularity-first placement.
    """
    m = as_matrix(a)
    if not is_popularity_first(m):
        raise ValueError("rate_mccs_lemma3 requires a popularity-first placement")
    requests = as_requests(d)
    k_users = len(requests)
    prof = redundancy_profile(requests)
    u = len(prof.distinct)
    total = 0.0
    for i in range(1, u + 1):
        coef = np.zeros(k_users)
        for l in range(k_users):
            first = sum(binom(k_users - j - prof.cumulative[i - 1], l)
                        for j in range(i, u + 1))
            second = sum(binom(k_users - j - prof.cumulative[i], l)
                         for j in range(i + 1, u + 1))
            coef[l] = first - second
        total += float(coef @ m[prof.distinct[i - 1] - 1, :k_users])
    return total


def demand_classes(inst: Instance) -> Iterator[tuple[tuple[int, ...], float]]:
    """Multiset equivalence classes of demands with their total probabilities.

    Yields (sorted representative demand, probability of the whole class) in
    lexicographic order; probabilities sum to 1.
    """
    n, k = inst.n_files, inst.n_users
    p = inst.popularity
    fact_k = math.factorial(k)
    for combo in combinations_with_replacement(range(1, n + 1), k):
        prob = 1.0
        mult = fact_k
        count = 1
        prev = None
        for f in combo:
            prob *= p[f - 1]
            if f == prev:
                count += 1
            else:
                count = 1
            mult //= count  # divides k! by prod of multiplicities, incrementally
            prev = f
        # mult now equals k! / prod(count_i!)
        yield combo, prob * mult


def expected_rate(rate_fn, inst: Instance, a: PlacementLike) -> float:
    """Exact average delivery rate over the demand distribution.

    ``rate_fn`` is 'mccs', 'ccs', or any callable (demand, matrix) -> float
    that is invariant under user relabeling.
    """
    if inst.n_files ** inst.n_users > ENUMERATION_GUARD:
        raise SizeGuardError(
            f"N^K = {inst.n_files ** inst.n_users} exceeds the exact-enumeration guard")
    fn = _resolve_rate_fn(rate_fn)
    m = as_matrix(a)
    terms = [prob * fn(rep, m) for rep, prob in demand_classes(inst)]
    return math.fsum(terms)


def _resolve_rate_fn(rate_fn) -> Callable:
    if rate_fn == "mccs":
        return rate_mccs
    if rate_fn == "ccs":
        return rate_ccs
    if callable(rate_fn):
        return rate_fn
    raise ValueError(f"rate_fn must be 'mccs', 'ccs', or callable, got {rate_fn!r}")


def distinct_demand_classes(inst: Instance) -> Iterator[tuple[tuple[int, ...], float]]:
    """Classes of all-distinct demands with unnormalized probabilities K! * prod p."""
    n, k = inst.n_files, inst.n_users
    fact_k = math.factorial(k)
    for combo in combinations(range(1, n + 1), k):
        prob = fact_k
        for f in combo:
            prob = prob * inst.popularity[f - 1]
        yield combo, float(prob)


def conditional_expected_rate_distinct(inst: Instance, a: PlacementLike) -> float:
    """Expected rate_mccs given that all K requests are distinct.

    Uses the renormalized product measure on all-distinct demands; requires
    K <= N for the conditioning event to be possible.
    """
    if inst.n_users > inst.n_files:
        raise ValueError("all-distinct conditioning requires K <= N")
    m = as_matrix(a)
    num = []
    den = []
    for rep, w in distinct_demand_classes(inst):
        num.append(w * rate_mccs(rep, m))
        den.append(w)
    total = math.fsum(den)
    if total == 0.0:
        raise ValueError("all-distinct demands have zero probability")
    return math.fsum(num) / total
