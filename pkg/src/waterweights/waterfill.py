"""Per-relay waterfilling over the scalar positional weights.

Instead of scaling every relay in a pool by the same positional weight,
waterfilling caps the amount of bandwidth each relay devotes to the scarce
position at a common "water level": relays above the level all contribute
exactly the level (the surplus goes to the middle position), relays below
it contribute their full capacity.  The pool's aggregate contribution to
the position is unchanged, but selection probabilities flatten toward
uniform, which is the point.

For a descending bandwidth list BW_1 >= ... >= BW_K and a target
contribution t, the pivot N is the smallest index such that

    L(N) = (t - sum_{i>N} BW_i) / N    satisfies   BW_{N+1} <= L(N) <= BW_N

(with BW_{K+1} taken as 0).  Relays 1..N get fraction L/BW_i, the rest get
fraction 1.  The scan and the resulting fractions are exact rationals.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .consensus import ConsensusSnapshot, RelayEntry
from .errors import EmptyPoolError, InvariantError, NotApplicableError
from .weights import SCALE, PositionWeights


class TargetPool(enum.Enum):
    GUARDS = "guards"  # Guard-flagged, not Exit-flagged
    DSET = "dset"  # Guard+Exit flagged


class Position(enum.Enum):
    ENTRY = "entry"
    MIDDLE = "middle"
    EXIT = "exit"


@dataclass(frozen=True)
class RelayShare:
    """One relay's solved share: the kept fraction plus derived weights."""

    fingerprint: str
    bandwidth: int
    fraction: Fraction  # share of bandwidth kept in the solved position(s)
    weights: dict[str, Fraction]  # e.g. {"Wgg": .., "Wmg": ..}


@dataclass(frozen=True)
class WaterfillSolution:
    pool: TargetPool
    shares: tuple[RelayShare, ...]  # descending bandwidth, fingerprint tiebreak
    water_level: Fraction
    pivot_index: int  # 1-based rank of the last relay above the water level
    target: Fraction  # pool total times its positional weight
    conservation_residual: Fraction  # sum(fraction*bandwidth) - target
    source_weights: PositionWeights

    def share_for(self, fingerprint: str) -> RelayShare | None:
        return self._by_fp().get(fingerprint)

    def _by_fp(self) -> dict[str, RelayShare]:
        cached = getattr(self, "_fp_cache", None)
        if cached is None:
            cached = {s.fingerprint: s for s in self.shares}
            object.__setattr__(self, "_fp_cache", cached)
        return cached


def find_water_level(bandwidths: Sequence[int], target: Fraction) -> tuple[Fraction, int]:
    """Locate (water_level, pivot) for a descending positive bandwidth list.

    Runs the linear pivot scan in cross-multiplied integer arithmetic, so
    the feasibility test at each candidate N is exact.
    """
    k = len(bandwidths)
    if k == 0:
        raise NotApplicableError("no positive-bandwidth relays to waterfill")
    target = target if isinstance(target, Fraction) else Fraction(target)
    p, q = target.numerator, target.denominator
    suffixes = [0] * (k + 1)  # suffixes[n] = sum of bandwidths after rank n
    for i in range(k - 1, -1, -1):
        suffixes[i] = suffixes[i + 1] + bandwidths[i]
    total = suffixes[0]
    if not 0 < target <= total:
        raise InvariantError(
            f"waterfill target {float(target):.6g} outside (0, pool total {total}]"
        )
    for n in range(1, k + 1):
        t_n = p - q * suffixes[n]  # q * n * L(n)
        if t_n < 0:
            continue
        qn = q * n
        below = bandwidths[n] if n < k else 0
        if qn * below <= t_n <= qn * bandwidths[n - 1]:
            return Fraction(t_n, qn), n
    raise InvariantError("pivot scan found no feasible water level")


def _pool_relays(snapshot: ConsensusSnapshot, pool: TargetPool) -> list[RelayEntry]:
    if pool is TargetPool.GUARDS:
        members = [r for r in snapshot.relays if r.is_guard and not r.is_exit]
    else:
        members = [r for r in snapshot.relays if r.is_guard and r.is_exit]
    members.sort(key=lambda r: (-r.consensus_weight, r.fingerprint))
    return members


def _solve_pool(
    snapshot: ConsensusSnapshot,
    pool: TargetPool,
    positional_weight: Fraction,
    derive,
    source: PositionWeights,
) -> WaterfillSolution:
    relays = _pool_relays(snapshot, pool)
    if not relays:
        raise NotApplicableError(f"{pool.value} pool is empty")
    positive = [r for r in relays if r.consensus_weight > 0]
    zeros = [r for r in relays if r.consensus_weight == 0]
    pool_total = sum(r.consensus_weight for r in positive)
    if pool_total == 0:
        raise NotApplicableError(f"{pool.value} pool has zero total weight")
    target = positional_weight * pool_total
    level, pivot = find_water_level([r.consensus_weight for r in positive], target)

    shares = []
    kept = Fraction(0)
    for rank, relay in enumerate(positive, start=1):
        fraction = level / relay.consensus_weight if rank <= pivot else Fraction(1)
        kept += fraction * relay.consensus_weight
        shares.append(
            RelayShare(relay.fingerprint, relay.consensus_weight, fraction, derive(fraction))
        )
    for relay in zeros:
        # contributes nothing either way; keep it fully in place
        shares.append(RelayShare(relay.fingerprint, 0, Fraction(1), derive(Fraction(1))))
    return WaterfillSolution(
        pool=pool,
        shares=tuple(shares),
        water_level=level,
        pivot_index=pivot,
        target=target,
        conservation_residual=kept - target,
        source_weights=source,
    )


def solve_guard_waterfill(snapshot: ConsensusSnapshot, w: PositionWeights) -> WaterfillSolution:
    """Waterfill the guard pool's entry-position weight.

    Applicable only when 0 < Wgg < 1; at the boundaries there is no
    bandwidth to move, and callers should keep the scalar weights.
    """
    if not 0 < w.Wgg < 1:
        raise NotApplicableError(f"Wgg = {float(w.Wgg):.6g}; waterfilling needs 0 < Wgg < 1")

    def derive(fraction: Fraction) -> dict[str, Fraction]:
        return {"Wgg": fraction, "Wmg": 1 - fraction}

    return _solve_pool(snapshot, TargetPool.GUARDS, w.Wgg, derive, w)


def solve_dset_waterfill(snapshot: ConsensusSnapshot, w: PositionWeights) -> WaterfillSolution:
    """Waterfill the dual-role (Guard+Exit) pool's combined end-position weight.

    The kept fraction Wd_i covers both end positions and is split between
    them in the same ratio as the scalar Wgd : Wed; the remainder moves to
    the middle position.
    """
    combined = w.Wgd + w.Wed
    if combined == 0:
        raise NotApplicableError("Wgd + Wed = 0; the dual pool serves only middles")

    def derive(fraction: Fraction) -> dict[str, Fraction]:
        return {
            "Wgd": fraction * w.Wgd / combined,
            "Wed": fraction * w.Wed / combined,
            "Wmd": 1 - fraction,
        }

    return _solve_pool(snapshot, TargetPool.DSET, combined, derive, w)


# ---------------------------------------------------------------------------
# Selection distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ProbabilityVector:
    """Selection probabilities over a fixed fingerprint order."""

    fingerprints: tuple[str, ...]
    probabilities: np.ndarray  # float64, sums to 1

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.fingerprints, self.probabilities.tolist()))


def _normalize_waterfills(wf) -> dict[TargetPool, WaterfillSolution]:
    if wf is None:
        return {}
    if isinstance(wf, WaterfillSolution):
        return {wf.pool: wf}
    out = {}
    for sol in wf:
        out[sol.pool] = sol
    return out


def position_weight(
    relay: RelayEntry,
    position: Position,
    w: PositionWeights,
    waterfills: dict[TargetPool, WaterfillSolution],
) -> Fraction:
    """The weight factor this relay's bandwidth gets at a position.

    Per-relay waterfilled weights override the scalar value for relays in a
    solved pool; everything else falls back to the scalars (unflagged
    relays count fully toward the middle position).
    """
    guard, exit_ = relay.is_guard, relay.is_exit
    if guard and exit_:
        sol = waterfills.get(TargetPool.DSET)
        share = sol.share_for(relay.fingerprint) if sol else None
        if position is Position.ENTRY:
            return share.weights["Wgd"] if share else w.Wgd
        if position is Position.MIDDLE:
            return share.weights["Wmd"] if share else w.Wmd
        return share.weights["Wed"] if share else w.Wed
    if guard:
        sol = waterfills.get(TargetPool.GUARDS)
        share = sol.share_for(relay.fingerprint) if sol else None
        if position is Position.ENTRY:
            return share.weights["Wgg"] if share else w.Wgg
        if position is Position.MIDDLE:
            return share.weights["Wmg"] if share else w.Wmg
        return Fraction(0)
    if exit_:
        if position is Position.MIDDLE:
            return w.Wme
        if position is Position.EXIT:
            return w.Wee
        return Fraction(0)
    return Fraction(1) if position is Position.MIDDLE else Fraction(0)


def selection_distribution(
    snapshot: ConsensusSnapshot,
    w: PositionWeights,
    position: Position,
    waterfills: WaterfillSolution | Iterable[WaterfillSolution] | None = None,
    stream=None,
) -> ProbabilityVector:
    """Selection probabilities for one circuit position.

    Each eligible relay is weighted by consensus_weight times its positional
    weight factor and the vector is normalized.  For the exit position,
    ``stream`` (a StreamSpec or a bare destination port) filters candidates
    through their exit policies.
    """
    solutions = _normalize_waterfills(waterfills)
    port = None
    if position is Position.EXIT:
        if stream is None:
            raise ValueError("exit position needs a stream (or port) for policy filtering")
        port = stream if isinstance(stream, int) else stream.destination_port

    fingerprints = []
    raw = []
    for relay in snapshot.relays:
        if port is not None and not relay.accepts_port(port):
            continue
        factor = position_weight(relay, position, w, solutions)
        weight = relay.consensus_weight * factor
        if weight > 0:
            fingerprints.append(relay.fingerprint)
            raw.append(float(weight))
    total = sum(raw)
    if total <= 0:
        raise EmptyPoolError(f"no eligible relay carries weight for {position.value}")
    probs = np.asarray(raw, dtype=np.float64) / total
    return ProbabilityVector(tuple(fingerprints), probs)


# ---------------------------------------------------------------------------
# Consensus-document rendering
# ---------------------------------------------------------------------------

def wfbw_lines(solution: WaterfillSolution, scale: int = SCALE) -> list[str]:
    """Per-relay ``wfbw`` status-entry lines with 0..scale integer weights."""
    lines = []
    for share in solution.shares:
        items = " ".join(
            f"{name}={round(value * scale)}" for name, value in sorted(share.weights.items())
        )
        lines.append(f"{share.fingerprint} wfbw {items}")
    return lines


def quantization_residual(solution: WaterfillSolution, scale: int = SCALE) -> Fraction:
    """Conservation error after rounding fractions to the integer grid."""
    kept = sum(
        (Fraction(round(s.fraction * scale), scale) * s.bandwidth for s in solution.shares),
        Fraction(0),
    )
    return kept - solution.target
