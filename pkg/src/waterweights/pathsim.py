"""Seeded Monte Carlo simulation of client circuit construction.

Clients walk a chronological sequence of snapshots, keep a small persistent
guard list (refilled on churn and rotated on randomized deadlines), and
build one circuit per schedule tick: the exit is drawn first from the
policy-filtered exit distribution, the guard uniformly from the live guard
list, the middle from the middle distribution, with conflicting hops
rejection-resampled up to a bounded attempt count.  A circuit counts as
compromised when its guard and its exit both belong to the adversary
(correlation is treated as instantaneous and perfect).

Adversary relays are injected into every snapshot where they are live
*before* pool totals and positional weights are computed, so the injected
bandwidth reshapes the weights exactly as organic bandwidth would.

Everything is deterministic given the seed: each client draws from its own
substream derived from (seed, client_id), so results are independent of
execution order and of the number of workers.
"""

from __future__ import annotations

import enum
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .consensus import (
    ACCEPT_ALL,
    ConsensusSnapshot,
    LoadCase,
    PolicyRule,
    REJECT_ALL,
    RelayEntry,
    classify_load_case,
)
from .errors import (
    CircuitFailureError,
    EmptyPoolError,
    InvariantError,
    NotApplicableError,
    UnsupportedLoadCaseError,
    WaterweightsError,
)
from .waterfill import (
    Position,
    solve_dset_waterfill,
    solve_guard_waterfill,
    selection_distribution,
)
from .weights import PositionWeights, WeightMode, compute_weights

DAY = 86_400
GUARD_ROTATION_MIN = 60 * DAY
GUARD_ROTATION_MAX = 90 * DAY
DEFAULT_SNAPSHOT_PERIOD = 3_600
MAX_HOP_ATTEMPTS = 64

GUARD_LIKE_FLAGS = frozenset({"Guard", "Fast", "Stable", "Running", "Valid"})
EXIT_LIKE_FLAGS = frozenset({"Exit", "Fast", "Running", "Valid"})


class Algorithm(enum.Enum):
    ABWRS = "abwrs"  # scalar adjusted bandwidth-weight random selection
    WATERFILLING = "wf"
    WATERFILLING_GE = "wf-ge"  # waterfilling over guard-exit-equalized weights


class RoleHint(enum.Enum):
    GUARD_LIKE = "guard"
    EXIT_LIKE = "exit"


@dataclass(frozen=True)
class AdversaryRelay:
    """One relay the adversary operates; flags/policy default by role."""

    role: RoleHint
    consensus_weight: int
    join_time: int = 0
    flags: frozenset[str] | None = None
    exit_policy: tuple[PolicyRule, ...] | None = None


@dataclass(frozen=True)
class AdversarySpec:
    """The adversary's relays; injection always recomputes pool totals."""

    relays: tuple[AdversaryRelay, ...] = ()

    def fingerprint(self, index: int) -> str:
        return f"ADV{index:03d}{self.relays[index].role.value.upper()}"

    @property
    def fingerprints(self) -> tuple[str, ...]:
        return tuple(self.fingerprint(i) for i in range(len(self.relays)))

    def relay_entries(self, at_time: int) -> list[RelayEntry]:
        entries = []
        for i, adv in enumerate(self.relays):
            if adv.join_time > at_time:
                continue
            if adv.flags is not None:
                flags = adv.flags
            else:
                flags = GUARD_LIKE_FLAGS if adv.role is RoleHint.GUARD_LIKE else EXIT_LIKE_FLAGS
            if adv.exit_policy is not None:
                policy = adv.exit_policy
            else:
                policy = (ACCEPT_ALL,) if "Exit" in flags else (REJECT_ALL,)
            entries.append(
                RelayEntry(
                    fingerprint=self.fingerprint(i),
                    nickname=f"adv{i:03d}",
                    consensus_weight=adv.consensus_weight,
                    flags=flags,
                    exit_policy=policy,
                    subnet16=f"250.{i % 256}",
                )
            )
        return entries

    @staticmethod
    def from_json_dict(doc: dict) -> "AdversarySpec":
        relays = []
        for item in doc.get("relays", ()):
            count = int(item.get("count", 1))
            relays.extend(
                AdversaryRelay(
                    role=RoleHint(item["role"]),
                    consensus_weight=int(item["consensus_weight"]),
                    join_time=int(item.get("join_time", 0)),
                )
                for _ in range(count)
            )
        return AdversarySpec(tuple(relays))


def inject_adversary(
    snapshot: ConsensusSnapshot, adversary: AdversarySpec, at_time: int | None = None
) -> ConsensusSnapshot:
    """Append the adversary's live relays and recompute totals from scratch."""
    when = snapshot.valid_after if at_time is None else at_time
    extra = adversary.relay_entries(when)
    if not extra:
        return snapshot
    return ConsensusSnapshot.from_relays(snapshot.valid_after, snapshot.relays + tuple(extra))


@dataclass(frozen=True)
class StreamSpec:
    """One application stream: when it happens and where it connects."""

    time: int
    destination_port: int
    kind: str = "web"

    def __post_init__(self):
        if not 1 <= self.destination_port <= 65_535:
            raise InvariantError(f"destination port {self.destination_port} out of range")


@dataclass(frozen=True)
class StreamSchedule:
    """Circuit cadence: one circuit per interval inside the active windows.

    Windows are (start_hour, end_hour) half-open ranges over the UTC day;
    the default keeps the client active around the clock.
    """

    circuit_interval: int = 600
    destination_port: int = 443
    active_windows: tuple[tuple[float, float], ...] = ((0.0, 24.0),)

    def __post_init__(self):
        if self.circuit_interval < 1:
            raise InvariantError("circuit interval must be at least one second")
        if not 1 <= self.destination_port <= 65_535:
            raise InvariantError(f"destination port {self.destination_port} out of range")

    def stream_times(self, start: int, end: int) -> np.ndarray:
        if end <= start:
            return np.empty(0, dtype=np.int64)
        count = -(-(end - start) // self.circuit_interval)
        times = start + self.circuit_interval * np.arange(count, dtype=np.int64)
        times = times[times < end]
        hours = (times % DAY) / 3600.0
        mask = np.zeros(len(times), dtype=bool)
        for lo, hi in self.active_windows:
            mask |= (hours >= lo) & (hours < hi)
        return times[mask]


@dataclass
class GuardSlot:
    fingerprint: str
    chosen_at: int
    rotation_deadline: int


@dataclass
class ClientState:
    """Mutable per-client state: the persistent guard list."""

    client_id: int = 0
    num_entry_guards: int = 3
    rng_seed: int = 0
    guard_list: list[GuardSlot] = field(default_factory=list)


class Circuit(NamedTuple):
    time: int
    guard: str
    middle: str
    exit: str


@dataclass(frozen=True)
class CompromiseRecord:
    """Per-client outcome; times are seconds since simulation start."""

    client_id: int
    first_compromise_time: int | None
    circuits_built: int
    circuits_compromised: int

    def __post_init__(self):
        if (self.first_compromise_time is not None) != (self.circuits_compromised > 0):
            raise InvariantError(
                "first_compromise_time must be present exactly when circuits were compromised"
            )


# ---------------------------------------------------------------------------
# Prepared per-snapshot selection state
# ---------------------------------------------------------------------------

class _Pool:
    """Eligible relay indices with cumulative selection probabilities."""

    __slots__ = ("indices", "cumulative")

    def __init__(self, indices: np.ndarray, cumulative: np.ndarray):
        self.indices = indices
        self.cumulative = cumulative

    def draw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        picks = np.searchsorted(self.cumulative, rng.random(count), side="right")
        return self.indices[picks]


class NetworkState:
    """A snapshot with adversary injected, weights solved, pools prepared.

    Pass explicit ``weights`` (and optionally ``waterfills``) to bypass
    classification, e.g. when driving build_circuit with hand-made weights.
    """

    def __init__(
        self,
        snapshot: ConsensusSnapshot,
        algorithm: Algorithm,
        adversary_fps: frozenset[str],
        start: int,
        end: int,
        *,
        weights: PositionWeights | None = None,
        waterfills=None,
    ):
        self.snapshot = snapshot
        self.start = start
        self.end = end
        self.case: LoadCase | None = None
        if weights is not None:
            self.weights = weights
            self.waterfills = list(waterfills) if waterfills else []
        else:
            case, detail = classify_load_case(snapshot.totals)
            if case is LoadCase.UNSUPPORTED:
                raise UnsupportedLoadCaseError(
                    f"snapshot at {snapshot.valid_after}: {detail}"
                )
            self.case = case
            mode = (
                WeightMode.GUARD_EXIT_EQUALIZED
                if algorithm is Algorithm.WATERFILLING_GE and case is LoadCase.CASE_3A
                else WeightMode.STANDARD
            )
            self.weights = compute_weights(snapshot.totals, case, mode)
            self.waterfills = []
            if algorithm in (Algorithm.WATERFILLING, Algorithm.WATERFILLING_GE):
                try:
                    self.waterfills.append(solve_guard_waterfill(snapshot, self.weights))
                except NotApplicableError:
                    pass
                if case is LoadCase.CASE_3B:
                    try:
                        self.waterfills.append(solve_dset_waterfill(snapshot, self.weights))
                    except NotApplicableError:
                        pass

        relays = snapshot.relays
        self.relays = relays
        self.fp_index = {r.fingerprint: i for i, r in enumerate(relays)}
        self.adv_mask = np.array(
            [r.fingerprint in adversary_fps for r in relays], dtype=bool
        )
        subnet_codes: dict[str, int] = {}
        codes = np.empty(len(relays), dtype=np.int64)
        for i, relay in enumerate(relays):
            if relay.subnet16 is None:
                codes[i] = -(i + 1)  # unknown subnets never collide
            else:
                codes[i] = subnet_codes.setdefault(relay.subnet16, len(subnet_codes))
        self.subnet_code = codes
        self._family: dict[int, frozenset[int]] | None = None
        if any(r.family for r in relays):
            fam = {}
            for i, relay in enumerate(relays):
                members = frozenset(
                    self.fp_index[fp] for fp in relay.family if fp in self.fp_index
                )
                if members:
                    fam[i] = members
            self._family = fam

        self.entry = self._pool(Position.ENTRY)
        self.middle = self._pool(Position.MIDDLE)
        self._exit_pools: dict[int, _Pool | None] = {}

    def _pool(self, position: Position, stream=None) -> _Pool:
        dist = selection_distribution(
            self.snapshot, self.weights, position, waterfills=self.waterfills, stream=stream
        )
        indices = np.array([self.fp_index[fp] for fp in dist.fingerprints], dtype=np.int64)
        cumulative = np.cumsum(dist.probabilities)
        cumulative /= cumulative[-1]  # exact 1.0 endpoint, monotonicity preserved
        return _Pool(indices, cumulative)

    def exit_pool(self, port: int) -> _Pool | None:
        if port not in self._exit_pools:
            try:
                self._exit_pools[port] = self._pool(Position.EXIT, stream=port)
            except EmptyPoolError:
                self._exit_pools[port] = None
        return self._exit_pools[port]

    def has_guard(self, fingerprint: str) -> bool:
        idx = self.fp_index.get(fingerprint)
        return idx is not None and "Guard" in self.relays[idx].flags

    def conflict(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        out = (a == b) | (self.subnet_code[a] == self.subnet_code[b])
        if self._family:
            pending = np.nonzero(~out)[0]
            for k in pending:
                i, j = int(a[k]), int(b[k])
                fam_i = self._family.get(i)
                fam_j = self._family.get(j)
                if (fam_i and j in fam_i) or (fam_j and i in fam_j):
                    out[k] = True
        return out


def _states_from_sequence(
    sequence: Sequence[ConsensusSnapshot],
    adversary: AdversarySpec,
    algorithm: Algorithm,
    duration: int | None,
) -> tuple[list[NetworkState], int, int]:
    if not sequence:
        raise WaterweightsError("consensus sequence is empty")
    sim_start = sequence[0].valid_after
    boundaries: list[ConsensusSnapshot] = []
    previous = None
    for snap in sequence:
        if previous is not None:
            if snap.valid_after < previous.valid_after:
                raise WaterweightsError(
                    f"consensus sequence not chronological at {snap.valid_after}"
                )
            if snap is previous or snap.relays == previous.relays:
                continue  # republished relay list: extend the previous state's period
        boundaries.append(snap)
        previous = snap
    if duration is None:
        duration = (sequence[-1].valid_after - sim_start) + DEFAULT_SNAPSHOT_PERIOD
    sim_end = sim_start + duration
    states = []
    adv_fps = frozenset(adversary.fingerprints)
    for i, snap in enumerate(boundaries):
        start = snap.valid_after
        end = boundaries[i + 1].valid_after if i + 1 < len(boundaries) else sim_end
        end = min(end, sim_end)
        if end <= start:
            continue
        live = inject_adversary(snap, adversary)
        states.append(NetworkState(live, algorithm, adv_fps, start, end))
    if not states:
        raise WaterweightsError("simulation duration covers no snapshot")
    return states, sim_start, sim_end


# ---------------------------------------------------------------------------
# Guard-list management
# ---------------------------------------------------------------------------

def _draw_guard(
    state: NetworkState, rng: np.random.Generator, exclude: set[str]
) -> str | None:
    for _ in range(MAX_HOP_ATTEMPTS):
        idx = int(state.entry.draw(rng, 1)[0])
        fp = state.relays[idx].fingerprint
        if fp not in exclude:
            return fp
    return None


def _refill_guards(
    client: ClientState, state: NetworkState, rng: np.random.Generator, now: int
):
    current = {slot.fingerprint for slot in client.guard_list}
    while len(client.guard_list) < client.num_entry_guards:
        fp = _draw_guard(state, rng, current)
        if fp is None:
            break  # pool smaller than the list; run with what exists
        current.add(fp)
        deadline = now + int(rng.uniform(GUARD_ROTATION_MIN, GUARD_ROTATION_MAX))
        client.guard_list.append(GuardSlot(fp, now, deadline))


def _apply_churn(client: ClientState, state: NetworkState, rng: np.random.Generator):
    kept = [slot for slot in client.guard_list if state.has_guard(slot.fingerprint)]
    client.guard_list = kept
    _refill_guards(client, state, rng, state.start)


def _rotate_expired(client: ClientState, state: NetworkState, rng: np.random.Generator, now: int):
    # replacements advance the deadline by at least the rotation minimum, so
    # this terminates even after a long inactive gap
    while True:
        expired = [slot for slot in client.guard_list if slot.rotation_deadline <= now]
        if not expired:
            return
        for slot in expired:
            client.guard_list.remove(slot)
            current = {s.fingerprint for s in client.guard_list}
            fp = _draw_guard(state, rng, current)
            if fp is not None:
                deadline = slot.rotation_deadline + int(
                    rng.uniform(GUARD_ROTATION_MIN, GUARD_ROTATION_MAX)
                )
                client.guard_list.append(
                    GuardSlot(fp, slot.rotation_deadline, deadline)
                )


# ---------------------------------------------------------------------------
# Circuit construction
# ---------------------------------------------------------------------------

class _BatchResult(NamedTuple):
    times: np.ndarray  # successfully built circuits only
    guard: np.ndarray
    middle: np.ndarray
    exit: np.ndarray
    compromised: np.ndarray
    skipped: int
    failed: int


def _build_batch(
    state: NetworkState,
    times: np.ndarray,
    guard_slots: list[GuardSlot],
    rng: np.random.Generator,
    port: int,
) -> _BatchResult:
    """Build one circuit per stream time against a fixed guard list."""
    empty = np.empty(0, dtype=np.int64)
    m = len(times)
    if m == 0:
        return _BatchResult(empty, empty, empty, empty, empty.astype(bool), 0, 0)
    pool = state.exit_pool(port)
    if pool is None or not guard_slots:
        return _BatchResult(empty, empty, empty, empty, empty.astype(bool), m, 0)

    exit_idx = pool.draw(rng, m)

    members = np.array(
        [state.fp_index[s.fingerprint] for s in guard_slots], dtype=np.int64
    )
    # conflict matrix between each list member and each chosen exit
    conflicts = np.stack([state.conflict(np.full(m, gi), exit_idx) for gi in members])
    columns = np.arange(m)
    slot = rng.integers(0, len(members), size=m)
    bad = conflicts[slot, columns]
    for _ in range(MAX_HOP_ATTEMPTS - 1):
        if not bad.any():
            break
        retry = np.nonzero(bad)[0]
        slot[retry] = rng.integers(0, len(members), size=len(retry))
        bad = conflicts[slot, columns]
    guard_failed = bad
    guard_idx = members[slot]

    middle_idx = state.middle.draw(rng, m)
    bad = state.conflict(middle_idx, guard_idx) | state.conflict(middle_idx, exit_idx)
    for _ in range(MAX_HOP_ATTEMPTS - 1):
        if not bad.any():
            break
        retry = np.nonzero(bad)[0]
        middle_idx[retry] = state.middle.draw(rng, len(retry))
        bad[retry] = state.conflict(middle_idx[retry], guard_idx[retry]) | state.conflict(
            middle_idx[retry], exit_idx[retry]
        )
    ok = ~(guard_failed | bad)
    compromised = ok & state.adv_mask[guard_idx] & state.adv_mask[exit_idx]
    return _BatchResult(
        times[ok],
        guard_idx[ok],
        middle_idx[ok],
        exit_idx[ok],
        compromised[ok],
        0,
        int((~ok).sum()),
    )


def build_circuit(
    client: ClientState,
    snapshot_or_state,
    weights: PositionWeights | None,
    stream: StreamSpec,
    rng: np.random.Generator,
    waterfills=None,
) -> Circuit:
    """Build a single circuit for one client.

    The exit hop is drawn first (filtered by the stream's destination
    port), then a guard uniformly from the client's guard list (refilled
    from the entry distribution when short), then the middle hop.  Raises
    EmptyPoolError when no exit accepts the port and CircuitFailureError
    when rejection-resampling cannot satisfy the circuit constraints.

    Accepts either a prepared NetworkState or a (snapshot, weights) pair;
    pass a NetworkState when building many circuits from one snapshot.
    """
    if isinstance(snapshot_or_state, NetworkState):
        state = snapshot_or_state
    else:
        state = NetworkState(
            snapshot_or_state,
            Algorithm.ABWRS,
            frozenset(),
            snapshot_or_state.valid_after,
            snapshot_or_state.valid_after + DEFAULT_SNAPSHOT_PERIOD,
            weights=weights,
            waterfills=waterfills,
        )

    _rotate_expired(client, state, rng, stream.time)
    client.guard_list = [
        slot for slot in client.guard_list if state.has_guard(slot.fingerprint)
    ]
    _refill_guards(client, state, rng, stream.time)
    if state.exit_pool(stream.destination_port) is None:
        raise EmptyPoolError(f"no exit accepts port {stream.destination_port}")
    result = _build_batch(
        state,
        np.array([stream.time], dtype=np.int64),
        client.guard_list,
        rng,
        stream.destination_port,
    )
    if result.failed or len(result.times) == 0:
        raise CircuitFailureError("circuit constraints unsatisfiable within attempt bound")
    relays = state.relays
    return Circuit(
        int(result.times[0]),
        relays[int(result.guard[0])].fingerprint,
        relays[int(result.middle[0])].fingerprint,
        relays[int(result.exit[0])].fingerprint,
    )


# ---------------------------------------------------------------------------
# Full simulation
# ---------------------------------------------------------------------------

@dataclass
class SimulationTrace:
    records: list[CompromiseRecord]
    circuits: list[tuple[int, Circuit]]  # (client_id, circuit); only when traced
    streams_skipped: int = 0
    circuits_failed: int = 0


def _simulate_client(
    client_id: int,
    seed: int,
    states: list[NetworkState],
    state_times: list[np.ndarray],
    schedule: StreamSchedule,
    num_entry_guards: int,
    sim_start: int,
    collect: bool,
) -> tuple[CompromiseRecord, list[tuple[int, Circuit]], int, int]:
    rng = np.random.default_rng([seed, client_id])
    client = ClientState(client_id=client_id, num_entry_guards=num_entry_guards, rng_seed=seed)
    built = 0
    compromised = 0
    first_time: int | None = None
    skipped = 0
    failed = 0
    circuits: list[tuple[int, Circuit]] = []

    for state, times in zip(states, state_times):
        _apply_churn(client, state, rng)
        position = 0
        while position < len(times):
            now = int(times[position])
            _rotate_expired(client, state, rng, now)
            _refill_guards(client, state, rng, now)
            deadlines = [s.rotation_deadline for s in client.guard_list]
            horizon = min(deadlines) if deadlines else None
            if horizon is None:
                stop = len(times)
            else:
                # rotate mid-state: batch only up to the next guard deadline
                stop = int(np.searchsorted(times, horizon, side="left"))
                stop = max(stop, position + 1)
            batch = _build_batch(
                state, times[position:stop], client.guard_list, rng, schedule.destination_port
            )
            built += len(batch.times)
            compromised += int(batch.compromised.sum())
            if first_time is None and batch.compromised.any():
                first_time = int(batch.times[batch.compromised][0]) - sim_start
            skipped += batch.skipped
            failed += batch.failed
            if collect:
                relays = state.relays
                for t, g, mi, e in zip(batch.times, batch.guard, batch.middle, batch.exit):
                    circuits.append(
                        (
                            client_id,
                            Circuit(
                                int(t),
                                relays[int(g)].fingerprint,
                                relays[int(mi)].fingerprint,
                                relays[int(e)].fingerprint,
                            ),
                        )
                    )
            position = stop

    record = CompromiseRecord(client_id, first_time, built, compromised)
    return record, circuits, skipped, failed


def _simulate_range(args) -> list[tuple[CompromiseRecord, int, int]]:
    lo, hi, seed, states, state_times, schedule, num_entry_guards, sim_start = args
    out = []
    for client_id in range(lo, hi):
        record, _, skipped, failed = _simulate_client(
            client_id, seed, states, state_times, schedule,
            num_entry_guards, sim_start, collect=False,
        )
        out.append((record, skipped, failed))
    return out


def run_simulation(
    consensus_sequence: Sequence[ConsensusSnapshot],
    adversary: AdversarySpec,
    algorithm: Algorithm,
    clients: int,
    seed: int,
    *,
    schedule: StreamSchedule | None = None,
    num_entry_guards: int = 3,
    duration: int | None = None,
    workers: int = 1,
) -> list[CompromiseRecord]:
    """Simulate ``clients`` independent clients over the snapshot sequence.

    Returns one CompromiseRecord per client, ordered by client_id.  Fully
    deterministic for a given argument tuple; workers only split the client
    range and cannot change the results.
    """
    trace = _run(
        consensus_sequence, adversary, algorithm, clients, seed,
        schedule=schedule, num_entry_guards=num_entry_guards,
        duration=duration, workers=workers, collect=False,
    )
    return trace.records


def run_simulation_traced(
    consensus_sequence: Sequence[ConsensusSnapshot],
    adversary: AdversarySpec,
    algorithm: Algorithm,
    clients: int,
    seed: int,
    *,
    schedule: StreamSchedule | None = None,
    num_entry_guards: int = 3,
    duration: int | None = None,
) -> SimulationTrace:
    """run_simulation plus the full list of built circuits, for audits."""
    return _run(
        consensus_sequence, adversary, algorithm, clients, seed,
        schedule=schedule, num_entry_guards=num_entry_guards,
        duration=duration, workers=1, collect=True,
    )


def _run(
    consensus_sequence, adversary, algorithm, clients, seed,
    *, schedule, num_entry_guards, duration, workers, collect,
) -> SimulationTrace:
    if clients < 1:
        raise WaterweightsError("need at least one client")
    schedule = schedule or StreamSchedule()
    states, sim_start, _ = _states_from_sequence(
        consensus_sequence, adversary, algorithm, duration
    )
    state_times = [schedule.stream_times(s.start, s.end) for s in states]
    trace = SimulationTrace(records=[], circuits=[])

    if workers > 1 and not collect and clients >= 2 * workers:
        bounds = np.linspace(0, clients, workers + 1, dtype=int)
        jobs = [
            (int(lo), int(hi), seed, states, state_times, schedule,
             num_entry_guards, sim_start)
            for lo, hi in zip(bounds[:-1], bounds[1:])
            if hi > lo
        ]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for chunk in pool.map(_simulate_range, jobs):
                for record, skipped, failed in chunk:
                    trace.records.append(record)
                    trace.streams_skipped += skipped
                    trace.circuits_failed += failed
    else:
        for client_id in range(clients):
            record, circuits, skipped, failed = _simulate_client(
                client_id, seed, states, state_times, schedule,
                num_entry_guards, sim_start, collect,
            )
            trace.records.append(record)
            trace.circuits.extend(circuits)
            trace.streams_skipped += skipped
            trace.circuits_failed += failed

    trace.records.sort(key=lambda r: r.client_id)
    return trace


def network_summaries(
    consensus_sequence: Sequence[ConsensusSnapshot],
    adversary: AdversarySpec,
    algorithm: Algorithm,
    duration: int | None = None,
) -> list[dict]:
    """Per-period weight and waterfill summaries, as the simulation sees them."""
    states, _, _ = _states_from_sequence(consensus_sequence, adversary, algorithm, duration)
    out = []
    for state in states:
        entry = {
            "valid_after": state.snapshot.valid_after,
            "covers": [state.start, state.end],
            "case": state.case.value if state.case else None,
            "mode": state.weights.mode.value,
            "Wgg": float(state.weights.Wgg),
            "waterfill": {
                sol.pool.value: {
                    "water_level": float(sol.water_level),
                    "pivot_index": sol.pivot_index,
                }
                for sol in state.waterfills
            },
        }
        out.append(entry)
    return out


# ---------------------------------------------------------------------------
# Compromise curves and records I/O
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TimeSeries:
    times: np.ndarray
    values: np.ndarray


def compromise_curve(
    records: Sequence[CompromiseRecord], horizon: int, resolution: int
) -> TimeSeries:
    """Cumulative fraction of clients first compromised by each grid time.

    The grid runs from 0 to the horizon in resolution steps; the horizon
    itself is always the final point.
    """
    if not records:
        raise WaterweightsError("no records to summarize")
    hits = np.sort(
        np.array(
            [r.first_compromise_time for r in records if r.first_compromise_time is not None],
            dtype=np.int64,
        )
    )
    times = np.arange(0, horizon + 1, resolution, dtype=np.int64)
    if times[-1] != horizon:
        times = np.append(times, horizon)
    counts = np.searchsorted(hits, times, side="right")
    return TimeSeries(times, counts / len(records))


RECORDS_HEADER = "client_id,first_compromise_time,circuits_built,circuits_compromised"


def records_to_csv(records: Sequence[CompromiseRecord]) -> str:
    lines = [RECORDS_HEADER]
    for r in sorted(records, key=lambda r: r.client_id):
        first = "" if r.first_compromise_time is None else str(r.first_compromise_time)
        lines.append(f"{r.client_id},{first},{r.circuits_built},{r.circuits_compromised}")
    return "\n".join(lines) + "\n"


def records_from_csv(text: str) -> list[CompromiseRecord]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != RECORDS_HEADER:
        raise WaterweightsError("records CSV missing the expected header")
    records = []
    for number, ln in enumerate(lines[1:], start=2):
        try:
            cid, first, built, comp = ln.split(",")
            records.append(
                CompromiseRecord(
                    int(cid),
                    int(first) if first else None,
                    int(built),
                    int(comp),
                )
            )
        except ValueError as exc:
            raise WaterweightsError(f"records CSV line {number}: {exc}") from None
    return records
