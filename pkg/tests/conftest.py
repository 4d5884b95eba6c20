import numpy as np
import pytest

from waterweights.consensus import ConsensusSnapshot, RelayEntry, parse_policy

GUARD_FLAGS = frozenset({"Guard", "Fast", "Stable", "Running", "Valid"})
EXIT_FLAGS = frozenset({"Exit", "Fast", "Running", "Valid"})
DUAL_FLAGS = frozenset({"Guard", "Exit", "Fast", "Stable", "Running", "Valid"})
MIDDLE_FLAGS = frozenset({"Fast", "Running", "Valid"})

ACCEPT_ALL = parse_policy("accept:*")

_ROLE_FLAGS = {"g": GUARD_FLAGS, "e": EXIT_FLAGS, "d": DUAL_FLAGS, "m": MIDDLE_FLAGS}


def make_relay(fp, weight, role="g", policy=None, subnet=None, **kwargs):
    """Quick relay constructor; role is one of g/e/d/m."""
    if policy is None:
        policy = ACCEPT_ALL if role in ("e", "d") else parse_policy("reject:*")
    return RelayEntry(
        fingerprint=fp,
        nickname=f"nick{fp}",
        consensus_weight=weight,
        flags=_ROLE_FLAGS[role],
        exit_policy=policy,
        subnet16=subnet,
        **kwargs,
    )


def make_snapshot(spec, valid_after=1_432_548_000, distinct_subnets=True):
    """Build a snapshot from (fp, weight, role) triples."""
    relays = []
    for i, (fp, weight, role) in enumerate(spec):
        subnet = f"10.{i}" if distinct_subnets else "10.0"
        relays.append(make_relay(fp, weight, role, subnet=subnet))
    return ConsensusSnapshot.from_relays(valid_after, relays)


def pareto_weights(rng: np.random.Generator, size: int, alpha: float) -> list[int]:
    """Heavy-tailed positive integer consensus weights."""
    draws = rng.pareto(alpha, size=size) + 1.0
    return [max(1, int(round(x * 1000))) for x in draws]


def enumerate_guard_lists(entry_probs, list_size):
    """All ordered distinct draws from the entry distribution, with exact
    probabilities (each draw renormalized over the relays not yet chosen)."""
    outcomes = []

    def extend(chosen, probability, remaining_mass):
        if len(chosen) == list_size or len(chosen) == len(entry_probs):
            outcomes.append((tuple(chosen), probability))
            return
        for fp, p in entry_probs.items():
            if fp in chosen:
                continue
            extend(chosen + [fp], probability * p / remaining_mass, remaining_mass - p)

    extend([], 1.0, sum(entry_probs.values()))
    return outcomes


def analytic_compromise(entry_probs, adversary_guards, adv_exit_prob, list_size, circuits):
    """P(at least one compromised circuit) and E[compromised circuits].

    Brute-force oracle over guard-list outcomes: per circuit the guard slot
    is uniform over the list and the exit draw is independent, so with k
    adversary guards in a list of size L each circuit is compromised with
    probability (k / L) * adv_exit_prob, independently.
    """
    p_any = 0.0
    mean = 0.0
    for guards, prob in enumerate_guard_lists(entry_probs, list_size):
        k = sum(1 for fp in guards if fp in adversary_guards)
        per_circuit = (k / len(guards)) * adv_exit_prob
        p_any += prob * (1.0 - (1.0 - per_circuit) ** circuits)
        mean += prob * per_circuit * circuits
    return p_any, mean


@pytest.fixture
def rng():
    return np.random.default_rng(20150525)
