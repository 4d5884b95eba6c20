"""Positional bandwidth-weights, step by step.

Builds a small relay network, classifies its load case, and computes the
scalar weights in both modes, showing which balance equation each mode
binds.  Run: python demos/01_weights_and_load_cases.py
"""

from waterweights.consensus import (
    ConsensusSnapshot,
    RelayEntry,
    classify_load_case,
    parse_policy,
)
from waterweights.weights import WeightMode, check_balance, compute_weights

ACCEPT_ALL = parse_policy("accept:*")


def relay(fp, weight, flags, policy=None):
    return RelayEntry(
        fingerprint=fp,
        nickname=fp.lower(),
        consensus_weight=weight,
        flags=frozenset(flags),
        exit_policy=policy or parse_policy("reject:*"),
        subnet16=f"10.{abs(hash(fp)) % 200}",
    )


# A network where exit capacity is scarce: guards dwarf the exits.
snapshot = ConsensusSnapshot.from_relays(
    1_432_548_000,
    [
        relay("GUARD1", 6000, {"Guard", "Fast", "Stable"}),
        relay("GUARD2", 3000, {"Guard", "Fast", "Stable"}),
        relay("GUARD3", 1000, {"Guard", "Fast"}),
        relay("MIDDLE1", 4000, {"Fast"}),
        relay("EXIT1", 2500, {"Exit", "Fast"}, ACCEPT_ALL),
        relay("DUAL1", 500, {"Guard", "Exit", "Fast"}, ACCEPT_ALL),
    ],
)

totals = snapshot.totals
print(f"pool totals: G={totals.G} M={totals.M} E={totals.E} D={totals.D} T={totals.T}")

case, detail = classify_load_case(totals)
print(f"load case:   {case.value}  {detail}")
print()

for mode in (WeightMode.STANDARD, WeightMode.GUARD_EXIT_EQUALIZED):
    w = compute_weights(totals, case, mode)
    report = check_balance(totals, w)
    print(f"--- {mode.value} ---")
    print("   " + "  ".join(f"{k}={float(v):.4f}" for k, v in w.as_dict().items()))
    print(f"   entry={float(report.entry):.0f}  middle={float(report.middle):.0f}"
          f"  exit={float(report.exit):.0f}")
    print(f"   entry-middle residual: {float(report.entry_middle_residual):+.0f}")
    print(f"   entry-exit residual:   {float(report.entry_exit_residual):+.0f}")
    print(f"   scaled 0..10000: {w.scaled()}")
    print()

print("The standard solution equalizes entry with middle and leaves the exit")
print("side short; the equalized variant matches entry to exit capacity and")
print("pushes the surplus to the middle position, lowering Wgg.")
