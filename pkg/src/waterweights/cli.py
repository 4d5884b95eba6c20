"""The ``waterweights`` command line: parse, weigh, waterfill, simulate,
measure, and compare.

All subcommands are deterministic for identical inputs and seeds, emit
CSV/JSON only (plotting stays external), and exit with 0 on success, 2 on
input errors, 3 when a computation is infeasible or not applicable, and 4
on internal invariant breaches.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import click
import numpy as np

from . import __version__
from .consensus import (
    classify_load_case,
    parse_native,
    parse_v3_subset,
    snapshot_from_json,
    snapshot_to_json,
)
from .errors import (
    ConfigMismatchError,
    NotApplicableError,
    ParseError,
    WaterweightsError,
)
from .metrics import (
    group_diversity,
    guessing_entropy,
    joint_from_csv,
    uniformity_degree,
)
from .pathsim import (
    AdversarySpec,
    Algorithm,
    StreamSchedule,
    network_summaries,
    compromise_curve,
    records_from_csv,
    records_to_csv,
    run_simulation,
)
from .waterfill import (
    ProbabilityVector,
    WaterfillSolution,
    quantization_residual,
    solve_dset_waterfill,
    solve_guard_waterfill,
    wfbw_lines,
)
from .weights import SCALE, WeightMode, check_balance, compute_weights

MODE_BY_FLAG = {
    "standard": WeightMode.STANDARD,
    "ge-equalized": WeightMode.GUARD_EXIT_EQUALIZED,
}


# ---------------------------------------------------------------------------
# Report operations (importable without the CLI)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CostReport:
    """What a guard-position bandwidth target costs an adversary here."""

    water_level: float
    target_guard_weight: int
    entry_weight: float  # scalar share of the target devoted to guarding
    effective_guard_weight: float  # target * entry_weight
    node_equivalents: int  # relays at the water level matching that effect
    waterfill_bandwidth: float  # node_equivalents * water_level
    bandwidth_ratio: float  # effective / target: relays at the level guard full-time


def report_adversary_cost(
    wf: WaterfillSolution | Fraction | float,
    target_guard_weight: int,
    entry_weight,
) -> CostReport:
    """How many water-level relays equal one big relay's guard traffic.

    ``wf`` may be a solved WaterfillSolution or a bare water level.  The
    target's effective guard weight is target * entry_weight (under scalar
    weights only that share of the relay serves the entry position), and
    the node count is the ceiling of effective weight over the water level.
    """
    level = wf.water_level if isinstance(wf, WaterfillSolution) else Fraction(wf)
    if level <= 0:
        raise NotApplicableError("water level must be positive to price an adversary")
    entry_fraction = Fraction(entry_weight)
    effective = target_guard_weight * entry_fraction
    nodes = math.ceil(effective / level)
    return CostReport(
        water_level=float(level),
        target_guard_weight=target_guard_weight,
        entry_weight=float(entry_fraction),
        effective_guard_weight=float(effective),
        node_equivalents=nodes,
        waterfill_bandwidth=float(nodes * level),
        bandwidth_ratio=float(entry_fraction),
    )


def _binomial_tail(successes: int, trials: int) -> float:
    """P(X >= successes) for X ~ Binomial(trials, 1/2)."""
    return sum(math.comb(trials, k) for k in range(successes, trials + 1)) / 2.0**trials


@dataclass(frozen=True, eq=False)
class ComparisonReport:
    times: np.ndarray
    curve_a: np.ndarray
    curve_b: np.ndarray
    terminal_delta: float  # a minus b at the horizon
    points_a_above: int
    points_b_above: int
    ties: int
    p_value: float  # two-sided sign test over the grid points
    verdict: str  # "a_above", "b_above", or "indistinguishable"


def compare_runs(
    records_a,
    records_b,
    horizon: int,
    resolution: int | None = None,
    alpha: float = 0.01,
) -> ComparisonReport:
    """Pair two simulations' compromise curves and judge their ordering."""
    if len(records_a) != len(records_b):
        raise ConfigMismatchError(
            f"record sets cover {len(records_a)} vs {len(records_b)} clients"
        )
    if resolution is None:
        resolution = max(1, horizon // 100)
    curve_a = compromise_curve(records_a, horizon, resolution)
    curve_b = compromise_curve(records_b, horizon, resolution)
    diffs = curve_a.values - curve_b.values
    a_above = int((diffs > 0).sum())
    b_above = int((diffs < 0).sum())
    ties = int((diffs == 0).sum())
    informative = a_above + b_above
    if informative == 0:
        p_value = 1.0
    else:
        p_value = min(1.0, 2.0 * _binomial_tail(max(a_above, b_above), informative))
    if p_value < alpha and a_above != b_above:
        verdict = "a_above" if a_above > b_above else "b_above"
    else:
        verdict = "indistinguishable"
    return ComparisonReport(
        times=curve_a.times,
        curve_a=curve_a.values,
        curve_b=curve_b.values,
        terminal_delta=float(curve_a.values[-1] - curve_b.values[-1]),
        points_a_above=a_above,
        points_b_above=b_above,
        ties=ties,
        p_value=p_value,
        verdict=verdict,
    )


# ---------------------------------------------------------------------------
# CLI plumbing
# ---------------------------------------------------------------------------

def _emit(doc: dict):
    click.echo(json.dumps(doc, sort_keys=True, indent=2))


def _stamp(doc: dict, seed: int | None = None) -> dict:
    doc["version"] = __version__
    doc["seed"] = seed
    return doc


def _weights_json(totals, case, w) -> dict:
    report = check_balance(totals, w)
    doc = {name: float(value) for name, value in w.as_dict().items()}
    doc.update(
        {
            "case": case.value,
            "mode": w.mode.value,
            "notes": list(w.notes),
            "residuals": {
                "entry_middle": float(report.entry_middle_residual),
                "entry_exit": float(report.entry_exit_residual),
            },
            "position_bandwidth": {
                "entry": float(report.entry),
                "middle": float(report.middle),
                "exit": float(report.exit),
            },
            "scaled_10000": w.scaled(),
            "totals": {"G": totals.G, "M": totals.M, "E": totals.E, "D": totals.D, "T": totals.T},
        }
    )
    return doc


def _solution_json(sol: WaterfillSolution) -> dict:
    return {
        "pool": sol.pool.value,
        "water_level": float(sol.water_level),
        "pivot_index": sol.pivot_index,
        "target": float(sol.target),
        "conservation_residual": float(sol.conservation_residual),
        "post_quantization_residual": float(quantization_residual(sol)),
        "source_Wgg": float(sol.source_weights.Wgg),
        "relays": [
            {
                "fingerprint": s.fingerprint,
                "bandwidth": s.bandwidth,
                "fraction": float(s.fraction),
                "scaled_10000": {k: round(v * SCALE) for k, v in sorted(s.weights.items())},
            }
            for s in sol.shares
        ],
    }


def _load_snapshot(path: Path):
    text = path.read_text()
    if path.suffix == ".json":
        return snapshot_from_json(text)
    return parse_native(text)


class _Group(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except WaterweightsError as err:
            click.echo(f"error: {err}", err=True)
            sys.exit(err.exit_code)
        except AssertionError as err:
            click.echo(f"internal invariant breach: {err}", err=True)
            sys.exit(4)


@click.group(cls=_Group)
@click.version_option(__version__)
@click.option("--seed", type=int, default=None, help="Default seed for randomized subcommands.")
@click.option("--json", "json_only", is_flag=True, help="Suppress non-JSON text output.")
@click.option("--quiet", is_flag=True, help="Suppress warnings and progress on stderr.")
@click.pass_context
def main(ctx, seed, json_only, quiet):
    """Relay-network balance analysis: positional weights, waterfilling,
    compromise simulation, and anonymity metrics."""
    ctx.obj = {"seed": seed, "json": json_only, "quiet": quiet}


@main.command()
@click.option("--format", "fmt", type=click.Choice(["native", "v3"]), default="native")
@click.option("--out", type=click.Path(path_type=Path), default=None)
@click.argument("file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.pass_context
def parse(ctx, fmt, out, file):
    """Parse a relay-list document into canonical snapshot JSON."""
    text = file.read_text()
    if fmt == "native":
        snapshot = parse_native(text)
    else:
        warnings: list[str] = []
        snapshot = parse_v3_subset(text, warnings=warnings)
        if not ctx.obj["quiet"]:
            for note in warnings:
                click.echo(f"warning: {note}", err=True)
    rendered = snapshot_to_json(snapshot)
    if out is None:
        click.echo(rendered, nl=False)
    else:
        out.write_text(rendered)
        if not ctx.obj["quiet"]:
            click.echo(f"wrote {out}", err=True)


@main.command()
@click.option("--mode", type=click.Choice(sorted(MODE_BY_FLAG)), default="standard")
@click.argument("snapshot", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.pass_context
def weights(ctx, mode, snapshot):
    """Positional weights for a snapshot's load case."""
    snap = _load_snapshot(snapshot)
    case, _ = classify_load_case(snap.totals)
    w = compute_weights(snap.totals, case, MODE_BY_FLAG[mode])
    if w.notes and not ctx.obj["quiet"]:
        for note in w.notes:
            click.echo(f"warning: {note}", err=True)
    _emit(_weights_json(snap.totals, case, w))


@main.command()
@click.option("--mode", type=click.Choice(sorted(MODE_BY_FLAG)), default="standard")
@click.option("--pools", default="guards", help="Comma list from: guards, dset.")
@click.argument("snapshot", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.pass_context
def waterfill(ctx, mode, pools, snapshot):
    """Per-relay waterfilling weights plus wfbw consensus lines."""
    snap = _load_snapshot(snapshot)
    case, _ = classify_load_case(snap.totals)
    w = compute_weights(snap.totals, case, MODE_BY_FLAG[mode])
    requested = [p.strip() for p in pools.split(",") if p.strip()]
    solvers = {"guards": solve_guard_waterfill, "dset": solve_dset_waterfill}
    unknown = [p for p in requested if p not in solvers]
    if unknown:
        raise click.BadOptionUsage("--pools", f"unknown pool(s): {', '.join(unknown)}")
    results = {}
    solved = []
    for pool in requested:
        try:
            solution = solvers[pool](snap, w)
        except NotApplicableError as err:
            results[pool] = {"not_applicable": str(err)}
        else:
            results[pool] = _solution_json(solution)
            solved.append(solution)
    doc = {"case": case.value, "mode": w.mode.value, "pools": results}
    _emit(doc)
    if not ctx.obj["json"]:
        for solution in solved:
            for line in wfbw_lines(solution):
                click.echo(line)
    if not solved:
        raise NotApplicableError("no requested pool admits waterfilling here")


@main.command()
@click.option("--snapshots", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True)
@click.option("--adversary", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--algo", type=click.Choice([a.value for a in Algorithm]), required=True)
@click.option("--clients", type=int, required=True)
@click.option("--seed", type=int, default=None, help="Required here or at the group level.")
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--duration", type=int, default=None, help="Seconds simulated past the first snapshot.")
@click.option("--interval", type=int, default=600, show_default=True, help="Seconds between circuits.")
@click.option("--port", type=int, default=443, show_default=True, help="Destination port of the streams.")
@click.option("--num-guards", type=int, default=3, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.pass_context
def simulate(ctx, snapshots, adversary, algo, clients, seed, out, duration,
             interval, port, num_guards, workers):
    """Monte Carlo compromise simulation; writes one CSV row per client."""
    if seed is None:
        seed = ctx.obj["seed"]
    if seed is None:
        raise click.UsageError("simulate needs an explicit --seed")
    files = sorted(p for p in snapshots.iterdir() if p.is_file())
    if not files:
        raise ParseError(f"no snapshot files under {snapshots}")
    sequence = []
    for path in files:
        try:
            sequence.append(_load_snapshot(path))
        except ParseError as err:
            raise ParseError(f"{path}: {err}") from None
    sequence.sort(key=lambda s: s.valid_after)
    try:
        adversary_spec = AdversarySpec.from_json_dict(json.loads(adversary.read_text()))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad adversary file {adversary}: {exc}") from None
    schedule = StreamSchedule(circuit_interval=interval, destination_port=port)
    records = run_simulation(
        sequence,
        adversary_spec,
        Algorithm(algo),
        clients,
        seed,
        schedule=schedule,
        num_entry_guards=num_guards,
        duration=duration,
        workers=workers,
    )
    out.write_text(records_to_csv(records))
    compromised = sum(1 for r in records if r.circuits_compromised > 0)
    summary = _stamp(
        {
            "algo": algo,
            "clients": clients,
            "snapshots": len(sequence),
            "adversary_relays": len(adversary_spec.relays),
            "records": str(out),
            "clients_compromised": compromised,
            "compromised_fraction": compromised / clients,
            "periods": network_summaries(
                sequence, adversary_spec, Algorithm(algo), duration
            ),
        },
        seed=seed,
    )
    _emit(summary)


@main.command()
@click.option("--joint", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--snapshot", type=click.Path(exists=True, path_type=Path), default=None,
              help="Relay metadata for country/AS grouping of the guard marginal.")
@click.option("--all", "show_all", is_flag=True, default=True, help="Compute every metric.")
@click.pass_context
def metrics(ctx, joint, snapshot, show_all):
    """Anonymity metrics over a joint guard-exit distribution CSV."""
    jd = joint_from_csv(joint.read_text())
    trace = guessing_entropy(jd)
    doc = {
        "uniformity_degree": uniformity_degree(jd),
        "guessing_entropy": trace.g,
        "trace": {
            "picks": [{"side": side, "index": index} for side, index in trace.picks],
            "q": [float(v) for v in trace.q],
        },
    }
    if snapshot is not None:
        snap = _load_snapshot(snapshot)
        marginal = ProbabilityVector(jd.guards, jd.p.sum(axis=1))
        doc["group_tables"] = {
            key: [{"group": g, "probability": p} for g, p in group_diversity(snap, marginal, key)]
            for key in ("country", "as")
        }
    _emit(_stamp(doc))


@main.command()
@click.option("--waterfill", "waterfill_file", type=click.Path(exists=True, path_type=Path),
              required=True, help="JSON produced by the waterfill subcommand.")
@click.option("--target-weight", type=int, required=True,
              help="Consensus weight of the relay the adversary wants to match.")
@click.option("--entry-weight", type=float, default=None,
              help="Scalar entry share of the target; defaults to the solution's Wgg.")
@click.pass_context
def report(ctx, waterfill_file, target_weight, entry_weight):
    """Adversary cost statistics derived from a waterfilling solution."""
    try:
        doc = json.loads(waterfill_file.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad waterfill file {waterfill_file}: {exc}") from None
    pools = doc.get("pools", {})
    guards = pools.get("guards")
    if not guards or "water_level" not in guards:
        raise ParseError(f"{waterfill_file} carries no solved guard pool")
    if entry_weight is None:
        entry_weight = guards["source_Wgg"]
    cost = report_adversary_cost(guards["water_level"], target_weight, entry_weight)
    _emit(
        _stamp(
            {
                "input": str(waterfill_file),
                "target_guard_weight": cost.target_guard_weight,
                "entry_weight": cost.entry_weight,
                "water_level": cost.water_level,
                "effective_guard_weight": cost.effective_guard_weight,
                "node_equivalents": cost.node_equivalents,
                "waterfill_bandwidth": cost.waterfill_bandwidth,
                "bandwidth_ratio": cost.bandwidth_ratio,
            }
        )
    )


@main.command()
@click.argument("records_a", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("records_b", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--horizon", type=int, required=True)
@click.option("--resolution", type=int, default=None)
@click.pass_context
def compare(ctx, records_a, records_b, horizon, resolution):
    """Compare two simulations' compromise curves (A versus B)."""
    a = records_from_csv(records_a.read_text())
    b = records_from_csv(records_b.read_text())
    result = compare_runs(a, b, horizon, resolution)
    _emit(
        _stamp(
            {
                "records_a": str(records_a),
                "records_b": str(records_b),
                "horizon": horizon,
                "terminal_delta": result.terminal_delta,
                "sign_test": {
                    "a_above": result.points_a_above,
                    "b_above": result.points_b_above,
                    "ties": result.ties,
                    "p_value": result.p_value,
                    "verdict": result.verdict,
                },
                "curves": {
                    "times": result.times.tolist(),
                    "a": result.curve_a.tolist(),
                    "b": result.curve_b.tolist(),
                },
            }
        )
    )


if __name__ == "__main__":
    main()
