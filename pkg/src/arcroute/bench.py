"""Benchmark harness: per-method mean cost, gap vs a reference, timing."""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field
from typing import Callable

from .instance import DistanceMatrix, Instance, Solution, all_pairs_shortest_paths, evaluate_solution

Solver = Callable[[Instance], Solution]


@dataclass
class MethodResult:
    name: str
    mean_cost: float
    gap_percent: float
    mean_seconds: float
    costs: list[int] = field(default_factory=list)
    disqualified: list[str] = field(default_factory=list)


@dataclass
class BenchReport:
    reference: str
    results: list[MethodResult]

    def table(self) -> str:
        header = f"{'method':<16} {'mean cost':>12} {'gap %':>8} {'sec/inst':>10} {'solved':>7}"
        rows = [header, "-" * len(header)]
        for r in self.results:
            rows.append(
                f"{r.name:<16} {r.mean_cost:>12.2f} {r.gap_percent:>8.2f} "
                f"{r.mean_seconds:>10.4f} {len(r.costs):>7}"
            )
        return "\n".join(rows)

    def delimited(self) -> str:
        lines = ["method\tmean_cost\tgap_percent\tmean_seconds\tsolved\tdisqualified"]
        for r in self.results:
            lines.append(
                f"{r.name}\t{r.mean_cost:.4f}\t{r.gap_percent:.2f}\t"
                f"{r.mean_seconds:.6f}\t{len(r.costs)}\t{len(r.disqualified)}"
            )
        return "\n".join(lines) + "\n"


def gap_percent(cost: float, reference_cost: float) -> float:
    return 100.0 * (cost - reference_cost) / reference_cost


def run_benchmark(
    methods: dict[str, Solver],
    instances: list[Instance],
    reference: str,
    repeats: int = 1,
) -> BenchReport:
    """Solve every instance with every method, serially (clean timings).

    A method producing an infeasible solution is disqualified on that
    instance: the instance is reported and excluded from its mean. Timing
    takes the median over `repeats` runs of each solve.
    """
    if reference not in methods:
        raise ValueError(f"reference method {reference!r} not among methods")
    dists: dict[str, DistanceMatrix] = {}
    per_method: dict[str, MethodResult] = {
        name: MethodResult(name=name, mean_cost=0.0, gap_percent=0.0, mean_seconds=0.0)
        for name in methods
    }
    for instance in instances:
        dist = dists.setdefault(instance.name, all_pairs_shortest_paths(instance))
        for name, solve in methods.items():
            times = []
            sol = None
            for _ in range(max(1, repeats)):
                t0 = time.perf_counter()
                sol = solve(instance)
                times.append(time.perf_counter() - t0)
            ev = evaluate_solution(instance, dist, sol)
            result = per_method[name]
            if not ev.feasible:
                result.disqualified.append(
                    f"{instance.name}: {'; '.join(ev.violations[:3])}"
                )
                continue
            result.costs.append(ev.total_cost)
            result.mean_seconds += statistics.median(times)
    for result in per_method.values():
        if result.costs:
            result.mean_cost = sum(result.costs) / len(result.costs)
            result.mean_seconds /= len(result.costs)
    ref_cost = per_method[reference].mean_cost
    for result in per_method.values():
        result.gap_percent = gap_percent(result.mean_cost, ref_cost) if ref_cost else 0.0
    return BenchReport(reference=reference, results=list(per_method.values()))
