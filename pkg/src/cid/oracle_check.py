"""Random-MRF harness comparing the closed form with brute-force enumeration."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .entropy import closed_form_covered_info, mutual_information, oracle_covered_info
from .mrf import DiscreteMRF

TOLERANCE = 1e-9
# log-potential gap that makes one node a copy of another to double precision
_COPY_PENALTY = 60.0


@dataclass
class OracleReport:
    n_cases: int
    max_discrepancy: float
    independent: tuple[float, float]
    duplicate: tuple[float, float, float]
    seconds: float
    tolerance: float = TOLERANCE
    cases: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        ok_random = self.max_discrepancy < self.tolerance
        ok_indep = max(abs(v) for v in self.independent) < self.tolerance
        cf, orc, mi = self.duplicate
        ok_dup = abs(cf - mi) < self.tolerance and abs(orc - mi) < self.tolerance
        return ok_random and ok_indep and ok_dup

    def lines(self) -> list[str]:
        cf, orc, mi = self.duplicate
        return [
            f"random cases: {self.n_cases}, max |closed form - enumeration| = {self.max_discrepancy:.3e}",
            f"independent case: closed form {self.independent[0]:.3e}, enumeration {self.independent[1]:.3e}",
            f"duplicate case: closed form {cf:.12f}, enumeration {orc:.12f}, I(X;Y) {mi:.12f}",
            f"elapsed {self.seconds:.2f} s; {'PASS' if self.passed else 'FAIL'} at tolerance {self.tolerance:g}",
        ]


def _independent_case(rng, n_nodes, n_states):
    node_log = [rng.normal(0, 1.5, size=n_states) for _ in range(n_nodes)]
    mrf = DiscreteMRF([n_states] * n_nodes, node_log, {})
    target = n_nodes - 1
    return closed_form_covered_info(mrf, 0, target), oracle_covered_info(mrf.joint(), 0, target)


def _duplicate_case(rng, n_states):
    """Nodes (X, copy of X, Y): the copy covers everything X knows about Y."""
    node_log = [rng.normal(0, 1.0, size=n_states) for _ in range(3)]
    copy = np.full((n_states, n_states), -_COPY_PENALTY)
    np.fill_diagonal(copy, 0.0)
    pairs = {(0, 1): copy, (0, 2): rng.normal(0, 1.5, size=(n_states, n_states))}
    mrf = DiscreteMRF([n_states] * 3, node_log, pairs)
    joint = mrf.joint()
    return closed_form_covered_info(mrf, 0, 2), oracle_covered_info(joint, 0, 2), mutual_information(joint, 0, 2)


def random_case(rng: np.random.Generator, max_nodes: int = 4, max_states: int = 5, min_nodes: int = 3):
    """One random pairwise MRF with a random feature/target pair."""
    n_nodes = int(rng.integers(min_nodes, max_nodes + 1))
    n_states = rng.integers(2, max_states + 1, size=n_nodes)
    mrf = DiscreteMRF.random(n_nodes, n_states, rng)
    feature, target = rng.choice(n_nodes, size=2, replace=False)
    return mrf, int(feature), int(target)


def run_oracle_check(max_nodes: int = 4, max_states: int = 5, n_cases: int = 100, seed: int = 0) -> OracleReport:
    if not 3 <= max_nodes <= 5:
        raise ValueError("max_nodes must lie in 3..5")
    if not 2 <= max_states <= 5:
        raise ValueError("max_states must lie in 2..5")
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    cases = []
    worst = 0.0
    for _ in range(n_cases):
        mrf, feature, target = random_case(rng, max_nodes, max_states)
        cf = closed_form_covered_info(mrf, feature, target)
        orc = oracle_covered_info(mrf.joint(), feature, target)
        worst = max(worst, abs(cf - orc))
        cases.append({"states": list(mrf.n_states), "feature": feature, "target": target, "closed_form": cf, "oracle": orc})
    independent = _independent_case(rng, max_nodes, max_states)
    duplicate = _duplicate_case(rng, max_states)
    return OracleReport(n_cases, worst, independent, duplicate, time.perf_counter() - t0, cases=cases)
