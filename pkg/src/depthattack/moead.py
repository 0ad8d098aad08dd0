"""Decomposition-based evolutionary multi-objective optimizer.

The bi-objective search is decomposed into one scalar subproblem per
weight vector; each subproblem cooperates with its nearest neighbors in
weight space.  Offspring are produced by differential-evolution crossover
followed by polynomial mutation, scored by the Tchebycheff function
against a running reference point, and written back through a bounded,
feasibility-aware replacement rule.  Every run is a pure function of the
seed and the evaluator.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import EvaluationError

Evaluator = Callable[[np.ndarray], tuple[Sequence[float], float]]
BatchEvaluator = Callable[[list[np.ndarray]], list[tuple[Sequence[float], float]]]


@dataclass(frozen=True)
class MoeadConfig:
    """Search hyperparameters.

    population_size doubles as the subproblem count; neighborhood_size is
    how many nearest weight vectors (self included) form a neighborhood;
    neighbor_prob is the probability that mating and replacement are
    restricted to that neighborhood; max_replacements caps how many
    incumbents one offspring may displace.  de_scale / crossover_rate
    drive the differential crossover, mutation_prob / mutation_eta the
    polynomial mutation (mutation_prob None means 1 / genome length).
    """

    population_size: int = 100
    neighborhood_size: int = 10
    n_objectives: int = 2
    neighbor_prob: float = 0.8
    max_replacements: int = 1
    generations: int = 5000
    de_scale: float = 0.5
    crossover_rate: float = 0.9
    mutation_prob: float | None = None
    mutation_eta: float = 20.0
    seed: int = 0
    query_budget: int | None = None
    tournament_selection: bool = False

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if not (2 <= self.neighborhood_size <= self.population_size):
            raise ValueError("neighborhood_size must lie in [2, population_size]")
        if not (0.0 <= self.neighbor_prob <= 1.0):
            raise ValueError("neighbor_prob must lie in [0, 1]")
        if self.max_replacements < 1:
            raise ValueError("max_replacements must be >= 1")
        if self.de_scale <= 0.0:
            raise ValueError("de_scale must be > 0")
        if not (0.0 <= self.crossover_rate <= 1.0):
            raise ValueError("crossover_rate must lie in [0, 1]")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        if self.query_budget is not None and self.query_budget < self.population_size:
            raise ValueError("query_budget must cover the initial population")


def generate_weights(n_subproblems: int, n_objectives: int = 2) -> np.ndarray:
    """Simplex-lattice weight vectors, one per subproblem.

    For two objectives, subproblem j gets (j / (n-1), 1 - j / (n-1)).
    """
    if n_subproblems < 2:
        raise ValueError("need at least 2 subproblems")
    if n_objectives != 2:
        raise ValueError("only the bi-objective lattice is implemented")
    t = np.arange(n_subproblems, dtype=np.float64) / (n_subproblems - 1)
    return np.column_stack([t, 1.0 - t])


def build_neighborhoods(weights: np.ndarray, neighborhood_size: int) -> np.ndarray:
    """Indices of the neighborhood_size nearest weight vectors per subproblem.

    Each row is sorted by ascending Euclidean distance in weight space
    (self first); distance ties break toward the lower index.
    """
    n = weights.shape[0]
    if not (1 <= neighborhood_size <= n):
        raise ValueError("neighborhood_size must lie in [1, n_subproblems]")
    diffs = weights[:, None, :] - weights[None, :, :]
    dists = np.sqrt(np.sum(diffs**2, axis=2))
    order = np.argsort(dists, axis=1, kind="stable")
    return order[:, :neighborhood_size]


_ZERO_WEIGHT_GUARD = 1e-6


def tchebycheff(f: np.ndarray, weight: np.ndarray, ref: np.ndarray) -> float:
    """Weighted Tchebycheff scalarization max_i w_i * |f_i - ref_i|.

    Zero weights are lifted to 1e-6 here only, so no subproblem is fully
    blind to one objective; reported weights stay untouched.
    """
    w = np.where(np.asarray(weight) == 0.0, _ZERO_WEIGHT_GUARD, weight)
    return float(np.max(w * np.abs(np.asarray(f) - np.asarray(ref))))


def select_mating_range(
    index: int, neighbor_prob: float, neighborhoods: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """The index set used for both mating and replacement.

    With probability neighbor_prob it is the neighborhood of ``index``,
    otherwise the whole population.
    """
    if rng.random() < neighbor_prob:
        return neighborhoods[index].copy()
    return np.arange(neighborhoods.shape[0])


def de_crossover(
    base: np.ndarray,
    donor_a: np.ndarray,
    donor_b: np.ndarray,
    scale: float,
    crossover_rate: float,
    lower: np.ndarray,
    upper: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Differential crossover: per gene, base + scale * (a - b) with
    probability crossover_rate, else the base gene; clamped into bounds."""
    cross = rng.random(base.shape[0]) < crossover_rate
    child = np.where(cross, base + scale * (donor_a - donor_b), base)
    return np.clip(child, lower, upper)


def mutation_step(u: np.ndarray, eta: float) -> np.ndarray:
    """Polynomial-mutation offset in [-1, 1] for uniform draws u."""
    u = np.asarray(u, dtype=np.float64)
    exponent = 1.0 / (eta + 1.0)
    low = np.power(2.0 * u, exponent) - 1.0
    high = 1.0 - np.power(2.0 * (1.0 - u), exponent)
    return np.where(u < 0.5, low, high)


def polynomial_mutation(
    genes: np.ndarray,
    mutation_prob: float,
    eta: float,
    lower: np.ndarray,
    upper: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Mutate each gene with probability mutation_prob.

    The offset is mutation_step(u) scaled by the distance to the nearer
    box bound, so a gene sitting on a bound cannot leave the box.
    """
    n = genes.shape[0]
    mutate = rng.random(n) < mutation_prob
    u = rng.random(n)
    reach = np.minimum(genes - lower, upper - genes)
    mutated = genes + mutation_step(u, eta) * reach
    return np.clip(np.where(mutate, mutated, genes), lower, upper)


def update_reference(ref: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Componentwise minimum of the reference point and a new objective vector."""
    return np.minimum(ref, f)


def dominates(a: np.ndarray, b: np.ndarray) -> bool:
    """Pareto dominance for minimization."""
    return bool(np.all(a <= b) and np.any(a < b))


def pairwise_non_dominated(front: np.ndarray, chunk: int = 2048) -> bool:
    """True when no row of ``front`` dominates another (chunked full scan)."""
    front = np.asarray(front, dtype=np.float64)
    n = front.shape[0]
    for start in range(0, n, chunk):
        block = front[start : start + chunk]
        le = (block[:, None, :] <= front[None, :, :]).all(axis=2)
        lt = (block[:, None, :] < front[None, :, :]).any(axis=2)
        if (le & lt).any():
            return False
    return True


@dataclass(frozen=True)
class ArchiveEntry:
    genes: np.ndarray
    objectives: np.ndarray


class Archive:
    """Unbounded store of mutually non-dominated evaluated points.

    Dominated entries are pruned on insert and exact objective duplicates
    are kept out.  With two objectives a clean front is strictly
    increasing in f1 and strictly decreasing in f2, so entries live in a
    bisect-maintained list sorted by f1: dominance tests are one
    predecessor lookup and prunes remove one contiguous slice.
    """

    def __init__(self):
        self.entries: list[ArchiveEntry] = []
        self._keys: list[tuple[float, float]] = []

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def objective_matrix(self) -> np.ndarray:
        if not self._keys:
            return np.empty((0, 2))
        return np.asarray(self._keys, dtype=np.float64)

    def insert(self, genes: np.ndarray, objectives: np.ndarray) -> bool:
        f = np.asarray(objectives, dtype=np.float64)
        key = (float(f[0]), float(f[1]))
        i = bisect.bisect_left(self._keys, key)
        # the predecessor has f1 <= ours; it dominates (or equals) us iff
        # its f2 is no worse, and then so could nothing after it
        if i > 0 and self._keys[i - 1][1] <= key[1]:
            return False
        if i < len(self._keys) and self._keys[i] == key:
            return False
        j = i
        while j < len(self._keys) and self._keys[j][1] >= key[1]:
            j += 1
        if j > i:
            del self._keys[i:j]
            del self.entries[i:j]
        genes = np.array(genes, dtype=np.float64)
        genes.flags.writeable = False
        f = f.copy()
        f.flags.writeable = False
        self._keys.insert(i, key)
        self.entries.insert(i, ArchiveEntry(genes, f))
        return True


def try_replace(
    population: np.ndarray,
    objectives: np.ndarray,
    violations: np.ndarray,
    weights: np.ndarray,
    ref: np.ndarray,
    offspring: np.ndarray,
    f_offspring: np.ndarray,
    vio_offspring: float,
    pool: np.ndarray,
    max_replacements: int,
    rng: np.random.Generator,
) -> int:
    """Let one offspring displace incumbents drawn randomly from the pool.

    An incumbent k falls if (a) both are infeasible and the offspring
    violates less, (b) the offspring is feasible and k is not, or (c) both
    are feasible and the offspring's Tchebycheff value on k's subproblem
    is no worse.  Stops after max_replacements or when the pool is spent.
    Returns the replacement count.
    """
    feas_off = vio_offspring == 0.0
    count = 0
    for k in rng.permutation(pool):
        feas_k = violations[k] == 0.0
        if not feas_off and not feas_k:
            replace = vio_offspring < violations[k]
        elif feas_off and not feas_k:
            replace = True
        elif feas_off and feas_k:
            replace = tchebycheff(f_offspring, weights[k], ref) <= tchebycheff(
                objectives[k], weights[k], ref
            )
        else:
            replace = False
        if replace:
            population[k] = offspring
            objectives[k] = f_offspring
            violations[k] = vio_offspring
            count += 1
            if count >= max_replacements:
                break
    return count


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    best_f1: float
    best_f2: float
    ref: tuple[float, float]
    queries: int
    archive_size: int

    def to_json_line(self) -> str:
        return json.dumps(
            {
                "gen": self.generation,
                "best_f1": self.best_f1,
                "best_f2": self.best_f2,
                "z": list(self.ref),
                "queries": self.queries,
                "archive_size": self.archive_size,
            }
        )


@dataclass
class RunResult:
    population: np.ndarray
    objectives: np.ndarray
    violations: np.ndarray
    ref: np.ndarray
    archive: Archive
    history: list[GenerationRecord]
    queries: int
    rng_state: dict | None = None

    def write_trace(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for record in self.history:
                fh.write(record.to_json_line() + "\n")


def _checked_evaluation(evaluator: Evaluator, genes: np.ndarray) -> tuple[np.ndarray, float]:
    try:
        f, vio = evaluator(genes)
    except Exception as exc:
        raise EvaluationError(f"evaluator failed: {exc}", genes=np.array(genes)) from exc
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (2,) or not np.all(np.isfinite(f)):
        raise EvaluationError(f"evaluator returned invalid objectives {f!r}", genes=np.array(genes))
    vio = float(vio)
    if not np.isfinite(vio) or vio < 0.0:
        raise EvaluationError(f"evaluator returned invalid violation {vio!r}", genes=np.array(genes))
    return f, vio


def _tournament_order(
    config: MoeadConfig,
    objectives: np.ndarray,
    weights: np.ndarray,
    ref: np.ndarray,
    rng: np.random.Generator,
) -> list[int]:
    # Seed the picks with the per-objective best subproblems, then fill by
    # binary tournament on each candidate's own current scalarized value.
    order = [int(np.argmin(objectives[:, j])) for j in range(objectives.shape[1])]
    n = objectives.shape[0]
    current = np.array([tchebycheff(objectives[i], weights[i], ref) for i in range(n)])
    while len(order) < n:
        a, b = rng.integers(0, n, size=2)
        order.append(int(a if current[a] <= current[b] else b))
    return order


def run(
    config: MoeadConfig,
    evaluator: Evaluator,
    lower: np.ndarray,
    upper: np.ndarray,
    batch_evaluator: BatchEvaluator | None = None,
    observer: Callable[[GenerationRecord, Archive], None] | None = None,
) -> RunResult:
    """Run the full search loop and return population, archive and trace.

    ``evaluator`` maps a genome to ((f1, f2), violation); it must either
    return or raise, never fail silently.  When ``batch_evaluator`` is
    given, each generation's offspring are bred first and evaluated as one
    batch, with replacements then applied in subproblem-index order; both
    modes are deterministic for a fixed seed.  ``observer`` is called with
    every generation record (including generation 0) and the live archive.
    """
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    n_genes = lower.shape[0]
    n_pop = config.population_size
    mutation_prob = (
        config.mutation_prob if config.mutation_prob is not None else 1.0 / n_genes
    )

    rng = np.random.default_rng(config.seed)
    weights = generate_weights(n_pop, config.n_objectives)
    neighborhoods = build_neighborhoods(weights, config.neighborhood_size)

    population = rng.uniform(lower, upper, size=(n_pop, n_genes))
    objectives = np.empty((n_pop, config.n_objectives))
    violations = np.empty(n_pop)
    archive = Archive()
    queries = 0
    for i in range(n_pop):
        f, vio = _checked_evaluation(evaluator, population[i])
        queries += 1
        objectives[i] = f
        violations[i] = vio
        if vio == 0.0:
            archive.insert(population[i], f)
    ref = objectives.min(axis=0)

    def record(gen: int) -> GenerationRecord:
        front = archive.objective_matrix()
        best_f1 = float(front[:, 0].min()) if len(front) else float("inf")
        best_f2 = float(front[:, 1].min()) if len(front) else float("inf")
        rec = GenerationRecord(
            gen, best_f1, best_f2, (float(ref[0]), float(ref[1])), queries, len(archive)
        )
        if observer is not None:
            observer(rec, archive)
        return rec

    history = [record(0)]

    def breed(i: int) -> tuple[np.ndarray, np.ndarray]:
        pool = select_mating_range(i, config.neighbor_prob, neighborhoods, rng)
        mates = pool[pool != i]
        if mates.shape[0] < 2:
            # a 2-wide neighborhood leaves a single mate; widen to everyone
            mates = np.delete(np.arange(n_pop), i)
        r1, r2 = rng.choice(mates, size=2, replace=False)
        child = de_crossover(
            population[i], population[r1], population[r2],
            config.de_scale, config.crossover_rate, lower, upper, rng,
        )
        child = polynomial_mutation(child, mutation_prob, config.mutation_eta, lower, upper, rng)
        return pool, child

    def absorb(pool: np.ndarray, child: np.ndarray, f: np.ndarray, vio: float) -> None:
        nonlocal ref
        ref = update_reference(ref, f)
        if vio == 0.0:
            archive.insert(child, f)
        try_replace(
            population, objectives, violations, weights, ref,
            child, f, vio, pool, config.max_replacements, rng,
        )

    out_of_budget = False
    try:
        for gen in range(1, config.generations + 1):
            if out_of_budget:
                break
            if config.tournament_selection:
                order = _tournament_order(config, objectives, weights, ref, rng)
            else:
                order = list(range(n_pop))

            if batch_evaluator is None:
                for i in order:
                    if config.query_budget is not None and queries >= config.query_budget:
                        out_of_budget = True
                        break
                    pool, child = breed(i)
                    f, vio = _checked_evaluation(evaluator, child)
                    queries += 1
                    absorb(pool, child, f, vio)
            else:
                planned: list[tuple[np.ndarray, np.ndarray]] = []
                for i in order:
                    if (
                        config.query_budget is not None
                        and queries + len(planned) >= config.query_budget
                    ):
                        out_of_budget = True
                        break
                    planned.append(breed(i))
                if planned:
                    try:
                        results = batch_evaluator([child for _, child in planned])
                    except EvaluationError:
                        raise
                    except Exception as exc:
                        raise EvaluationError(f"batch evaluator failed: {exc}") from exc
                    if len(results) != len(planned):
                        raise EvaluationError("batch evaluator returned a short batch")
                    for (pool, child), (f_raw, vio_raw) in zip(planned, results):
                        queries += 1
                        absorb(pool, child, np.asarray(f_raw, dtype=np.float64), float(vio_raw))
            history.append(record(gen))
    except EvaluationError as exc:
        # let callers checkpoint whatever the search had reached
        exc.partial = RunResult(
            population, objectives, violations, ref, archive, history, queries,
            rng.bit_generator.state,
        )
        raise

    return RunResult(
        population, objectives, violations, ref, archive, history, queries,
        rng.bit_generator.state,
    )


def save_checkpoint(result: RunResult, path: str | Path) -> None:
    """Persist population, archive and the generator state as JSON."""
    payload = {
        "population": result.population.tolist(),
        "objectives": result.objectives.tolist(),
        "violations": result.violations.tolist(),
        "ref": result.ref.tolist(),
        "queries": result.queries,
        "archive": [
            {"genes": e.genes.tolist(), "objectives": e.objectives.tolist()}
            for e in result.archive
        ],
        "rng_state": result.rng_state,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path: str | Path) -> dict:
    with open(path) as fh:
        payload = json.load(fh)
    payload["population"] = np.asarray(payload["population"])
    payload["objectives"] = np.asarray(payload["objectives"])
    payload["violations"] = np.asarray(payload["violations"])
    payload["ref"] = np.asarray(payload["ref"])
    return payload
