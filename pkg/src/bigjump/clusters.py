"""Immigrant streams and marked cluster generation.

Two lanes share the same model:

* event-level generators (`gen_mb_cluster`, `gen_hawkes_cluster`) build one
  cluster at a time with full parent/generation structure, drawing by
  inverse CDF in a fixed breadth-first order;
* the batch lane (`simulate_batch`) generates many clusters at once into
  flat arrays, generation by generation, for the Monte Carlo estimators.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .laws import JointMarkSpec, TailLaw, WaitLaw, poisson_inverse

__all__ = [
    "Immigrant",
    "ClusterEvent",
    "Cluster",
    "BatchClusters",
    "sample_immigrants",
    "gen_mb_cluster",
    "gen_hawkes_cluster",
    "cluster_total",
    "split_at_horizon",
    "simulate_batch",
    "write_clusters_csv",
]

DEFAULT_CAP = 1_000_000

MB = "mb"
HAWKES = "hawkes"


@dataclass(frozen=True)
class Immigrant:
    gamma: float  # arrival time in [0, T]
    mark: float


@dataclass(frozen=True)
class ClusterEvent:
    offset: float  # time since the immigrant arrival; 0 for the immigrant
    mark: float
    generation: int
    parent: int  # index into the event list; the immigrant points at itself


@dataclass(frozen=True)
class Cluster:
    immigrant: Immigrant
    events: tuple[ClusterEvent, ...]
    truncated: bool = False

    def total(self) -> float:
        return float(sum(e.mark for e in self.events))

    def size(self) -> int:
        return len(self.events)


def sample_immigrants(lam: float, T: float, x_law: TailLaw, rng: np.random.Generator) -> list[Immigrant]:
    """Poisson(lam*T) immigrants, sorted arrival times, i.i.d. marks."""
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if T <= 0:
        raise ValueError("T must be positive")
    if lam == 0.0:
        return []
    n = poisson_inverse(rng.random(), lam * T)
    gammas = np.sort(T * rng.random(n))
    marks = x_law.sample(rng, n) if n else np.empty(0)
    return [Immigrant(float(g), float(m)) for g, m in zip(gammas, marks)]


def gen_mb_cluster(
    imm: Immigrant, spec: JointMarkSpec, wait: WaitLaw, rng: np.random.Generator
) -> Cluster:
    """Single-generation cluster: K offspring of the immigrant, K drawn jointly with its mark."""
    k = spec.offspring_count(imm.mark, rng)
    events = [ClusterEvent(0.0, imm.mark, 0, 0)]
    for _ in range(k):
        mark = float(spec.x_law.sample(rng))
        w = float(wait.sample(rng, mark=imm.mark))
        events.append(ClusterEvent(w, mark, 1, 0))
    return Cluster(imm, tuple(events))


def gen_hawkes_cluster(
    imm: Immigrant,
    spec: JointMarkSpec,
    wait: WaitLaw,
    rng: np.random.Generator,
    cap: int = DEFAULT_CAP,
) -> Cluster:
    """Multi-generation cluster by breadth-first branching.

    Every event with mark x spawns Poisson(phi*x) children; child waits are
    drawn from the parent per the wait law.  Generation order fixes stream
    consumption.  When ``cap`` events exist the recursion stops and the
    cluster is flagged truncated.
    """
    if spec.phi > 0 and not spec.mean_fertility < 1.0:
        raise ConfigurationError("supercritical fertility")
    if cap < 1:
        raise ValueError("cap must be >= 1")
    events = [ClusterEvent(0.0, imm.mark, 0, 0)]
    truncated = False
    frontier = [0]
    while frontier and not truncated:
        next_frontier: list[int] = []
        for parent_idx in frontier:
            parent = events[parent_idx]
            n_children = poisson_inverse(rng.random(), spec.phi * parent.mark)
            for _ in range(n_children):
                if len(events) >= cap:
                    truncated = True
                    break
                mark = float(spec.x_law.sample(rng))
                w = float(wait.sample(rng, mark=parent.mark))
                events.append(
                    ClusterEvent(parent.offset + w, mark, parent.generation + 1, parent_idx)
                )
                next_frontier.append(len(events) - 1)
            if truncated:
                break
        frontier = next_frontier
    return Cluster(imm, tuple(events), truncated)


def cluster_total(cluster: Cluster) -> float:
    """Sum of all event marks, immigrant included."""
    return cluster.total()


def split_at_horizon(cluster: Cluster, T: float) -> tuple[float, float, int]:
    """(retained mass, mass arriving after T, count after T) for one cluster."""
    gamma = cluster.immigrant.gamma
    if gamma > T:
        raise ValueError(f"immigrant arrival {gamma} is beyond the horizon {T}")
    retained = 0.0
    remainder = 0.0
    count = 0
    for e in cluster.events:
        if gamma + e.offset <= T:
            retained += e.mark
        else:
            remainder += e.mark
            count += 1
    return retained, remainder, count


# ---------------------------------------------------------------------------
# batch lane


@dataclass
class BatchClusters:
    """Flat-array view of ``n`` clusters: one row per event.

    ``cid`` maps events to clusters; offsets are times since the cluster's
    immigrant.  Event order within the batch is generation-major.
    """

    n: int
    cid: np.ndarray
    offset: np.ndarray
    mark: np.ndarray
    generation: np.ndarray
    truncated: np.ndarray  # bool per cluster
    immigrant_mark: np.ndarray = field(default=None)

    def totals(self) -> np.ndarray:
        return np.bincount(self.cid, weights=self.mark, minlength=self.n)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.cid, minlength=self.n)

    def remainder_totals(self, within: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(retained, after-horizon) mass per cluster given per-event keep mask."""
        kept = np.bincount(self.cid[within], weights=self.mark[within], minlength=self.n)
        return kept, self.totals() - kept


def simulate_batch(
    model: str,
    n: int,
    spec: JointMarkSpec,
    wait: WaitLaw,
    rng: np.random.Generator,
    cap: int = DEFAULT_CAP,
    with_offsets: bool = True,
    x0: np.ndarray | None = None,
) -> BatchClusters:
    """Generate ``n`` clusters into flat arrays.

    Counts use the generator's Poisson sampler (vectorized); marks and waits
    use the same quantile transforms as the event-level lane.  ``x0`` forces
    the immigrant marks (importance proposals); by default they are drawn.
    """
    if model not in (MB, HAWKES):
        raise ConfigurationError(f"unknown model {model!r}")
    if x0 is None:
        x0 = np.asarray(spec.x_law.sample(rng, n), dtype=float)
    else:
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (n,):
            raise ValueError("x0 must have one mark per cluster")
    cids = [np.arange(n, dtype=np.int64)]
    offsets = [np.zeros(n)] if with_offsets else None
    marks = [x0]
    gens = [np.zeros(n, dtype=np.int16)]
    counts = np.ones(n, dtype=np.int64)
    truncated = np.zeros(n, dtype=bool)

    if model == MB:
        k = spec.offspring_counts(x0, rng)
        total = int(k.sum())
        if total:
            cid = np.repeat(np.arange(n, dtype=np.int64), k)
            child_marks = np.asarray(spec.x_law.sample(rng, total), dtype=float)
            cids.append(cid)
            marks.append(child_marks)
            gens.append(np.ones(total, dtype=np.int16))
            if with_offsets:
                w = wait.sample(rng, mark=x0[cid], size=total)
                offsets.append(np.asarray(w, dtype=float))
    else:
        parent_cid = cids[0]
        parent_mark = x0
        parent_off = np.zeros(n) if with_offsets else None
        gen = 0
        while parent_cid.size:
            gen += 1
            lam = spec.phi * parent_mark
            k = rng.poisson(lam).astype(np.int64)
            total = int(k.sum())
            if total == 0:
                break
            cid = np.repeat(parent_cid, k)
            # enforce the per-cluster cap at generation granularity
            counts += np.bincount(cid, minlength=n)
            over = counts > cap
            if over.any():
                newly = over & ~truncated
                truncated |= newly
                keep = ~over[cid]
                cid = cid[keep]
                k_keep = keep
            else:
                k_keep = None
            m = cid.size
            if m == 0:
                break
            child_marks = np.asarray(spec.x_law.sample(rng, total), dtype=float)
            if k_keep is not None:
                child_marks = child_marks[k_keep]
            cids.append(cid)
            marks.append(child_marks)
            gens.append(np.full(m, gen, dtype=np.int16))
            if with_offsets:
                pm = np.repeat(parent_mark, k)
                po = np.repeat(parent_off, k)
                w = np.asarray(wait.sample(rng, mark=pm, size=total), dtype=float)
                if k_keep is not None:
                    pm, po, w = pm[k_keep], po[k_keep], w[k_keep]
                child_off = po + w
                offsets.append(child_off)
                parent_off = child_off
            parent_cid = cid
            parent_mark = child_marks

    cid = np.concatenate(cids)
    mark = np.concatenate(marks)
    gen_arr = np.concatenate(gens)
    off = np.concatenate(offsets) if with_offsets else np.zeros_like(mark)
    return BatchClusters(
        n=n,
        cid=cid,
        offset=off,
        mark=mark,
        generation=gen_arr,
        truncated=truncated,
        immigrant_mark=x0,
    )


def write_clusters_csv(path, clusters: list[Cluster]) -> None:
    """Line-oriented debugging dump, one row per event."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cluster_id", "event_id", "parent_id", "generation", "offset", "mark"])
        for ci, cluster in enumerate(clusters):
            for ei, e in enumerate(cluster.events):
                writer.writerow([ci, ei, e.parent, e.generation, repr(e.offset), repr(e.mark)])
