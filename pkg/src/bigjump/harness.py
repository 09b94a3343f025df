"""Rare-event Monte Carlo over cluster-process paths.

Estimators never share streams: every task (replication chunk, stratum,
centering run, conditioning run) derives its generator from the root seed
and a label, so results are bit-identical for any worker count.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .clusters import (
    DEFAULT_CAP,
    HAWKES,
    MB,
    gen_hawkes_cluster,
    gen_mb_cluster,
    sample_immigrants,
    simulate_batch,
)
from .errors import ConfigurationError
from .events import DkProxy, JumpCount, PathEvent, SupExceed, TerminalExceed, ValueAt
from .laws import COMONOTONE, JointMarkSpec, WaitLaw
from .measures import measure_for_model, mu_sharp
from .paths import (
    DEFAULT_GRID_N,
    CadlagPath,
    ScalingRule,
    build_uncentered,
    centered_scaled_path,
    centering_hawkes,
    centering_mb,
)
from .streams import lineage, substream

__all__ = [
    "Estimate",
    "ExperimentConfig",
    "simulate_replication",
    "crude_estimate",
    "splitting_estimate",
    "ldp_ratio",
    "check_remainder",
    "check_assumption6",
    "check_tail_equivalence",
    "big_jump_anatomy",
]

CRUDE_CHUNK = 1024


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    n: int
    ci95: tuple[float, float]
    seed_lineage: str
    detail: dict = field(default_factory=dict, compare=False)


def _estimate(value: float, stderr: float, n: int, lin: str, detail: dict | None = None) -> Estimate:
    return Estimate(
        value=float(value),
        stderr=float(stderr),
        n=int(n),
        ci95=(float(value - 1.96 * stderr), float(value + 1.96 * stderr)),
        seed_lineage=lin,
        detail=detail or {},
    )


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    lam: float
    T: float
    eta: float
    spec: JointMarkSpec
    wait: WaitLaw
    k: int
    event: PathEvent
    n_reps: int
    seed: int
    delta: float = 0.5
    grid_n: int = DEFAULT_GRID_N
    cap: int = DEFAULT_CAP
    n_centering: int = 200_000
    n_pbig: int = 400_000
    n_strata: int = 4000
    estimator: str = "splitting"
    workers: int = 1

    def __post_init__(self):
        if self.model not in (MB, HAWKES):
            raise ConfigurationError(f"unknown model {self.model!r}")
        if self.lam < 0 or self.T <= 0:
            raise ConfigurationError("need lam >= 0 and T > 0")
        if not 0.0 < self.delta <= 1.0:
            raise ConfigurationError(f"delta must lie in (0, 1], got {self.delta}")
        if self.k < 0:
            raise ConfigurationError("k must be >= 0")
        if self.estimator not in ("crude", "splitting"):
            raise ConfigurationError(f"unknown estimator {self.estimator!r}")
        self.scaling().validate(self.spec.x_law)

    def scaling(self) -> ScalingRule:
        return ScalingRule(self.eta, self.T)

    def validate_strict(self) -> None:
        """Extra admissibility for limit-ratio runs (diagnostics may relax)."""
        if not self.wait.integrable:
            raise ConfigurationError("wait law must have a finite mean for ratio experiments")


def centering_curve(config: ExperimentConfig) -> CadlagPath:
    """Deterministic mean path; Monte Carlo with a dedicated stream for branching."""
    if config.model == MB:
        return centering_mb(config.lam, config.T, config.spec, config.wait, config.grid_n)
    path, _ = centering_hawkes(
        config.lam,
        config.T,
        config.spec,
        config.wait,
        config.n_centering,
        config.grid_n,
        substream(config.seed, "centering"),
    )
    return path


def simulate_replication(
    config: ExperimentConfig, rng: np.random.Generator, centering: CadlagPath | None = None
) -> tuple[CadlagPath, bool]:
    """One full draw: immigrants -> clusters -> centered scaled path -> event."""
    if centering is None:
        centering = centering_curve(config)
    imms = sample_immigrants(config.lam, config.T, config.spec.x_law, rng)
    if config.model == MB:
        clusters = [gen_mb_cluster(i, config.spec, config.wait, rng) for i in imms]
    else:
        clusters = [
            gen_hawkes_cluster(i, config.spec, config.wait, rng, config.cap) for i in imms
        ]
    unc = build_uncentered(clusters, config.T)
    path = centered_scaled_path(unc, centering, config.scaling())
    return path, config.event.decide(path)


# ---------------------------------------------------------------------------
# vectorized event evaluation


def _merge_by_time(rep: np.ndarray, t: np.ndarray, size: np.ndarray):
    """Sum jump sizes at identical (rep, time) pairs (ties occur with
    deterministic laws; continuous laws never produce them)."""
    if rep.size == 0:
        return rep, t, size
    order = np.lexsort((t, rep))
    rep, t, size = rep[order], t[order], size[order]
    new = np.empty(rep.size, dtype=bool)
    new[0] = True
    new[1:] = (rep[1:] != rep[:-1]) | (t[1:] != t[:-1])
    idx = np.cumsum(new) - 1
    return rep[new], t[new], np.bincount(idx, weights=size)


def _eval_event_chunk(
    rep: np.ndarray,
    t: np.ndarray,
    size: np.ndarray,
    n: int,
    event: PathEvent,
    centering: CadlagPath,
    x_T: float,
) -> np.ndarray:
    """Event indicator per replication from flat jump arrays.

    Semantics match deciding the event on the materialized centered scaled
    path: centering values interpolate the same grid curve.
    """
    cent = lambda ts: np.interp(ts, centering.t, centering.right)  # noqa: E731
    if isinstance(event, TerminalExceed):
        totals = np.bincount(rep, weights=size, minlength=n)
        return (totals - cent(1.0)) / x_T > event.c
    if isinstance(event, ValueAt):
        mask = t <= event.s
        vals = np.bincount(rep[mask], weights=size[mask], minlength=n)
        return (vals - cent(event.s)) / x_T > event.c
    if isinstance(event, SupExceed):
        sup = np.zeros(n)  # the path starts at zero
        if rep.size:
            order = np.lexsort((t, rep))
            r, ts, sz = rep[order], t[order], size[order]
            cum = np.cumsum(sz)
            starts = np.flatnonzero(np.r_[True, r[1:] != r[:-1]])
            cum = cum - np.repeat(np.r_[0.0, cum[starts[1:] - 1]], np.diff(np.r_[starts, r.size]))
            vals = (cum - cent(ts)) / x_T
            seg_max = np.maximum.reduceat(vals, starts)
            np.maximum.at(sup, r[starts], seg_max)
        return sup > event.c
    if isinstance(event, (JumpCount, DkProxy)):
        if isinstance(event, JumpCount):
            need, thr = event.m, event.r
        else:
            need, thr = event.k + 1, 2.0 * event.r
        rep, t, size = _merge_by_time(rep, t, size)
        big = np.abs(size) / x_T > thr
        return np.bincount(rep[big], minlength=n) >= need
    raise TypeError(f"unsupported event {event!r}")


def _simulate_jump_arrays(config: ExperimentConfig, n_reps: int, rng: np.random.Generator):
    """Flat (rep, scaled time, mark) arrays for n_reps independent replications."""
    counts = rng.poisson(config.lam * config.T, n_reps)
    total = int(counts.sum())
    rep_of_cluster = np.repeat(np.arange(n_reps, dtype=np.int64), counts)
    gammas = rng.random(total) * config.T
    batch = simulate_batch(config.model, total, config.spec, config.wait, rng, config.cap)
    t_abs = gammas[batch.cid] + batch.offset
    keep = t_abs <= config.T
    return (
        rep_of_cluster[batch.cid[keep]],
        t_abs[keep] / config.T,
        batch.mark[keep],
        int(batch.truncated.sum()),
    )


def _crude_chunk(config: ExperimentConfig, chunk_index: int, chunk_size: int, centering: CadlagPath):
    rng = substream(config.seed, "crude", chunk_index)
    rep, t, size, trunc = _simulate_jump_arrays(config, chunk_size, rng)
    hits = _eval_event_chunk(rep, t, size, chunk_size, config.event, centering, config.scaling().x_T)
    return int(hits.sum()), trunc


def _run_tasks(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *t) for t in tasks]
        return [f.result() for f in futures]


def crude_estimate(config: ExperimentConfig) -> Estimate:
    """Plain hit frequency with binomial error."""
    if config.n_reps < 100:
        raise ConfigurationError("crude estimation needs n_reps >= 100")
    centering = centering_curve(config)
    sizes = [CRUDE_CHUNK] * (config.n_reps // CRUDE_CHUNK)
    if config.n_reps % CRUDE_CHUNK:
        sizes.append(config.n_reps % CRUDE_CHUNK)
    tasks = [(config, i, s, centering) for i, s in enumerate(sizes)]
    results = _run_tasks(_crude_chunk, tasks, config.workers)
    hits = sum(r[0] for r in results)
    trunc = sum(r[1] for r in results)
    n = config.n_reps
    p = hits / n
    se = np.sqrt(p * (1.0 - p) / n)
    return _estimate(
        p, se, n, lineage(config.seed, "crude"), {"hits": hits, "truncated_clusters": trunc}
    )


# ---------------------------------------------------------------------------
# exceedance splitting


def _conditional_pool(
    config: ExperimentConfig, rng: np.random.Generator, n_needed: int, u: float, big: bool
):
    """Events of n_needed i.i.d. clusters conditioned on D > u (or D <= u).

    Plain rejection: generate batches, keep qualifying clusters in draw
    order.  Returns flat arrays with cluster ids remapped to 0..n_needed-1.
    """
    got = 0
    cids, offs, marks = [], [], []
    trunc = 0
    tried = 0
    accepted = 0
    while got < n_needed:
        if tried >= 50_000_000 and accepted == 0:
            raise ConfigurationError(
                f"conditioning event D {'>' if big else '<='} {u:.6g} not observed "
                f"in {tried} draws; threshold is outside the reachable range"
            )
        if tried == 0:
            batch_n = max(min(n_needed, 4_000_000), 1024)
        else:
            p_guess = max(accepted / tried, 1e-6)
            batch_n = int(min(4e6, max(1024, 1.2 * (n_needed - got) / p_guess)))
        b = simulate_batch(config.model, batch_n, config.spec, config.wait, rng, config.cap)
        tot = b.totals()
        ok = tot > u if big else tot <= u
        tried += batch_n
        accepted += int(ok.sum())
        take = np.flatnonzero(ok)[: n_needed - got]
        if take.size:
            sel = np.isin(b.cid, take)
            remap = np.full(batch_n, -1, dtype=np.int64)
            remap[take] = got + np.arange(take.size)
            cids.append(remap[b.cid[sel]])
            offs.append(b.offset[sel])
            marks.append(b.mark[sel])
            trunc += int(b.truncated[take].sum())
            got += take.size
    if cids:
        return np.concatenate(cids), np.concatenate(offs), np.concatenate(marks), trunc
    return np.empty(0, np.int64), np.empty(0), np.empty(0), trunc


def _stratum_chunk(
    config: ExperimentConfig,
    m: int,
    chunk_index: int,
    n_reps: int,
    u: float,
    p_big: float,
    centering: CadlagPath,
):
    """Conditional hit count given exactly m big clusters, over n_reps draws."""
    rng = substream(config.seed, "stratum", m, chunk_index)
    small_counts = rng.poisson(config.lam * config.T * (1.0 - p_big), n_reps)
    total_small = int(small_counts.sum())
    s_cid, s_off, s_mark, s_trunc = _conditional_pool(config, rng, total_small, u, big=False)
    rep_small = np.repeat(np.arange(n_reps, dtype=np.int64), small_counts)
    b_cid, b_off, b_mark, b_trunc = _conditional_pool(config, rng, m * n_reps, u, big=True)
    rep_big = np.repeat(np.arange(n_reps, dtype=np.int64), np.full(n_reps, m))

    gam_small = rng.random(total_small) * config.T
    gam_big = rng.random(m * n_reps) * config.T

    rep = np.concatenate([rep_small[s_cid], rep_big[b_cid]]) if m else rep_small[s_cid]
    t_abs = (
        np.concatenate([gam_small[s_cid] + s_off, gam_big[b_cid] + b_off])
        if m
        else gam_small[s_cid] + s_off
    )
    size = np.concatenate([s_mark, b_mark]) if m else s_mark
    keep = t_abs <= config.T
    rep, t, size = rep[keep], t_abs[keep] / config.T, size[keep]
    hits = _eval_event_chunk(rep, t, size, n_reps, config.event, centering, config.scaling().x_T)
    return int(hits.sum()), s_trunc + b_trunc


def _estimate_p_big(config: ExperimentConfig, u: float) -> tuple[float, float, int]:
    """P(D > u) by single-cluster Monte Carlo with the mark-tail control variate."""
    rng = substream(config.seed, "pbig")
    n = config.n_pbig
    raw_hits = 0
    acc = 0.0
    acc2 = 0.0
    done = 0
    while done < n:
        b = min(n - done, 2_000_000)
        batch = simulate_batch(config.model, b, config.spec, config.wait, rng, config.cap, with_offsets=False)
        tot = batch.totals()
        ind_d = tot > u
        ind_x = batch.immigrant_mark > u
        raw_hits += int(ind_d.sum())
        diff = ind_d.astype(float) - ind_x.astype(float)
        acc += float(diff.sum())
        acc2 += float((diff * diff).sum())
        done += b
    if raw_hits == 0:
        raise ConfigurationError(
            f"no cluster reached the splitting threshold {u:.6g}; refusing to extrapolate"
        )
    base = float(config.spec.x_law.tail(u))
    mean_diff = acc / n
    var_diff = max(acc2 / n - mean_diff**2, 0.0)
    p = min(max(mean_diff + base, 1e-300), 1.0)
    se = float(np.sqrt(var_diff / n))
    return p, se, raw_hits


def _poisson_weights(rate: float, m_max: int) -> np.ndarray:
    return stats.poisson.pmf(np.arange(m_max + 1), rate)


def splitting_estimate(config: ExperimentConfig) -> Estimate:
    """Stratified estimator conditioning on the count of big clusters.

    A cluster is big when its total mass exceeds delta * x_T; the big count
    is Poisson(lam T P(D > u)).  Conditional hit probabilities are estimated
    stratum by stratum; strata run to k+2 at least and extend until the
    remaining Poisson tail is negligible, which is closed monotonically with
    the last stratum's estimate (events only gain from extra big clusters).
    """
    u = config.delta * config.scaling().x_T
    if u <= config.spec.x_law.scale:
        raise ConfigurationError(
            f"splitting threshold {u:.6g} must exceed the mark scale {config.spec.x_law.scale}"
        )
    p_big, se_p, raw_hits = _estimate_p_big(config, u)
    rate = config.lam * config.T * p_big
    m_max = max(config.k + 2, int(stats.poisson.ppf(1.0 - 1e-4, rate)))
    m_max = min(m_max, config.k + 2 + 120)
    centering = centering_curve(config)

    tasks = [
        (config, m, 0, config.n_strata, u, p_big, centering) for m in range(m_max + 1)
    ]
    results = _run_tasks(_stratum_chunk, tasks, config.workers)
    p_m = np.array([r[0] / config.n_strata for r in results])
    se_m = np.sqrt(p_m * (1.0 - p_m) / config.n_strata)
    trunc = sum(r[1] for r in results)

    def mixture(r: float) -> float:
        w = _poisson_weights(r, m_max)
        tail = stats.poisson.sf(m_max, r)
        return float(w @ p_m + tail * p_m[-1])

    w = _poisson_weights(rate, m_max)
    tail = float(stats.poisson.sf(m_max, rate))
    value = mixture(rate)
    w_eff = w.copy()
    w_eff[-1] += tail
    var_strata = float(w_eff**2 @ se_m**2)
    h = max(config.lam * config.T * se_p, 1e-12)
    dvalue = (mixture(rate + h) - mixture(max(rate - h, 0.0))) / (2 * h)
    var_rate = (dvalue * config.lam * config.T * se_p) ** 2
    se = float(np.sqrt(var_strata + var_rate))

    detail = {
        "p_big": p_big,
        "p_big_se": se_p,
        "p_big_raw_hits": raw_hits,
        "threshold": u,
        "rate": rate,
        "m_max": m_max,
        "strata": {m: float(p_m[m]) for m in range(m_max + 1)},
        "bias_probe_k_plus_2": float(p_m[min(config.k + 2, m_max)]),
        "neglected_default_truncation": float(stats.poisson.sf(config.k + 2, rate)),
        "tail_closure_prob": tail,
        "tail_bound_width": tail * float(1.0 - p_m[-1]),
        "truncated_clusters": trunc,
    }
    n_total = config.n_strata * (m_max + 1)
    return _estimate(value, se, n_total, lineage(config.seed, "splitting"), detail)


def ldp_ratio(config: ExperimentConfig) -> tuple[Estimate, float]:
    """Normalized probability against the limit mass of the event.

    The event must pin all k+1 limit jumps away from zero; otherwise the
    order-k limit diverges and the run is refused.
    """
    config.validate_strict()
    sep = config.event.dk_separation(config.k)
    if sep is None:
        raise ConfigurationError(
            f"event {config.event!r} is not bounded away from the {config.k}-jump cone: "
            "its order-k limit mass diverges (pick an event forcing k+1 jumps)"
        )
    measure = measure_for_model(config.model, config.spec)
    limit_value = mu_sharp(measure, config.lam, config.k, config.event)
    if limit_value <= 0.0:
        raise ConfigurationError(
            "event has zero limit mass at this order; it lives at a higher k"
        )
    est = splitting_estimate(config) if config.estimator == "splitting" else crude_estimate(config)
    vp = config.scaling().speed_prime(config.spec.x_law) ** (config.k + 1)
    ratio = vp * est.value / limit_value
    se = vp * est.stderr / limit_value
    detail = dict(est.detail)
    detail.update({"probability": est.value, "probability_se": est.stderr, "v_prime_power": vp})
    return _estimate(ratio, se, est.n, est.seed_lineage, detail), limit_value


# ---------------------------------------------------------------------------
# assumption checks


def check_remainder(
    config: ExperimentConfig, T_grid, n_accept_target: int = 4000, max_sims: int = 20_000_000
) -> list[dict]:
    """Conditional probability that post-horizon mass itself crosses x_T.

    For each horizon: P(D_after > x_T | D > x_T) by rejection, with a
    defensive importance mixture on the immigrant mark in comonotone mode.
    """
    rows = []
    for idx, T in enumerate(T_grid):
        x_T = float(T) ** config.eta
        rng = substream(config.seed, "remainder", idx)
        boost = config.spec.dependence == COMONOTONE
        got = 0
        hits = 0
        sims = 0
        wsum = whit = 0.0
        while got < n_accept_target and sims < max_sims:
            b = min(500_000, max_sims - sims)
            if boost:
                acc, hit, w_a, w_h = _remainder_chunk_boosted(config, T, x_T, b, rng)
                wsum += w_a
                whit += w_h
            else:
                acc, hit = _remainder_chunk_plain(config, T, x_T, b, rng)
            got += acc
            hits += hit
            sims += b
        if boost:
            est = whit / wsum if wsum > 0 else np.nan
        else:
            est = hits / got if got else np.nan
        se = float(np.sqrt(est * (1 - est) / got)) if got else np.nan
        rows.append(
            {
                "T": float(T),
                "x_T": x_T,
                "estimate": float(est),
                "stderr": se,
                "n_accepted": int(got),
                "n_simulated": int(sims),
                "low_confidence": bool(got < 100),
            }
        )
    return rows


def _remainder_split(config, T, b, rng, x0=None):
    """Simulate b clusters (optionally with forced immigrant marks) and
    return (total mass, post-horizon mass) with fresh uniform arrivals."""
    if x0 is None:
        x0 = np.asarray(config.spec.x_law.sample(rng, b), dtype=float)
    gam = rng.random(b) * T
    batch = simulate_batch(config.model, b, config.spec, config.wait, rng, config.cap, x0=x0)
    d = batch.totals()
    late = gam[batch.cid] + batch.offset > T
    rem = np.bincount(batch.cid[late], weights=batch.mark[late], minlength=b)
    return d, rem


def _remainder_chunk_plain(config, T, x_T, b, rng):
    d, rem = _remainder_split(config, T, b, rng)
    acc = d > x_T
    return int(acc.sum()), int((acc & (rem > x_T)).sum())


def _remainder_chunk_boosted(config, T, x_T, b, rng):
    """Defensive mixture: half the draws tilt the immigrant mark above the
    level where a comonotone cluster reaches x_T; importance weights keep
    the conditional estimate unbiased."""
    spec = config.spec
    law = spec.x_law
    xq = 0.5 * x_T / (1.0 + spec.k_param * law.mean())
    xq = max(xq, law.scale * 1.0000001)
    pq = float(law.tail(xq))
    tilt = rng.random(b) < 0.5
    u = rng.random(b)
    x0 = np.where(tilt, xq * np.power(1.0 - u, -1.0 / law.alpha), law.quantile(u))
    w = 1.0 / (0.5 + 0.5 * (x0 > xq).astype(float) / pq)
    d, rem = _remainder_split(config, T, b, rng, x0=x0)
    acc = d > x_T
    hit = acc & (rem > x_T)
    return int(acc.sum()), int(hit.sum()), float(w[acc].sum()), float(w[hit].sum())


def check_assumption6(wait: WaitLaw, eta: float, epsilon: float, T_grid) -> tuple[list[dict], str]:
    """Analytic decay of x_T P(W > eps T) along the horizon grid."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    rows = []
    for T in T_grid:
        val = float(T) ** eta * float(wait.law.tail(epsilon * float(T)))
        rows.append({"T": float(T), "value": val})
    vals = [r["value"] for r in rows]
    decreasing = all(b <= a for a, b in zip(vals, vals[1:]))
    verdict = "holds" if decreasing and vals[-1] < 1e-2 else "violated"
    return rows, verdict


def check_tail_equivalence(config: ExperimentConfig, quantile_levels) -> list[dict]:
    """Empirical offspring/mark tails against the cluster-mass tail.

    Simulates config.n_reps clusters and reports, at each empirical
    quantile of the total mass D, the ratios P(K > x)/P(D > x) and
    P(X > x)/P(D > x) next to their closed-form limits.
    """
    for q in quantile_levels:
        if not 0.9 < q < 1.0:
            raise ValueError("quantile levels must lie in (0.9, 1)")
    rng = substream(config.seed, "tails")
    n = config.n_reps
    d_all = np.empty(n)
    k_all = np.empty(n)
    done = 0
    trunc = 0
    while done < n:
        b = min(n - done, 2_000_000)
        batch = simulate_batch(config.model, b, config.spec, config.wait, rng, config.cap, with_offsets=False)
        d_all[done : done + b] = batch.totals()
        if config.model == MB:
            k_all[done : done + b] = batch.sizes() - 1
        else:
            first_gen = batch.generation == 1
            k_all[done : done + b] = np.bincount(batch.cid[first_gen], minlength=b)
        trunc += int(batch.truncated.sum())
        done += b
    measure = measure_for_model(config.model, config.spec)
    law = config.spec.x_law
    alpha = law.alpha
    if config.model == MB:
        if config.spec.dependence == COMONOTONE:
            k_limit = config.spec.k_param**alpha / measure.constant
        else:
            k_limit = 0.0
    else:
        k_limit = config.spec.phi**alpha / measure.constant
    mark_limit = 1.0 / measure.constant
    d_sorted = np.sort(d_all)
    k_sorted = np.sort(k_all)
    rows = []
    for q in quantile_levels:
        x = float(np.quantile(d_sorted, q))
        p_d = float((n - np.searchsorted(d_sorted, x, side="right")) / n)
        p_k = float((n - np.searchsorted(k_sorted, x, side="right")) / n)
        p_x = float(law.tail(x))
        rows.append(
            {
                "level": q,
                "x": x,
                "p_d": p_d,
                "k_over_d": p_k / p_d if p_d else np.nan,
                "k_over_d_limit": k_limit,
                "mark_over_d": p_x / p_d if p_d else np.nan,
                "mark_over_d_limit": mark_limit,
                "truncated_clusters": trunc,
            }
        )
    return rows


def _event_scale(event: PathEvent) -> float:
    """Cluster-mass level (in x_T units) at which the event becomes likely."""
    if isinstance(event, (TerminalExceed, SupExceed)):
        return max(event.c, 1e-6)
    if isinstance(event, ValueAt):
        return max(event.c, 1e-6)
    if isinstance(event, JumpCount):
        return event.r
    if isinstance(event, DkProxy):
        return 2.0 * event.r
    raise TypeError(f"unsupported event {event!r}")


def _big_pool_weighted(config: ExperimentConfig, rng: np.random.Generator, n_needed: int, u: float):
    """Clusters conditioned on D > u with importance weights.

    Half the proposals tilt the immigrant mark above the level at which a
    cluster's asymptotic mass multiplier reaches u; the defensive untilted
    half keeps the mixture unbiased for every hit route.
    """
    law = config.spec.x_law
    spec = config.spec
    if not law.heavy:
        cid, off, mark, _ = _conditional_pool(config, rng, n_needed, u, big=True)
        return cid, off, mark, np.ones(n_needed)
    if config.model == HAWKES:
        mult = 1.0 + spec.phi * law.mean() / (1.0 - spec.mean_fertility)
        target = u / mult
    elif spec.dependence == COMONOTONE:
        target = u / (1.0 + spec.k_param * law.mean())
    else:
        target = u - spec.mean_offspring() * law.mean()
    xq = max(0.7 * target, law.scale * 1.0000001)
    pq = float(law.tail(xq))
    got = 0
    cids, offs, marks = [], [], []
    weights = np.empty(n_needed)
    tried = 0
    accepted = 0
    while got < n_needed:
        if tried >= 50_000_000 and accepted == 0:
            raise ConfigurationError(
                f"conditioning event D > {u:.6g} not observed in {tried} draws"
            )
        if tried == 0:
            batch_n = max(4 * n_needed, 1024)
        else:
            rate = max(accepted / tried, 1e-6)
            batch_n = int(min(4e6, max(1024, 1.2 * (n_needed - got) / rate)))
        uu = rng.random(batch_n)
        tilt = rng.random(batch_n) < 0.5
        x0 = np.where(tilt, xq * np.power(1.0 - uu, -1.0 / law.alpha), law.quantile(uu))
        w = 1.0 / (0.5 + 0.5 * (x0 > xq).astype(float) / pq)
        b = simulate_batch(config.model, batch_n, spec, config.wait, rng, config.cap, x0=x0)
        ok = b.totals() > u
        tried += batch_n
        accepted += int(ok.sum())
        take = np.flatnonzero(ok)[: n_needed - got]
        if take.size:
            sel = np.isin(b.cid, take)
            remap = np.full(batch_n, -1, dtype=np.int64)
            remap[take] = got + np.arange(take.size)
            cids.append(remap[b.cid[sel]])
            offs.append(b.offset[sel])
            marks.append(b.mark[sel])
            weights[got : got + take.size] = w[take]
            got += take.size
    return np.concatenate(cids), np.concatenate(offs), np.concatenate(marks), weights


def _weighted_quantile(values: np.ndarray, weights: np.ndarray, q: float) -> float:
    order = np.argsort(values)
    v, w = values[order], weights[order]
    cum = np.cumsum(w)
    cum /= cum[-1]
    return float(v[np.searchsorted(cum, q, side="left")])


def big_jump_anatomy(config: ExperimentConfig, event: PathEvent | None = None) -> dict:
    """Structure of conditioned hit paths: share of the top k+1 jumps in the
    total uncentered mass, and the spread of their times.

    Samples the dominant scenario (exactly k+1 clusters conditioned above
    the event scale, plus an unconditional-rate background), filters to
    actual hits, and reports importance-weighted distribution summaries.
    """
    if event is not None:
        config = replace(config, event=event)
    sep = config.event.dk_separation(config.k)
    if sep is None:
        raise ConfigurationError("event must imply a jump-count proxy at this order")
    x_T = config.scaling().x_T
    u = 0.8 * _event_scale(config.event) * x_T
    rng = substream(config.seed, "anatomy")
    if not config.spec.x_law.heavy:
        # bounded-support models: keep the conditioning level reachable
        pilot = simulate_batch(
            config.model, 20_000, config.spec, config.wait, rng, config.cap, with_offsets=False
        ).totals()
        u = min(u, float(np.quantile(pilot, 0.995)) * (1.0 - 1e-9))
        u = max(u, float(pilot.min()) * (1.0 - 1e-9))
    centering = centering_curve(config)
    m = config.k + 1
    n = config.n_strata

    # unconditional background at the full rate; the forced big clusters carry
    # the event, so double-counting mass above u is immaterial here
    small_counts = rng.poisson(config.lam * config.T, n)
    total_small = int(small_counts.sum())
    rep_small = np.repeat(np.arange(n, dtype=np.int64), small_counts)
    bg = simulate_batch(config.model, total_small, config.spec, config.wait, rng, config.cap)
    s_cid, s_off, s_mark = bg.cid, bg.offset, bg.mark
    b_cid, b_off, b_mark, b_w = _big_pool_weighted(config, rng, m * n, u)
    rep_big = np.repeat(np.arange(n, dtype=np.int64), np.full(n, m))
    rep_weight = np.prod(b_w.reshape(n, m), axis=1)

    rep = np.concatenate([rep_small[s_cid], rep_big[b_cid]])
    gam_small = rng.random(total_small) * config.T
    gam_big = rng.random(m * n) * config.T
    t_abs = np.concatenate([gam_small[s_cid] + s_off, gam_big[b_cid] + b_off])
    size = np.concatenate([s_mark, b_mark])
    keep = t_abs <= config.T
    rep, t, size = rep[keep], t_abs[keep] / config.T, size[keep]
    hits = _eval_event_chunk(rep, t, size, n, config.event, centering, x_T)
    hit_ids = np.flatnonzero(hits)

    order = np.lexsort((t, rep))
    rep_s, t_s, size_s = rep[order], t[order], size[order]
    bounds = np.searchsorted(rep_s, np.arange(n + 1))
    shares, top1, spreads, wts = [], [], [], []
    for rid in hit_ids:
        lo, hi = bounds[rid], bounds[rid + 1]
        sizes = size_s[lo:hi]
        times = t_s[lo:hi]
        if sizes.size == 0:
            continue
        total = float(sizes.sum())
        top_idx = np.argsort(sizes)[::-1][: config.k + 1]
        shares.append(float(sizes[top_idx].sum()) / total)
        top1.append(float(sizes.max()) / total)
        spreads.append(float(times[top_idx].max() - times[top_idx].min()))
        wts.append(rep_weight[rid])
    shares = np.asarray(shares)
    top1 = np.asarray(top1)
    spreads = np.asarray(spreads)
    wts = np.asarray(wts)
    if shares.size:
        summary = {
            "median_top_share": _weighted_quantile(shares, wts, 0.5),
            "q10_top_share": _weighted_quantile(shares, wts, 0.1),
            "q90_top_share": _weighted_quantile(shares, wts, 0.9),
            "median_top1_share": _weighted_quantile(top1, wts, 0.5),
            "median_time_spread": _weighted_quantile(spreads, wts, 0.5),
        }
    else:
        summary = {
            "median_top_share": np.nan,
            "q10_top_share": np.nan,
            "q90_top_share": np.nan,
            "median_top1_share": np.nan,
            "median_time_spread": np.nan,
        }
    summary["n_hits"] = int(hit_ids.size)
    summary["conditioning_threshold"] = u
    summary["seed_lineage"] = lineage(config.seed, "anatomy")
    return summary
