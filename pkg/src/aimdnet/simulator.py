"""Exact stochastic simulation of AIMD flows.

Between losses every throughput grows linearly; a class-``k`` flow with
throughput ``w`` is hit at rate ``w * beta_k(u)`` and drops to ``r_k * w``.

Two engines:

* inversion, when every loss rate is constant: flows are independent and the
  time to the next loss solves ``beta (w t + a t^2 / 2) = E``, E ~ Exp(1);
* thinning, for interacting flows: over a window of length ``dt`` each flow's
  rate is bounded by ``(w + a dt) * beta_k(u + g dt)`` where ``g`` is the
  fastest possible load growth. Loads only fall at loss events and loss rates
  are non-decreasing, so the bound holds on the whole window.

Every flow owns a random stream keyed by ``(seed, class, index)``, so adding
flows does not change the draws of the others.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import stats

from .equilibrium import StationaryLaw
from .model import NetworkModel, check_model


@dataclass(frozen=True)
class SimOptions:
    horizon: float = 200.0
    warmup_fraction: float = 0.5
    seed: int = 0
    window: float | None = None       # fixed thinning window; None tunes it per window
    particles_per_class: int = 1000
    sample_interval: float = 1.0
    n_batches: int = 10
    bins: int = 200
    w0: float = 1.0                   # initial throughput of every flow
    max_ratio: float = 1.1            # target aggregate bound / true rate
    engine: str = "auto"              # auto | thinning | inversion
    record_events: bool = False

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if not 0 <= self.warmup_fraction < 1:
            raise ValueError("warmup_fraction must lie in [0, 1)")
        if self.particles_per_class < 1:
            raise ValueError("particles_per_class must be at least 1")
        if not self.sample_interval > 0:
            raise ValueError("sample_interval must be positive")
        if self.n_batches < 2:
            raise ValueError("need at least two batches for standard errors")
        if self.window is not None and not self.window > 0:
            raise ValueError("window must be positive")
        if not self.max_ratio > 1:
            raise ValueError("max_ratio must exceed 1")
        if self.engine not in ("auto", "thinning", "inversion"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.w0 < 0:
            raise ValueError("w0 must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SimulationSummary:
    """Time averages over ``[warmup_fraction * horizon, horizon]``.

    ``histograms[k]`` is ``(edges, masses)``; the last bin also holds the
    tail beyond the grid. ``standard_errors`` are batch-means estimates.
    """

    u_bar: np.ndarray
    class_means: np.ndarray
    histograms: list
    event_count: int
    candidate_count: int
    thinning_efficiency: float
    standard_errors: dict
    batch_means: dict
    metadata: dict = field(default_factory=dict)
    samples: dict | None = None
    events: list | None = None

    def to_dict(self) -> dict:
        return {
            "u_bar": self.u_bar.tolist(),
            "class_means": self.class_means.tolist(),
            "event_count": self.event_count,
            "candidate_count": self.candidate_count,
            "thinning_efficiency": self.thinning_efficiency,
            "standard_errors": {k: v.tolist() for k, v in self.standard_errors.items()},
            "batch_means": {k: v.tolist() for k, v in self.batch_means.items()},
            "histograms": [{"edges": e.tolist(), "masses": m.tolist()} for e, m in self.histograms],
            "metadata": self.metadata,
        }


EVENT_COLUMNS = ("time", "class", "particle", "w_before", "w_after")


def write_event_log(events, path) -> None:
    """CSV with columns ``time, class, particle, w_before, w_after``."""
    with open(path, "w") as fh:
        fh.write(",".join(EVENT_COLUMNS) + "\n")
        for t, k, n, wb, wa in events:
            fh.write(f"{t:.17g},{k},{n},{wb:.17g},{wa:.17g}\n")


class ParticleStreams:
    """One independent uniform stream per flow, read through a small buffer."""

    def __init__(self, seed: int, keys, block: int = 64):
        self.gens = [np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))
                     for key in keys]
        self.block = block
        self.buf = [g.random(block).tolist() for g in self.gens]
        self.pos = [0] * len(self.gens)

    def uniform(self, i: int) -> float:
        p = self.pos[i]
        if p == self.block:
            self.buf[i] = self.gens[i].random(self.block).tolist()
            p = 0
        self.pos[i] = p + 1
        return self.buf[i][p]

    def exponential(self, i: int) -> float:
        return -math.log1p(-self.uniform(i))


def particle_stream(seed: int, k: int, n: int) -> np.random.Generator:
    """The generator owned by flow ``n`` of class ``k``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(k, n))))


# ---------------------------------------------------------------------------
# time grids and statistics

def _batch_edges(opts: SimOptions) -> np.ndarray:
    t_w = opts.warmup_fraction * opts.horizon
    return np.linspace(t_w, opts.horizon, opts.n_batches + 1)


def _sample_times(opts: SimOptions) -> np.ndarray:
    t_w = opts.warmup_fraction * opts.horizon
    n = int(math.floor((opts.horizon - t_w) / opts.sample_interval + 1e-9))
    return t_w + opts.sample_interval * np.arange(1, n + 1)


def _se(batches: np.ndarray) -> np.ndarray:
    return batches.std(axis=0, ddof=1) / math.sqrt(batches.shape[0])


def trend_pvalue(batch_means) -> float:
    """p-value of a linear trend across consecutive batch means."""
    y = np.asarray(batch_means, dtype=float)
    if np.ptp(y) == 0:
        return 1.0
    return float(stats.linregress(np.arange(len(y)), y).pvalue)


def chisquare_stationary(samples, r: float, rho: float, bins: int = 40):
    """Chi-square goodness of fit of ``samples`` against the stationary law,
    on ``bins`` equiprobable cells. Returns ``(statistic, pvalue)``."""
    law = StationaryLaw(r, rho)
    inner = law.ppf(np.arange(1, bins) / bins)
    counts = np.bincount(np.searchsorted(inner, np.asarray(samples)), minlength=bins)
    res = stats.chisquare(counts)
    return float(res.statistic), float(res.pvalue)


def _segments_integral(starts, ends, w_starts, a, lo, hi) -> float:
    """Integral over ``[lo, hi]`` of a path that is ``w_s + a (t - s)`` on each segment."""
    s = np.maximum(starts, lo)
    e = np.minimum(ends, hi)
    keep = e > s
    s, e = s[keep], e[keep]
    base = w_starts[keep] + a * (s - starts[keep])
    return float(np.sum(base * (e - s) + 0.5 * a * (e - s) ** 2))


def _occupation(lo_w: np.ndarray, hi_w: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``sum_seg |[lo_w, hi_w] & [0, x]|`` for every ``x``, via sorted prefix sums."""

    def ramp(v):
        v = np.sort(v)
        csum = np.concatenate([[0.0], np.cumsum(v)])
        cnt = np.searchsorted(v, x, side="right")
        return cnt * x - csum[cnt]

    return ramp(lo_w) - ramp(hi_w)


def _histogram_from_path(starts, ends, w_starts, a, lo, hi, n_bins):
    """Time-weighted occupation histogram of a piecewise-linear path."""
    s = np.maximum(starts, lo)
    e = np.minimum(ends, hi)
    keep = e > s
    w_lo = w_starts[keep] + a * (s[keep] - starts[keep])
    w_hi = w_lo + a * (e[keep] - s[keep])
    top = float(np.quantile(np.concatenate([w_lo, w_hi]), 0.999)) if w_lo.size else 1.0
    edges = np.linspace(0.0, max(top, 1e-12), n_bins + 1)
    if a > 0:
        occ = _occupation(w_lo, w_hi, edges) / a
        total = float(np.sum(e[keep] - s[keep]))
        masses = np.diff(occ)
        masses[-1] += total - occ[-1]
    else:
        masses = np.histogram(np.clip(w_lo, 0, edges[-1]), edges, weights=e[keep] - s[keep])[0]
        total = masses.sum()
    return edges, masses / max(total, 1e-300)


# ---------------------------------------------------------------------------
# inversion engine (independent flows)

def _inversion_path(a, beta, r, w0, horizon, streams, i, record):
    times, w_after, w_before = [], [], []
    t, w = 0.0, w0
    if beta > 0:
        two_over_beta = 2.0 / beta
        while True:
            c = two_over_beta * streams.exponential(i)
            tau = c / (w + math.sqrt(w * w + a * c))
            if t + tau > horizon:
                break
            t += tau
            wb = w + a * tau
            w = r * wb
            times.append(t)
            w_after.append(w)
            if record:
                w_before.append(wb)
    return times, w_after, w_before


def _run_inversion(a_k, beta_k, r_k, counts, scale_k, A, opts, keys):
    K = len(counts)
    streams = ParticleStreams(opts.seed, keys)
    batch = _batch_edges(opts)
    tsamp = _sample_times(opts)
    B = len(batch) - 1
    class_batches = np.zeros((B, K))
    samples = {k: [] for k in range(K)}
    hists = []
    events = [] if opts.record_events else None
    n_events = 0
    i = 0
    for k in range(K):
        integ = np.zeros(B)
        paths = []
        for n in range(counts[k]):
            times, w_after, w_before = _inversion_path(a_k[k], beta_k[k], r_k[k], opts.w0,
                                                       opts.horizon, streams, i, opts.record_events)
            n_events += len(times)
            starts = np.array([0.0] + times)
            ends = np.array(times + [opts.horizon])
            w_starts = np.array([opts.w0] + w_after)
            for b in range(B):
                integ[b] += _segments_integral(starts, ends, w_starts, a_k[k], batch[b], batch[b + 1])
            idx = np.searchsorted(starts, tsamp, side="right") - 1
            samples[k].append(w_starts[idx] + a_k[k] * (tsamp - starts[idx]))
            paths.append((starts, ends, w_starts))
            if events is not None:
                events.extend(zip(times, [k] * len(times), [n] * len(times), w_before, w_after))
            i += 1
        class_batches[:, k] = integ / np.diff(batch) / counts[k]
        st = np.concatenate([p[0] for p in paths])
        en = np.concatenate([p[1] for p in paths])
        ws = np.concatenate([p[2] for p in paths])
        hists.append(_histogram_from_path(st, en, ws, a_k[k], batch[0], batch[-1], opts.bins))
        samples[k] = np.concatenate(samples[k]) if samples[k] else np.zeros(0)
    if events is not None:
        events.sort(key=lambda e: (e[0], e[1], e[2]))
    return class_batches, hists, samples, n_events, n_events, events, {"engine": "inversion"}


# ---------------------------------------------------------------------------
# thinning engine (interacting flows)

def _run_thinning(model: NetworkModel, counts, scale_k, opts: SimOptions, keys):
    K, J = model.K, model.J
    A = model.A
    a_k = model.a
    r_k = model.r
    loss = model.loss
    P = int(sum(counts))
    cls = np.repeat(np.arange(K), counts)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    a_p = a_k[cls]
    cls_l = cls.tolist()
    a_l = a_p.tolist()
    r_l = r_k[cls].tolist()
    counts_arr = np.asarray(counts, dtype=float)
    # u(t) = C @ S(t) with S the class throughput sums
    C = A * np.asarray(scale_k)[None, :]
    growth = C @ (counts_arr * a_k)
    C_rows = [[(m, C[j, m]) for m in range(K) if C[j, m] != 0] for j in range(J)]

    streams = ParticleStreams(opts.seed, keys)
    clock = np.array([streams.exponential(i) for i in range(P)])

    wb = np.full(P, float(opts.w0))
    tb = np.zeros(P)
    S = np.array([wb[offsets[k]:offsets[k + 1]].sum() for k in range(K)])

    t_w = opts.warmup_fraction * opts.horizon
    batch = _batch_edges(opts)
    B = len(batch) - 1
    tsamp = _sample_times(opts)
    boundaries = np.unique(np.concatenate([[t_w], batch, tsamp, [opts.horizon]]))
    boundaries = boundaries[boundaries > 0]
    class_int = np.zeros((B, K))
    snapshots = []
    pilot = None
    events = [] if opts.record_events else None
    n_events = n_cand = 0
    max_violation = 0.0
    ratio_num = ratio_den = 0.0
    n_windows = 0
    t0 = 0.0
    bi = 0

    def betas_at(u):
        ul = u.tolist()
        return np.array([spec(ul) for spec in loss])

    while t0 < opts.horizon:
        while bi < len(boundaries) and boundaries[bi] <= t0 + 1e-12:
            bi += 1
        next_boundary = boundaries[bi] if bi < len(boundaries) else opts.horizon
        u0 = C @ S
        if not np.all(np.isfinite(u0)) or np.any(u0 > 1e300):
            raise FloatingPointError(f"node load overflow at t={t0}")
        beta0 = betas_at(u0)
        if opts.window is not None:
            dt = opts.window
        else:
            means = S / counts_arr
            room = opts.max_ratio ** 0.5 - 1.0
            dt = float(np.min(room * np.maximum(means, 1e-3 * a_k) / a_k))
            for _ in range(60):
                if np.all(betas_at(u0 + growth * dt) <= (1.0 + room) * beta0 + 1e-300):
                    break
                dt *= 0.5
        dt = max(min(dt, next_boundary - t0), 1e-12)
        t1 = t0 + dt
        beta_ub = betas_at(u0 + growth * dt)
        w_now = wb + a_p * (t0 - tb)
        wb, tb = w_now, np.full(P, t0)
        bound = (w_now + a_p * dt) * beta_ub[cls]
        ratio_num += float(bound.sum()) * dt
        ratio_den += float((w_now * beta0[cls]).sum()) * dt
        with np.errstate(divide="ignore"):
            cand = np.where(bound > 0, t0 + clock / bound, np.inf)
        hits = np.flatnonzero(cand < t1)
        heap = [(cand[i], i) for i in hits.tolist()]
        heapq.heapify(heap)
        wb_l = wb.tolist()
        tb_l = tb.tolist()
        bound_l = bound.tolist()
        S_l = S.tolist()
        drop = [0.0] * K          # total throughput removed per class in this window
        late = [0.0] * K          # sum of drop * (t1 - tau), for the time integral
        next_cand = {}
        while heap:
            t, i = heapq.heappop(heap)
            n_cand += 1
            k = cls_l[i]
            w = wb_l[i] + a_l[i] * (t - tb_l[i])
            el = t - t0
            ul = [0.0] * J
            for j in model.routes[k]:
                ul[j] = sum(c * (S_l[m] + counts[m] * a_k[m] * el - drop[m]) for m, c in C_rows[j])
            rate = w * loss[k](ul)
            bnd = bound_l[i]
            if rate > bnd:
                max_violation = max(max_violation, rate / bnd - 1.0)
                if rate > bnd * (1.0 + 1e-9):
                    raise AssertionError(f"thinning bound violated at t={t}: rate {rate} > {bnd}")
            if streams.uniform(i) * bnd <= rate:
                w_new = r_l[i] * w
                jump = w - w_new
                drop[k] += jump
                late[k] += jump * (t1 - t)
                wb_l[i] = w_new
                tb_l[i] = t
                n_events += 1
                if events is not None:
                    events.append((t, k, i - int(offsets[k]), w, w_new))
            nt = t + streams.exponential(i) / bnd
            if nt < t1:
                heapq.heappush(heap, (nt, i))
            else:
                next_cand[i] = nt
        # carry unused clock mass into the next window
        touched = np.array(list(next_cand.keys()), dtype=int)
        if touched.size:
            cand[touched] = np.array(list(next_cand.values()))
        with np.errstate(invalid="ignore"):
            clock = np.where(bound > 0, (cand - t1) * bound, clock)
        wb = np.array(wb_l)
        tb = np.array(tb_l)
        S_end = S + counts_arr * a_k * dt - np.array(drop)
        if t0 >= t_w - 1e-12:
            b = min(int(np.searchsorted(batch, t0, side="right")) - 1, B - 1)
            class_int[b] += S * dt + 0.5 * counts_arr * a_k * dt * dt - np.array(late)
        S = S_end
        t0 = t1
        n_windows += 1
        if pilot is None and t0 >= t_w - 1e-12:
            pilot = wb + a_p * (t0 - tb)
        if len(snapshots) < len(tsamp) and abs(t0 - tsamp[len(snapshots)]) < 1e-9:
            snapshots.append(wb + a_p * (t0 - tb))

    # resync the sums to remove accumulated rounding before reporting
    class_batches = class_int / np.diff(batch)[:, None] / counts_arr[None, :]
    snaps = np.array(snapshots) if snapshots else np.zeros((0, P))
    if pilot is None:
        pilot = wb + a_p * (opts.horizon - tb)
    hists, samples = [], {}
    for k in range(K):
        sl = slice(offsets[k], offsets[k + 1])
        top = float(np.quantile(pilot[sl], 0.999)) if counts[k] > 1 else float(pilot[sl].max())
        top = max(top, 1e-12)
        edges = np.linspace(0.0, top, opts.bins + 1)
        vals = snaps[:, sl].ravel()
        samples[k] = vals
        masses = np.histogram(np.clip(vals, 0.0, top), edges)[0].astype(float)
        hists.append((edges, masses / max(masses.sum(), 1.0)))
    if events is not None:
        events.sort(key=lambda e: (e[0], e[1], e[2]))
    meta = {
        "engine": "thinning",
        "windows": n_windows,
        "bound_to_rate_ratio": ratio_num / ratio_den if ratio_den > 0 else math.inf,
        "max_bound_violation": max_violation,
    }
    return class_batches, hists, samples, n_events, n_cand, events, meta


# ---------------------------------------------------------------------------
# public entry points

def _summarize(model_A, scale_k, class_batches, hists, samples, n_events, n_cand, events,
               meta, opts, counts, extra_meta):
    A = np.asarray(model_A)
    counts_arr = np.asarray(counts, dtype=float)
    # class_batches holds per-flow means; loads weight the class sums
    u_batches = class_batches @ (A * (np.asarray(scale_k) * counts_arr)[None, :]).T
    class_means = class_batches.mean(axis=0)
    u_bar = u_batches.mean(axis=0)
    se = {"u_bar": _se(u_batches), "class_means": _se(class_batches)}
    bm = {"u_bar": u_batches, "class_means": class_batches}
    meta = dict(meta)
    meta.update(extra_meta)
    meta.update({
        "options": opts.to_dict(),
        "warmup_start": opts.warmup_fraction * opts.horizon,
        "histogram_grid": "uniform bins on [0, q99.9]; the last bin holds the tail",
        "trend_pvalues": {
            "u_bar": [trend_pvalue(u_batches[:, j]) for j in range(u_batches.shape[1])],
            "class_means": [trend_pvalue(class_batches[:, k]) for k in range(class_batches.shape[1])],
        },
    })
    eff = n_events / n_cand if n_cand else 1.0
    return SimulationSummary(u_bar, class_means, hists, n_events, n_cand, eff, se, bm, meta,
                             samples, events)


def _engine(model: NetworkModel, opts: SimOptions) -> str:
    constant = all(s.kind == "constant" for s in model.loss)
    if opts.engine == "inversion" and not constant:
        raise ValueError("the inversion engine needs constant loss rates")
    if opts.engine == "auto":
        return "inversion" if constant else "thinning"
    return opts.engine


def _run(model, counts, scale_k, opts, extra_meta):
    keys = [(k, n) for k in range(model.K) for n in range(counts[k])]
    if _engine(model, opts) == "inversion":
        out = _run_inversion(model.a, model.delta, model.r, counts, scale_k, model.A, opts, keys)
    else:
        out = _run_thinning(model, counts, scale_k, opts, keys)
    return _summarize(model.A, scale_k, *out, opts, counts, extra_meta)


def simulate_single(a: float, beta: float, r: float, w0: float = 0.0,
                    opts: SimOptions | None = None) -> SimulationSummary:
    """One isolated flow with constant loss-rate coefficient ``beta``.

    ``beta = 0`` gives the deterministic ramp ``w0 + a t``.
    """
    opts = replace(opts or SimOptions(), w0=float(w0))
    if not a > 0:
        raise ValueError("a must be positive")
    if not beta >= 0:
        raise ValueError("beta must be nonnegative")
    if not 0 <= r < 1:
        raise ValueError("r must lie in [0, 1)")
    out = _run_inversion(np.array([float(a)]), np.array([float(beta)]), np.array([float(r)]),
                         [1], [1.0], np.ones((1, 1)), opts, [(0, 0)])
    return _summarize(np.ones((1, 1)), [1.0], *out, opts, [1], {"mode": "single"})


def simulate_particles(model: NetworkModel, opts: SimOptions | None = None) -> SimulationSummary:
    """Mean-field particle system: ``M`` flows per class, node loads
    ``u_j = sum_k A_jk p_k * (mean class-k throughput)``."""
    opts = opts or SimOptions()
    check_model(model)
    M = opts.particles_per_class
    counts = [M] * model.K
    scale = model.p / M
    return _run(model, counts, scale, opts, {"mode": "particles"})


def simulate_finite(model: NetworkModel, counts, opts: SimOptions | None = None,
                    scaled_load: bool = False) -> SimulationSummary:
    """Finite system with ``counts[k]`` flows in class ``k`` and raw loads
    ``u_j = sum_k A_jk sum_n w_nk``.

    With ``scaled_load=True`` the loss rates see ``u / |N|``. Either way the
    metadata reports ``u_bar / |N|``, which is the mean-field load for
    ``p_k = N_k / |N|``.
    """
    opts = opts or SimOptions()
    check_model(model)
    counts = [int(c) for c in counts]
    if len(counts) != model.K or min(counts) < 1:
        raise ValueError("counts must give at least one flow per class")
    total = sum(counts)
    scale = np.full(model.K, 1.0 / total if scaled_load else 1.0)
    summary = _run(model, counts, scale, opts, {"mode": "finite", "counts": counts,
                                                "scaled_load": scaled_load})
    raw = summary.u_bar if not scaled_load else summary.u_bar * total
    summary.metadata["u_raw"] = raw.tolist()
    summary.metadata["u_per_connection"] = (raw / total).tolist()
    summary.metadata["load_scaling"] = ("u_per_connection = raw load / |N|, comparable to the "
                                        "mean-field load with p_k = N_k / |N|")
    return summary
