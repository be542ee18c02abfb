"""Experiment pipelines shared by the command line and the scripts."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import _kernels as K
from .interface import Interface, extract_interface
from .ising import (
    ALWAYS,
    Chain,
    Event,
    SamplerParams,
    SpinConfig,
    a_h,
    cuts_at_least,
    enumerate_exact,
)
from .lattice import Coord, Region
from .maps import (
    MapError,
    MapParams,
    MapReport,
    spine_state,
    verify_straighten_base,
    verify_swap_tails,
    verify_swap_windows,
    verify_trivialize,
)
from .pillar import SpineParams, base_spine_split, event_a_h, extract_pillar, is_tame
from .stats import (
    OBSERVABLES,
    alpha_from_splitting,
    effective_sample_size,
    increment_bin,
    max_height,
    splitting_estimate,
)


def parallel_map(fn: Callable, items: Sequence, threads: int = 1) -> list:
    """Ordered map, in worker processes when threads > 1."""
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# -- per-snapshot records ----------------------------------------------------

@dataclass(frozen=True)
class PillarRecord:
    height: int
    n_increments: int
    tau: int
    obs: np.ndarray  # (n_increments, 6): f1, f2, f3, fV, fA, m
    base_diameter: float
    source_height: float
    spine_excess: int
    tame: bool

    def spine_obs(self, T: int) -> np.ndarray:
        """Observables of spine increments among indices 1..T."""
        return self.obs[self.tau - 1:T]

    def table(self, T: int) -> np.ndarray:
        """(T, 6) observables of increments 1..T with base increments set to nan."""
        out = np.full((T, len(OBSERVABLES)), np.nan)
        k = min(T, self.n_increments)
        out[:k] = self.obs[:k]
        out[:self.tau - 1] = np.nan
        return out

    def bins(self, T: int) -> np.ndarray:
        o = self.obs[:T]
        return np.array([increment_bin(int(r[5]), int(r[2])) for r in o])


def pillar_record(cfg: SpinConfig, x: Coord, T: int, sp: SpineParams = SpineParams()) -> PillarRecord:
    I = extract_interface(cfg)
    P = extract_pillar(I, x)
    dec = base_spine_split(I, x, T, sp, P)
    incs = P.increments()[0]
    obs = np.array([X.observables() for X in incs], dtype=float).reshape(-1, len(OBSERVABLES))
    return PillarRecord(P.height, len(incs), dec.tau, obs, dec.base_diameter(), dec.v[2] / 2,
                        dec.spine_excess, is_tame(dec, T, sp.r0))


# -- oracle comparison -------------------------------------------------------

@dataclass(frozen=True)
class OracleRow:
    beta: float
    quantity: str
    exact: float
    estimate: float
    sigma: float

    @property
    def zscore(self) -> float:
        return (self.estimate - self.exact) / self.sigma if self.sigma > 0 else 0.0


def oracle_comparison(region: Region, beta: float, x: Coord, sweeps: int, seed: int,
                      burn_in: int = 100, dynamics: str = "heat-bath") -> tuple[list[OracleRow], float]:
    table, _ = enumerate_exact(region, beta, x=x)
    exact = {"P(hgt>=1)": table.prob_hgt_at_least(1), "P(A_1)": table.prob_a_h(1),
             "E[m]": table.mean_excess_area()}
    p = SamplerParams(region, beta, sweeps, seed, burn_in=burn_in, dynamics=dynamics)
    flat = len(region.l0_faces())
    pi, pj, _ = region.cell_index((x[0], x[1], 1))
    hgt, a1, m = [], [], []
    for snap in Chain(p).run():
        P = snap.cfg.padded()
        M = K.interface_grid(P, region.k0)
        S = K.two_phase(M, region.shape, region.k0)
        mask = K.plus_cluster(S, pi + 1, pj + 1, region.k0 + 1, S.shape[2])
        hgt.append(mask.any())
        a1.append(K.event_a_h(P, pi + 1, pj + 1, region.k0, 1)[0])
        m.append(int(M.sum()) - flat)
    rows = []
    for name, series in (("P(hgt>=1)", hgt), ("P(A_1)", a1), ("E[m]", m)):
        s = np.asarray(series, dtype=float)
        ess = effective_sample_size(s) if s.std() > 0 else len(s)
        rows.append(OracleRow(beta, name, exact[name], float(s.mean()), float(s.std(ddof=1) / math.sqrt(ess))))
    return rows, table.normalization_error


# -- height tails by level splitting -----------------------------------------

@dataclass(frozen=True)
class TailTask:
    region: Region
    beta: float
    x: Coord
    level: int  # chain restricted to A_level (0 = unrestricted)
    sweeps: int
    burn_in: int
    thin: int
    seed: int


def _tail_stage(t: TailTask) -> np.ndarray:
    ev = a_h(t.x, t.level) if t.level > 0 else None
    p = SamplerParams(t.region, t.beta, t.sweeps, t.seed, burn_in=t.burn_in, thin=t.thin, chain=t.level)
    ch = Chain(p, event=ev)
    r = t.region
    pi, pj, _ = r.cell_index((t.x[0], t.x[1], 1))
    hits = []
    for _ in ch.run():
        hits.append(bool(K.event_a_h(ch.P, pi + 1, pj + 1, r.k0, t.level + 1)[0]))
    return np.array(hits)


@dataclass(frozen=True)
class TailResult:
    beta: float
    levels: np.ndarray
    log_p: np.ndarray
    log_se: np.ndarray
    ratios: np.ndarray
    ratio_ess: np.ndarray
    alpha: float
    alpha_se: float


def height_tail_splitting(region: Region, beta: float, levels: int, sweeps: int, seed: int,
                          burn_in: int = 100, thin: int = 1, x: Optional[Coord] = None,
                          threads: int = 1) -> TailResult:
    """P(A_h), h = 1..levels, as a product of conditional crossing fractions."""
    x = region.center_face() if x is None else x
    tasks = [TailTask(region, beta, x, k, sweeps, burn_in, thin, seed) for k in range(levels)]
    stages = parallel_map(_tail_stage, tasks, threads)
    est = splitting_estimate(stages)
    al = alpha_from_splitting(est)
    return TailResult(beta, est.levels, est.log_p, est.log_se, est.ratios, est.ratio_ess, al.alpha, al.se)


def pillar_heights(region: Region, beta: float, sweeps: int, seed: int, burn_in: int = 100,
                   thin: int = 1, x: Optional[Coord] = None) -> np.ndarray:
    """hgt(P_x) along an unrestricted chain (empty pillars count as 0)."""
    x = region.center_face() if x is None else x
    pi, pj, _ = region.cell_index((x[0], x[1], 1))
    p = SamplerParams(region, beta, sweeps, seed, burn_in=burn_in, thin=thin)
    ch = Chain(p)
    out = []
    for _ in ch.run():
        mask, _ = K.pillar_mask(ch.P, pi + 1, pj + 1, region.k0)
        out.append(K.pillar_top(K.slab_counts(mask, region.k0)))
    return np.array(out)


# -- maxima ------------------------------------------------------------------

@dataclass(frozen=True)
class MaxTask:
    n: int
    h: int
    beta: float
    snapshots: int
    burn_in: int
    thin: int
    seed: int


def _max_series(t: MaxTask) -> np.ndarray:
    region = Region.box(t.n, t.n, t.h)
    p = SamplerParams(region, t.beta, t.snapshots * t.thin, t.seed, burn_in=t.burn_in, thin=t.thin,
                      chain=t.n)
    return np.array([max_height(s.cfg) for s in Chain(p).run()])


def maxima(ns: Sequence[int], h: int, beta: float, snapshots: int, seed: int, burn_in: int = 200,
           thin: int = 10, threads: int = 1) -> dict:
    tasks = [MaxTask(n, h, beta, snapshots, burn_in, thin, seed) for n in ns]
    return dict(zip(ns, parallel_map(_max_series, tasks, threads)))


# -- conditioned pillar samples ----------------------------------------------

@dataclass(frozen=True)
class ConditionedTask:
    region: Region
    beta: float
    T: int
    snapshots: int
    burn_in: int
    thin: int
    seed: int
    chain: int


def _conditioned(t: ConditionedTask) -> list:
    x = t.region.center_face()
    p = SamplerParams(t.region, t.beta, t.snapshots * t.thin, t.seed, burn_in=t.burn_in, thin=t.thin,
                      chain=t.chain)
    ch = Chain(p, event=cuts_at_least(x, t.T))
    return [s.cfg for s in ch.run()]


def conditioned_samples(region: Region, beta: float, T: int, n_samples: int, chains: int, seed: int,
                        burn_in: int = 200, thin: int = 10, threads: int = 1) -> list[SpinConfig]:
    """Snapshots of chains restricted to at least T increments above the centre face."""
    per = -(-n_samples // chains)
    tasks = [ConditionedTask(region, beta, T, per, burn_in, thin, seed, c) for c in range(chains)]
    out = []
    for cfgs in parallel_map(_conditioned, tasks, threads):
        out.extend(cfgs)
    return out[:n_samples]


def _record_task(args) -> PillarRecord:
    cfg, T = args
    return pillar_record(cfg, cfg.region.center_face(), T)


def conditioned_records(cfgs: Sequence[SpinConfig], T: int, threads: int = 1) -> list[PillarRecord]:
    return parallel_map(_record_task, [(c, T) for c in cfgs], threads)


# -- maps on conditioned samples ---------------------------------------------

def verify_maps(interfaces: Sequence[Interface], params: MapParams, rng: np.random.Generator) -> list[MapReport]:
    """One report per map and sample: trivialize at a random spine position, straighten_base, and the swaps on
    consecutive pairs."""
    out = []
    x = interfaces[0].region.center_face()
    states = []
    for I in interfaces:
        st = spine_state(I, x, params.T, params)
        states.append(st)
        n_sp = len(st.dec.increments)
        if n_sp:
            out.append(verify_trivialize(I, int(rng.integers(n_sp)), params, x))
        try:
            out.append(verify_straighten_base(I, params, x))
        except MapError as e:
            out.append(MapReport("straighten_base", ("",), ("",), True, 0, False, {"applicable": False},
                                 {"error": str(e)}))
    for a in range(len(interfaces)):
        b = (a + 1) % len(interfaces)
        pair = (interfaces[a], interfaces[b])
        lo = max(states[a].tau, states[b].tau)
        hi = min(states[a].n_increments, states[b].n_increments)
        if hi <= lo:
            continue
        j = int(rng.integers(lo, hi + 1))
        k = int(rng.integers(j, hi + 1))
        out.append(verify_swap_tails(pair, j, k, params, x))
        j2 = int(rng.integers(lo, hi + 1))
        jp = int(rng.integers(lo, hi + 1))
        out.append(verify_swap_windows(pair, j2, jp, params, x))
    return out
