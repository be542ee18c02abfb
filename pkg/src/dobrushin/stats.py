"""Estimators and checks for height tails, maxima, increment moments, mixing and the CLT."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats as sps

from . import _kernels as K
from .interface import Interface
from .ising import SpinConfig

N_BOOT = 200


# -- autocorrelation ---------------------------------------------------------

def autocorrelation(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 2 or np.var(x) == 0:
        return np.ones(1)
    y = x - x.mean()
    f = np.fft.rfft(y, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n]
    return acf / acf[0]


def integrated_autocorr_time(x: np.ndarray, c: float = 5.0) -> float:
    """Sokal's self-consistent window estimate; 1 for an uncorrelated series."""
    rho = autocorrelation(x)
    tau = 1.0
    for w in range(1, len(rho)):
        tau = 1.0 + 2.0 * rho[1:w + 1].sum()
        if w >= c * tau:
            break
    return max(tau, 1.0)


def effective_sample_size(x: np.ndarray) -> float:
    return len(x) / integrated_autocorr_time(x)


def _block_indices(rng: np.random.Generator, n: int, block: int) -> np.ndarray:
    """Moving-block bootstrap resample of range(n)."""
    block = max(1, min(block, n))
    nb = -(-n // block)
    starts = rng.integers(0, n - block + 1, size=nb)
    return (starts[:, None] + np.arange(block)[None, :]).ravel()[:n]


def block_length(x: np.ndarray) -> int:
    return max(1, int(math.ceil(integrated_autocorr_time(x))))


# -- height tails ------------------------------------------------------------

@dataclass(frozen=True)
class TailEstimate:
    heights: np.ndarray
    survival: np.ndarray  # P(hgt >= h)
    counts: np.ndarray
    n: int
    ess: float
    lo: np.ndarray
    hi: np.ndarray
    log_se: np.ndarray  # standard error of log survival; inf where censored

    @property
    def censored(self) -> np.ndarray:
        return self.counts == 0

    @property
    def rates(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            r = -np.log(self.survival) / self.heights
        return np.where(self.censored, np.nan, r)


def height_tail(heights: Sequence[int], h_max: int, seed: int = 0, n_boot: int = N_BOOT) -> TailEstimate:
    """Empirical survival of a (possibly autocorrelated) series of pillar heights."""
    x = np.asarray(heights)
    n = len(x)
    hs = np.arange(1, h_max + 1)
    hits = x[:, None] >= hs[None, :]
    counts = hits.sum(0)
    surv = counts / n
    ess = effective_sample_size(hits[:, 0].astype(float)) if counts[0] else float(n)
    rng = np.random.default_rng(seed)
    blk = block_length(hits[:, 0].astype(float)) if counts[0] else 1
    boot = np.empty((n_boot, len(hs)))
    for b in range(n_boot):
        boot[b] = hits[_block_indices(rng, n, blk)].mean(0)
    lo = np.minimum(np.quantile(boot, 0.025, axis=0), surv)
    hi = np.maximum(np.quantile(boot, 0.975, axis=0), surv)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_se = np.where(counts > 0, np.sqrt((1 - surv) / (surv * ess)), np.inf)
    return TailEstimate(hs, surv, counts, n, ess, lo, hi, log_se)


@dataclass(frozen=True)
class AlphaEstimate:
    alpha: float
    se: float
    lo: float
    hi: float
    heights: np.ndarray


def alpha_estimate(heights: Sequence[float], log_p: Sequence[float], log_se: Sequence[float],
                   min_heights: int = 3) -> AlphaEstimate:
    """Weighted least-squares slope of -log P(h) against h."""
    h = np.asarray(heights, dtype=float)
    y = -np.asarray(log_p, dtype=float)
    se = np.asarray(log_se, dtype=float)
    ok = np.isfinite(y) & np.isfinite(se) & (se > 0)
    if ok.sum() < min_heights:
        raise ValueError(f"need at least {min_heights} usable heights, have {int(ok.sum())}")
    h, y, w = h[ok], y[ok], 1.0 / se[ok] ** 2
    X = np.column_stack([np.ones_like(h), h])
    A = X.T @ (w[:, None] * X)
    coef = np.linalg.solve(A, X.T @ (w * y))
    cov = np.linalg.inv(A)
    s = float(math.sqrt(cov[1, 1]))
    return AlphaEstimate(float(coef[1]), s, float(coef[1] - 1.96 * s), float(coef[1] + 1.96 * s), h)


def alpha_from_tail(tail: TailEstimate, min_heights: int = 3) -> AlphaEstimate:
    with np.errstate(divide="ignore"):
        lp = np.log(tail.survival)
    return alpha_estimate(tail.heights, lp, tail.log_se, min_heights)


@dataclass(frozen=True)
class SplittingEstimate:
    """Product of conditional level-crossing fractions P(A_{k+1} | A_k)."""

    levels: np.ndarray  # h = 1..H
    log_p: np.ndarray
    log_se: np.ndarray
    ratios: np.ndarray
    ratio_ess: np.ndarray


def splitting_estimate(stage_hits: Sequence[Sequence[bool]]) -> SplittingEstimate:
    """stage_hits[k] are indicators of level k+1 along a chain restricted to level k (k=0 unrestricted)."""
    logs, vars_, ratios, esss = [], [], [], []
    for hits in stage_hits:
        a = np.asarray(hits, dtype=float)
        p = a.mean()
        ess = effective_sample_size(a) if 0 < p < 1 else float(len(a))
        ratios.append(p)
        esss.append(ess)
        if p == 0:
            logs.append(-np.inf)
            vars_.append(np.inf)
        else:
            logs.append(math.log(p))
            vars_.append((1 - p) / (p * ess))
    log_p = np.cumsum(logs)
    log_se = np.sqrt(np.cumsum(vars_))
    return SplittingEstimate(np.arange(1, len(logs) + 1), log_p, log_se, np.array(ratios), np.array(esss))


def alpha_from_splitting(est: SplittingEstimate, min_heights: int = 3) -> AlphaEstimate:
    return alpha_estimate(est.levels, est.log_p, est.log_se, min_heights)


# -- maximum height ----------------------------------------------------------

def max_height(x) -> float:
    """Largest face height of the interface of a configuration (or of an Interface)."""
    if isinstance(x, Interface):
        return x.max_height()
    cfg: SpinConfig = x
    M = K.interface_grid(cfg.padded(), cfg.region.k0)
    zs = np.nonzero(M.any(axis=(0, 1)))[0]
    # grid index g sits at doubled height g + 2*z0 - 2
    return (int(zs.max()) + 2 * cfg.region.z0 - 2) / 2


@dataclass(frozen=True)
class LLNRow:
    n: int
    median: float
    ratio: float  # median / log n
    count: int


def lln_ratio(maxima: dict) -> list[LLNRow]:
    """maxima maps box half-width n to an array of M_n samples."""
    out = []
    for n in sorted(maxima):
        m = float(np.median(np.asarray(maxima[n], dtype=float)))
        out.append(LLNRow(n, m, m / math.log(n), len(maxima[n])))
    return out


# -- increment moments -------------------------------------------------------

OBSERVABLES = ("f1", "f2", "f3", "fV", "fA", "m")


def bulk_range(T: int, K_: float) -> tuple[int, int]:
    """1-based inclusive range [K log T, T - K log T]."""
    a = max(1, int(math.ceil(K_ * math.log(T))))
    b = int(math.floor(T - K_ * math.log(T)))
    return a, b


@dataclass(frozen=True)
class IncrementStats:
    T: int
    bulk: tuple
    index_means: np.ndarray  # (T, n_obs), nan where unobserved
    bulk_mean: np.ndarray
    bulk_se: np.ndarray
    bulk_cov: np.ndarray
    n_samples: int

    def zscore(self, k: int) -> float:
        return float(self.bulk_mean[k] / self.bulk_se[k]) if self.bulk_se[k] > 0 else 0.0


def increment_moments(samples: Sequence[np.ndarray], T: int, K_: float = 1.0) -> IncrementStats:
    """samples[s] is an array (T, n_obs) of observables of increments 1..T, nan where excluded.

    Bulk averages are first taken within each sample so samples stay independent.
    """
    a, b = bulk_range(T, K_)
    if b < a:
        raise ValueError("no bulk indices for this T and K")
    arr = np.stack([np.asarray(s, dtype=float)[:T] for s in samples])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # indices never observed stay nan
        index_means = np.nanmean(arr, axis=0)
    per = np.nanmean(arr[:, a - 1:b, :], axis=1)
    per = per[np.all(np.isfinite(per), axis=1)]
    if len(per) < 2:
        raise ValueError("too few samples with bulk increments")
    mean = per.mean(0)
    se = per.std(0, ddof=1) / math.sqrt(len(per))
    cov = np.cov(per, rowvar=False)
    return IncrementStats(T, (a, b), index_means, mean, se, cov, len(per))


def survival_slope(values: Sequence[int]) -> float:
    """Slope of log empirical survival P(v >= k) over the observed positive support."""
    v = np.asarray(values)
    ks = np.unique(v[v > 0])
    if len(ks) < 2:
        return float("nan")
    surv = np.array([(v >= k).mean() for k in ks])
    return float(np.polyfit(ks, np.log(surv), 1)[0])


# -- mixing and stationarity -------------------------------------------------

def increment_bin(m: int, f3: int) -> int:
    """Coarse alphabet: m in {0,1,2,>=3} times f3 in {1,2,>=3}."""
    return 3 * min(m, 3) + min(max(f3, 1), 3) - 1


N_BINS = 12


def tv_joint_vs_product(a: np.ndarray, b: np.ndarray, n_bins: int = N_BINS) -> float:
    joint = np.zeros((n_bins, n_bins))
    np.add.at(joint, (a, b), 1.0)
    joint /= joint.sum()
    prod = np.outer(joint.sum(1), joint.sum(0))
    return 0.5 * float(np.abs(joint - prod).sum())


def tv(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(p - q).sum())


def histogram(a: np.ndarray, n_bins: int = N_BINS) -> np.ndarray:
    h = np.bincount(np.asarray(a, dtype=int), minlength=n_bins).astype(float)
    return h / h.sum()


@dataclass(frozen=True)
class MixingProfile:
    gaps: np.ndarray
    alpha: np.ndarray  # mean TV over bulk pairs at each gap
    p_trend: float  # bootstrap p-value for alpha(first gap) <= alpha(last gap)
    kendall_tau: float
    boot_diff: np.ndarray = field(repr=False)


def _profile(B: np.ndarray, gaps, lo: int, hi: int) -> np.ndarray:
    out = []
    for g in gaps:
        vals = [tv_joint_vs_product(B[:, j], B[:, j + g]) for j in range(lo, hi - g + 1)]
        out.append(np.mean(vals) if vals else np.nan)
    return np.array(out)


def mixing_profile(binned: np.ndarray, gaps: Sequence[int], lo: int = 0, hi: Optional[int] = None,
                   seed: int = 0, n_boot: int = N_BOOT) -> MixingProfile:
    """binned is (samples, T) of bin labels; pairs (j, j+g) with lo <= j, j+g <= hi (0-based)."""
    B = np.asarray(binned, dtype=int)
    hi = B.shape[1] - 1 if hi is None else hi
    gaps = np.asarray(gaps)
    prof = _profile(B, gaps, lo, hi)
    rng = np.random.default_rng(seed)
    diffs = np.empty(n_boot)
    for b in range(n_boot):
        idx = rng.integers(0, len(B), size=len(B))
        pb = _profile(B[idx], gaps[[0, -1]], lo, hi)
        diffs[b] = pb[0] - pb[1]
    p = float((np.sum(diffs <= 0) + 1) / (n_boot + 1))
    ok = np.isfinite(prof)
    kt = float(sps.kendalltau(gaps[ok], prof[ok]).statistic) if ok.sum() > 1 else float("nan")
    return MixingProfile(gaps, prof, p, kt, diffs)


@dataclass(frozen=True)
class StabilityCheck:
    labels: tuple
    tv: np.ndarray  # pairwise TV between marginals
    null_upper: np.ndarray  # 95% quantile of TV under pooled resampling
    stable: bool


def marginal_stability(groups: Sequence[np.ndarray], labels: Sequence, seed: int = 0,
                       n_boot: int = N_BOOT) -> StabilityCheck:
    """Compare binned marginal laws across groups against a pooled-resampling null."""
    rng = np.random.default_rng(seed)
    k = len(groups)
    T = np.zeros((k, k))
    U = np.zeros((k, k))
    for a in range(k):
        for b in range(a + 1, k):
            ga, gb = np.asarray(groups[a]), np.asarray(groups[b])
            T[a, b] = T[b, a] = tv(histogram(ga), histogram(gb))
            pool = np.concatenate([ga, gb])
            null = np.empty(n_boot)
            for r in range(n_boot):
                s = rng.permutation(pool)
                null[r] = tv(histogram(s[:len(ga)]), histogram(s[len(ga):]))
            U[a, b] = U[b, a] = np.quantile(null, 0.95)
    iu = np.triu_indices(k, 1)
    return StabilityCheck(tuple(labels), T, U, bool(np.all(T[iu] <= U[iu])))


# -- central limit theorem ---------------------------------------------------

@dataclass(frozen=True)
class CLTReport:
    T: int
    n: int
    sums: np.ndarray  # standardized sums, one per sample
    lam: float  # mean of f per increment
    sigma2: float
    chi2_p: float  # binned, continuity-corrected chi-square; nan when pooling leaves no dof
    ad_stat: float
    ad_crit01: float  # Anderson-Darling critical value at the 1% level
    ks_p: float

    def normal_not_rejected(self, level: float = 0.01) -> bool:
        """Chi-square decision when it has degrees of freedom, else the 1% Anderson-Darling one."""
        if math.isfinite(self.chi2_p):
            return self.chi2_p >= level
        return self.ad_stat <= self.ad_crit01


def _binned_normal_pvalue(raw: np.ndarray, min_expected: float = 5.0) -> float:
    """Chi-square p-value of integer-valued data against N(mean, var) with continuity correction."""
    v = np.round(raw).astype(int)
    mu, sd = raw.mean(), raw.std(ddof=1)
    if sd == 0:
        return 0.0
    ks = np.arange(v.min(), v.max() + 1)
    obs = np.array([(v == k).sum() for k in ks], dtype=float)
    cdf = sps.norm.cdf((np.append(ks - 0.5, ks[-1] + 0.5) - mu) / sd)
    p = np.diff(cdf)
    p[0] += cdf[0]
    p[-1] += 1 - cdf[-1]
    exp = p * len(v)
    # pool adjacent cells until each expected count is large enough
    o_b, e_b = [], []
    oa = ea = 0.0
    for o, e in zip(obs, exp):
        oa += o
        ea += e
        if ea >= min_expected:
            o_b.append(oa)
            e_b.append(ea)
            oa = ea = 0.0
    if ea > 0:
        if e_b:
            o_b[-1] += oa
            e_b[-1] += ea
        else:
            o_b.append(oa)
            e_b.append(ea)
    dof = len(o_b) - 3
    if dof < 1:
        return float("nan")
    stat = float(np.sum((np.array(o_b) - np.array(e_b)) ** 2 / np.array(e_b)))
    return float(sps.chi2.sf(stat, dof))


def clt_report(values: Sequence[np.ndarray], T: int, integer_valued: bool = True) -> CLTReport:
    """values[s] holds f(X_t) for the spine increments of sample s among indices 1..T."""
    if len(values) < 2:
        raise ValueError("insufficient samples")
    tot = np.array([np.sum(v) for v in values], dtype=float)
    cnt = np.array([len(v) for v in values], dtype=float)
    lam = float(tot.sum() / cnt.sum())
    raw = tot - lam * cnt
    sums = raw / math.sqrt(T)
    sigma2 = float(np.var(sums, ddof=1))
    if integer_valued and np.allclose(tot, np.round(tot)):
        # center on an integer grid so continuity correction applies to the raw sums
        chi_p = _binned_normal_pvalue(tot) if np.all(cnt == cnt[0]) else _binned_normal_pvalue(np.round(raw))
    else:
        z = (sums - sums.mean()) / (sums.std(ddof=1) or 1.0)
        edges = sps.norm.ppf(np.linspace(0, 1, 11))
        obs, _ = np.histogram(z, bins=edges)
        chi_p = float(sps.chisquare(obs).pvalue) if len(z) >= 50 else float("nan")
    if sigma2 == 0:
        return CLTReport(T, len(values), sums, lam, sigma2, chi_p, math.inf, math.nan, 0.0)
    z = (sums - sums.mean()) / sums.std(ddof=1)
    ad = sps.anderson(sums)
    ks_p = float(sps.kstest(z, "norm").pvalue)
    return CLTReport(T, len(values), sums, lam, sigma2, chi_p, float(ad.statistic),
                     float(ad.critical_values[-1]), ks_p)


@dataclass(frozen=True)
class PairCheck:
    cov: float
    cov_se: float
    var_ratio: float
    ratio_lo: float
    ratio_hi: float

    @property
    def cov_zero(self) -> bool:
        return abs(self.cov) <= 3 * self.cov_se

    @property
    def equal_variances(self) -> bool:
        return self.ratio_lo <= 1.0 <= self.ratio_hi


def pair_check(s1: np.ndarray, s2: np.ndarray, seed: int = 0, n_boot: int = N_BOOT) -> PairCheck:
    """Covariance of two standardized sums and a bootstrap CI for their variance ratio."""
    s1, s2 = np.asarray(s1, float), np.asarray(s2, float)
    n = len(s1)
    c = float(np.cov(s1, s2)[0, 1])
    prod = (s1 - s1.mean()) * (s2 - s2.mean())
    se = float(prod.std(ddof=1) / math.sqrt(n))
    rng = np.random.default_rng(seed)
    rs = np.empty(n_boot)
    with np.errstate(divide="ignore", invalid="ignore"):  # degenerate resamples give inf or nan ratios
        for b in range(n_boot):
            i = rng.integers(0, n, size=n)
            rs[b] = np.var(s1[i], ddof=1) / np.var(s2[i], ddof=1)
        r = float(np.var(s1, ddof=1) / np.var(s2, ddof=1))
    return PairCheck(c, se, r, float(np.quantile(rs, 0.005)), float(np.quantile(rs, 0.995)))
