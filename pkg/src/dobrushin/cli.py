"""Command-line experiment runner.

Every artifact carries the package version, the config hash and the seed: CSV
files as leading ``#`` lines, JSON documents as a ``provenance`` field, spin
dumps through a ``manifest.json`` sidecar.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional

import jsonschema
import numpy as np
import yaml

from . import __version__
from . import _kernels as K
from .experiments import (
    conditioned_records,
    conditioned_samples,
    height_tail_splitting,
    maxima,
    oracle_comparison,
    PillarRecord,
    TailResult,
    verify_maps,
)
from .interface import excess_area, extract_interface
from .ising import (
    Chain,
    Event,
    SamplerParams,
    enumerate_exact,
    hamiltonian,
    load_bytes,
    read_dump,
    dump_bytes,
)
from .lattice import Region
from .maps import MapParams
from .pillar import (
    SpineParams,
    base_spine_split,
    decomposition_to_json,
    extract_pillar,
    pillar_csv_row,
    PILLAR_CSV_HEADER,
)
from .stats import (
    OBSERVABLES,
    bulk_range,
    clt_report,
    increment_moments,
    lln_ratio,
    marginal_stability,
    max_height,
    mixing_profile,
    pair_check,
)

OUT_ENV = "DOBRUSHIN_OUT"
EXPERIMENTS = ("sample", "exact", "decompose", "maps-verify", "tail", "lln", "clt", "mixing")


class ConfigError(ValueError):
    pass


# -- configuration -----------------------------------------------------------

_POS_INT = {"type": "integer", "minimum": 1}
_NONNEG_INT = {"type": "integer", "minimum": 0}
_POS_NUM = {"type": "number", "exclusiveMinimum": 0}
_REGION = {
    "type": "object",
    "properties": {"n": _POS_INT, "m": _POS_INT, "h": _POS_INT,
                   "bounds": {"type": "array", "items": {"type": "integer"}, "minItems": 6, "maxItems": 6}},
    "additionalProperties": False,
    "anyOf": [{"required": ["n"]}, {"required": ["bounds"]}],
}
_BETAS = {"type": "array", "items": _POS_NUM, "minItems": 1}
_INTS = {"type": "array", "items": _POS_INT, "minItems": 1}
_COMMON = {"experiment": {"enum": list(EXPERIMENTS)}, "seed": _NONNEG_INT, "out": {"type": "string"}}
_CHAIN = {"sweeps": _POS_INT, "burn_in": _NONNEG_INT, "thin": _POS_INT,
          "dynamics": {"enum": ["heat-bath", "metropolis"]}}
_CONDITIONED = {"region": _REGION, "height_margin": _POS_INT, "beta": _POS_NUM, "samples": _POS_INT,
                "chains": _POS_INT, "burn_in": _NONNEG_INT, "thin": _POS_INT, "K": _POS_NUM}

_SPECIFIC = {
    "sample": {"region": _REGION, "beta": _POS_NUM, "chains": _POS_INT, "checkpoint": _NONNEG_INT,
               "restriction": {"type": ["object", "null"],
                               "properties": {"kind": {"enum": ["a_h", "hgt_ge", "cuts_ge"]},
                                              "level": _POS_INT},
                               "required": ["kind", "level"], "additionalProperties": False},
               **_CHAIN},
    "exact": {"region": _REGION, "beta": _BETAS, "hmax": _POS_INT, "mc_sweeps": _NONNEG_INT,
              "burn_in": _NONNEG_INT, "dynamics": _CHAIN["dynamics"]},
    "decompose": {"inputs": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                  "T": _POS_INT, "R0": _POS_NUM, "r0": _POS_NUM},
    "maps-verify": {**_CONDITIONED, "T": _POS_INT, "c_bar": _POS_NUM, "L": _POS_INT, "s": _NONNEG_INT,
                    "R0": _POS_NUM, "r0": _POS_NUM},
    "tail": {"region": _REGION, "beta": _BETAS, "levels": _POS_INT,
             "sweeps": {"oneOf": [_POS_INT, _INTS]}, "burn_in": _NONNEG_INT, "thin": _POS_INT},
    "lln": {"n": _INTS, "h": {"oneOf": [_POS_INT, {"type": "null"}]}, "beta": _POS_NUM,
            "snapshots": _POS_INT, "burn_in": _NONNEG_INT, "thin": _POS_INT,
            "alpha": {"oneOf": [_POS_NUM, {"type": "null"}]}},
    "clt": {**_CONDITIONED, "T": _INTS},
    "mixing": {**_CONDITIONED, "T": _INTS, "gaps": _INTS, "reference_T": _POS_INT},
}

_CONDITIONED_DEFAULTS = {"region": {"n": 6}, "height_margin": 8, "beta": 1.0, "samples": 500, "chains": 10,
                         "burn_in": 400, "thin": 400, "K": 1.0}
DEFAULTS = {
    "sample": {"region": {"n": 8}, "beta": 1.0, "sweeps": 1000, "burn_in": 100, "thin": 10,
               "dynamics": "heat-bath", "chains": 1, "checkpoint": 10, "restriction": None},
    "exact": {"region": {"bounds": [-1, 2, -1, 2, -1, 1]}, "beta": [0.5, 1.0], "hmax": 2,
              "mc_sweeps": 20000, "burn_in": 100, "dynamics": "heat-bath"},
    "decompose": {"T": 4, "R0": 100.0, "r0": 20.0},
    "maps-verify": {**_CONDITIONED_DEFAULTS, "region": {"n": 6}, "samples": 100, "chains": 4, "burn_in": 200,
                    "thin": 20, "T": 4, "c_bar": 0.25, "L": 1, "s": 0, "R0": 100.0, "r0": 20.0},
    "tail": {"region": {"n": 16, "h": 8}, "beta": [1.0, 1.25, 1.5], "levels": 6, "sweeps": 2000,
             "burn_in": 100, "thin": 1},
    "lln": {"n": [16, 32, 64], "h": None, "beta": 1.25, "snapshots": 200, "burn_in": 200, "thin": 10,
            "alpha": None},
    "clt": {**_CONDITIONED_DEFAULTS, "T": [8, 16]},
    "mixing": {**_CONDITIONED_DEFAULTS, "T": [12, 16, 24], "gaps": [1, 2, 4, 8], "reference_T": 16},
}


def schema(experiment: str) -> dict:
    return {"type": "object", "properties": {**_COMMON, **_SPECIFIC[experiment]},
            "additionalProperties": False}


def load_config(experiment: str, path: Optional[str]) -> dict:
    """Parse, validate and fill defaults; raises ConfigError with a readable message."""
    raw: Any = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh)
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from e
        except yaml.YAMLError as e:
            raise ConfigError(f"config is not valid YAML: {e}") from e
        raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise ConfigError("config must be a key-value mapping")
    try:
        jsonschema.validate(raw, schema(experiment))
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {e.message}") from e
    if raw.get("experiment", experiment) != experiment:
        raise ConfigError(f"config is for {raw['experiment']!r}, not {experiment!r}")
    if experiment == "decompose" and "inputs" not in raw:
        raise ConfigError("decompose needs a list of spin dumps under 'inputs'")
    cfg = copy.deepcopy(DEFAULTS[experiment])
    cfg.update(raw)
    cfg["experiment"] = experiment
    cfg.setdefault("seed", 0)
    if path is not None and experiment == "decompose":
        base = Path(path).parent
        cfg["inputs"] = [str(base / p) if not os.path.isabs(p) else p for p in cfg["inputs"]]
    if experiment == "tail" and isinstance(cfg["sweeps"], list) and len(cfg["sweeps"]) != len(cfg["beta"]):
        raise ConfigError("tail: 'sweeps' list must have one entry per beta")
    return cfg


def config_hash(cfg: dict) -> str:
    """Hash of everything that determines the outputs (the output location excluded)."""
    doc = {k: v for k, v in cfg.items() if k != "out"}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def region_of(spec: dict, default_h: Optional[int] = None) -> Region:
    if "bounds" in spec:
        return Region(*spec["bounds"])
    n = spec["n"]
    h = spec.get("h", default_h if default_h is not None else default_height(n))
    return Region.box(n, spec.get("m", n), h)


def default_height(n: int) -> int:
    return max(16, 4 * math.ceil(math.log2(n)))


# -- output ------------------------------------------------------------------

@dataclass(frozen=True)
class Context:
    experiment: str
    cfg: dict
    hash: str
    out: Path
    threads: int
    resume: bool

    @property
    def seed(self) -> int:
        return self.cfg["seed"]

    @property
    def provenance(self) -> dict:
        return {"package": "dobrushin", "version": __version__, "config_sha256": self.hash,
                "seed": self.seed, "experiment": self.experiment}

    def path(self, name: str) -> Path:
        return self.out / self.experiment / name

    def cache_path(self, name: str) -> Path:
        return self.out / "cache" / name


def _atomic_write(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def csv_text(header: list, rows, provenance: Optional[dict] = None) -> str:
    buf = io.StringIO()
    for k, v in (provenance or {}).items():
        buf.write(f"# {k}: {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def read_csv(path) -> tuple[dict, list[dict]]:
    """Provenance comments and rows of a CSV written by this module."""
    prov, lines = {}, []
    with open(path) as fh:
        for line in fh:
            if line.startswith("# "):
                k, _, v = line[2:].rstrip("\n").partition(": ")
                prov[k] = v
            else:
                lines.append(line)
    return prov, list(csv.DictReader(lines))


def write_csv(ctx: Context, name: str, header: list, rows) -> Path:
    p = ctx.path(name)
    _atomic_write(p, csv_text(header, rows, ctx.provenance).encode())
    return p


def write_json(ctx: Context, name: str, doc: dict) -> Path:
    p = ctx.path(name)
    full = {"provenance": ctx.provenance, **doc}
    _atomic_write(p, (json.dumps(full, sort_keys=True, indent=1) + "\n").encode())
    return p


def _cached(ctx: Context, key: dict, name: str, compute: Callable[[], Any],
            encode: Callable[[Any], str], decode: Callable[[str], Any]) -> Any:
    """Content-addressed stage cache, consulted only with --resume."""
    digest = hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()[:16]
    p = ctx.cache_path(f"{name}-{digest}.json")
    if ctx.resume and p.exists():
        return decode(p.read_text())
    val = compute()
    _atomic_write(p, encode(val).encode())
    return val


def _f(x: float) -> float:
    return float(x) if x is not None else float("nan")


# -- sample ------------------------------------------------------------------

SAMPLE_HEADER = ["chain", "sweep", "energy", "excess_area", "pillar_height", "max_height"]


def _snapshot_row(ch: Chain, chain: int, sweep: int, flat: int, pi: int, pj: int) -> list:
    r = ch.region
    cfg = ch.config()
    M = K.interface_grid(ch.P, r.k0)
    mask, _ = K.pillar_mask(ch.P, pi + 1, pj + 1, r.k0)
    return [chain, sweep, hamiltonian(cfg), int(M.sum()) - flat, K.pillar_top(K.slab_counts(mask, r.k0)),
            max_height(cfg)]


def _dump_entry(path: Path, chain: int) -> dict:
    data = path.read_bytes()
    _, _, sweep = load_bytes(data)
    return {"file": path.name, "chain": chain, "sweep": sweep, "sha256": hashlib.sha256(data).hexdigest()}


def run_sample(ctx: Context) -> dict:
    c = ctx.cfg
    region = region_of(c["region"])
    if region != Region.box(*region.nmh):
        raise ConfigError("sample needs a centred box so that spin dumps can record it")
    x = region.center_face()
    rs = c["restriction"]
    event = Event(rs["kind"], x, rs["level"]) if rs else None
    flat = len(region.l0_faces())
    pi, pj, _ = region.cell_index((x[0], x[1], 1))
    n_snap = c["sweeps"] // c["thin"]
    files = []
    for chain in range(c["chains"]):
        p = SamplerParams(region, c["beta"], c["sweeps"], ctx.seed, burn_in=c["burn_in"], thin=c["thin"],
                          dynamics=c["dynamics"], chain=chain)
        dump = ctx.path(f"chain{chain}.isng")
        final = ctx.path(f"chain{chain}.csv")
        if ctx.resume and dump.exists() and final.exists() and read_csv(final)[0].get("config_sha256") == ctx.hash:
            files.append(_dump_entry(dump, chain))
            continue
        ch = Chain(p, event=event)
        ckpt = ctx.path(f"chain{chain}.checkpoint.isng")
        partial = ctx.path(f"chain{chain}.partial.csv")
        rows, done = [], 0
        if ctx.resume and ckpt.exists() and partial.exists():
            prov, old = read_csv(partial)
            if prov.get("config_sha256") == ctx.hash:
                cfg0, seed0, done = read_dump(ckpt)
                if seed0 != ctx.seed:
                    raise ConfigError("checkpoint was written with a different seed")
                ch.restore(cfg0, done)
                rows = [[int(r["chain"]), int(r["sweep"]), int(r["energy"]), int(r["excess_area"]),
                         int(r["pillar_height"]), float(r["max_height"])] for r in old if int(r["sweep"]) <= done]
        if done < c["burn_in"]:
            ch.sweep(c["burn_in"] - done)
            done = c["burn_in"]
        while len(rows) < n_snap:
            ch.sweep(c["thin"])
            done += c["thin"]
            rows.append(_snapshot_row(ch, chain, done, flat, pi, pj))
            if c["checkpoint"] and len(rows) % c["checkpoint"] == 0 and len(rows) < n_snap:
                _atomic_write(ckpt, dump_bytes(ch.config(), ctx.seed, done))
                _atomic_write(partial, csv_text(SAMPLE_HEADER, rows, ctx.provenance).encode())
        write_csv(ctx, f"chain{chain}.csv", SAMPLE_HEADER, rows)
        _atomic_write(dump, dump_bytes(ch.config(), ctx.seed, done))
        for stale in (ckpt, partial):
            stale.unlink(missing_ok=True)
        files.append(_dump_entry(dump, chain))
    write_json(ctx, "manifest.json", {"dumps": files, "config": ctx.cfg})
    return {"chains": c["chains"], "snapshots": n_snap}


# -- exact -------------------------------------------------------------------

def run_exact(ctx: Context) -> dict:
    c = ctx.cfg
    region = region_of(c["region"])
    x = region.center_face()
    rows, orows, worst = [], [], 0.0
    for i, beta in enumerate(c["beta"]):
        table, _ = enumerate_exact(region, beta, x=x, hmax=c["hmax"])
        worst = max(worst, table.normalization_error)
        rows.append([beta, "log_Z", table.log_z])
        rows.append([beta, "normalization_error", table.normalization_error])
        for h in range(1, c["hmax"] + 1):
            rows.append([beta, f"P(hgt>={h})", table.prob_hgt_at_least(h)])
            rows.append([beta, f"P(A_{h})", table.prob_a_h(h)])
        rows.append([beta, "E[m]", table.mean_excess_area()])
        if c["mc_sweeps"]:
            res, _ = oracle_comparison(region, beta, x, c["mc_sweeps"], ctx.seed + i, c["burn_in"], c["dynamics"])
            orows.extend([r.beta, r.quantity, r.exact, r.estimate, r.sigma, r.zscore] for r in res)
    write_csv(ctx, "exact.csv", ["beta", "quantity", "value"], rows)
    if orows:
        write_csv(ctx, "oracle.csv", ["beta", "quantity", "exact", "estimate", "sigma", "zscore"], orows)
    return {"normalization_error": worst,
            "max_abs_z": max((abs(r[5]) for r in orows), default=0.0)}


# -- decompose ---------------------------------------------------------------

def run_decompose(ctx: Context) -> dict:
    c = ctx.cfg
    sp = SpineParams(c["R0"], c["r0"])
    docs, rows = [], []
    for path in c["inputs"]:
        cfg, seed, sweep = read_dump(path)
        I = extract_interface(cfg)
        x = cfg.region.center_face()
        P = extract_pillar(I, x)
        doc = {"input": os.path.basename(path), "dump_seed": seed, "dump_sweep": sweep,
               "n_walls": len(I.walls), "excess_area": excess_area(I), "pillar_height": P.height,
               "n_increments": P.n_increments if not P.empty else 0, "decomposition": None, "error": None}
        try:
            dec = base_spine_split(I, x, c["T"], sp, P)
            doc["decomposition"] = json.loads(decomposition_to_json(dec))
            rows.append([os.path.basename(path)] + pillar_csv_row(dec))
        except ValueError as e:
            doc["error"] = str(e)
        docs.append(doc)
    write_json(ctx, "decompositions.json", {"items": docs})
    write_csv(ctx, "pillars.csv", ["input"] + PILLAR_CSV_HEADER, rows)
    return {"inputs": len(docs), "decomposed": len(rows)}


# -- conditioned samples shared by maps-verify, clt and mixing ---------------

def _conditioned_region(c: dict, T: int) -> Region:
    return region_of(c["region"], default_h=T + c["height_margin"])


def _sampling_key(ctx: Context, T: int) -> dict:
    c = ctx.cfg
    return {"region": c["region"], "height_margin": c["height_margin"], "beta": c["beta"], "T": T,
            "samples": c["samples"], "chains": c["chains"], "burn_in": c["burn_in"], "thin": c["thin"],
            "seed": ctx.seed, "version": __version__}


def _records_encode(recs: list[PillarRecord]) -> str:
    return json.dumps([{"height": r.height, "n_increments": r.n_increments, "tau": r.tau,
                        "obs": r.obs.astype(int).tolist(), "base_diameter": r.base_diameter,
                        "source_height": r.source_height, "spine_excess": r.spine_excess, "tame": r.tame}
                       for r in recs])


def _records_decode(text: str) -> list[PillarRecord]:
    out = []
    for d in json.loads(text):
        obs = np.array(d["obs"], dtype=float).reshape(-1, len(OBSERVABLES))
        out.append(PillarRecord(d["height"], d["n_increments"], d["tau"], obs, d["base_diameter"],
                                d["source_height"], d["spine_excess"], d["tame"]))
    return out


def conditioned_pillar_records(ctx: Context, T: int) -> list[PillarRecord]:
    c = ctx.cfg

    def compute():
        cfgs = conditioned_samples(_conditioned_region(c, T), c["beta"], T, c["samples"], c["chains"], ctx.seed,
                                   c["burn_in"], c["thin"], ctx.threads)
        return conditioned_records(cfgs, T, ctx.threads)

    return _cached(ctx, _sampling_key(ctx, T), f"records-T{T}", compute, _records_encode, _records_decode)


# -- maps-verify -------------------------------------------------------------

def run_maps_verify(ctx: Context) -> dict:
    c = ctx.cfg
    T = c["T"]
    params = MapParams(c_bar=c["c_bar"], K=c["K"], L=c["L"], T=T, s=c["s"], R0=c["R0"], r0=c["r0"])
    cfgs = conditioned_samples(_conditioned_region(c, T), c["beta"], T, c["samples"], c["chains"], ctx.seed,
                               c["burn_in"], c["thin"], ctx.threads)
    interfaces = [extract_interface(s) for s in cfgs]
    reports = verify_maps(interfaces, params, np.random.default_rng(ctx.seed))
    write_json(ctx, "reports.json", {"reports": [json.loads(r.to_json()) for r in reports]})
    summary = {}
    for r in reports:
        s = summary.setdefault(r.map, [0, 0, 0, 0])
        applicable = r.checks.get("applicable", True)
        s[0] += 1
        s[1] += bool(applicable)
        s[2] += r.identity
        s[3] += r.ok or not applicable
    rows = [[m, *summary[m]] for m in sorted(summary)]
    write_csv(ctx, "summary.csv", ["map", "reports", "applicable", "identity", "passed"], rows)
    return {"reports": len(reports), "failed": sum(s[0] - s[3] for s in summary.values())}


# -- tail --------------------------------------------------------------------

def run_tail(ctx: Context) -> dict:
    c = ctx.cfg
    region = region_of(c["region"])
    sweeps = c["sweeps"] if isinstance(c["sweeps"], list) else [c["sweeps"]] * len(c["beta"])
    level_rows, alpha_rows = [], []
    for i, (beta, sw) in enumerate(zip(c["beta"], sweeps)):
        key = {"region": c["region"], "beta": beta, "levels": c["levels"], "sweeps": sw,
               "burn_in": c["burn_in"], "thin": c["thin"], "seed": ctx.seed + i, "version": __version__}

        def compute(beta=beta, sw=sw, i=i):
            return height_tail_splitting(region, beta, c["levels"], sw, ctx.seed + i, c["burn_in"], c["thin"],
                                         threads=ctx.threads)

        def enc(r):
            return json.dumps({"levels": r.levels.tolist(), "log_p": r.log_p.tolist(), "log_se": r.log_se.tolist(),
                               "ratios": r.ratios.tolist(), "ratio_ess": r.ratio_ess.tolist(),
                               "alpha": r.alpha, "alpha_se": r.alpha_se, "beta": r.beta})

        def dec(t):
            d = json.loads(t)
            return TailResult(d["beta"], np.array(d["levels"]), np.array(d["log_p"]), np.array(d["log_se"]),
                              np.array(d["ratios"]), np.array(d["ratio_ess"]), d["alpha"], d["alpha_se"])

        res = _cached(ctx, key, "tail", compute, enc, dec)
        for k in range(len(res.levels)):
            level_rows.append([beta, int(res.levels[k]), res.log_p[k], res.log_se[k], res.ratios[k],
                               res.ratio_ess[k]])
        alpha_rows.append([beta, res.alpha, res.alpha_se, res.alpha / beta])
    write_csv(ctx, "levels.csv", ["beta", "h", "log_p", "log_se", "ratio", "ratio_ess"], level_rows)
    write_csv(ctx, "alpha.csv", ["beta", "alpha", "alpha_se", "alpha_over_beta"], alpha_rows)
    return {"alpha": {r[0]: r[1] for r in alpha_rows}}


# -- lln ---------------------------------------------------------------------

def run_lln(ctx: Context) -> dict:
    c = ctx.cfg
    series = {}
    for n in c["n"]:
        h = c["h"] if c["h"] is not None else default_height(n)
        key = {"n": n, "h": h, "beta": c["beta"], "snapshots": c["snapshots"], "burn_in": c["burn_in"],
               "thin": c["thin"], "seed": ctx.seed, "version": __version__}
        series[n] = np.array(_cached(
            ctx, key, f"maxima-n{n}",
            lambda n=n, h=h: maxima([n], h, c["beta"], c["snapshots"], ctx.seed, c["burn_in"], c["thin"])[n],
            lambda a: json.dumps([float(v) for v in a]), json.loads))
    rows = [[n, i, v] for n in c["n"] for i, v in enumerate(series[n])]
    write_csv(ctx, "maxima.csv", ["n", "snapshot", "max_height"], rows)
    target = 2 / c["alpha"] if c["alpha"] else float("nan")
    summary = [[r.n, r.count, r.median, r.ratio, target,
                (r.ratio - target) / target if c["alpha"] else float("nan")] for r in lln_ratio(series)]
    write_csv(ctx, "summary.csv", ["n", "snapshots", "median_max", "median_over_log_n", "two_over_alpha",
                                   "relative_error"], summary)
    return {"ratios": {r[0]: r[3] for r in summary}}


# -- clt ---------------------------------------------------------------------

def run_clt(ctx: Context) -> dict:
    c = ctx.cfg
    rows, pair_rows, moment_rows = [], [], []
    for T in c["T"]:
        recs = conditioned_pillar_records(ctx, T)
        ms = increment_moments([r.table(T) for r in recs], T, c["K"])
        sums = {}
        for k, name in enumerate(OBSERVABLES[:5]):
            rep = clt_report([r.spine_obs(T)[:, k] for r in recs], T)
            sums[name] = rep.sums
            rows.append([T, name, rep.n, rep.lam, rep.sigma2, rep.chi2_p, rep.ad_stat, rep.ad_crit01, rep.ks_p,
                         rep.normal_not_rejected(0.01)])
        for k, name in enumerate(OBSERVABLES):
            moment_rows.append([T, name, ms.bulk[0], ms.bulk[1], ms.n_samples, ms.bulk_mean[k], ms.bulk_se[k]])
        pc = pair_check(sums["f1"], sums["f2"], seed=ctx.seed)
        pair_rows.append([T, pc.cov, pc.cov_se, pc.cov_zero, pc.var_ratio, pc.ratio_lo, pc.ratio_hi,
                          pc.equal_variances])
        write_csv(ctx, f"sums_T{T}.csv", ["sample"] + list(OBSERVABLES[:5]),
                  [[i] + [sums[n][i] for n in OBSERVABLES[:5]] for i in range(len(recs))])
    write_csv(ctx, "clt.csv", ["T", "observable", "n", "lambda", "sigma2", "chi2_p", "ad_stat", "ad_crit01",
                               "ks_p", "normal_not_rejected"], rows)
    write_csv(ctx, "bulk_means.csv", ["T", "observable", "bulk_lo", "bulk_hi", "samples", "mean", "se"],
              moment_rows)
    write_csv(ctx, "pair.csv", ["T", "cov", "cov_se", "cov_zero", "var_ratio", "ratio_lo", "ratio_hi",
                                "equal_variances"], pair_rows)
    return {"T": c["T"]}


# -- mixing ------------------------------------------------------------------

def run_mixing(ctx: Context) -> dict:
    c = ctx.cfg
    groups, labels, prof_rows, trend_rows = [], [], [], []
    for T in c["T"]:
        recs = conditioned_pillar_records(ctx, T)
        B = np.array([r.bins(T) for r in recs])
        groups.append(B[:, T // 2 - 1])
        labels.append(T)
        if T == c["reference_T"]:
            a, b = bulk_range(T, c["K"])
            lo, hi = a - 1, b - 1
            mp = mixing_profile(B, c["gaps"], lo, hi, seed=ctx.seed)
            prof_rows.extend([T, int(g), a] for g, a in zip(mp.gaps, mp.alpha))
            trend_rows.append([T, lo + 1, hi + 1, mp.p_trend, mp.kendall_tau])
    if not prof_rows:
        raise ConfigError("reference_T must be one of the listed T values")
    st = marginal_stability(groups, labels, seed=ctx.seed)
    stab = [[labels[a], labels[b], st.tv[a, b], st.null_upper[a, b], st.tv[a, b] <= st.null_upper[a, b]]
            for a in range(len(labels)) for b in range(a + 1, len(labels))]
    write_csv(ctx, "profile.csv", ["T", "gap", "alpha"], prof_rows)
    write_csv(ctx, "trend.csv", ["T", "bulk_lo", "bulk_hi", "p_trend", "kendall_tau"], trend_rows)
    write_csv(ctx, "stability.csv", ["T_a", "T_b", "tv", "null_q95", "within"], stab)
    return {"p_trend": trend_rows[0][3], "stable": st.stable}


RUNNERS = {"sample": run_sample, "exact": run_exact, "decompose": run_decompose,
           "maps-verify": run_maps_verify, "tail": run_tail, "lln": run_lln, "clt": run_clt,
           "mixing": run_mixing}


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dobrushin", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML experiment config")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", help=f"output root (else ${OUT_ENV}, else the config 'out', else ./results)")
        p.add_argument("--threads", type=int, default=1, help="worker processes; outputs do not depend on it")
        p.add_argument("--resume", action="store_true", help="reuse checkpoints and cached stages")
    return ap


def output_root(args, cfg: dict) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or cfg.get("out") or "results")


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.experiment, args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be non-negative")
            cfg["seed"] = args.seed
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        ctx = Context(args.experiment, cfg, config_hash(cfg), output_root(args, cfg), args.threads, args.resume)
        summary = RUNNERS[args.experiment](ctx)
    except ConfigError as e:
        print(f"dobrushin {args.experiment}: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"dobrushin {args.experiment}: {e}", file=sys.stderr)
        return 1
    print(json.dumps({"experiment": args.experiment, "config_sha256": ctx.hash, "out": str(ctx.out / ctx.experiment),
                      "summary": summary}, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
