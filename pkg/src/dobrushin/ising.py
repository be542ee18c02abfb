"""Spin configurations with Dobrushin boundary conditions, samplers and the exact oracle."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Optional

import numpy as np
from numba import njit

from . import _kernels as K
from .lattice import Coord, Region

DYNAMICS = ("heat-bath", "metropolis")
MAX_EXACT_CELLS = 24


@dataclass(frozen=True, eq=False)
class SpinConfig:
    """Spins on the cells of a region; cell (i,j,k) of the array is region.cell_coord(i,j,k)."""

    region: Region
    spins: np.ndarray
    beta: float = 1.0

    def __post_init__(self):
        if self.spins.shape != self.region.shape:
            raise ValueError(f"spins shape {self.spins.shape} != region shape {self.region.shape}")
        if self.spins.dtype != np.int8:
            object.__setattr__(self, "spins", self.spins.astype(np.int8))
        self.spins.setflags(write=False)

    @classmethod
    def ground_state(cls, region: Region, beta: float = 1.0) -> "SpinConfig":
        s = np.full(region.shape, -1, dtype=np.int8)
        s[:, :, : region.k0] = 1
        return cls(region, s, beta)

    def __eq__(self, other):
        return (isinstance(other, SpinConfig) and self.region == other.region
                and np.array_equal(self.spins, other.spins))

    def __hash__(self):
        return hash((self.region, self.spins.tobytes()))

    def padded(self) -> np.ndarray:
        return K.pad(np.ascontiguousarray(self.spins), self.region.k0)

    def spin(self, c: Coord) -> int:
        """Spin at any cell, using the boundary rule outside the region."""
        if self.region.contains_cell(c):
            return int(self.spins[self.region.cell_index(c)])
        return 1 if c[2] < 0 else -1

    def with_spins(self, cells: Mapping[Coord, int]) -> "SpinConfig":
        s = self.spins.copy()
        for c, v in cells.items():
            s[self.region.cell_index(c)] = v
        return SpinConfig(self.region, s, self.beta)

    def flipped(self, c: Coord) -> "SpinConfig":
        return self.with_spins({c: -self.spin(c)})


def column_config(region: Region, x: Coord, height: int, beta: float = 1.0) -> SpinConfig:
    """Ground state plus a column of `height` plus cells above the L0 face x."""
    cells = {(x[0], x[1], 2 * t + 1): 1 for t in range(height)}
    return SpinConfig.ground_state(region, beta).with_spins(cells)


def hamiltonian(cfg: SpinConfig) -> int:
    return int(K.hamiltonian(cfg.padded()))


def plus_neighbours(cfg: SpinConfig, c: Coord) -> int:
    from .lattice import neighbors
    return sum(1 for d in neighbors(c) if cfg.spin(d) > 0)


def delta_energy(cfg: SpinConfig, c: Coord) -> int:
    """H(flip(cfg, c)) - H(cfg) from the local field alone."""
    p = plus_neighbours(cfg, c)
    return 6 - 2 * p if cfg.spin(c) < 0 else 2 * p - 6


def heat_bath_table(beta: float) -> np.ndarray:
    """P(new spin = +1) given p plus neighbours: e^{-b(6-p)} / (e^{-b(6-p)} + e^{-bp})."""
    p = np.arange(7)
    return 1.0 / (1.0 + np.exp(beta * (6 - 2 * p)))


def metropolis_table(beta: float) -> np.ndarray:
    """Acceptance of a - -> + flip given p plus neighbours."""
    p = np.arange(7)
    return np.minimum(1.0, np.exp(-beta * (6 - 2 * p)))


def update_table(beta: float, dynamics: str) -> np.ndarray:
    if dynamics == "heat-bath":
        return heat_bath_table(beta)
    if dynamics == "metropolis":
        return metropolis_table(beta)
    raise ValueError(f"unknown dynamics {dynamics!r}")


def glauber_step(cfg: SpinConfig, cell: Coord, rng: np.random.Generator,
                 dynamics: str = "heat-bath") -> SpinConfig:
    tab = update_table(cfg.beta, dynamics)
    P = cfg.padded()
    i, j, k = cfg.region.cell_index(cell)
    new = K.propose(P, i + 1, j + 1, k + 1, rng.random(), tab, dynamics == "metropolis")
    if new == cfg.spin(cell):
        return cfg
    return cfg.with_spins({cell: new})


def chain_rng(seed: int, chain: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(chain,)))


# -- events ------------------------------------------------------------------

@dataclass(frozen=True)
class Event:
    """Event on configurations used to restrict a chain.

    Built-in kinds ('a_h', 'hgt_ge', 'cuts_ge') run inside the compiled sweep
    with a locality shortcut; 'predicate' calls a Python function after every
    spin change and is meant for tiny boxes.
    """

    kind: str
    x: Coord = (1, 1, 0)
    level: int = 0
    predicate: Optional[Callable[[SpinConfig], bool]] = None

    _CODES = {"a_h": K.EV_A_H, "hgt_ge": K.EV_HGT_GE, "cuts_ge": K.EV_CUTS_GE}

    def __call__(self, cfg: SpinConfig) -> bool:
        if self.kind == "predicate":
            return bool(self.predicate(cfg))
        if self.kind == "always":
            return True
        pi, pj, _ = cfg.region.cell_index((self.x[0], self.x[1], 1))
        ok, _ = K.evaluate_event(cfg.padded(), self._CODES[self.kind], pi + 1, pj + 1,
                                 cfg.region.k0, self.level)
        return bool(ok)

    def forced_height(self) -> int:
        """Column height that satisfies the event from the ground state."""
        if self.kind == "cuts_ge":
            return self.level + 1
        if self.kind in ("a_h", "hgt_ge"):
            return self.level
        return 0


def hgt_at_least(x: Coord, h: int) -> Event:
    return Event("hgt_ge", x, h)


def cuts_at_least(x: Coord, t: int) -> Event:
    """At least t increments in the pillar above x."""
    return Event("cuts_ge", x, t)


def a_h(x: Coord, h: int) -> Event:
    return Event("a_h", x, h)


def from_predicate(fn: Callable[[SpinConfig], bool]) -> Event:
    return Event("predicate", predicate=fn)


ALWAYS = Event("always")


# -- samplers ----------------------------------------------------------------

@dataclass(frozen=True)
class SamplerParams:
    region: Region
    beta: float
    sweeps: int
    seed: int
    burn_in: int = 0
    thin: int = 1
    dynamics: str = "heat-bath"
    restriction: Optional[Event] = None
    chain: int = 0

    def __post_init__(self):
        if self.sweeps < 0 or self.burn_in < 0 or self.thin < 1:
            raise ValueError("sweeps and burn_in must be >= 0 and thin >= 1")
        if self.dynamics not in DYNAMICS:
            raise ValueError(f"unknown dynamics {self.dynamics!r}")


@dataclass(frozen=True)
class Snapshot:
    cfg: SpinConfig
    sweep: int
    chain: int


@dataclass
class Diagnostics:
    sweeps: int = 0
    checks: int = 0
    rejections: int = 0

    @property
    def rejection_rate(self) -> float:
        return self.rejections / self.checks if self.checks else 0.0


class Chain:
    """A single sequential Markov chain with its own RNG stream."""

    def __init__(self, params: SamplerParams, init: Optional[SpinConfig] = None,
                 event: Optional[Event] = None):
        self.params = params
        self.region = params.region
        self.event = event if event is not None else params.restriction
        if init is None:
            h = self.event.forced_height() if self.event is not None else 0
            x = self.event.x if self.event is not None else (1, 1, 0)
            init = column_config(self.region, x, h, params.beta)
        if self.event is not None and not self.event(init):
            raise ValueError("initial configuration does not satisfy the event")
        self.P = init.padded()
        self.rng = chain_rng(params.seed, params.chain)
        self.tab = update_table(params.beta, params.dynamics)
        self.metro = params.dynamics == "metropolis"
        self.diag = Diagnostics()
        self._stats = np.zeros(2, dtype=np.int64)
        self._setup_event()

    def _setup_event(self):
        ev = self.event
        self.kind = K.EV_NONE
        self.zone = np.zeros((1, 1, 1), dtype=np.uint8)
        self.pi = self.pj = 0
        self.level = 0
        if ev is None or ev.kind in ("always", "predicate"):
            return
        self.kind = Event._CODES[ev.kind]
        pi, pj, _ = self.region.cell_index((ev.x[0], ev.x[1], 1))
        self.pi, self.pj, self.level = pi + 1, pj + 1, ev.level
        ok, self.zone = K.evaluate_event(self.P, self.kind, self.pi, self.pj, self.region.k0, self.level)
        assert ok

    def config(self) -> SpinConfig:
        return SpinConfig(self.region, self.P[1:-1, 1:-1, 1:-1].copy(), self.params.beta)

    def restore(self, cfg: SpinConfig, sweeps_done: int):
        """Continue from a saved state as if `sweeps_done` sweeps had run from the start."""
        if self.event is not None and not self.event(cfg):
            raise ValueError("saved configuration does not satisfy the event")
        self.P = cfg.padded()
        self.rng = chain_rng(self.params.seed, self.params.chain)
        self.rng.bit_generator.advance(sweeps_done * self.region.n_cells)
        self.diag = Diagnostics(sweeps=sweeps_done)
        self._stats[:] = 0
        self._setup_event()

    def sweep(self, n: int = 1):
        nc = self.region.n_cells
        for _ in range(n):
            u = self.rng.random(nc)
            if self.event is not None and self.event.kind == "predicate":
                self._sweep_predicate(u)
            elif self.kind == K.EV_NONE:
                K.sweep(self.P, u, self.tab, self.metro)
            else:
                K.sweep_restricted(self.P, u, self.tab, self.metro, self.kind, self.pi, self.pj,
                                   self.region.k0, self.level, self.zone, self._stats)
            self.diag.sweeps += 1
        self.diag.checks = int(self._stats[0]) if self.kind else self.diag.checks
        self.diag.rejections = int(self._stats[1]) if self.kind else self.diag.rejections

    def _sweep_predicate(self, u):
        nx, ny, nz = self.region.shape
        t = 0
        for i in range(1, nx + 1):
            for j in range(1, ny + 1):
                for k in range(1, nz + 1):
                    s = self.P[i, j, k]
                    new = K.propose(self.P, i, j, k, u[t], self.tab, self.metro)
                    t += 1
                    if new == s:
                        continue
                    self.P[i, j, k] = new
                    self.diag.checks += 1
                    if not self.event(self.config()):
                        self.P[i, j, k] = s
                        self.diag.rejections += 1

    def run(self) -> Iterator[Snapshot]:
        p = self.params
        self.sweep(p.burn_in)
        for t in range(p.sweeps // p.thin):
            self.sweep(p.thin)
            yield Snapshot(self.config(), p.burn_in + (t + 1) * p.thin, p.chain)


def sample(params: SamplerParams, init: Optional[SpinConfig] = None) -> Iterator[Snapshot]:
    """Snapshots every `thin` sweeps after `burn_in`; a pure function of the seed."""
    return Chain(params, init).run()


def sample_conditional(params: SamplerParams, event: Event,
                       init: Optional[SpinConfig] = None) -> Chain:
    """Chain restricted to `event`; iterate `chain.run()` and read `chain.diag`.

    Without `init` the start is the ground state with a forced plus column above
    the event's face.
    """
    return Chain(params, init, event)


# -- exact enumeration -------------------------------------------------------

@njit(cache=True)
def _energies(nx, ny, nz, k0):
    n = nx * ny * nz
    out = np.empty(1 << n, dtype=np.int64)
    spins = np.empty((nx, ny, nz), dtype=np.int8)
    for code in range(1 << n):
        t = 0
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    spins[i, j, k] = 1 if (code >> t) & 1 else -1
                    t += 1
        out[code] = K.hamiltonian(K.pad(spins, k0))
    return out


@njit(cache=True)
def _builtin_observables(nx, ny, nz, k0, pi, pj, hmax):
    """Per configuration: pillar height (-1 if negative), |I|, A_1..A_hmax."""
    n = nx * ny * nz
    hgt = np.empty(1 << n, dtype=np.int64)
    size = np.empty(1 << n, dtype=np.int64)
    ah = np.zeros((1 << n, hmax + 1), dtype=np.uint8)
    spins = np.empty((nx, ny, nz), dtype=np.int8)
    for code in range(1 << n):
        t = 0
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    spins[i, j, k] = 1 if (code >> t) & 1 else -1
                    t += 1
        P = K.pad(spins, k0)
        M = K.interface_grid(P, k0)
        s = 0
        for v in M.ravel():
            s += v
        size[code] = s
        S = K.two_phase(M, (nx, ny, nz), k0)
        mask = K.plus_cluster(S, pi, pj, k0 + 1, nz + 2)
        top = K.pillar_top(K.slab_counts(mask, k0))
        if top == 0 and S[pi, pj, k0] < 0:
            top = -1
        hgt[code] = top
        for h in range(1, hmax + 1):
            if k0 + h <= nz:
                ok, _ = K.event_a_h(P, pi, pj, k0, h)
                ah[code, h] = ok
    return hgt, size, ah


def config_from_code(region: Region, code: int, beta: float = 1.0) -> SpinConfig:
    n = region.n_cells
    bits = (code >> np.arange(n)) & 1
    return SpinConfig(region, np.where(bits, 1, -1).astype(np.int8).reshape(region.shape), beta)


def code_of(cfg: SpinConfig) -> int:
    bits = (cfg.spins.ravel() > 0).astype(np.int64)
    return int(np.sum(bits << np.arange(bits.size, dtype=np.int64)))


@dataclass
class ExactTable:
    region: Region
    beta: float
    energies: np.ndarray
    probs: np.ndarray
    log_z: float
    x: Coord
    pillar_height: np.ndarray = field(repr=False)
    interface_size: np.ndarray = field(repr=False)
    a_h: np.ndarray = field(repr=False)

    @property
    def normalization_error(self) -> float:
        return abs(math.fsum(self.probs) - 1.0)

    def expect(self, values: np.ndarray) -> float:
        return float(math.fsum(self.probs * values))

    def prob_hgt_at_least(self, h: int) -> float:
        return self.expect((self.pillar_height >= h).astype(float))

    def prob_a_h(self, h: int) -> float:
        return self.expect(self.a_h[:, h].astype(float))

    def mean_excess_area(self) -> float:
        flat = (self.region.shape[0]) * (self.region.shape[1])
        return self.expect((self.interface_size - flat).astype(float))

    def conditional(self, mask: np.ndarray) -> np.ndarray:
        p = np.where(mask, self.probs, 0.0)
        return p / p.sum()


def enumerate_exact(region: Region, beta: float, x: Optional[Coord] = None,
                    functionals: Optional[Mapping[str, Callable[[SpinConfig], float]]] = None,
                    hmax: int = 2) -> tuple[ExactTable, dict]:
    """Brute force over all 2^N configurations of a box with at most 24 cells.

    Returns the table and exact expectations of the supplied functionals.
    Configuration code bit t is the spin of the t-th cell in C order.
    """
    n = region.n_cells
    if n > MAX_EXACT_CELLS:
        raise ValueError(f"region has {n} cells; exact enumeration limited to {MAX_EXACT_CELLS}")
    x = region.center_face() if x is None else x
    nx, ny, nz = region.shape
    k0 = region.k0
    E = _energies(nx, ny, nz, k0)
    w = np.exp(-beta * (E - E.min()).astype(float))
    z = math.fsum(w)
    probs = w / z
    pi, pj, _ = region.cell_index((x[0], x[1], 1))
    hgt, size, ah = _builtin_observables(nx, ny, nz, k0, pi + 1, pj + 1, hmax)
    table = ExactTable(region, beta, E, probs, math.log(z) - beta * float(E.min()), x, hgt, size, ah)
    out = {}
    for name, fn in (functionals or {}).items():
        vals = np.array([fn(config_from_code(region, c, beta)) for c in range(1 << n)], dtype=float)
        out[name] = table.expect(vals)
    return table, out


# -- binary dump -------------------------------------------------------------

MAGIC = b"ISNG1"
VERSION = 1
_HEADER = struct.Struct("<5sBiiidQQ")


def dump_bytes(cfg: SpinConfig, seed: int, sweep: int) -> bytes:
    """Magic, version, n, m, h (int32), beta (f64), seed, sweep (u64), packed spins (+1 -> 1).

    All little-endian; spins are row-major in cell index order, MSB first.
    """
    n, m, h = cfg.region.nmh
    head = _HEADER.pack(MAGIC, VERSION, n, m, h, float(cfg.beta), seed & (2 ** 64 - 1), sweep)
    return head + np.packbits(cfg.spins.ravel() > 0).tobytes()


def load_bytes(data: bytes) -> tuple[SpinConfig, int, int]:
    magic, ver, n, m, h, beta, seed, sweep = _HEADER.unpack_from(data, 0)
    if magic != MAGIC or ver != VERSION:
        raise ValueError("not an ISNG1 spin dump")
    region = Region.box(n, m, h)
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size),
                         count=region.n_cells)
    spins = np.where(bits.reshape(region.shape) > 0, 1, -1).astype(np.int8)
    return SpinConfig(region, spins, beta), seed, sweep


def write_dump(path, cfg: SpinConfig, seed: int, sweep: int):
    with open(path, "wb") as fh:
        fh.write(dump_bytes(cfg, seed, sweep))


def read_dump(path) -> tuple[SpinConfig, int, int]:
    with open(path, "rb") as fh:
        return load_bytes(fh.read())
