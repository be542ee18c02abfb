import itertools
import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dobrushin.ising import (
    ALWAYS,
    Chain,
    SamplerParams,
    SpinConfig,
    a_h,
    column_config,
    cuts_at_least,
    delta_energy,
    dump_bytes,
    enumerate_exact,
    glauber_step,
    hamiltonian,
    heat_bath_table,
    hgt_at_least,
    load_bytes,
    metropolis_table,
    read_dump,
    sample,
    write_dump,
)
from dobrushin.lattice import Region, neighbors
from dobrushin.pillar import extract_pillar, pillar_of_config
from dobrushin.interface import excess_area, extract_interface

FIXTURES = Path(__file__).parent / "fixtures"
SLAB = Region(-1, 2, -1, 2, -1, 1)


def brute_energy(cfg: SpinConfig) -> int:
    """Disagreeing nearest-neighbour pairs touching the region, counted once."""
    seen = set()
    e = 0
    for c in cfg.region.cells():
        for d in neighbors(c):
            key = frozenset((c, d))
            if key in seen:
                continue
            seen.add(key)
            e += cfg.spin(c) != cfg.spin(d)
    return e


def test_ground_state_energy_counts_straddling_pairs():
    r = Region.box(2, 3, 2)
    g = SpinConfig.ground_state(r)
    assert hamiltonian(g) == 4 * 6 == brute_energy(g)


def test_single_bump_costs_four():
    r = Region.box(2, 2, 2)
    g = SpinConfig.ground_state(r)
    assert hamiltonian(g.with_spins({(1, 1, 1): 1})) == hamiltonian(g) + 4


def test_flip_inside_plus_phase_costs_six():
    r = Region.box(2, 2, 3)
    g = SpinConfig.ground_state(r)
    assert hamiltonian(g.flipped((1, 1, -3))) - hamiltonian(g) == 6


@settings(max_examples=200)
@given(st.integers(0, 2 ** 32 - 1))
def test_local_field_matches_energy_difference(seed):
    rng = np.random.default_rng(seed)
    r = Region.box(2, 2, 2)
    cfg = SpinConfig(r, rng.choice(np.array([-1, 1], dtype=np.int8), size=r.shape))
    cells = list(r.cells())
    c = cells[int(rng.integers(len(cells)))]
    assert hamiltonian(cfg.flipped(c)) - hamiltonian(cfg) == delta_energy(cfg, c)
    assert hamiltonian(cfg) == brute_energy(cfg)


@pytest.mark.parametrize("beta", [0.0, 0.3, 1.0, 2.5])
def test_detailed_balance_for_all_local_fields(beta):
    hb, me = heat_bath_table(beta), metropolis_table(beta)
    for p in range(7):
        # H(+) - H(-) at a cell with p plus neighbours is (6 - p) - p
        dE = 6 - 2 * p
        ratio = math.exp(-beta * dE)
        assert hb[p] * 1.0 == pytest.approx((1 - hb[p]) * ratio)
        up = me[p]
        down = min(1.0, math.exp(beta * dE))
        assert up == pytest.approx(down * ratio)


def test_heat_bath_single_minority_neighbour():
    beta = 0.7
    assert heat_bath_table(beta)[1] == pytest.approx(0.5 * (1 - math.tanh(2 * beta)))
    assert heat_bath_table(beta)[3] == pytest.approx(0.5)


def test_glauber_step_keeps_configuration_type():
    r = Region.box(2, 2, 2)
    g = SpinConfig.ground_state(r, beta=0.0)
    rng = np.random.default_rng(0)
    out = glauber_step(g, (1, 1, 1), rng)
    assert out.region == r and out.spin((1, 1, 1)) in (-1, 1)


def _snapshots(params, event=None):
    return [s.cfg for s in Chain(params, event=event).run()]


def test_identical_seeds_give_identical_streams():
    p = SamplerParams(Region.box(3, 3, 3), 0.8, 30, seed=5, burn_in=3, thin=3)
    a = _snapshots(p)
    b = [s.cfg for s in sample(p)]
    assert a == b
    q = SamplerParams(Region.box(3, 3, 3), 0.8, 30, seed=5, burn_in=3, thin=3, chain=1)
    assert _snapshots(q) != a


def test_always_true_event_reproduces_unrestricted_trajectory():
    p = SamplerParams(Region.box(3, 3, 3), 0.8, 20, seed=2, thin=2)
    assert _snapshots(p, ALWAYS) == _snapshots(p)


def test_cold_chain_stays_in_ground_state():
    r = Region.box(3, 3, 3)
    p = SamplerParams(r, 10.0, 100, seed=1, thin=100)
    assert _snapshots(p)[-1] == SpinConfig.ground_state(r)


def test_infinite_temperature_marginals_are_uniform():
    r = Region.box(2, 2, 2)
    p = SamplerParams(r, 0.0, 2000, seed=3)
    s = np.array([c.spins for c in _snapshots(p)], dtype=float)
    mean = s.mean()
    assert abs(mean) < 3 / math.sqrt(s.size)


@pytest.mark.parametrize("event", [hgt_at_least((1, 1, 0), 3), cuts_at_least((1, 1, 0), 2), a_h((1, 1, 0), 2)])
def test_restricted_chain_never_leaves_event(event):
    r = Region.box(3, 3, 5)
    p = SamplerParams(r, 0.6, 200, seed=4, thin=5)
    ch = Chain(p, event=event)
    for snap in ch.run():
        assert event(snap.cfg)
    assert ch.diag.checks > 0


def test_restricted_chain_rejects_bad_start():
    r = Region.box(3, 3, 3)
    with pytest.raises(ValueError):
        Chain(SamplerParams(r, 1.0, 1, 0), init=SpinConfig.ground_state(r), event=hgt_at_least((1, 1, 0), 2))


def test_resume_is_bit_identical():
    r = Region.box(3, 3, 3)
    p = SamplerParams(r, 0.9, 40, seed=8, thin=1)
    full = Chain(p)
    full.sweep(40)
    part = Chain(p)
    part.sweep(17)
    saved = part.config()
    again = Chain(p)
    again.restore(saved, 17)
    again.sweep(23)
    assert again.config() == full.config()


def test_dump_roundtrip(tmp_path):
    r = Region.box(3, 2, 4)
    rng = np.random.default_rng(1)
    cfg = SpinConfig(r, rng.choice(np.array([-1, 1], dtype=np.int8), size=r.shape), 1.25)
    data = dump_bytes(cfg, 2 ** 63 + 5, 77)
    back, seed, sweep = load_bytes(data)
    assert back == cfg and back.beta == 1.25 and seed == 2 ** 63 + 5 and sweep == 77
    write_dump(tmp_path / "a.isng", cfg, 1, 2)
    assert read_dump(tmp_path / "a.isng")[0] == cfg
    with pytest.raises(ValueError):
        load_bytes(b"XXXXX" + data[5:])


def test_dump_header_layout():
    cfg = SpinConfig.ground_state(Region.box(1, 1, 1), 2.0)
    data = dump_bytes(cfg, 3, 4)
    assert data[:5] == b"ISNG1" and data[5] == 1
    assert len(data) == 5 + 1 + 12 + 8 + 16 + 1


# -- exact oracle ------------------------------------------------------------

def _brute_table(region, beta, x):
    """Independent enumeration through interface and pillar extraction."""
    n = region.n_cells
    ws, hg, ex = [], [], []
    for bits in itertools.product((-1, 1), repeat=n):
        cfg = SpinConfig(region, np.array(bits, dtype=np.int8).reshape(region.shape), beta)
        ws.append(brute_energy(cfg))
        I = extract_interface(cfg)
        hg.append(extract_pillar(I, x).height)
        ex.append(excess_area(I))
    E = np.array(ws, dtype=float)
    w = np.exp(-beta * (E - E.min()))
    Z = w.sum()
    p = w / Z
    return math.log(Z) - beta * E.min(), p @ (np.array(hg) >= 1), p @ np.array(ex, dtype=float)


@pytest.mark.parametrize("bounds", [(-1, 1, -1, 1, -1, 1), (-1, 1, 0, 1, -1, 2)])
@pytest.mark.parametrize("beta", [0.4, 1.1])
def test_exact_table_matches_independent_enumeration(bounds, beta):
    r = Region(*bounds)
    x = r.center_face()
    t, _ = enumerate_exact(r, beta, x=x)
    log_z, p_h, e_m = _brute_table(r, beta, x)
    assert t.log_z == pytest.approx(log_z, rel=1e-12)
    assert t.prob_hgt_at_least(1) == pytest.approx(p_h, rel=1e-9)
    assert t.mean_excess_area() == pytest.approx(e_m, rel=1e-9)
    assert t.normalization_error < 1e-12


def test_exact_functionals_and_cell_marginals():
    r = Region.box(1, 1, 1)
    c = (1, 1, 1)
    t, out = enumerate_exact(r, 0.8, functionals={"plus": lambda s: s.spin(c) > 0, "minus": lambda s: s.spin(c) < 0})
    assert out["plus"] + out["minus"] == pytest.approx(1.0, abs=1e-14)


def test_exact_cold_limit_concentrates_on_ground_state():
    r = Region.box(1, 1, 1)
    t, out = enumerate_exact(r, 50.0, functionals={"ground": lambda s: s == SpinConfig.ground_state(r)})
    assert out["ground"] >= 1 - 1e-6


def test_exact_refuses_large_regions():
    with pytest.raises(ValueError):
        enumerate_exact(Region.box(2, 2, 2), 1.0)


def test_exact_slab_matches_frozen_fixture():
    fx = json.loads((FIXTURES / "exact_slab_3x3x2.json").read_text())
    r = Region(*fx["region_bounds"])
    for beta_s, ref in fx["tables"].items():
        t, _ = enumerate_exact(r, float(beta_s), x=tuple(fx["x"]), hmax=2)
        assert t.log_z == pytest.approx(ref["log_Z"], rel=1e-12)
        assert t.prob_hgt_at_least(1) == pytest.approx(ref["P(hgt>=1)"], rel=1e-12)
        assert t.prob_a_h(1) == pytest.approx(ref["P(A_1)"], rel=1e-12)
        assert t.mean_excess_area() == pytest.approx(ref["E[m]"], rel=1e-12)


def test_restricted_chain_matches_conditional_law():
    r = Region(-1, 1, -1, 1, -1, 2)
    x = r.center_face()
    beta = 0.6
    t, _ = enumerate_exact(r, beta, x=x, hmax=2)
    cond = t.conditional(t.pillar_height >= 2)
    exact_m = float(cond @ (t.interface_size - len(r.l0_faces())))
    p = SamplerParams(r, beta, 10000, seed=9, burn_in=100, thin=2)
    ch = Chain(p, event=hgt_at_least(x, 2))
    ms = np.array([excess_area(extract_interface(s.cfg)) for s in ch.run()], dtype=float)
    from dobrushin.stats import effective_sample_size
    se = ms.std(ddof=1) / math.sqrt(effective_sample_size(ms))
    assert abs(ms.mean() - exact_m) <= 3 * se


def test_pillar_of_config_column():
    r = Region.box(3, 3, 6)
    cfg = column_config(r, (1, 1, 0), 4)
    assert pillar_of_config(cfg, (1, 1, 0)).height == 4
