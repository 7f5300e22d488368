"""Energy, current-conservation, comparison, and convergence diagnostics."""

from __future__ import annotations

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from kgmlab.diagnostics import (
    CompareReport,
    DegenerateInput,
    GridMismatch,
    compare,
    current_residual,
    observed_order,
    snapshot_extras,
    total_energy,
)
from kgmlab.full import run_full
from kgmlab.kernel import FullState, Grid1D, Params
from kgmlab.reduced import run_reduced
from kgmlab.scenarios import default_scenario, make_scenario


def comb_dt(t_end: float, h: float) -> float:
    return t_end / math.ceil(t_end / (0.5 * h))


def full_zeros(g: Grid1D) -> FullState:
    return FullState(
        t=0.0,
        B=np.zeros((4, g.n)),
        Bdot=np.zeros((4, g.n)),
        phi=np.zeros(g.n),
        phidot=np.zeros(g.n),
        grid=g,
    )


# ---------------------------------------------------------------------------
# energy
# ---------------------------------------------------------------------------


def test_energy_empty_state_is_zero():
    assert total_energy(full_zeros(Grid1D(n=32)), Params()) == 0.0


def test_energy_uniform_field_closed_form():
    # constant phi = A with all else zero: only the mass term survives,
    # density m^2 A^2 / 2, total = density * domain length
    g = Grid1D(n=64)
    p = Params(m=1.3)
    s = full_zeros(g)
    s.phi[:] = 0.7
    assert_allclose(total_energy(s, p), 0.5 * p.m**2 * 0.7**2 * g.length, rtol=1e-13)


def test_energy_translation_invariant_exactly():
    # shifting every field by a whole number of cells permutes the density
    # addends; exactly rounded summation makes the total literally equal
    g = Grid1D(n=128)
    p = Params()
    s = make_scenario(default_scenario("matter-packet"), p, g)
    base = total_energy(s, p)
    rolled = s.copy()
    rolled.B = np.roll(s.B, 13, axis=1)
    rolled.Bdot = np.roll(s.Bdot, 13, axis=1)
    rolled.phi = np.roll(s.phi, 13)
    rolled.phidot = np.roll(s.phidot, 13)
    assert total_energy(rolled, p) == base


def test_energy_agrees_across_state_flavors():
    # the reduced evaluation rebuilds the matter terms from reconstructed
    # intensity; agreement is stencil-order (measured 0.002 h^2)
    g = Grid1D(n=128)
    p = Params()
    s = make_scenario(default_scenario("matter-packet"), p, g)
    gap = abs(total_energy(s, p) - total_energy(s.to_reduced(), p))
    assert gap <= 0.05 * g.h**2


# ---------------------------------------------------------------------------
# current conservation
# ---------------------------------------------------------------------------


def test_current_residual_vacuum_is_zero():
    g = Grid1D(n=32)
    p = Params()
    s0 = make_scenario(default_scenario("vacuum-offset"), p, g)
    traj = run_full(s0, 0.01, 0.05, p, every=1)
    assert np.max(current_residual(traj, p)) == 0.0


def test_current_residual_two_snapshot_path():
    # with only endpoints the time part falls back to the state-carried
    # rates, which satisfy the balance pointwise: roundoff, not h^2
    g = Grid1D(n=128)
    p = Params()
    s0 = make_scenario(default_scenario("matter-packet"), p, g)
    traj = run_full(s0, comb_dt(0.5, g.h), 0.5, p, every=10**9)
    assert len(traj.states) == 2
    assert np.max(current_residual(traj, p)) <= 1e-13


def test_current_residual_second_order():
    # snapshot differencing dominates; measured 0.124 h^2 at both sizes
    p = Params()
    res = {}
    for n in (256, 512):
        g = Grid1D(n=n)
        s0 = make_scenario(default_scenario("matter-packet"), p, g)
        traj = run_full(s0, comb_dt(0.5, g.h), 0.5, p, every=4)
        res[n] = float(np.max(current_residual(traj, p)))
        assert res[n] <= 0.2 * g.h**2
    assert 2.0 <= res[256] / res[512] <= 9.0


def test_current_residual_flags_corrupted_snapshot():
    # a point bump in the matter field at one snapshot must stand out, and
    # the spike must sit at that snapshot or a differencing neighbor
    # (measured 70x at the neighbor)
    g = Grid1D(n=256)
    p = Params()
    s0 = make_scenario(default_scenario("matter-packet"), p, g)
    traj = run_full(s0, comb_dt(0.5, g.h), 0.5, p, every=4)
    clean = float(np.max(current_residual(traj, p)))
    k0 = len(traj.states) // 2
    traj.states[k0].phi[17] += 0.05
    spiked = current_residual(traj, p)
    assert np.max(spiked) > 5.0 * clean
    assert abs(int(np.argmax(spiked)) - k0) <= 1


# ---------------------------------------------------------------------------
# trajectory comparison
# ---------------------------------------------------------------------------


def test_compare_self_is_zero():
    g = Grid1D(n=64)
    p = Params()
    s0 = make_scenario(default_scenario("matter-packet"), p, g)
    traj = run_full(s0, comb_dt(0.2, g.h), 0.2, p, every=4)
    rep = compare(traj, traj)
    assert rep.max_rel_linf == 0.0
    assert np.all(rep.linf_abs == 0.0)
    assert np.all(rep.l2_abs == 0.0)


def test_compare_symmetric_and_scaled():
    g = Grid1D(n=64)
    p = Params()
    s0 = make_scenario(default_scenario("matter-packet"), p, g)
    dt = comb_dt(0.2, g.h)
    a = run_full(s0, dt, 0.2, p, every=4)
    b = run_reduced(s0.to_reduced(), dt, 0.2, p, every=4)
    ab, ba = compare(a, b), compare(b, a)
    assert ab.max_rel_linf == ba.max_rel_linf
    assert np.all(ab.scales == ba.scales)
    assert np.all(ab.scales > 0.0)


def test_compare_rejects_mismatched_grids():
    p = Params()
    s32 = make_scenario(default_scenario("vacuum-offset"), p, Grid1D(n=32))
    s64 = make_scenario(default_scenario("vacuum-offset"), p, Grid1D(n=64))
    a = run_full(s32, 0.01, 0.05, p)
    b = run_full(s64, 0.01, 0.05, p)
    with pytest.raises(GridMismatch, match="grids differ"):
        compare(a, b)


def test_compare_rejects_mismatched_times():
    g = Grid1D(n=32)
    p = Params()
    s0 = make_scenario(default_scenario("vacuum-offset"), p, g)
    a = run_full(s0, 0.01, 0.05, p, every=1)
    b = run_full(s0, 0.01, 0.04, p, every=1)
    with pytest.raises(GridMismatch, match="times"):
        compare(a, b)


def test_compare_report_serializations():
    g = Grid1D(n=32)
    p = Params()
    s0 = make_scenario(default_scenario("pure-gauge-wave"), p, g)
    traj = run_full(s0, comb_dt(0.1, g.h), 0.1, p, every=2)
    rep = compare(traj, traj)
    kv = rep.to_kv()
    assert kv["max_rel_linf"] == 0.0
    assert {"max_rel_linf_b0", "max_rel_l2_b3", "scale_b1", "snapshots"} <= kv.keys()
    text = rep.to_text()
    assert "max relative Linf" in text
    assert len(text.splitlines()) == len(traj.times) + 2


# ---------------------------------------------------------------------------
# convergence order
# ---------------------------------------------------------------------------


def test_observed_order_exact_quadratic():
    errors = [(h, 3.7 * h**2) for h in (0.2, 0.1, 0.05, 0.025)]
    assert_allclose(observed_order(errors), 2.0, atol=1e-12)


def test_observed_order_tolerates_noise():
    rng = np.random.default_rng(11)
    errors = [(h, 2.0 * h**2 * (1.0 + 0.05 * rng.standard_normal()))
              for h in (0.2, 0.1, 0.05, 0.025)]
    assert 1.7 <= observed_order(errors) <= 2.3


def test_observed_order_rejects_degenerate_input():
    with pytest.raises(DegenerateInput, match="two refinement"):
        observed_order([(0.1, 1e-3)])
    with pytest.raises(DegenerateInput, match="no trend"):
        observed_order([(0.1, 1e-3), (0.1, 2e-3)])
    with pytest.raises(DegenerateInput, match="positive"):
        observed_order([(0.1, 1e-3), (0.05, 0.0)])


# ---------------------------------------------------------------------------
# per-snapshot extras
# ---------------------------------------------------------------------------


def test_snapshot_extras_keys_and_fallback():
    g = Grid1D(n=64)
    p = Params()
    keys = {"t", "energy", "constraint_residual", "min_abs_b0", "min_phi",
            "fallback_fraction", "charge_mean"}

    matter = make_scenario(default_scenario("matter-packet"), p, g)
    ex = snapshot_extras(matter, p)
    assert set(ex) == keys
    assert ex["fallback_fraction"] == 0.0  # full state carries phi directly
    assert ex["min_phi"] > 0.0

    wave = make_scenario(default_scenario("pure-gauge-wave"), p, g).to_reduced()
    ex = snapshot_extras(wave, p)
    assert set(ex) == keys
    assert ex["fallback_fraction"] == 1.0  # vacuum: every point below floor
    assert abs(ex["min_phi"]) <= 1e-12
