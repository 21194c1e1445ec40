import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trapstack.core import species_lookup
from trapstack.protocol import (ReadoutModel, SequenceError, StageModel, analytic_fidelity,
                                fidelity_estimate, ground_state_size, optimal_threshold,
                                readout_statistics, run_sequence, spin_motion_sideband_rate,
                                stages_from_config, timing_budget, validate_sequence)

P = species_lookup("proton")
CHAIN = ("recool", "spin_to_motion", "shuttle", "motional_swap", "sideband_map", "fluorescence_readout")
PERFECT = ReadoutModel(20.0, 0.0, 1)


def clean_chain():
    return [StageModel(k) for k in CHAIN]


def poisson_cdf(k, mu):
    return sum(math.exp(-mu) * mu**j / math.factorial(j) for j in range(k + 1))


@pytest.fixture(scope="module")
def readout(config):
    return ReadoutModel.from_config(config)


def test_readout_errors_match_poisson_tails(readout):
    eb, ed = readout.errors()
    assert eb == pytest.approx(poisson_cdf(3, 10.0), rel=1e-12)
    assert ed == pytest.approx(1 - poisson_cdf(3, 1.0), rel=1e-12)
    assert (eb, ed) == pytest.approx((0.010336, 0.018988), abs=1e-6)
    assert optimal_threshold(readout) == 4
    assert readout.errors(0) == (0.0, 1.0)


def test_readout_monte_carlo(readout):
    st_ = readout_statistics(readout, 100_000, seed=1)
    assert abs(st_["eps_bright"] - st_["exact_bright"]) < 3 * st_["sigma_bright"]
    assert abs(st_["eps_dark"] - st_["exact_dark"]) < 3 * st_["sigma_dark"]
    assert st_["mc_best_threshold"] == st_["exact_best_threshold"] == 4


def test_noiseless_chain_is_perfect():
    est = fidelity_estimate(clean_chain(), PERFECT, 1000)
    assert est.fidelity == 1.0
    assert est.analytic == pytest.approx(1 - math.exp(-20.0) / 2, rel=1e-12)


def test_no_swap_gives_chance():
    est = fidelity_estimate(clean_chain(), PERFECT, 20_000, swap_contrast=0.0)
    assert est.analytic == pytest.approx(0.5, abs=1e-12)
    assert abs(est.fidelity - 0.5) < 4 * est.stderr


def test_omitting_swap_stage_breaks_information_path():
    stages = [StageModel(k) for k in CHAIN if k != "motional_swap"]
    est = fidelity_estimate(stages, PERFECT, 2000)
    assert est.fidelity == pytest.approx(0.5, abs=1e-12)
    assert est.analytic == pytest.approx(0.5, abs=1e-12)


def test_readout_errors_only(readout):
    eb, ed = readout.errors()
    expect = 1 - (eb + ed) / 2
    assert analytic_fidelity(clean_chain(), readout) == pytest.approx(expect, rel=1e-12)
    est = fidelity_estimate(clean_chain(), readout, 40_000, seed=5)
    assert abs(est.fidelity - expect) < 4 * est.stderr


def test_stderr_scales_as_inverse_sqrt(readout):
    a = fidelity_estimate(clean_chain(), readout, 1000).stderr
    b = fidelity_estimate(clean_chain(), readout, 4000).stderr
    assert a / b == pytest.approx(2.0, rel=1e-12)
    with pytest.raises(ValueError):
        fidelity_estimate(clean_chain(), readout, 50)


def test_configured_chain_agrees_with_exact(config, readout):
    stages = stages_from_config(config)
    assert [s.name for s in stages] == list(CHAIN)
    est = fidelity_estimate(stages, readout, 20_000, seed=2)
    assert abs(est.fidelity - est.analytic) < 4 * est.stderr
    assert est.trials_csv().splitlines()[0] == "trial,true_spin,photons,inferred"


@settings(max_examples=6)
@given(st.lists(st.floats(0, 0.2), min_size=6, max_size=6), st.floats(0, 0.5), st.floats(0.3, 1.0),
       st.integers(0, 10_000))
def test_monte_carlo_matches_propagation(probs, heat, contrast, seed):
    stages = [StageModel("recool", flip_prob=probs[0]),
              StageModel("spin_to_motion", flip_prob=probs[1]),
              StageModel("shuttle", heating_quanta=heat, failure_prob=probs[2]),
              StageModel("motional_swap", heating_quanta=heat / 2),
              StageModel("sideband_map", flip_prob=probs[3], failure_prob=probs[4]),
              StageModel("fluorescence_readout", failure_prob=probs[5])]
    ro = ReadoutModel(8.0, 0.5, 3)
    est = fidelity_estimate(stages, ro, 10_000, seed=seed, swap_contrast=contrast)
    assert abs(est.fidelity - est.analytic) < 4.5 * est.stderr
    assert 0.5 - 4.5 * est.stderr <= est.fidelity <= 1.0


def test_timing_budget(config, readout):
    stages = stages_from_config(config)
    b = timing_budget(stages, t_swap=3.7e-3, readout=readout)
    assert b["total_s"] == pytest.approx(1e-3 + 1e-3 + 100e-6 + 3.7e-3 + 20e-6 + 200e-6)
    assert timing_budget([])["total_s"] == 0.0
    assert timing_budget([StageModel("motional_swap")], t_swap=3.7e-3)["total_s"] == pytest.approx(3.7e-3)
    a, c = stages[:3], stages[3:]
    assert b["total_s"] == pytest.approx(timing_budget(a, 3.7e-3, readout)["total_s"]
                                         + timing_budget(c, 3.7e-3, readout)["total_s"])
    assert run_sequence(stages, readout, 1, t_swap=3.7e-3).total_time == pytest.approx(b["total_s"])


def test_sideband_rate():
    z0 = ground_state_size(P, 2 * math.pi * 4e6)
    assert z0 == pytest.approx(35.5e-9, rel=1e-2)
    w = 2 * math.pi * 4e6
    r1 = spin_motion_sideband_rate(P, 10.0, w, 2 * math.pi * 1e3)
    assert spin_motion_sideband_rate(P, 20.0, w, 2 * math.pi * 1e3) == pytest.approx(2 * r1)
    assert spin_motion_sideband_rate(P, 0.0, w, 2 * math.pi * 1e3) == 0.0
    assert r1 == pytest.approx(P.spin_moment() * 10.0 * z0 / 1.054571817e-34 * 1e3 / 4e6, rel=1e-9)
    with pytest.raises(ValueError):
        spin_motion_sideband_rate(P, -1.0, w, 1.0)


@pytest.mark.parametrize("names", [
    [],
    ["recool", "spin_to_motion"],
    ["fluorescence_readout", "recool"],
    ["recool", "fluorescence_readout", "fluorescence_readout"],
])
def test_malformed_sequences(names):
    with pytest.raises(SequenceError):
        validate_sequence([StageModel(n) for n in names])


def test_stage_validation():
    with pytest.raises(SequenceError):
        StageModel("teleport")
    with pytest.raises(SequenceError):
        StageModel("shuttle", flip_prob=1.5)
    with pytest.raises(SequenceError):
        StageModel("shuttle", heating_quanta=-1)
    with pytest.raises(ValueError):
        ReadoutModel(1.0, 2.0, 1)


def test_deterministic_replay(config, readout):
    stages = stages_from_config(config)
    a = run_sequence(stages, readout, 1, seed=9)
    b = run_sequence(stages, readout, 1, seed=9)
    assert a.log == b.log and a.photons == b.photons
    assert len(a.log) == len(stages)
    with pytest.raises(ValueError):
        run_sequence(stages, readout, 2)
    x = fidelity_estimate(stages, readout, 500, seed=4)
    y = fidelity_estimate(stages, readout, 500, seed=4)
    assert x.trials_csv() == y.trials_csv()
