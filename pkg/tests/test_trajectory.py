import numpy as np
import pytest

from lintraj.lie_rep import rep_of_generator
from lintraj.parameterization import compute_generator, compute_noise_couplings
from lintraj.system import builtin_homodyne_thermal
from lintraj.trajectory import (
    BlockTable,
    MeasurementRecord,
    accumulate_integrals,
    accumulate_integrals_ensemble,
    record_from_csv,
    record_to_csv,
    sample_conditioned_record_gaussian,
    sample_ostensible_record,
    stochastic_d,
)


@pytest.fixture
def homodyne_pipeline():
    spec = builtin_homodyne_thermal(1.0, 0.6, 0.7)
    gen = compute_generator(spec)
    rep = rep_of_generator(gen)
    nc = compute_noise_couplings(spec)
    return spec, rep, nc


def test_ostensible_record_deterministic(homodyne_pipeline):
    spec, _, _ = homodyne_pipeline
    a = sample_ostensible_record(spec, 1e-3, 0.5, seed=7)
    b = sample_ostensible_record(spec, 1e-3, 0.5, seed=7)
    assert np.array_equal(a.y, b.y)


def test_ostensible_record_unmonitored_columns_zero(homodyne_pipeline):
    spec, _, _ = homodyne_pipeline
    rec = sample_ostensible_record(spec, 1e-3, 0.5, seed=1)
    assert np.abs(rec.y[:, 1:]).max() == 0.0
    assert np.abs(rec.y[:, 0]).max() > 0.0


def test_ostensible_record_variance(homodyne_pipeline):
    spec, _, _ = homodyne_pipeline
    dt = 1e-3
    rec = sample_ostensible_record(spec, dt, 1000 * dt, seed=2)
    samples = (rec.y[:, 0] * dt).ravel()
    # widen with many records for a million samples
    more = [sample_ostensible_record(spec, dt, 1000 * dt, seed=100 + k).y[:, 0] * dt
            for k in range(999)]
    samples = np.concatenate([samples] + more)
    n = samples.size
    var = samples.var()
    se = dt * np.sqrt(2.0 / n)   # sample-variance standard error for Gaussians
    assert abs(var - dt) < 3 * se


def test_zero_record_gives_zero_integrals(homodyne_pipeline):
    spec, rep, nc = homodyne_pipeline
    steps = 200
    rec = MeasurementRecord(dt=1e-3, steps=steps, y=np.zeros((steps, 4)))
    table = BlockTable(rep, 1e-3, steps)
    ints = accumulate_integrals(table, nc, rec)
    assert np.abs(ints.l_prime).max() == 0.0
    assert np.abs(ints.r_prime).max() == 0.0
    assert ints.h == 0.0
    d = stochastic_d(ints, np.zeros((2, 2)))
    assert np.abs(d).max() == 0.0


def test_integrals_pairing_invariant(homodyne_pipeline):
    spec, rep, nc = homodyne_pipeline
    rec = sample_ostensible_record(spec, 1e-3, 0.7, seed=3)
    table = BlockTable(rep, 1e-3, rec.steps)
    ints = accumulate_integrals(table, nc, rec)
    ints.check_pairing(1e-12)


def test_zero_temperature_kills_r_prime():
    spec = builtin_homodyne_thermal(1.0, 0.0, 0.8)
    rep = rep_of_generator(compute_generator(spec))
    nc = compute_noise_couplings(spec)
    rec = sample_ostensible_record(spec, 1e-3, 0.6, seed=4)
    table = BlockTable(rep, 1e-3, rec.steps)
    ints = accumulate_integrals(table, nc, rec)
    assert np.abs(ints.r_prime).max() < 1e-14
    assert abs(ints.h) < 1e-14


def test_constant_record_exponential_kernel():
    gamma, eta = 1.0, 1.0
    spec = builtin_homodyne_thermal(gamma, 0.0, eta)
    rep = rep_of_generator(compute_generator(spec))
    nc = compute_noise_couplings(spec)
    dt, t_final, level = 1e-4, 1.0, 0.9
    steps = int(t_final / dt)
    y = np.zeros((steps, 4))
    y[:, 0] = level
    rec = MeasurementRecord(dt=dt, steps=steps, y=y)
    table = BlockTable(rep, dt, steps)
    ints = accumulate_integrals(table, nc, rec)
    taus = dt * np.arange(1, steps + 1)
    discrete = np.sqrt(gamma) * level * np.sum(np.exp(-gamma * taus / 2)) * dt
    assert abs(ints.l_prime[0] - discrete) < 1e-12
    continuum = np.sqrt(gamma) * level * (2 / gamma) * (1 - np.exp(-gamma * t_final / 2))
    assert abs(ints.l_prime[0] - continuum) < 5 * gamma * dt


def test_refinement_convergence_of_integrals():
    spec = builtin_homodyne_thermal(1.0, 0.5, 0.9)
    rep = rep_of_generator(compute_generator(spec))
    nc = compute_noise_couplings(spec)
    t_final = 0.5
    dt_f = t_final / 2 ** 12
    rng = np.random.default_rng(10)
    dw = rng.normal(size=2 ** 12) * np.sqrt(dt_f)

    def integrals_at(agg):
        dt = dt_f * agg
        steps = 2 ** 12 // agg
        y = np.zeros((steps, 4))
        y[:, 0] = dw.reshape(steps, agg).sum(axis=1) / dt
        rec = MeasurementRecord(dt=dt, steps=steps, y=y)
        table = BlockTable(rep, dt, steps)
        return accumulate_integrals(table, nc, rec)

    ref = integrals_at(1)
    errs = []
    for agg in (16, 4):
        got = integrals_at(agg)
        errs.append(max(np.abs(got.l_prime - ref.l_prime).max(),
                        np.abs(got.r_prime - ref.r_prime).max()))
    # halving dt by 4 should reduce the error by at least 4**0.5 = 2
    assert errs[1] < errs[0] / 1.8


def test_ensemble_accumulation_matches_single(homodyne_pipeline):
    spec, rep, nc = homodyne_pipeline
    table = BlockTable(rep, 1e-3, 300)
    recs = [sample_ostensible_record(spec, 1e-3, 0.3, seed=50 + k)
            for k in range(4)]
    y = np.stack([r.y for r in recs])
    l_e, r_e, h_e = accumulate_integrals_ensemble(table, nc, y)
    for k, rec in enumerate(recs):
        single = accumulate_integrals(table, nc, rec)
        assert np.abs(l_e[k] - single.l_prime).max() < 1e-13
        assert np.abs(r_e[k] - single.r_prime).max() < 1e-13
        assert abs(h_e[k] - single.h) < 1e-13


def test_conditioned_record_vacuum_statistics():
    spec = builtin_homodyne_thermal(1.0, 0.0, 1.0)
    dt, t_final = 1e-3, 0.4
    y = sample_conditioned_record_gaussian(spec, np.zeros(2), 0.5 * np.eye(2),
                                           dt, t_final, seed=6, n_traj=2000)
    incr = y[:, :, 0] * dt
    n = incr.size
    assert abs(incr.mean()) < 4 * np.sqrt(dt / n)
    assert abs(incr.var() - dt) < 4 * dt * np.sqrt(2.0 / n)
    assert np.abs(y[:, :, 1:]).max() == 0.0


def test_conditioned_record_coherent_initial_current():
    gamma, K, eta = 1.0, 0.0, 1.0
    spec = builtin_homodyne_thermal(gamma, K, eta)
    alpha0 = 0.8
    mean0 = np.array([np.sqrt(2) * alpha0, 0.0])
    dt = 1e-3
    y = sample_conditioned_record_gaussian(spec, mean0, 0.5 * np.eye(2),
                                           dt, 50 * dt, seed=8, n_traj=4000)
    first = y[:, 0, 0]
    want = 2 * np.sqrt(gamma * eta) * alpha0
    se = first.std() / np.sqrt(len(first))
    assert abs(first.mean() - want) < 4 * se


def test_stochastic_d_zero_temperature_closed_form():
    gamma, eta = 1.0, 1.0
    spec = builtin_homodyne_thermal(gamma, 0.0, eta)
    rep = rep_of_generator(compute_generator(spec))
    nc = compute_noise_couplings(spec)
    rec = sample_ostensible_record(spec, 1e-3, 0.9, seed=12)
    table = BlockTable(rep, 1e-3, rec.steps)
    ints = accumulate_integrals(table, nc, rec)
    from lintraj.lie_rep import povm_blocks

    lpp = povm_blocks(table.final_blocks())
    d = stochastic_d(ints, lpp)
    taus = 1e-3 * np.arange(1, rec.steps + 1)
    want = np.sqrt(gamma) * np.sum(np.exp(-gamma * taus / 2) * rec.y[:, 0]) * 1e-3
    assert abs(d[0] - want) < 1e-12


def test_record_csv_roundtrip(tmp_path, homodyne_pipeline):
    spec, _, _ = homodyne_pipeline
    rec = sample_ostensible_record(spec, 1e-3, 0.1, seed=3)
    path = tmp_path / "rec.csv"
    record_to_csv(rec, str(path), header_comment="test")
    back = record_from_csv(str(path))
    assert back.steps == rec.steps
    assert abs(back.dt - rec.dt) < 1e-15
    assert np.abs(back.y - rec.y).max() < 1e-15
