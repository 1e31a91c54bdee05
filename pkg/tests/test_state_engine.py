import numpy as np
import pytest

from lintraj.errors import DimensionMismatch, ZeroTrace
from lintraj.lie_rep import propagator_blocks, rep_of_generator
from lintraj.parameterization import compute_generator, compute_noise_couplings
from lintraj.state_engine import (
    EvolutionFactors,
    apply_evolution,
    apply_evolution_power_series,
    coherent_state,
    expectation,
    fock_operators,
    fock_state,
    normalize_and_trace,
    trace_distance,
    vacuum_state,
)
from lintraj.system import SystemSpec, builtin_homodyne_thermal, validate_spec
from lintraj.trajectory import (
    BlockTable,
    accumulate_integrals,
    sample_ostensible_record,
)


def test_fock_operators_small_dims():
    a, ad, nop = fock_operators(2)
    assert np.array_equal(a, [[0, 1], [0, 0]])
    a, ad, nop = fock_operators(3)
    assert np.allclose(nop, np.diag([0, 1, 2]))
    # truncation defect concentrates in the top level
    D = 10
    a, ad, _ = fock_operators(D)
    defect = a @ ad - ad @ a - np.eye(D)
    assert abs(defect[D - 1, D - 1] + D) < 1e-12
    defect[D - 1, D - 1] = 0.0
    assert np.abs(defect).max() < 1e-12


def test_coherent_state_mean():
    alpha = 0.6 - 0.4j
    D = int(np.ceil(8 * abs(alpha) ** 2)) + 4
    state = coherent_state(1, D, alpha)
    a, _, _ = fock_operators(D)
    assert abs(expectation(state, a) - alpha) < 1e-6


def test_vacuum_and_fock_states():
    v = vacuum_state(1, 6)
    _, _, nop = fock_operators(6)
    assert abs(expectation(v, nop)) == 0.0
    f2 = fock_state(1, 6, 2)
    assert abs(expectation(f2, nop) - 2.0) < 1e-14


def _homodyne_factors(gamma, K, eta, dt, t_final, seed):
    spec = builtin_homodyne_thermal(gamma, K, eta)
    rep = rep_of_generator(compute_generator(spec))
    nc = compute_noise_couplings(spec)
    rec = sample_ostensible_record(spec, dt, t_final, seed=seed)
    table = BlockTable(rep, dt, rec.steps)
    ints = accumulate_integrals(table, nc, rec)
    return spec, rec, table, ints, EvolutionFactors.from_blocks(
        table.final_blocks(), ints)


def test_identity_factors_leave_state_unchanged():
    spec = builtin_homodyne_thermal(1.0, 0.4, 0.6)
    blocks = propagator_blocks(rep_of_generator(compute_generator(spec)), 0.0)
    factors = EvolutionFactors.from_blocks(blocks)
    rho0 = coherent_state(1, 12, 0.4)
    out = apply_evolution(rho0, factors)
    assert np.abs(out.rho - rho0.rho).max() < 1e-12


def test_pure_unravelling_preserves_purity():
    _, _, _, _, factors = _homodyne_factors(1.0, 0.0, 1.0, 1e-3, 1.0, seed=5)
    rho0 = coherent_state(1, 30, 0.7)
    evolved = apply_evolution(rho0, factors)
    normalized, _ = normalize_and_trace(evolved)
    assert abs(normalized.purity() - 1.0) < 1e-6
    evolved.check_hermitian()
    assert np.linalg.eigvalsh(normalized.rho).min() > -1e-6


def test_power_series_route_matches_superoperators():
    _, _, _, _, factors = _homodyne_factors(0.8, 0.4, 0.6, 1e-3, 0.3, seed=8)
    rho0 = vacuum_state(1, 14)
    superop = apply_evolution(rho0, factors)
    series = apply_evolution_power_series(rho0, factors)
    assert np.abs(superop.rho - series.rho).max() < 1e-8


def test_truncation_refinement_stability():
    spec, rec, table, ints, factors = _homodyne_factors(1.0, 0.3, 0.7, 1e-3,
                                                        0.5, seed=9)
    moments = []
    for D in (16, 32):
        rho0 = coherent_state(1, D, 0.5)
        evolved = apply_evolution(rho0, factors)
        normalized, _ = normalize_and_trace(evolved)
        _, _, nop = fock_operators(D)
        moments.append(float(np.real(expectation(normalized, nop))))
    assert abs(moments[0] - moments[1]) < 1e-6


def test_vacuum_weight_matches_oracle_trace():
    # vacuum is a dark state at zero temperature: its record weight is exactly
    # one, and the scalar bookkeeping (delta', sigma, h) must reproduce that
    from lintraj.oracle_sme import integrate_linear_sme

    spec, rec, table, ints, factors = _homodyne_factors(1.0, 0.0, 1.0, 1e-4,
                                                        0.5, seed=3)
    rho0 = vacuum_state(1, 10)
    _, trace = normalize_and_trace(apply_evolution(rho0, factors))
    weight = trace * np.exp(np.real(ints.h))
    oracle = integrate_linear_sme(spec, rho0, rec)
    otrace = float(np.real(np.trace(oracle.rho)))
    assert abs(weight - otrace) < 1e-4


def test_optomech_infinite_horizon_closed_form():
    from lintraj.povm import optomech_closed_form

    cf_inf = optomech_closed_form(1.0, 0.1, 0.0, 0.5, np.inf)
    cf_big = optomech_closed_form(1.0, 0.1, 0.0, 0.5, 1e3)
    assert abs(cf_inf.sigma_x2 - cf_big.sigma_x2) < 1e-12
    assert abs(cf_inf.sigma_p2 - cf_big.sigma_p2) < 1e-12


def test_normalize_and_trace_contract():
    rho0 = coherent_state(1, 8, 0.3)
    doubled = rho0.rho * 2.0
    from lintraj.state_engine import FockDensityMatrix

    state = FockDensityMatrix(n_modes=1, dim_per_mode=8, rho=doubled,
                              is_normalized=False)
    normalized, trace = normalize_and_trace(state)
    assert abs(trace - 2.0) < 1e-12
    assert np.abs(normalized.rho - rho0.rho).max() < 1e-12
    with pytest.raises(ZeroTrace):
        normalize_and_trace(FockDensityMatrix(
            n_modes=1, dim_per_mode=8, rho=np.zeros((8, 8), complex)))


def test_expectation_validates_dimensions():
    state = vacuum_state(1, 6)
    with pytest.raises(DimensionMismatch):
        expectation(state, np.eye(5))


def test_two_mode_application_against_oracle():
    from lintraj.oracle_sme import integrate_linear_sme

    g1, g2 = 1.0, 0.7
    C = np.zeros((2, 4), dtype=complex)
    C[0, :2] = np.sqrt(g1 / 2) * np.array([1, 1j])
    C[1, 2:] = np.sqrt(g2 / 2) * np.array([1, 1j])
    M = np.zeros((2, 4), dtype=complex)
    M[0, 0] = 1.0
    M[1, 1] = 1.0
    spec = validate_spec(SystemSpec(n_modes=2, n_channels=2,
                                    G=np.zeros((4, 4)), C=C, M=M))
    rep = rep_of_generator(compute_generator(spec))
    nc = compute_noise_couplings(spec)
    rec = sample_ostensible_record(spec, 1e-3, 0.4, seed=2)
    table = BlockTable(rep, 1e-3, rec.steps)
    ints = accumulate_integrals(table, nc, rec)
    factors = EvolutionFactors.from_blocks(table.final_blocks(), ints)
    rho0 = coherent_state(2, 8, [0.4, -0.3])
    evolved = apply_evolution(rho0, factors)
    normalized, trace = normalize_and_trace(evolved)
    oracle = integrate_linear_sme(spec, rho0, rec)
    onorm, otrace = normalize_and_trace(oracle)
    assert trace_distance(normalized.rho, onorm.rho) < 1e-3
    weight = trace * np.exp(np.real(ints.h))
    assert abs(weight - otrace) / otrace < 3e-2   # oracle trace error is O(dt)


def test_conditioned_moments_match_forward_filter():
    from lintraj.adjoint_kalman import forward_filter, kalman_matrices
    from lintraj.trajectory import sample_conditioned_record_gaussian

    gamma, K, eta = 1.0, 0.2, 0.8
    spec = builtin_homodyne_thermal(gamma, K, eta)
    alpha0 = 0.5
    dt, t_final, D = 2e-4, 0.4, 30
    rec = sample_conditioned_record_gaussian(
        spec, np.array([np.sqrt(2) * alpha0, 0.0]), 0.5 * np.eye(2),
        dt, t_final, seed=3)
    rep = rep_of_generator(compute_generator(spec))
    nc = compute_noise_couplings(spec)
    table = BlockTable(rep, dt, rec.steps)
    ints = accumulate_integrals(table, nc, rec)
    factors = EvolutionFactors.from_blocks(table.final_blocks(), ints)
    rho0 = coherent_state(1, D, alpha0)
    normalized, _ = normalize_and_trace(apply_evolution(rho0, factors))
    a, ad, _ = fock_operators(D)
    xop = (a + ad) / np.sqrt(2)
    pop = 1j * (ad - a) / np.sqrt(2)
    means, covs = forward_filter(kalman_matrices(spec),
                                 np.array([np.sqrt(2) * alpha0, 0.0]),
                                 0.5 * np.eye(2), rec)
    x_state = float(np.real(expectation(normalized, xop)))
    p_state = float(np.real(expectation(normalized, pop)))
    assert abs(x_state - means[-1, 0]) < 1e-3
    assert abs(p_state - means[-1, 1]) < 1e-3
    vxx_state = float(np.real(expectation(normalized, xop @ xop))) - x_state ** 2
    assert abs(vxx_state - covs[-1, 0, 0]) < 2e-3
