import math

import numpy as np
import pytest

from ergoshift import _streams
from ergoshift.sde_functionals import (
    DecayDiagnostic,
    NestedMC,
    SdeSpec,
    SimulationError,
    em_integrate,
    euler_maruyama,
    fit_decay,
    geometric_brownian,
    holder_decay_diagnostic,
    measure_functional,
    measure_functional_batch,
    ornstein_uhlenbeck,
    ou_tn_variance,
    path_increments,
    step_halving_error,
    tn_functional,
)
from ergoshift.wiener_core import DyadicPathStore, brownian_eval, scaling_shift


def zero_sde(x0=0.7):
    return SdeSpec(1, 1, lambda x, s: np.zeros((x.shape[0], 1, 1)), lambda x, s: np.zeros_like(x), 0.0,
                   np.array([x0]))


def decay_ode():
    return SdeSpec(1, 1, lambda x, s: np.zeros((x.shape[0], 1, 1)), lambda x, s: -x, 1.0, np.array([1.0]))


def brownian_sde():
    return SdeSpec(1, 1, lambda x, s: np.ones((x.shape[0], 1, 1)), lambda x, s: np.zeros_like(x), 0.0,
                   np.array([0.25]))


# ------------------------------------------------------------ Euler-Maruyama

def test_zero_coefficients_keep_state():
    traj = euler_maruyama(zero_sde(), DyadicPathStore(0), 32)
    assert np.all(traj == 0.7)


def test_ode_limit_is_first_order():
    errs = []
    for steps in (16, 32, 64, 128):
        x1 = euler_maruyama(decay_ode(), DyadicPathStore(0), steps)[-1, 0]
        errs.append(abs(x1 - math.exp(-1)))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(np.abs(ratios - 2.0) < 0.1)


def test_additive_noise_reproduces_path():
    P = DyadicPathStore(9)
    traj = euler_maruyama(brownian_sde(), P, 64)
    t = np.arange(1, 65) / 64
    assert np.allclose(traj[1:, 0], 0.25 + brownian_eval(P, t)[:, 0], atol=1e-12)


def test_deterministic_in_seed_and_steps():
    sde = geometric_brownian(1.0, 0.5)
    a = euler_maruyama(sde, DyadicPathStore(4), 50)
    b = euler_maruyama(sde, DyadicPathStore(4), 50)
    assert np.array_equal(a, b)


def test_nonfinite_state_aborts_with_step():
    blow = SdeSpec(1, 1, lambda x, s: np.zeros((x.shape[0], 1, 1)), lambda x, s: x**4, 0.0,
                   np.array([10.0]), check=False)
    with pytest.raises(SimulationError) as err, np.errstate(over="ignore", invalid="ignore"):
        em_integrate(blow, np.array([[10.0]]), np.linspace(0, 1, 65), np.zeros((1, 64, 1)))
    assert err.value.step >= 1


def test_lipschitz_fuzz_check():
    with pytest.raises(ValueError):
        SdeSpec(1, 1, lambda x, s: np.zeros((x.shape[0], 1, 1)), lambda x, s: x**3, 1.0)


def test_step_halving_report():
    rep = step_halving_error(decay_ode(), DyadicPathStore(0), 64)
    assert rep["error"] > 0
    assert abs(rep["richardson"][0] - math.exp(-1)) < abs(rep["fine"][0] - math.exp(-1))


def test_shift_compatibility_of_increments():
    times = np.arange(17) / 32.0
    seeds = [3, 4]
    shifted = path_increments(seeds, times, offset=1)
    direct = path_increments(seeds, 2 * times) / math.sqrt(2)
    assert np.max(np.abs(shifted - direct)) < 1e-12
    sde = ornstein_uhlenbeck(0.5)
    P = DyadicPathStore(3)
    a = euler_maruyama(sde, scaling_shift(P), 16, 0.5)
    x = em_integrate(sde, np.array([[0.5]]), times[:17], direct[:1])[0]
    assert a[-1] == pytest.approx(x, abs=1e-12)


# ------------------------------------------------------------ transfer operator

def test_tn_at_boundary_is_the_functional():
    sde = ornstein_uhlenbeck(0.3)
    P = DyadicPathStore(5)
    mc = NestedMC(step=1 / 64)
    val, err = tn_functional(sde, lambda x: x[:, 0], 0.5, 1, P, mc)
    direct = euler_maruyama(sde, scaling_shift(P), 32, 0.5)[-1, 0]
    assert err == 0.0 and val == pytest.approx(direct, abs=1e-12)


def test_tn_of_constant_is_constant():
    val, err = tn_functional(ornstein_uhlenbeck(), lambda x: np.full(x.shape[0], 4.0), 1.0, 3, DyadicPathStore(1))
    assert val == 4.0 and err == 0.0


def test_tn_tower_property_for_ou():
    # E T^n f = E f = x0 e^{-t} for every n
    from ergoshift.sde_functionals import _tn_samples
    sde = ornstein_uhlenbeck(1.0)
    mc = NestedMC(4000, 16, 1 / 64, seed=2)
    for n in (0, 2, 4):
        seeds = _streams.spawn_seeds(n, 4000)
        Y, _ = _tn_samples(sde, lambda x: x[:, 0], 1.0, n, seeds, mc, np.random.default_rng(n))
        assert abs(Y.mean() - math.exp(-1)) < 3 * Y.std(ddof=1) / math.sqrt(Y.size)


def test_ou_variance_oracle_values():
    assert ou_tn_variance(1.0, 0) == pytest.approx((1 - math.exp(-2)) / 2)
    d = 2.0**-3
    assert ou_tn_variance(1.0, 3) == pytest.approx(math.exp(-2 * (1 - d)) * (1 - math.exp(-2 * d)) / 2)


def test_decay_diagnostic_small_budget_tracks_oracle():
    diag = holder_decay_diagnostic(ornstein_uhlenbeck(), lambda x: x[:, 0], 1.0, 1.0, 6,
                                   NestedMC(4000, 32, 1 / 64, seed=3))
    exact = np.array([ou_tn_variance(1.0, n) for n in range(7)])
    assert np.all(np.abs(diag.variance - exact) <= 3.5 * diag.stderr)
    assert diag.certified and math.isfinite(diag.bound)


def test_decay_diagnostic_degenerate_for_constant():
    diag = holder_decay_diagnostic(ornstein_uhlenbeck(), lambda x: np.full(x.shape[0], 2.0), 1.0, 1.0, 3,
                                   NestedMC(200, 4, 1 / 32))
    assert diag.degenerate and np.all(diag.variance == 0) and diag.bound == 0.0


def test_decay_diagnostic_lipschitz_payoff():
    gbm = geometric_brownian(1.0, 1.0)
    diag = holder_decay_diagnostic(gbm, lambda x: np.minimum(x[:, 0], 1.5), 1.0, 1.0, 6,
                                   NestedMC(3000, 32, 1 / 64, seed=4))
    assert np.all(diag.variance > -3 * diag.stderr)
    assert abs(diag.lam_hat - 1.0) < max(0.3, 3 * diag.lam_stderr)


def test_fit_decay_recovers_exact_geometric():
    n = np.arange(4, 9)
    lam, se, c = fit_decay(n, 3.0 * 2.0 ** (-0.8 * n), 0.01 * 2.0 ** (-0.8 * n))
    assert lam == pytest.approx(0.8, abs=1e-12) and se < 0.01 and c == pytest.approx(math.log2(3.0))


def test_decay_serialization():
    d = DecayDiagnostic(np.arange(2), np.array([0.5, 0.25]), np.array([0.01, 0.01]), 1.0, 1.0, 0.1,
                        np.arange(2), 2.0, True, False)
    lines = d.to_csv().split("\n")
    assert lines[0] == "n,var_estimate,stderr" and lines[1].startswith("0,0.5,")
    assert '"lambda_hat": 1.0' in d.to_json()


# ------------------------------------------------------------ measure functionals

def test_single_atom_is_pointwise_functional():
    sde = ornstein_uhlenbeck(0.0)
    P = DyadicPathStore(6)
    val = measure_functional(sde, lambda x: x[:, 0], [(0.5, 0.2, 1.0)], P, 64)
    traj = euler_maruyama(sde, P, 64, 1.0, x0=0.2)
    assert val == pytest.approx(traj[32, 0], abs=1e-14)


def test_cancelling_atoms_vanish():
    val = measure_functional(ornstein_uhlenbeck(), lambda x: x[:, 0] ** 2, [(0.3, 1.0, 2.0), (0.3, 1.0, -2.0)],
                             DyadicPathStore(1), 32)
    assert val == 0.0


def test_two_atom_ou_mean():
    atoms = [(0.5, 1.0, 2.0), (1.0, -0.5, 1.0)]
    vals = measure_functional_batch(ornstein_uhlenbeck(), lambda x: x[:, 0], atoms,
                                    _streams.spawn_seeds(8, 20_000), 64)
    exact = 2.0 * math.exp(-0.5) - 0.5 * math.exp(-1.0)
    assert abs(vals.mean() - exact) < 3 * vals.std(ddof=1) / math.sqrt(vals.size)


def test_atom_time_domain():
    with pytest.raises(ValueError):
        measure_functional(ornstein_uhlenbeck(), lambda x: x[:, 0], [(1.5, 0.0, 1.0)], DyadicPathStore(0), 8)
