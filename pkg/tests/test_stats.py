import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diffqueue import (
    ConfigurationError,
    ModelParams,
    ReplicaError,
    SdeSpec,
    em_ensemble,
    krylov_ratio,
    ks_distance,
    ks_noise_floor,
    limit_sde,
    martingale_residual,
    occupation_near_G,
    run_ensemble,
    summarize,
)
from diffqueue.paths import QueuePath, SamplePath
from diffqueue.rng import stream_seed
from diffqueue.stats import (
    Ensemble,
    _ball_section_volume,
    ks_distance_columns,
    limit_coeffs,
    prelimit_coeff_fns,
)
from diffqueue.testfuncs import build_family

samples = st.lists(st.floats(min_value=-100, max_value=100, allow_nan=False),
                   min_size=1, max_size=60)


# ----------------------------------------------------------------- ensembles


def test_single_replica_matches_direct_call():
    gen = lambda k, seed: np.array([k, seed % 97])
    ens = run_ensemble(gen, 1, 2024)
    assert np.array_equal(ens.replicas[0], gen(0, stream_seed(2024, 0)))


def test_schedule_independence():
    def gen(k, seed):
        return np.array([seed % 1000, k])

    sequential = run_ensemble(gen, 64, 5)
    threaded = run_ensemble(gen, 64, 5, threads=8)
    for a, b in zip(sequential.replicas, threaded.replicas):
        assert np.array_equal(a, b)


def test_master_seed_changes_streams():
    gen = lambda k, seed: seed
    a = run_ensemble(gen, 16, 1)
    b = run_ensemble(gen, 16, 1)
    c = run_ensemble(gen, 16, 2)
    assert a.replicas == b.replicas
    assert any(x != y for x, y in zip(a.replicas, c.replicas))


def test_replica_failure_is_attributed():
    def gen(k, seed):
        if k == 11:
            raise ValueError("boom")
        return k

    with pytest.raises(ReplicaError, match="replica 11"):
        run_ensemble(gen, 20, 3)


def test_thread_env_cap(monkeypatch):
    monkeypatch.setenv("DIFFAPPROX_THREADS", "2")
    ens = run_ensemble(lambda k, seed: k, 8, 1, threads=16)
    assert ens.replicas == list(range(8))


def test_path_matrix_requires_common_grid():
    p1 = SamplePath(times=np.array([0.0, 1.0]), values=np.zeros((2, 1)))
    p2 = SamplePath(times=np.array([0.0, 2.0]), values=np.zeros((2, 1)))
    with pytest.raises(ConfigurationError):
        Ensemble([p1, p2], master_seed=0).path_matrix()


# ------------------------------------------------------------------------ KS


def test_ks_identical_samples():
    assert ks_distance([1.0, 2.0, 3.0], [3.0, 1.0, 2.0]) == 0.0


def test_ks_disjoint_supports():
    assert ks_distance([0.0], [1.0]) == 1.0


def test_ks_interleaved_example():
    assert ks_distance([0.0, 1.0], [0.5]) == 0.5


@given(samples, samples)
def test_ks_symmetric_and_bounded(a, b):
    d1 = ks_distance(a, b)
    assert d1 == ks_distance(b, a)
    assert 0.0 <= d1 <= 1.0


@given(samples, samples, samples)
@settings(max_examples=50)
def test_ks_triangle_sanity(a, b, c):
    assert ks_distance(a, c) <= ks_distance(a, b) + ks_distance(b, c) + 1e-12


def test_ks_rejects_empty():
    with pytest.raises(ConfigurationError):
        ks_distance([], [1.0])


def test_ks_columns_and_max():
    a = np.array([[0.0, 5.0], [1.0, 6.0]])
    b = np.array([[0.0, 5.0], [1.0, -6.0]])
    per, mx = ks_distance_columns(a, b)
    assert per[0] == 0.0 and per[1] == 0.5 and mx == 0.5


def test_self_distance_concentrates_near_noise_floor():
    rng = np.random.default_rng(8)
    m = 4000
    dists = [ks_distance(rng.normal(size=m), rng.normal(size=m)) for _ in range(40)]
    floor = ks_noise_floor(m)
    assert np.quantile(dists, 0.9) < 1.25 * floor
    assert np.median(dists) > 0.25 * floor


# ------------------------------------------------------------- occupation


def grid_path(values, T=1.0):
    values = np.asarray(values, dtype=float)
    times = np.linspace(0.0, T, len(values))
    return SamplePath(times=times, values=values.reshape(len(values), -1))


def test_occupation_on_the_set_is_total():
    p = ModelParams(d=1, alpha=[1.0], mu0=0.0, mu=[0.0], nu=[0.3], n=4)
    path = grid_path([0.3] * 11)
    assert occupation_near_G(path, p, 1e-9) == 1.0
    assert occupation_near_G(path, p, 1e9) == 1.0


def test_occupation_monotone_in_eps():
    p = ModelParams(d=1, alpha=[1.0], mu0=0.0, mu=[0.0], nu=[0.0], n=4)
    path = grid_path(np.linspace(-1, 1, 101))
    fracs = [occupation_near_G(path, p, e) for e in (0.05, 0.1, 0.2, 0.4, 5.0)]
    assert all(a <= b for a, b in zip(fracs, fracs[1:]))
    assert fracs[-1] == 1.0


def test_occupation_exact_for_event_paths():
    p = ModelParams(d=1, alpha=[1.0], mu0=0.0, mu=[0.0], nu=[0.0], n=1)
    # states 0 (duration 0.25), 1 (0.5), 0 (0.25); threshold at 0
    path = QueuePath(times=np.array([0.0, 0.25, 0.75]),
                     states=np.array([[0], [1], [0]]), horizon=1.0)
    assert occupation_near_G(path, p, 0.5) == pytest.approx(0.5)
    assert occupation_near_G(path, p, 2.0) == 1.0


def test_occupation_local_time_scaling_for_ou():
    # time near a level scales linearly in the window width for a
    # nondegenerate one-dimensional diffusion
    p = ModelParams(d=1, alpha=[1.0], mu0=0.0, mu=[0.0], nu=[0.0], n=100)
    res = em_ensemble(limit_sde(p), [0.0], 1.0, 1e-3, 400, 99, store_paths=True)
    occ = {}
    for eps in (0.2, 0.1, 0.05):
        fracs = [occupation_near_G(SamplePath(res.times, res.paths[k]), p, eps)
                 for k in range(res.paths.shape[0])]
        occ[eps] = float(np.mean(fracs))
    assert 0.35 <= occ[0.1] / occ[0.2] <= 0.65
    assert 0.35 <= occ[0.05] / occ[0.1] <= 0.65


# ------------------------------------------------------------- martingale


def test_constant_test_function_gives_zero_residual():
    p = ModelParams(d=1, alpha=[1.0], mu0=0.0, mu=[0.0], nu=[1e9], n=100)
    res = em_ensemble(limit_sde(p), [0.0], 1.0, 0.01, 50, 1, store_paths=True)
    u = [f for f in build_family(1) if f.id == "1"][0]
    rep = martingale_residual(res, u, 0.25, 0.75, coeffs=limit_coeffs(p))
    assert rep.estimate == 0.0
    assert rep.std_error == 0.0
    assert rep.test_function_id == "1"
    assert rep.M == 50


def test_frozen_dynamics_give_zero_residual_for_linear_u():
    # b = 0, sigma = 0: paths are constant, and for time-independent u the
    # residual telescopes to zero exactly
    p = ModelParams(d=1, alpha=[1.0], mu0=0.0, mu=[0.0], nu=[1e9], n=100)
    frozen = SdeSpec(dim=1, drift=lambda t, x: np.zeros_like(x),
                     diffusion=lambda t, x: np.zeros_like(x))
    res = em_ensemble(frozen, [2.0], 1.0, 0.05, 20, 5, store_paths=True)
    u = [f for f in build_family(1) if f.id == "x0"][0]

    class ZeroCoeffs:
        b = staticmethod(lambda x: np.zeros_like(x))
        a = staticmethod(lambda x: np.zeros_like(x))

    rep = martingale_residual(res, u, 0.0, 1.0, coeffs=ZeroCoeffs())
    assert rep.estimate == 0.0


def test_ou_residual_within_three_se():
    p = ModelParams(d=1, alpha=[1.0], mu0=0.0, mu=[0.0], nu=[1e9], n=100)
    res = em_ensemble(limit_sde(p), [0.0], 1.0, 1e-3, 2000, 17, store_paths=True)
    u = [f for f in build_family(1) if f.id == "x0"][0]
    rep = martingale_residual(res, u, 0.5, 1.0, coeffs=limit_coeffs(p))
    assert abs(rep.estimate) <= 3 * rep.std_error


def test_weighted_residual_and_snapping_warning():
    p = ModelParams(d=1, alpha=[1.0], mu0=0.0, mu=[0.0], nu=[1e9], n=100)
    res = em_ensemble(limit_sde(p), [0.0], 1.0, 0.01, 200, 23, store_paths=True)
    u = [f for f in build_family(1) if f.id == "x0"][0]
    weight = ([0.25], lambda x: 1.0 + 0.1 * np.tanh(x[:, 0]))
    with pytest.warns(UserWarning, match="snapped"):
        rep = martingale_residual(res, u, 0.5004, 1.0, coeffs=limit_coeffs(p),
                                  weight=weight)
    assert abs(rep.estimate) <= 4 * rep.std_error


def test_prelimit_coeff_functions_shapes():
    p = ModelParams(d=2, alpha=[1.0, 2.0], mu0=0.5, mu=[0.1, 0.1], nu=[0.0, 0.0], n=400)
    fns = prelimit_coeff_fns(p)
    x = np.random.default_rng(2).normal(size=(3, 5, 2))
    assert fns.b(x).shape == x.shape
    assert fns.a(x).shape == x.shape
    assert np.all(fns.a(x) >= 1.0 / p.alpha - 1e-12)


def test_queue_residual_with_finite_scale_coefficients():
    from diffqueue import initial_state, run_ensemble, scale, simulate_queue_on_grid

    p = ModelParams(d=1, alpha=[1.0], mu0=0.5, mu=[0.5], nu=[0.0], n=400)
    q0 = initial_state(p)

    def one(k, seed):
        return scale(simulate_queue_on_grid(p, q0, 1.0, seed, 200), p)

    ens = run_ensemble(one, 400, 61)
    u = [f for f in build_family(1) if f.id == "x0^2"][0]
    rep = martingale_residual(ens, u, 0.5, 1.0, coeffs=prelimit_coeff_fns(p))
    assert abs(rep.estimate) <= 3 * rep.std_error + 0.03


# ----------------------------------------------------------------- krylov


def test_krylov_empty_slab():
    p = ModelParams(d=1, alpha=[1.0], mu0=0.0, mu=[0.0], nu=[50.0], n=100)
    res = em_ensemble(limit_sde(p), [0.0], 1.0, 0.01, 50, 3, store_paths=True)
    out = krylov_ratio(res, p, 0.5, 2.0, 1.0)  # slab around nu=50 misses B_2
    assert out.lhs == 0.0
    assert out.rhs == 0.0


def test_krylov_monotone_in_eps():
    p = ModelParams(d=1, alpha=[1.0], mu0=0.0, mu=[0.0], nu=[0.0], n=100)
    res = em_ensemble(limit_sde(p), [0.0], 1.0, 1e-2, 400, 13, store_paths=True)
    lhs = [krylov_ratio(res, p, eps, 3.0, 1.0).lhs for eps in (0.05, 0.1, 0.2, 0.4)]
    assert all(a <= b for a, b in zip(lhs, lhs[1:]))


def test_krylov_ratio_scaling_in_one_dimension():
    # lhs ~ eps against rhs ~ sqrt(eps): quartering eps roughly halves the ratio
    p = ModelParams(d=1, alpha=[1.0], mu0=0.0, mu=[0.0], nu=[0.0], n=100)
    res = em_ensemble(limit_sde(p), [0.0], 1.0, 1e-3, 1500, 29, store_paths=True)
    r_coarse = krylov_ratio(res, p, 0.2, 3.0, 1.0)
    r_fine = krylov_ratio(res, p, 0.05, 3.0, 1.0)
    ratio_of_ratios = (r_fine.lhs / r_fine.rhs) / (r_coarse.lhs / r_coarse.rhs)
    assert 0.35 <= ratio_of_ratios <= 0.65


def test_ball_section_volume_closed_forms():
    # d=1: interval length
    assert _ball_section_volume(1, -0.25, 0.25, 2.0) == pytest.approx(0.5)
    assert _ball_section_volume(1, 1.5, 3.0, 2.0) == pytest.approx(0.5)
    # d=2: area between two chords of a disc
    r, lo, hi = 2.0, -0.3, 0.3

    def disc_segment(u):
        return u * np.sqrt(r * r - u * u) + r * r * np.arcsin(u / r)

    assert _ball_section_volume(2, lo, hi, r) == pytest.approx(
        disc_segment(hi) - disc_segment(lo), rel=1e-10)
    # d=3: slab of a ball
    vol3 = np.pi * ((r * r * hi - hi**3 / 3) - (r * r * lo - lo**3 / 3))
    assert _ball_section_volume(3, lo, hi, r) == pytest.approx(vol3, rel=1e-10)


# ---------------------------------------------------------------- summary


def test_summary_of_identical_replicas():
    ens = Ensemble([np.array([3.0, 1.0])] * 5, master_seed=0)
    s = summarize(ens)
    assert np.allclose(s.mean, [3.0, 1.0])
    assert np.allclose(s.variance, 0.0)


def test_summary_two_point_example():
    s = summarize(np.array([[0.0], [2.0]]))
    assert s.mean[0] == 1.0
    assert s.variance[0] == 2.0  # unbiased: (1+1)/(2-1)
    assert s.std_error[0] == 1.0


def test_summary_nearest_rank_quantiles():
    data = np.arange(1.0, 11.0).reshape(10, 1)
    s = summarize(data, quantile_levels=(0.1, 0.25, 0.5, 1.0))
    assert s.quantiles[0.1][0] == 1.0
    assert s.quantiles[0.25][0] == 3.0
    assert s.quantiles[0.5][0] == 5.0
    assert s.quantiles[1.0][0] == 10.0


def test_summary_needs_two_replicas():
    with pytest.raises(ConfigurationError):
        summarize(np.array([[1.0]]))


def test_ou_terminal_summary_matches_closed_form():
    p = ModelParams(d=1, alpha=[1.0], mu0=0.0, mu=[0.0], nu=[1e9], n=100)
    res = em_ensemble(limit_sde(p), [1.0], 1.0, 1e-3, 4000, 57)
    s = summarize(res.terminal)
    mean_exact = np.exp(-1.0)
    var_exact = 1.0 - np.exp(-2.0)
    assert abs(s.mean[0] - mean_exact) <= 3 * s.std_error[0]
    assert abs(s.variance[0] - var_exact) <= 3 * var_exact * np.sqrt(2.0 / (s.M - 1))
