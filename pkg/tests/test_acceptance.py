"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; ``-m "not slow"`` skips the
ensemble-heavy criteria (4, 5, 6, 7), which take several minutes each on one core.
"""
import functools

import numpy as np
import pytest
from scipy.special import jv

from nemchain.closed import Propagator, PureState, ctqw_spread, evolve_pure, localization_length_fit
from nemchain.entanglement import (
    build_concurrence_map,
    concurrence,
    concurrence_map,
    reduce_two_site,
    single_excitation_concurrence_oracle,
)
from nemchain.harness.config import ExperimentConfig, TimeGrid
from nemchain.harness.ensemble import run_ensemble
from nemchain.harness.experiments import GAMMA_OVER_J, preset_configs
from nemchain.lindblad import BathSpec, DensityMatrix, IntegratorOptions, lindblad_rhs, propagate_master, superoperator
from nemchain.model import (
    ChainSpec,
    DisorderRealization,
    build_fock_basis,
    build_fock_hamiltonian,
    build_single_excitation_h,
    sample_disorder,
)
from nemchain.params import TABLE1_PUBLISHED, table1


@pytest.fixture
def report(capsys):
    """``report(n, ok, detail)`` prints the verdict line outside pytest's capture."""

    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")
        return ok

    return emit


def uniform_dispersion(n):
    return np.sqrt((n * n - 1) / 12.0)


# 1. device table


def test_criterion_01_device_table(report):
    worst = 0.0
    for row in table1():
        lam, j = TABLE1_PUBLISHED[(row["omega_over_2pi_GHz"], row["dV_V"])]
        worst = max(worst, abs(row["lambda_over_2pi_MHz"] / lam - 1), abs(row["J_over_2pi_MHz"] / j - 1))
    assert report(1, worst < 0.10, f"worst relative deviation {worst:.3f}, bound 0.10")


# 2. Bessel propagation


def test_criterion_02_bessel_oracle(report):
    n, c = 101, 50
    h = build_single_excitation_h(DisorderRealization(np.zeros(n)), 1.0)
    times = np.linspace(0.0, 20.0, 201)
    psi0 = np.zeros(n, complex)
    psi0[c] = 1
    pops = np.abs(Propagator(h).evolve(psi0, times)) ** 2
    oracle = jv(np.arange(n)[None, :] - c, 2 * times[:, None]) ** 2
    dev = float(np.abs(pops - oracle).max())
    assert report(2, dev < 1e-6, f"max |p - J^2| = {dev:.2e}, bound 1e-6")


# 3. ballistic walk


def test_criterion_03_ballistic_spread(report):
    n, c = 101, 50
    h = build_single_excitation_h(DisorderRealization(np.zeros(n)), 1.0)
    times = np.linspace(0.0, 20.0, 401)
    pops = np.abs(Propagator(h).evolve(np.eye(n)[c].astype(complex), times)) ** 2
    fit = ctqw_spread(pops, times, c, 1.0, window=(0.5, 20.0))
    rel = abs(fit.slope / np.sqrt(2) - 1)
    ok = rel < 0.01 and fit.r_squared > 0.999
    assert report(3, ok, f"slope {fit.slope:.5f} vs sqrt(2) (rel {rel:.1e}), R^2 {fit.r_squared:.6f}")


# 4. ground-state dispersion ensemble


@functools.lru_cache(maxsize=None)
def _fig2_mean(n, delta):
    cfg = preset_configs("fig2")[f"N{n}_D{delta:g}"]
    assert cfg.realizations == 500
    stats, _ = run_ensemble(cfg)
    return float(stats.mean["ratio"])


@pytest.mark.slow
def test_criterion_04a_dispersion_decreases_with_disorder(report):
    means = [_fig2_mean(300, d) for d in (2.0, 5.0, 10.0, 15.0, 20.0)]
    ok = all(a > b for a, b in zip(means, means[1:]))
    assert report("4a", ok, "N=300 means " + ", ".join(f"{m:.4f}" for m in means))


@pytest.mark.slow
def test_criterion_04b_dispersion_size_independent_at_strong_disorder(report):
    # Known miss: the ratio keeps falling like ln(N)/N at these sizes, analysed in the decisions ledger.
    m150, m300 = _fig2_mean(150, 20.0), _fig2_mean(300, 20.0)
    rel = abs(m150 - m300) / m300
    assert report("4b", rel < 0.05, f"N=150 {m150:.5f} vs N=300 {m300:.5f}, rel diff {rel:.3f}, bound 0.05")


# 5. closed localization profile


@pytest.mark.slow
def test_criterion_05_closed_localization(report):
    cfg = preset_configs("fig3")["a"].with_overrides(realizations=100)
    assert (cfg.chain.n_sites, cfg.chain.disorder, cfg.bath) == (51, 15.0, None)
    stats, _ = run_ensemble(cfg)
    profile = stats.mean["profile"]
    c = cfg.initial_site()
    fit = localization_length_fit(profile, c)
    tail = float(profile[np.abs(np.arange(51) - c) > 10].sum())
    ok = fit.r_squared > 0.9 and tail < 1e-2
    assert report(5, ok, f"R^2 {fit.r_squared:.3f} (xi {fit.xi:.2f}), population beyond 10 sites {tail:.2e}")


# 6. thermal fixed point


@pytest.mark.slow
@pytest.mark.parametrize("delta", [2.0, 15.0])
def test_criterion_06_thermal_fixed_point(report, delta):
    # n_max = 3: at 2 the truncated thermal occupation sits 2e-4 below nbar
    n, nbar, k = 21, 1e-2, 3
    basis = build_fock_basis(n, k, k)
    h = build_fock_hamiltonian(sample_disorder(ChainSpec(n, delta), 20160601, 0), 1.0, basis)
    t_end = 20.0 / GAMMA_OVER_J
    trace = propagate_master(h, BathSpec(GAMMA_OVER_J, nbar), DensityMatrix.localized(basis, n // 2), [0.0, t_end])
    dev = float(np.abs(trace.populations[-1] - nbar).max())
    assert report(6, dev < 1e-4, f"D/J={delta:g}: max |p_j - nbar| = {dev:.2e} at gamma t = 20, bound 1e-4")


# 7. thermal dispersion ordering


@pytest.mark.slow
def test_criterion_07_thermal_ordering(report):
    configs = preset_configs("fig4")
    times = next(iter(configs.values())).times.values()
    curves = {}
    for cfg in configs.values():
        stats, _ = run_ensemble(cfg)
        curves[(cfg.chain.disorder, cfg.bath.nbar)] = stats.mean["delta_n"]
    cfg = next(iter(configs.values()))
    uniform = uniform_dispersion(cfg.chain.n_sites)
    late = times >= cfg.transient
    # the excitation survives for ~1/gamma; after that the thermal background takes over at any nbar
    window = late & (times <= 1.0 / GAMMA_OVER_J)
    nbars = (1e-4, 1e-3, 1e-2, 1e-1)
    ordered = all(
        np.all(np.diff(np.array([curves[(d, nb)] for nb in nbars])[:, late], axis=0) >= 0) for d in (2.0, 15.0)
    )
    low = max(float(curves[(15.0, nb)][window].max()) for nb in (1e-4, 1e-3)) / uniform
    high = float(curves[(15.0, 1e-1)][-1]) / uniform
    ok = ordered and low < 0.25 and high > 0.75
    detail = f"ordered={ordered}, low-nbar max {low:.3f} (<0.25), nbar=0.1 final {high:.3f} (>0.75) of uniform"
    assert report(7, ok, detail)


# 8. concurrence


def _werner(p):
    psi = np.array([0, 1, -1, 0]) / np.sqrt(2)
    return p * np.outer(psi, psi) + (1 - p) * np.eye(4) / 4


def _sector_states(rng, basis, count):
    sector = [basis.vacuum_index()] + [basis.single_excitation_index(s) for s in range(basis.n_sites)]
    for k in range(count):
        a = np.zeros((basis.dimension, 1 + k % 3), complex)
        a[sector] = rng.normal(size=(len(sector), a.shape[1])) + 1j * rng.normal(size=(len(sector), a.shape[1]))
        rho = a @ a.conj().T
        yield DensityMatrix(rho / np.trace(rho), basis)


def test_criterion_08_concurrence(report):
    werner = max(abs(concurrence(_werner(p)) - max(0.0, (3 * p - 1) / 2)) for p in (0.0, 1 / 3, 0.6, 1.0))

    rng = np.random.default_rng(2016)
    basis = build_fock_basis(5, 2, 2)
    sector = 0.0
    for state in _sector_states(rng, basis, 1000):
        i, j = rng.choice(5, size=2, replace=False)
        sector = max(sector, abs(concurrence(reduce_two_site(state, i, j)) - single_excitation_concurrence_oracle(state, i, j)))

    # ballistic cone: the C > 1e-3 front advances at ~2J
    n, c = 61, 30
    times = np.linspace(0.0, 12.0, 49)
    h = build_single_excitation_h(DisorderRealization(np.zeros(n)), 1.0)
    cone = concurrence_map(evolve_pure(h, PureState.localized(n, c), times), times, c)
    dist = np.abs(cone.sites - c)
    front = np.array([dist[row > 1e-3].max() if (row > 1e-3).any() else 0 for row in cone.values])
    speed = np.polyfit(times[times >= 2], front[times >= 2], 1)[0]

    maps = {}
    for kind in ("fig5", "fig6"):
        for tag, cfg in preset_configs(kind).items():
            stats, _ = run_ensemble(cfg)
            maps[kind, tag] = build_concurrence_map(
                cfg.times.values(), stats.mean["concurrence"], stats.mean.get("trace_deficit", 0 * stats.mean["concurrence"]), cfg.initial_site()
            )
    far = {}
    for key, m in maps.items():
        far[key] = float(m.values[:, np.abs(m.sites - m.center) >= 5].max())
    confined = far["fig6", "closed"] < 1e-2 and far["fig5", "closed"] > 0.1
    deaths = maps["fig5", "open"].sudden_death
    per_site = np.bincount([s for s, _, _ in deaths], minlength=1) if deaths else np.zeros(1, int)
    periodic = per_site.max() >= 2
    closed_clean = not maps["fig5", "closed"].sudden_death and not maps["fig6", "closed"].sudden_death

    ok = werner < 1e-10 and sector < 1e-8 and 1.6 < speed < 2.6 and confined and periodic and closed_clean
    detail = (
        f"Werner {werner:.1e}, sector {sector:.1e}, cone speed {speed:.2f} J, "
        f"far-field C at D/J=10 {far['fig6', 'closed']:.1e} vs D/J=0 {far['fig5', 'closed']:.2f}, "
        f"{len(deaths)} sudden-death windows (max {per_site.max()} on one site)"
    )
    assert report(8, ok, detail)


# 9. integrity


def _oracle_generator(basis, real, coupling, baths):
    """Lindblad superoperator built from Kronecker products on the untruncated product space."""
    n, m = basis.n_sites, basis.n_max + 1
    a1 = np.diag(np.sqrt(np.arange(1, m)), 1)
    full = []
    for j in range(n):
        op = np.array([[1.0]])
        for k in range(n):
            op = np.kron(op, a1 if k == j else np.eye(m))
        full.append(op)
    index = basis.states @ (m ** np.arange(n - 1, -1, -1))
    proj = np.eye(m**n)[index]  # rows select the retained states
    a = [proj @ op @ proj.T for op in full]
    h = sum(w * x.T @ x for w, x in zip(real.diagonal(), a))
    for j in range(n - 1):
        h = h - coupling * (a[j].T @ a[j + 1] + a[j + 1].T @ a[j])
    d = basis.dimension
    eye = np.eye(d)
    gen = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for x, g in zip(a, baths.rates(n)):
        for op, rate in ((x, g * (baths.nbar + 1)), (x.T, g * baths.nbar)):
            od = op.T
            gen += rate * (np.kron(op.conj(), op) - 0.5 * np.kron(eye, od @ op) - 0.5 * np.kron((od @ op).T, eye))
    return gen


def test_criterion_09_integrity(report):
    rng = np.random.default_rng(9)
    oracle = 0.0
    for n, n_max, k in [(1, 3, 3), (2, 2, 2), (2, 2, 4), (3, 2, 2), (3, 1, 3)]:
        basis = build_fock_basis(n, n_max, k)
        real = sample_disorder(ChainSpec(n, 3.0), 5, n)
        baths = BathSpec(tuple(rng.uniform(0.05, 0.5, n)), 0.37)
        h = build_fock_hamiltonian(real, 1.0, basis)
        ref = _oracle_generator(basis, real, 1.0, baths)
        oracle = max(oracle, float(np.abs(superoperator(h, baths, basis) - ref).max()))
        x = rng.normal(size=(basis.dimension,) * 2) + 1j * rng.normal(size=(basis.dimension,) * 2)
        rho = x @ x.conj().T
        rho /= np.trace(rho)
        via = (ref @ rho.reshape(-1, order="F")).reshape(rho.shape, order="F")
        oracle = max(oracle, float(np.abs(lindblad_rhs(h, baths, DensityMatrix(rho, basis)) - via).max()))

    checked = IntegratorOptions(positivity_every=1)
    open_cfg = preset_configs("fig6")["open"].with_overrides(realizations=3, integrator=checked)
    stats, kept = run_ensemble(open_cfg, keep=lambda i: True)
    drift = max(float(r["trace_drift"]) for r in kept.values())
    herm = max(float(r["hermiticity"]) for r in kept.values())
    min_eig = min(float(r["min_eigenvalue"]) for r in kept.values())
    closed_cfg = preset_configs("fig3")["a"].with_overrides(realizations=5)
    _, closed = run_ensemble(closed_cfg, keep=lambda i: True)
    norm = max(float(r["norm_drift"].max()) for r in closed.values())

    ok = oracle < 1e-12 and drift < 1e-6 and herm < 1e-9 and min_eig > -1e-7 and norm < 1e-10
    detail = f"oracle {oracle:.1e}, trace drift {drift:.1e}, hermiticity {herm:.1e}, min eig {min_eig:.1e}, norm drift {norm:.1e}"
    assert report(9, ok, detail)


# 10. determinism


def test_criterion_10_determinism(report):
    base = ExperimentConfig(
        "custom", ChainSpec(6, 2.0), bath=BathSpec(GAMMA_OVER_J, 1e-2), realizations=8, times=TimeGrid(0.0, 5.0, 11)
    )
    configs = [
        base.with_overrides(integrator=IntegratorOptions(method="rk4", dt=0.05)),
        base,
        ExperimentConfig("fig2_dispersion", ChainSpec(40, 5.0), realizations=16, times=TimeGrid(0, 0, 1)),
    ]
    identical = True
    for cfg in configs:
        runs = [run_ensemble(cfg, workers=w)[0] for w in (1, 4, 1)]
        for other in runs[1:]:
            for name in runs[0].mean:
                identical &= np.array_equal(runs[0].mean[name], other.mean[name])
                identical &= np.array_equal(runs[0].stderr[name], other.stderr[name])
    assert report(10, identical, "aggregates bitwise identical across reruns and workers {1, 4}")
