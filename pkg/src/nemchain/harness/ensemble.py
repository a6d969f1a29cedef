"""Disorder-ensemble orchestration.

Each realization is a pure function of ``(config, index)``: it draws its
frequencies from the stream seeded by ``(master_seed, index)`` and returns a
mapping of observable arrays.  Workers only see the immutable config; the
coordinator folds results in index order, so aggregates do not depend on the
schedule.
"""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..closed import PureState, ground_state_dispersion, spread
from ..closed import Propagator
from ..entanglement import concurrence_row
from ..errors import ExperimentError, NemchainError
from ..lindblad import DensityMatrix, propagate_master
from ..model import (
    build_fock_basis,
    build_fock_hamiltonian,
    build_single_excitation_h,
    realization_key,
    sample_disorder,
)
from .config import ExperimentConfig

Observables = dict[str, np.ndarray]


@dataclass
class EnsembleStats:
    """Ensemble mean and standard error of every observable."""

    mean: dict[str, np.ndarray]
    stderr: dict[str, np.ndarray]
    realizations: int
    master_seed: int
    seeds: list[int] = field(default_factory=list)  # 128-bit stream keys, by index
    config_hash: str = ""

    def __getitem__(self, name: str) -> np.ndarray:
        return self.mean[name]


def _closed_realization(config: ExperimentConfig, index: int) -> Observables:
    spec = config.chain
    real = sample_disorder(spec, config.master_seed, index)
    h = build_single_excitation_h(real, spec.coupling, spec.boundary, spec.frame)
    if config.kind == "fig2_dispersion":
        gs = ground_state_dispersion(h)
        return {"ratio": np.array(gs.ratio), "n_av": np.array(gs.n_av), "delta_n": np.array(gs.delta_n)}

    times = config.times.values()
    site = config.initial_site()
    psi0 = PureState.localized(spec.n_sites, site)
    amps = Propagator(h).evolve(np.asarray(psi0.amplitudes), times)
    norms = np.linalg.norm(amps, axis=1)
    pops = np.abs(amps) ** 2
    out: Observables = {"populations": pops, "sigma": spread(pops), "norm_drift": np.abs(norms - 1.0)}
    out["delta_n"] = out["sigma"]
    late = times >= config.transient
    if config.kind == "fig3_profiles" and late.any():
        out["profile"] = pops[late].mean(axis=0)
    if config.kind == "fig5_6_concurrence":
        rows = [concurrence_row(PureState(a / np.linalg.norm(a)), site)[0] for a in amps]
        out["concurrence"] = np.array(rows)
    return out


def _open_realization(config: ExperimentConfig, index: int) -> Observables:
    spec = config.chain
    n_max, cutoff = config.truncation
    basis = build_fock_basis(spec.n_sites, n_max, cutoff)
    real = sample_disorder(spec, config.master_seed, index)
    h = build_fock_hamiltonian(real, spec.coupling, basis, spec.boundary, spec.frame)
    times = config.times.values()
    site = config.initial_site()
    observers = {}
    if config.kind == "fig5_6_concurrence":
        observers["concurrence"] = lambda dm: np.stack(concurrence_row(dm, site))
    trace = propagate_master(h, config.bath, DensityMatrix.localized(basis, site), times, config.integrator, observers)
    out: Observables = {
        "populations": trace.populations,
        "delta_n": trace.delta_n,
        "n_av": trace.n_av,
        "trace_drift": np.array(trace.max_trace_drift),
        "hermiticity": np.array(trace.max_hermiticity_error),
        "min_eigenvalue": np.array(min(v for _, v in trace.min_eigenvalues)),
    }
    late = times >= config.transient
    if config.kind == "fig3_profiles" and late.any():
        out["profile"] = trace.populations[late].mean(axis=0)
    if "concurrence" in trace.extras:
        out["concurrence"] = trace.extras["concurrence"][:, 0]
        out["trace_deficit"] = trace.extras["concurrence"][:, 1]
    return out


def run_realization(config: ExperimentConfig, index: int) -> Observables:
    """Observables of realization ``index``; deterministic in ``(config, index)``."""
    fn = _open_realization if config.is_open else _closed_realization
    return fn(config, index)


def _guarded(args) -> tuple[int, Observables | None, str | None, float | None]:
    config, index = args
    try:
        return index, run_realization(config, index), None, None
    except NemchainError as exc:
        return index, None, f"{type(exc).__name__}: {exc}", getattr(exc, "t", None)


def _fold(results: list[Observables]) -> tuple[dict, dict]:
    mean, stderr = {}, {}
    r = len(results)
    for name in results[0]:
        stack = np.stack([res[name] for res in results])
        mean[name] = stack.mean(axis=0)
        stderr[name] = stack.std(axis=0, ddof=1) / np.sqrt(r) if r > 1 else np.zeros_like(mean[name])
    return mean, stderr


def run_ensemble(
    config: ExperimentConfig,
    workers: int = 1,
    partial_dir: str | Path | None = None,
    keep: Callable[[int], bool] | None = None,
) -> tuple[EnsembleStats, dict[int, Observables]]:
    """Run all realizations and aggregate them in index order.

    Returns the statistics and the per-realization results selected by
    ``keep(index)`` (none by default).  If a realization fails, the completed
    ones are written to ``partial_dir`` (when given) and
    :class:`ExperimentError` names the failing index and time.
    """
    tasks = [(config, k) for k in range(config.realizations)]
    if workers > 1 and config.realizations > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_guarded, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        outcomes = [_guarded(t) for t in tasks]

    done: list[Observables] = []
    for index, obs, err, t in outcomes:  # pool.map preserves index order
        if err is not None:
            if partial_dir is not None:
                _persist_partial(partial_dir, config, done)
            raise ExperimentError(f"realization {index} failed: {err}", index=index, t=t)
        done.append(obs)

    mean, stderr = _fold(done)
    seeds = [realization_key(config.master_seed, k) for k in range(config.realizations)]
    stats = EnsembleStats(mean, stderr, config.realizations, config.master_seed, seeds, config.config_hash())
    kept = {k: done[k] for k in range(len(done)) if keep is not None and keep(k)}
    return stats, kept


def _persist_partial(directory, config: ExperimentConfig, done: list[Observables]) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / "partial_results.npz"
    arrays = {f"r{k}__{name}": v for k, obs in enumerate(done) for name, v in obs.items()}
    np.savez(path, config=json.dumps(config.to_dict()), completed=len(done), **arrays)
    return path
