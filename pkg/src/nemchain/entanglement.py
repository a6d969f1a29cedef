"""Pairwise entanglement between chain sites (Wootters concurrence)."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .closed import PureState
from .errors import ContractError, InapplicableError, InvalidStateError
from .lindblad import DensityMatrix
from .model import FockBasis

SIGMA_YY = np.kron(np.array([[0, -1j], [1j, 0]]), np.array([[0, -1j], [1j, 0]]))
ZERO_FLUSH = 1e-12


@dataclass(frozen=True)
class TwoQubitState:
    """Reduced state of sites (i, j) in the basis |00>, |01>, |10>, |11> (|n_i n_j>)."""

    matrix: np.ndarray
    sites: tuple[int, int] | None = None
    trace_deficit: float = 0.0

    def __post_init__(self):
        if np.shape(self.matrix) != (4, 4):
            raise ContractError("two-qubit state must be 4x4")
        if self.trace_deficit < -1e-12:
            raise ContractError("trace deficit cannot be negative")


def _pair_table(basis: FockBasis, i: int, j: int) -> np.ndarray:
    """(4, R) table of basis indices: row = local occupation 2*n_i + n_j, column = rest configuration."""
    cache = basis.__dict__.setdefault("_pair_tables", {})
    if (i, j) not in cache:
        cache[(i, j)] = _build_pair_table(basis, i, j)
    return cache[(i, j)]


def _build_pair_table(basis: FockBasis, i: int, j: int) -> np.ndarray:
    states = basis.states
    keep = (states[:, i] <= 1) & (states[:, j] <= 1)
    idx = np.flatnonzero(keep)
    local = 2 * states[idx, i] + states[idx, j]
    rest = np.array(states[idx], dtype=np.int64)
    rest[:, [i, j]] = 0
    _, rest_id = np.unique(rest, axis=0, return_inverse=True)
    rest_id = rest_id.ravel()
    table = np.full((4, rest_id.max() + 1), -1, dtype=np.int64)
    table[local, rest_id] = idx
    return table


def _check_pair(n_sites: int, i: int, j: int) -> None:
    if i == j or not (0 <= i < n_sites and 0 <= j < n_sites):
        raise ContractError(f"invalid site pair ({i}, {j}) for {n_sites} sites")


def reduce_two_site(state: PureState | DensityMatrix, i: int, j: int) -> TwoQubitState:
    """Partial trace onto sites ``i`` and ``j``, projected onto occupations {0, 1} and renormalised.

    The weight removed by the projection is returned as ``trace_deficit``.
    """
    if isinstance(state, PureState) and state.basis is None:
        psi = np.asarray(state.amplitudes)
        _check_pair(len(psi), i, j)
        rho = np.zeros((4, 4), dtype=complex)
        # single excitation: coherent part on |10>, |01>; the rest of the weight sits in |00>
        v = np.zeros(4, dtype=complex)
        v[2], v[1] = psi[i], psi[j]
        rho += np.outer(v, v.conj())
        rho[0, 0] += max(0.0, 1.0 - abs(psi[i]) ** 2 - abs(psi[j]) ** 2)
        return TwoQubitState(rho, (i, j), 0.0)

    basis = state.basis
    _check_pair(basis.n_sites, i, j)
    table = _pair_table(basis, i, j)
    present = table >= 0
    rho = np.zeros((4, 4), dtype=complex)
    if isinstance(state, PureState):
        amps = np.where(present, np.asarray(state.amplitudes)[np.where(present, table, 0)], 0)
        rho = amps @ amps.conj().T
        total = float(np.sum(np.abs(state.amplitudes) ** 2))
    else:
        m = state.matrix
        for a in range(4):
            for b in range(4):
                both = present[a] & present[b]
                if both.any():
                    rho[a, b] = m[table[a, both], table[b, both]].sum()
        total = float(np.real(np.trace(m)))
    kept = float(np.real(np.trace(rho)))
    if kept <= 0:
        raise InvalidStateError("no weight left after projecting onto the qubit subspace")
    return TwoQubitState(rho / kept, (i, j), max(0.0, total - kept))


def concurrence(rho2: TwoQubitState | np.ndarray) -> float:
    """Wootters concurrence ``max(0, e1 - e2 - e3 - e4)``.

    The ``e_k`` are the square roots, in decreasing order, of the eigenvalues
    of ``rho rho~`` with ``rho~ = (sy x sy) rho* (sy x sy)``.  That spectrum is
    the one of the Hermitian ``sqrt(rho) rho~ sqrt(rho) = M M^+`` with
    ``M = sqrt(rho) (sy x sy) sqrt(rho)*``, so the ``e_k`` are taken as the
    singular values of ``M``.  This avoids a final square root that would
    inflate rounding-level eigenvalues to ~1e-8.
    """
    rho = np.asarray(getattr(rho2, "matrix", rho2), dtype=complex)
    rho = 0.5 * (rho + rho.conj().T)
    w, v = np.linalg.eigh(rho)
    if w[0] < -1e-9:
        raise InvalidStateError(f"two-qubit state has eigenvalue {w[0]:.3e}")
    root = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    e = np.linalg.svd(root @ SIGMA_YY @ root.conj(), compute_uv=False)
    c = max(0.0, e[0] - e[1] - e[2] - e[3])
    return 0.0 if c < ZERO_FLUSH else float(c)


def single_excitation_concurrence_oracle(state: PureState | DensityMatrix, i: int, j: int) -> float:
    """``2 |<1_i| rho |1_j>|`` for states confined to the vacuum + one-excitation sectors."""
    if isinstance(state, PureState) and state.basis is None:
        psi = np.asarray(state.amplitudes)
        _check_pair(len(psi), i, j)
        return float(2 * abs(psi[i] * np.conj(psi[j])))
    basis = state.basis
    _check_pair(basis.n_sites, i, j)
    outside = basis.totals > 1
    if isinstance(state, PureState):
        leak = float(np.sum(np.abs(np.asarray(state.amplitudes)[outside]) ** 2))
        ii, jj = basis.single_excitation_index(i), basis.single_excitation_index(j)
        coherence = state.amplitudes[ii] * np.conj(state.amplitudes[jj])
    else:
        leak = float(np.real(np.diag(state.matrix)[outside].sum()))
        ii, jj = basis.single_excitation_index(i), basis.single_excitation_index(j)
        coherence = state.matrix[ii, jj]
    if abs(leak) > 1e-9:
        raise InapplicableError(f"state has weight {leak:.3e} outside the 0/1-excitation sectors")
    return float(2 * abs(coherence))


def concurrence_row(state: PureState | DensityMatrix, center: int) -> tuple[np.ndarray, np.ndarray]:
    """Concurrence and trace deficit between ``center`` and every other site."""
    n = state.n_sites if isinstance(state, PureState) else state.basis.n_sites
    others = [j for j in range(n) if j != center]
    values = np.empty(len(others))
    deficits = np.empty(len(others))
    for k, j in enumerate(others):
        red = reduce_two_site(state, center, j)
        values[k] = concurrence(red)
        deficits[k] = red.trace_deficit
    return values, deficits


@dataclass
class ConcurrenceMap:
    times: np.ndarray
    sites: np.ndarray  # 0-based sites j != center
    values: np.ndarray  # (T, len(sites))
    trace_deficit: np.ndarray
    center: int
    sudden_death: list = field(default_factory=list)


def sudden_death_intervals(times: Sequence[float], series: Sequence[float]) -> list[tuple[float, float]]:
    """Windows ``(t_a, t_b)`` where C > 0 at both ends and exactly 0 at every sample strictly between."""
    times = np.asarray(times)
    c = np.asarray(series)
    out = []
    k = 0
    n = len(c)
    while k < n:
        if c[k] == 0 and k > 0 and c[k - 1] > 0:
            end = k
            while end < n and c[end] == 0:
                end += 1
            if end < n:
                out.append((float(times[k - 1]), float(times[end])))
            k = end
        else:
            k += 1
    return out


def concurrence_map(states: Sequence[PureState | DensityMatrix], times: Sequence[float], center: int) -> ConcurrenceMap:
    rows, defs = zip(*(concurrence_row(s, center) for s in states))
    return build_concurrence_map(times, np.array(rows), np.array(defs), center)


def build_concurrence_map(times, values, deficits, center) -> ConcurrenceMap:
    """Assemble a map from precomputed rows and locate sudden-death windows per site."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values)
    n = values.shape[1] + 1
    sites = np.array([j for j in range(n) if j != center])
    deaths = []
    for k, j in enumerate(sites):
        for a, b in sudden_death_intervals(times, values[:, k]):
            deaths.append((int(j), a, b))
    return ConcurrenceMap(times, sites, values, np.asarray(deficits), center, deaths)


def write_concurrence_csv(path: str | Path, cmap: ConcurrenceMap, header: str | None = None) -> None:
    """Long-format ``time_J, site, concurrence, trace_deficit`` (sites numbered from 1)."""
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh)
        w.writerow(["time_J", "site", "concurrence", "trace_deficit"])
        for t, row, drow in zip(cmap.times, cmap.values, cmap.trace_deficit):
            for j, c, d in zip(cmap.sites, row, drow):
                w.writerow([repr(float(t)), int(j) + 1, repr(float(c)), repr(float(d))])
