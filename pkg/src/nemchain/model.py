"""Disordered bosonic chains: disorder sampling and Hamiltonian construction.

Two representations of the same number-conserving chain are built here:

* the N x N single-excitation (tight-binding) matrix, and
* a sparse matrix on a truncated occupation-number (Fock) basis.

Frequencies and couplings are in "model units"; the usual choice is J = 1 so
that times are measured in 1/J.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import sparse

from .errors import ContractError, ResourceError
from .params import ValidityWarning

BOUNDARIES = ("hard_wall", "periodic")
FRAMES = ("lab", "rotating")

DEFAULT_MAX_DIMENSION = 20_000

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One SplitMix64 output for state ``x`` (Steele, Lea & Flood 2014).

    ``z = x + 0x9E3779B97F4A7C15``; then two xor-shift-multiply rounds with
    constants 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB and a final ``z ^ z>>31``.
    """
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def realization_key(master_seed: int, index: int) -> int:
    """128-bit Philox key for realization ``index`` of a run seeded with ``master_seed``.

    Low word ``splitmix64(master ^ splitmix64(index))``, high word
    ``splitmix64`` of the low word.  Depends only on the two integers, so any
    realization can be regenerated in isolation and in any order.
    """
    if not 0 <= master_seed <= _MASK64:
        raise ValueError("master_seed must be an unsigned 64-bit integer")
    if index < 0:
        raise ValueError("realization index must be non-negative")
    lo = splitmix64((master_seed ^ splitmix64(index)) & _MASK64)
    hi = splitmix64(lo)
    return (hi << 64) | lo


def realization_rng(master_seed: int, index: int) -> np.random.Generator:
    """Counter-based (Philox 4x64) generator dedicated to one realization."""
    return np.random.Generator(np.random.Philox(key=realization_key(master_seed, index)))


@dataclass(frozen=True)
class ChainSpec:
    n_sites: int
    disorder: float = 0.0
    coupling: float = 1.0
    mean_frequency: float = 0.0
    boundary: str = "hard_wall"
    frame: str = "rotating"

    def __post_init__(self):
        if self.n_sites < 1:
            raise ContractError("n_sites must be >= 1")
        if self.disorder < 0 or self.coupling < 0:
            raise ContractError("disorder and coupling must be non-negative")
        if self.boundary not in BOUNDARIES:
            raise ContractError(f"boundary must be one of {BOUNDARIES}")
        if self.frame not in FRAMES:
            raise ContractError(f"frame must be one of {FRAMES}")

    def validity_warnings(self) -> list[str]:
        """Regime checks ``J <= Delta <= 1e-2 mean_frequency`` (lab frame only)."""
        issues = []
        if self.frame == "lab":
            if self.disorder < self.coupling:
                issues.append("disorder below the coupling (Delta < J)")
            if self.disorder > 1e-2 * self.mean_frequency:
                issues.append("disorder above 1% of the mean frequency; RWA questionable")
        for msg in issues:
            warnings.warn(msg, ValidityWarning, stacklevel=2)
        return issues


@dataclass(frozen=True)
class DisorderRealization:
    """Sampled absolute site frequencies plus the seed record that produced them."""

    frequencies: np.ndarray
    mean_frequency: float = 0.0
    master_seed: int | None = None
    index: int | None = None

    @property
    def n_sites(self) -> int:
        return len(self.frequencies)

    def diagonal(self, frame: str = "rotating") -> np.ndarray:
        if frame == "rotating":
            return self.frequencies - self.mean_frequency
        if frame == "lab":
            return np.array(self.frequencies, dtype=float)
        raise ContractError(f"frame must be one of {FRAMES}")

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(
                f"# mean_frequency={self.mean_frequency!r} master_seed={self.master_seed} index={self.index}\n"
            )
            w = csv.writer(fh)
            w.writerow(["site_index", "omega"])
            for j, om in enumerate(self.frequencies, start=1):
                w.writerow([j, repr(float(om))])

    @classmethod
    def from_csv(cls, path: str | Path) -> "DisorderRealization":
        meta = {}
        rows = []
        with open(path, newline="") as fh:
            for line in fh:
                if line.startswith("#"):
                    for token in line[1:].split():
                        k, _, v = token.partition("=")
                        meta[k] = v
                    continue
                rows.append(line)
        reader = csv.DictReader(rows)
        data = sorted((int(r["site_index"]), float(r["omega"])) for r in reader)
        if [j for j, _ in data] != list(range(1, len(data) + 1)):
            raise ContractError("site_index column must enumerate 1..N")

        def _int(v):
            return None if v in (None, "None") else int(v)

        return cls(
            frequencies=np.array([om for _, om in data]),
            mean_frequency=float(meta.get("mean_frequency", 0.0)),
            master_seed=_int(meta.get("master_seed")),
            index=_int(meta.get("index")),
        )


def sample_disorder(spec: ChainSpec, master_seed: int, index: int = 0) -> DisorderRealization:
    """Draw i.i.d. site frequencies uniformly from ``[mean - Delta, mean + Delta]``."""
    if spec.disorder == 0:
        freqs = np.full(spec.n_sites, float(spec.mean_frequency))
    else:
        rng = realization_rng(master_seed, index)
        offsets = rng.uniform(-spec.disorder, spec.disorder, spec.n_sites)
        freqs = spec.mean_frequency + offsets
    return DisorderRealization(freqs, float(spec.mean_frequency), master_seed, index)


def _links(n: int, boundary: str) -> list[tuple[int, int]]:
    links = [(j, j + 1) for j in range(n - 1)]
    if boundary == "periodic" and n > 2:
        links.append((n - 1, 0))
    elif boundary not in BOUNDARIES:
        raise ContractError(f"boundary must be one of {BOUNDARIES}")
    return links


def build_single_excitation_h(
    real: DisorderRealization,
    coupling: float,
    boundary: str = "hard_wall",
    frame: str = "rotating",
    hopping_sign: int = 1,
) -> np.ndarray:
    """Dense tight-binding matrix: site energies on the diagonal, ``sign*J`` between neighbours.

    The default ``hopping_sign=+1`` follows the tight-binding form; the Fock
    builder defaults to ``-1``.  Site populations do not depend on the sign.
    """
    n = real.n_sites
    h = np.diag(real.diagonal(frame).astype(float))
    for i, j in _links(n, boundary):
        h[i, j] += hopping_sign * coupling
        h[j, i] += hopping_sign * coupling
    return h


def fock_dimension(n_sites: int, n_max: int, total_cutoff: int) -> int:
    """Number of occupation tuples with every entry <= n_max and sum <= total_cutoff."""
    counts = np.zeros(total_cutoff + 1, dtype=object)
    counts[0] = 1
    for _ in range(n_sites):
        new = np.zeros_like(counts)
        for k in range(total_cutoff + 1):
            new[k] = sum(counts[k - m] for m in range(0, min(n_max, k) + 1))
        counts = new
    return int(sum(counts))


def _sector_states(n_sites: int, n_max: int, total: int):
    # descending lexicographic within a sector: (2,0) before (1,1) before (0,2)
    if n_sites == 1:
        if total <= n_max:
            yield (total,)
        return
    for first in range(min(n_max, total), -1, -1):
        for rest in _sector_states(n_sites - 1, n_max, total - first):
            yield (first,) + rest


class FockBasis:
    """Truncated occupation-number basis, ordered by total excitation then lexicographically.

    Sectors of fixed total excitation are stored contiguously; ``sector_slices[k]``
    selects the states with ``k`` excitations.
    """

    def __init__(self, n_sites: int, n_max: int, total_cutoff: int, states: np.ndarray):
        self.n_sites = n_sites
        self.n_max = n_max
        self.total_cutoff = total_cutoff
        self.states = states
        self.states.setflags(write=False)
        totals = states.sum(axis=1)
        self.sector_slices = []
        for k in range(total_cutoff + 1):
            idx = np.flatnonzero(totals == k)
            self.sector_slices.append(slice(int(idx[0]), int(idx[-1]) + 1) if len(idx) else slice(0, 0))

    @property
    def dimension(self) -> int:
        return len(self.states)

    def __len__(self):
        return self.dimension

    def __repr__(self):
        return f"FockBasis(n_sites={self.n_sites}, n_max={self.n_max}, K={self.total_cutoff}, D={self.dimension})"

    def descriptor(self) -> dict:
        return {"n_sites": self.n_sites, "n_max": self.n_max, "total_cutoff": self.total_cutoff, "dimension": self.dimension}

    def same_as(self, other: "FockBasis") -> bool:
        return other is self or (
            isinstance(other, FockBasis)
            and (self.n_sites, self.n_max, self.total_cutoff) == (other.n_sites, other.n_max, other.total_cutoff)
        )

    @property
    def number_truncated_only(self) -> bool:
        """True when the only cutoff acting is the total-excitation one."""
        return self.n_max >= self.total_cutoff

    @cached_property
    def codes(self) -> np.ndarray:
        base = self.n_max + 1
        weights = base ** np.arange(self.n_sites - 1, -1, -1, dtype=np.int64)
        return self.states.astype(np.int64) @ weights

    @cached_property
    def _sorted_codes(self):
        order = np.argsort(self.codes)
        return self.codes[order], order

    def index_of(self, states: np.ndarray) -> np.ndarray:
        """Basis indices of the given occupation rows; -1 where a row is not in the basis."""
        states = np.atleast_2d(states)
        inside = (states >= 0).all(axis=1) & (states <= self.n_max).all(axis=1) & (
            states.sum(axis=1) <= self.total_cutoff
        )
        base = self.n_max + 1
        weights = base ** np.arange(self.n_sites - 1, -1, -1, dtype=np.int64)
        codes = np.clip(states, 0, self.n_max).astype(np.int64) @ weights
        sorted_codes, order = self._sorted_codes
        pos = np.clip(np.searchsorted(sorted_codes, codes), 0, len(sorted_codes) - 1)
        found = inside & (sorted_codes[pos] == codes)
        return np.where(found, order[pos], -1)

    @cached_property
    def totals(self) -> np.ndarray:
        return self.states.sum(axis=1)

    @cached_property
    def annihilators(self) -> list[sparse.csr_matrix]:
        """Truncated ``a_j`` as sparse matrices; ``a_j.T`` is the truncated creator."""
        ops = []
        d = self.dimension
        for j in range(self.n_sites):
            src = np.flatnonzero(self.states[:, j] > 0)
            lowered = np.array(self.states[src])
            lowered[:, j] -= 1
            dst = self.index_of(lowered)
            vals = np.sqrt(self.states[src, j].astype(float))
            ops.append(sparse.csr_matrix((vals, (dst, src)), shape=(d, d)))
        return ops

    def vacuum_index(self) -> int:
        return 0

    def single_excitation_index(self, site: int) -> int:
        occ = np.zeros(self.n_sites, dtype=int)
        occ[site] = 1
        return int(self.index_of(occ)[0])


def build_fock_basis(n_sites: int, n_max: int, total_cutoff: int, max_dimension: int = DEFAULT_MAX_DIMENSION) -> FockBasis:
    """Enumerate the truncated basis (vacuum first)."""
    if n_sites < 1 or n_max < 1 or total_cutoff < 1:
        raise ContractError("n_sites, n_max and total_cutoff must all be >= 1")
    d = fock_dimension(n_sites, n_max, total_cutoff)
    if d > max_dimension:
        raise ResourceError(f"Fock basis dimension {d} exceeds the budget of {max_dimension}", dimension=d)
    rows = [s for k in range(total_cutoff + 1) for s in _sector_states(n_sites, n_max, k)]
    return FockBasis(n_sites, n_max, total_cutoff, np.array(rows, dtype=np.int16).reshape(d, n_sites))


def build_fock_hamiltonian(
    real: DisorderRealization,
    coupling: float,
    basis: FockBasis,
    boundary: str = "hard_wall",
    frame: str = "rotating",
    hopping_sign: int = -1,
) -> sparse.csr_matrix:
    """Number-conserving chain Hamiltonian on ``basis`` (hbar = 1).

    ``sum_j w_j n_j + sign*J sum_<jk> (a_j^+ a_k + a_k^+ a_j)``, with
    ``sign=-1`` by default.  Hopping into a state beyond ``n_max`` is dropped.
    """
    if basis.n_sites != real.n_sites:
        raise ContractError("basis and realization disagree on the number of sites")
    diag = basis.states.astype(float) @ real.diagonal(frame)
    h = sparse.diags(diag).tocsr()
    a = basis.annihilators
    for i, j in _links(real.n_sites, boundary):
        hop = a[i].T @ a[j]
        h = h + hopping_sign * coupling * (hop + hop.T)
    h = h.tocsr()
    h.sum_duplicates()
    h.eliminate_zeros()
    return h


def number_operator(basis: FockBasis) -> sparse.csr_matrix:
    return sparse.diags(basis.totals.astype(float)).tocsr()
