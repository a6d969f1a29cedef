"""Unitary single-excitation dynamics and the spectral/spreading diagnostics built on it."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.linalg import eigh_tridiagonal

from .errors import ContractError, FitError
from .model import FockBasis

NORM_TOL = 1e-10


@dataclass(frozen=True)
class PureState:
    """Normalised amplitude vector.  ``basis=None`` means the N-site single-excitation basis."""

    amplitudes: np.ndarray
    basis: FockBasis | None = None

    def __post_init__(self):
        norm = np.linalg.norm(self.amplitudes)
        if abs(norm - 1.0) > NORM_TOL:
            raise ContractError(f"state norm {norm!r} differs from 1")
        if self.basis is not None and len(self.amplitudes) != self.basis.dimension:
            raise ContractError("amplitude vector does not match the basis dimension")

    @classmethod
    def localized(cls, n_sites: int, site: int, basis: FockBasis | None = None) -> "PureState":
        """One excitation on ``site`` (0-based)."""
        if basis is None:
            psi = np.zeros(n_sites, dtype=complex)
            psi[site] = 1.0
        else:
            psi = np.zeros(basis.dimension, dtype=complex)
            psi[basis.single_excitation_index(site)] = 1.0
        return cls(psi, basis)

    @property
    def n_sites(self) -> int:
        return len(self.amplitudes) if self.basis is None else self.basis.n_sites

    def populations(self) -> np.ndarray:
        """Mean occupation of every site."""
        prob = np.abs(self.amplitudes) ** 2
        if self.basis is None:
            return prob
        return prob @ self.basis.states


@dataclass(frozen=True)
class PopulationProfile:
    populations: np.ndarray
    time: float | None = None

    def __post_init__(self):
        p = np.asarray(self.populations)
        if (p < -1e-12).any():
            raise ContractError("populations must be non-negative")


@dataclass(frozen=True)
class DispersionResult:
    n_av: float
    delta_n: float
    ratio: float
    degenerate: bool = False


@dataclass(frozen=True)
class LocalizationFit:
    xi: float
    r_squared: float
    slope: float
    intercept: float
    n_points: int

    @property
    def exponential(self) -> bool:
        return self.r_squared >= 0.9


@dataclass(frozen=True)
class SpreadResult:
    times: np.ndarray
    sigma: np.ndarray
    slope: float
    r_squared: float
    window: tuple[float, float]


def dispersion(p: np.ndarray) -> tuple[float, float]:
    """Mean site ``n_av = sum j p_j`` and spread ``sqrt(sum j^2 p_j - n_av^2)``, sites j = 1..N.

    ``p`` is normalised first; an all-zero input raises ``ValueError``.
    """
    p = np.asarray(p, dtype=float)
    total = p.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise ValueError("distribution has zero total weight")
    p = p / total
    j = np.arange(1, p.shape[-1] + 1)
    n_av = p @ j
    var = p @ (j * j) - n_av ** 2
    return n_av, np.sqrt(np.maximum(var, 0.0))


def _as_dense(h) -> np.ndarray:
    return h.toarray() if sparse.issparse(h) else np.asarray(h)


class Propagator:
    """Exact ``exp(-iHt)`` through one full eigendecomposition of a Hermitian ``H``."""

    def __init__(self, h):
        h = _as_dense(h)
        if h.shape[0] != h.shape[1]:
            raise ContractError("Hamiltonian must be square")
        self.energies, self.vectors = np.linalg.eigh(h)

    def evolve(self, psi0: np.ndarray, times: Sequence[float]) -> np.ndarray:
        """Amplitudes at every time as a (T, dim) array."""
        times = np.asarray(times, dtype=float)
        c = self.vectors.conj().T @ psi0
        phases = np.exp(-1j * np.outer(times, self.energies))
        out = (phases * c) @ self.vectors.T
        out[times == 0] = psi0
        return out


def evolve_pure(h, psi0: PureState, times: Sequence[float]) -> list[PureState]:
    """``psi(t) = exp(-iHt) psi0`` for every requested time."""
    if _as_dense(h).shape[0] != len(psi0.amplitudes):
        raise ContractError("Hamiltonian and state live in different spaces")
    amps = Propagator(h).evolve(np.asarray(psi0.amplitudes, dtype=complex), times)
    states = []
    for row in amps:
        row = row / np.linalg.norm(row)  # removes O(eps) drift from the basis change
        states.append(PureState(row, psi0.basis))
    return states


def evolve_populations(h, psi0: PureState, times: Sequence[float]) -> np.ndarray:
    """Site populations (T, N) without materialising :class:`PureState` objects."""
    amps = Propagator(h).evolve(np.asarray(psi0.amplitudes, dtype=complex), times)
    prob = np.abs(amps) ** 2
    return prob if psi0.basis is None else prob @ psi0.basis.states


def _is_tridiagonal(h: np.ndarray) -> bool:
    n = h.shape[0]
    if n < 3:
        return True
    return not np.any(np.triu(h, 2)) and not np.any(np.tril(h, -2))


def ground_state_dispersion(h) -> DispersionResult:
    """Relative spread ``Delta n / n_av`` of the lowest eigenvector of a single-excitation H."""
    h = _as_dense(h)
    n = h.shape[0]
    if n == 1:
        return DispersionResult(1.0, 0.0, 0.0, False)
    if _is_tridiagonal(h):
        w, v = eigh_tridiagonal(np.diag(h).copy(), np.diag(h, 1).copy(), select="i", select_range=(0, 1))
    else:
        w, v = np.linalg.eigh(h)
    scale = max(np.abs(w).max(), np.abs(h).max(), 1e-300)
    degenerate = bool(w[1] - w[0] <= 1e-12 * scale)
    n_av, dn = dispersion(np.abs(v[:, 0]) ** 2)
    return DispersionResult(float(n_av), float(dn), float(dn / n_av), degenerate)


def time_averaged_profile(h, psi0: PureState, times: Sequence[float]) -> PopulationProfile:
    """Mean of the site populations over ``times`` (use a window past the transient)."""
    pops = evolve_populations(h, psi0, times)
    return PopulationProfile(pops.mean(axis=0), float(np.mean(times)))


def localization_length_fit(
    profile: PopulationProfile | np.ndarray,
    center: int,
    floor: float = 1e-12,
    min_sites: int = 5,
    exclude_center: bool = False,
) -> LocalizationFit:
    """Fit ``log p_j = c - 2|j - center| / xi`` over sites with ``p_j > floor``.

    Each wing must contribute ``min_sites`` usable points.  The returned
    ``r_squared`` flags profiles that are not exponential.
    """
    p = np.asarray(getattr(profile, "populations", profile), dtype=float)
    dist = np.abs(np.arange(len(p)) - center)
    usable = p > floor
    if exclude_center:
        usable &= dist > 0
    left = np.count_nonzero(usable[:center])
    right = np.count_nonzero(usable[center + 1 :])
    if left < min_sites or right < min_sites:
        raise FitError(f"need {min_sites} usable sites per wing, have {left} and {right}")
    x = dist[usable].astype(float)
    y = np.log(p[usable])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 0.0
    xi = -2.0 / slope if slope < 0 else np.inf
    return LocalizationFit(float(xi), float(r2), float(slope), float(intercept), int(usable.sum()))


def spread(populations: np.ndarray) -> np.ndarray:
    """Standard deviation of the site distribution at each time."""
    return dispersion(populations)[1]


def ctqw_spread(
    states: Sequence[PureState] | np.ndarray,
    times: Sequence[float],
    center: int,
    coupling: float = 1.0,
    window: tuple[float, float] | None = None,
) -> SpreadResult:
    """sigma(t) and the slope of the through-origin fit ``sigma = v t``.

    By default the fit window runs from the first positive time up to the
    moment the ballistic front ``|j - c| = 2 J t`` reaches the nearer edge.
    """
    if len(states) and isinstance(states[0], PureState):
        pops = np.array([s.populations() for s in states])
    else:
        pops = np.asarray(states)
    times = np.asarray(times, dtype=float)
    sigma = spread(pops)
    n = pops.shape[1]
    if window is None:
        reach = min(center, n - 1 - center)
        t_edge = reach / (2.0 * coupling) if coupling > 0 else np.inf
        window = (0.0, t_edge)
    sel = (times > 0) & (times >= window[0]) & (times <= window[1])
    if not sel.any():
        raise FitError("spread fit window contains no samples")
    t, s = times[sel], sigma[sel]
    v = float(t @ s / (t @ t))
    ss_tot = np.sum((s - s.mean()) ** 2)
    r2 = 1.0 - np.sum((s - v * t) ** 2) / ss_tot if ss_tot > 0 else 1.0
    return SpreadResult(times, sigma, v, float(r2), (float(window[0]), float(window[1])))


def write_profile_csv(path: str | Path, times: Sequence[float], populations: np.ndarray, header: str | None = None) -> None:
    """Long-format ``time_J, site, population`` table (sites numbered from 1)."""
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh)
        w.writerow(["time_J", "site", "population"])
        for t, row in zip(times, np.atleast_2d(populations)):
            for j, p in enumerate(row, start=1):
                w.writerow([repr(float(t)), j, repr(float(p))])


def write_sigma_csv(path: str | Path, times: Sequence[float], sigma: Sequence[float], header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh)
        w.writerow(["time_J", "sigma"])
        for t, s in zip(times, sigma):
            w.writerow([repr(float(t)), repr(float(s))])
