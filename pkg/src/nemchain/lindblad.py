"""Thermal Lindblad dynamics of the chain on a truncated Fock basis.

Each site has its own bosonic bath at mean occupation ``nbar``:

    drho/dt = -i[H, rho]
              + sum_j gamma_j/2 * [ nbar (2 a_j^+ rho a_j - a_j a_j^+ rho - rho a_j a_j^+)
                                  + (nbar+1) (2 a_j rho a_j^+ - rho a_j^+ a_j - a_j^+ a_j rho) ]

``rho`` is kept as a dense D x D array and every product with a ladder or
Hamiltonian operator is sparse.  The D^2 x D^2 superoperator is only built
by :func:`superoperator`, for small-system checks.

When all damping rates are equal and the basis is cut only by total
excitation number, the dissipator commutes with conjugation by the
(passive, number-conserving) chain unitary.  :func:`propagate_master` then
integrates the dissipator alone in the interaction picture and applies the
exact unitary at output times; this removes the stiffness coming from the
disorder and the hopping without approximation.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import sparse

from . import integrate
from .closed import PureState, dispersion
from .errors import ContractError, IntegrityError, InvalidStateError, UndefinedDistributionError
from .model import FockBasis

SNAPSHOT_FORMAT = "nemchain-density-matrix"
SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class BathSpec:
    """Per-site damping rates (in units of the chain coupling) and bath occupation."""

    gamma: float | tuple[float, ...] = 0.0
    nbar: float = 0.0

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        if (g < 0).any() or self.nbar < 0:
            raise ContractError("damping rates and nbar must be non-negative")
        if g.size > 1:
            object.__setattr__(self, "gamma", tuple(float(x) for x in g))

    @classmethod
    def from_physical(cls, gamma: float, coupling: float, nbar: float = 0.0) -> "BathSpec":
        """``gamma`` and ``coupling`` in the same physical unit (e.g. both in MHz)."""
        if coupling <= 0:
            raise ContractError("coupling must be positive to convert rates")
        return cls(gamma / coupling, nbar)

    def rates(self, n_sites: int) -> np.ndarray:
        g = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        if g.size == 1:
            return np.full(n_sites, g[0])
        if g.size != n_sites:
            raise ContractError(f"{g.size} damping rates given for {n_sites} sites")
        return g

    def uniform(self, n_sites: int) -> bool:
        g = self.rates(n_sites)
        return bool(np.all(g == g[0]))


@dataclass
class DensityMatrix:
    matrix: np.ndarray
    basis: FockBasis

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        d = self.basis.dimension
        if self.matrix.shape != (d, d):
            raise ContractError(f"density matrix shape {self.matrix.shape} does not match basis dimension {d}")

    @classmethod
    def from_pure(cls, psi: PureState) -> "DensityMatrix":
        if psi.basis is None:
            raise ContractError("pure state must be expressed on a FockBasis")
        a = np.asarray(psi.amplitudes, dtype=complex)
        return cls(np.outer(a, a.conj()), psi.basis)

    @classmethod
    def localized(cls, basis: FockBasis, site: int) -> "DensityMatrix":
        rho = np.zeros((basis.dimension,) * 2, dtype=complex)
        i = basis.single_excitation_index(site)
        rho[i, i] = 1.0
        return cls(rho, basis)

    @classmethod
    def thermal(cls, basis: FockBasis, nbar: float) -> "DensityMatrix":
        """Product thermal state at occupation ``nbar`` restricted to the basis and renormalised."""
        if nbar == 0:
            w = (basis.totals == 0).astype(float)
        else:
            w = (nbar / (nbar + 1.0)) ** basis.totals.astype(float)
        return cls(np.diag(w / w.sum()).astype(complex), basis)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def hermiticity_error(self) -> float:
        return float(np.abs(self.matrix - self.matrix.conj().T).max())

    def min_eigenvalue(self) -> float:
        herm = 0.5 * (self.matrix + self.matrix.conj().T)
        return float(np.linalg.eigvalsh(herm)[0])

    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.matrix)) @ self.basis.states

    def validate(self, check_positivity: bool = False) -> None:
        if self.hermiticity_error() > 1e-10:
            raise InvalidStateError("density matrix is not Hermitian")
        if abs(self.trace() - 1) > 1e-8:
            raise InvalidStateError(f"trace {self.trace()!r} differs from 1")
        if check_positivity and self.min_eigenvalue() < -1e-7:
            raise InvalidStateError("density matrix has a negative eigenvalue")


class LindbladGenerator:
    """Precomputed action of the thermal master-equation generator on dense matrices.

    Each ``a_j`` maps basis state ``src`` to ``dst`` with weight ``sqrt(n_j)``,
    so ``a_j rho a_j^+`` is a scaled copy of the ``(src, src)`` block of
    ``rho`` into ``(dst, dst)``; only states with ``n_j >= 1`` are touched.
    """

    def __init__(self, h, baths: BathSpec, basis: FockBasis):
        d = basis.dimension
        h = sparse.csr_matrix(h, dtype=complex)
        if h.shape != (d, d):
            raise ContractError("Hamiltonian does not match the basis dimension")
        self.h = h
        self.h_t = h.T.tocsr()
        self.basis = basis
        self.nbar = float(baths.nbar)
        self.gammas = baths.rates(basis.n_sites)
        self.jumps = []
        self.flows = []
        damp = np.zeros(d)
        for op, g in zip(basis.annihilators, self.gammas):
            if g == 0:
                continue
            coo = op.tocoo()
            src, dst, coef = coo.col, coo.row, coo.data
            weight = np.outer(coef, coef)
            # a^+ a is diagonal with entries n_j; a a^+ (truncated) is n_j + 1 where raising stays inside
            damp[src] += 0.5 * g * (self.nbar + 1) * coef ** 2
            damp[dst] += 0.5 * g * self.nbar * coef ** 2
            self.jumps.append((np.ix_(src, src), np.ix_(dst, dst), g * weight))
            self.flows.append((src, dst, g * coef ** 2))
        self.damping = damp

    def dissipator(self, rho: np.ndarray) -> np.ndarray:
        out = -(self.damping[:, None] * rho + rho * self.damping[None, :])
        loss, gain = self.nbar + 1.0, self.nbar
        for src, dst, w in self.jumps:
            out[dst] += loss * w * rho[src]
            if gain:
                out[src] += gain * w * rho[dst]
        return out

    def dissipator_diagonal(self, p: np.ndarray) -> np.ndarray:
        """Dissipator restricted to Fock-diagonal matrices, acting on the diagonal ``p``.

        Diagonal matrices are mapped to diagonal matrices, so this is an exact
        rate equation for the occupation probabilities.
        """
        out = -2.0 * self.damping * p
        loss, gain = self.nbar + 1.0, self.nbar
        for src, dst, rate in self.flows:
            out[dst] += loss * rate * p[src]
            if gain:
                out[src] += gain * rate * p[dst]
        return out

    def commutator(self, rho: np.ndarray) -> np.ndarray:
        return -1j * (self.h @ rho - (self.h_t @ rho.T).T)

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        return self.commutator(rho) + self.dissipator(rho)


def _basis_of(rho) -> FockBasis:
    if isinstance(rho, DensityMatrix):
        return rho.basis
    raise ContractError("expected a DensityMatrix")


def lindblad_rhs(h, baths: BathSpec, rho: DensityMatrix) -> np.ndarray:
    """``drho/dt`` for the thermal master equation (one-off evaluation)."""
    basis = _basis_of(rho)
    return LindbladGenerator(h, baths, basis)(rho.matrix)


def superoperator(h, baths: BathSpec, basis: FockBasis) -> np.ndarray:
    """Dense D^2 x D^2 generator acting on column-stacked ``vec(rho)``.

    Uses ``vec(A X B) = (B^T kron A) vec(X)`` term by term; intended only for
    a handful of sites.
    """
    d = basis.dimension
    if d > 64:
        raise ContractError("superoperator is restricted to D <= 64")
    hd = sparse.csr_matrix(h).toarray().astype(complex)
    eye = np.eye(d)
    sup = -1j * (np.kron(eye, hd) - np.kron(hd.T, eye))
    n = baths.nbar
    for a, g in zip(basis.annihilators, baths.rates(basis.n_sites)):
        a = a.toarray()
        ad = a.conj().T
        aad = a @ ad
        ada = ad @ a
        sup += (g / 2) * n * (2 * np.kron(a.T, ad) - np.kron(eye, aad) - np.kron(aad.T, eye))
        sup += (g / 2) * (n + 1) * (2 * np.kron(ad.T, a) - np.kron(ada.T, eye) - np.kron(eye, ada))
    return sup


def steady_state_nullspace(h, baths: BathSpec, basis: FockBasis) -> DensityMatrix:
    """Stationary state from the (unique) null vector of the dense superoperator."""
    sup = superoperator(h, baths, basis)
    _, s, vh = np.linalg.svd(sup)
    vec = vh[-1].conj()
    rho = vec.reshape(basis.dimension, basis.dimension, order="F")
    rho = rho / np.trace(rho)
    return DensityMatrix(0.5 * (rho + rho.conj().T), basis)


@dataclass
class IntegratorOptions:
    method: str = "dopri5"  # or "rk4"
    rtol: float = 1e-8
    atol: float = 1e-12
    dt: float = 0.01  # rk4 only
    picture: str = "auto"  # "auto" | "schrodinger" | "interaction"
    positivity_every: int = 0  # check min eigenvalue every k outputs; 0 -> final output only
    trace_tolerance: float = 1e-6
    keep_states: bool = False
    max_steps: int = 10_000_000

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ObservableTrace:
    times: np.ndarray
    populations: np.ndarray  # (T, N)
    total: np.ndarray
    n_av: np.ndarray
    delta_n: np.ndarray
    extras: dict = field(default_factory=dict)
    states: list | None = None
    max_trace_drift: float = 0.0
    max_hermiticity_error: float = 0.0
    min_eigenvalues: list = field(default_factory=list)  # (time, value)
    picture: str = "schrodinger"
    steps: integrate.StepStats | None = None


class _InteractionFrame:
    """Exact chain unitary built from per-sector eigendecompositions of H."""

    def __init__(self, h, basis: FockBasis):
        h = sparse.csr_matrix(h)
        coo = h.tocoo()
        if np.any(basis.totals[coo.row] != basis.totals[coo.col]):
            raise ContractError("interaction picture needs a number-conserving Hamiltonian")
        self.blocks = []
        for sl in basis.sector_slices:
            if sl.stop == sl.start:
                continue
            e, v = np.linalg.eigh(h[sl, sl].toarray())
            self.blocks.append((sl, e, v))

    def to_lab_diagonal(self, p: np.ndarray, elapsed: float) -> np.ndarray:
        """``U diag(p) U^+``; block-diagonal by sector."""
        d = len(p)
        out = np.zeros((d, d), dtype=complex)
        for sl, e, v in self.blocks:
            u = (v * np.exp(-1j * e * elapsed)) @ v.conj().T
            out[sl, sl] = (u * p[sl]) @ u.conj().T
        return out

    def to_lab(self, rho_i: np.ndarray, elapsed: float) -> np.ndarray:
        """``U rho_I U^+`` with ``U = exp(-i H elapsed)``."""
        out = np.zeros_like(rho_i)
        for sa, ea, va in self.blocks:
            pa = va * np.exp(-1j * ea * elapsed)  # V_a diag(phase)
            for sb, eb, vb in self.blocks:
                blk = rho_i[sa, sb]
                if not blk.any():
                    continue
                pb = vb * np.exp(-1j * eb * elapsed)
                out[sa, sb] = pa @ (va.conj().T @ blk @ vb) @ pb.conj().T
        return out


def propagate_master(
    h,
    baths: BathSpec,
    rho0: DensityMatrix,
    times: Sequence[float],
    options: IntegratorOptions | None = None,
    observers: Mapping[str, Callable[[DensityMatrix], np.ndarray]] | None = None,
) -> ObservableTrace:
    """Integrate the master equation and record site observables at ``times``.

    Raises :class:`IntegrationError` (with the reached time) if the integrator
    stalls and :class:`IntegrityError` if the trace drifts by more than
    ``options.trace_tolerance``.
    """
    options = options or IntegratorOptions()
    basis = rho0.basis
    times = np.asarray(times, dtype=float)
    gen = LindbladGenerator(h, baths, basis)

    picture = options.picture
    if picture == "auto":
        picture = "interaction" if baths.uniform(basis.n_sites) and basis.number_truncated_only else "schrodinger"
    diagonal = False
    y0 = rho0.matrix
    if picture == "interaction":
        if not (baths.uniform(basis.n_sites) and basis.number_truncated_only):
            raise ContractError("interaction picture requires uniform damping and n_max >= total cutoff")
        frame = _InteractionFrame(h, basis)
        diagonal = not np.any(rho0.matrix - np.diag(np.diag(rho0.matrix)))
        if diagonal:
            y0 = np.diag(rho0.matrix).copy()
            rhs = lambda t, p: gen.dissipator_diagonal(p)  # noqa: E731
            to_lab = frame.to_lab_diagonal
        else:
            rhs = lambda t, r: gen.dissipator(r)  # noqa: E731
            to_lab = frame.to_lab
    elif picture == "schrodinger":
        to_lab = None
        rhs = lambda t, r: gen(r)  # noqa: E731
    else:
        raise ContractError(f"unknown picture {picture!r}")

    stats = integrate.StepStats()
    if options.method == "dopri5":
        stepper = integrate.dopri5(rhs, y0, times, options.rtol, options.atol, max_steps=options.max_steps, stats=stats)
    elif options.method == "rk4":
        stepper = integrate.rk4(rhs, y0, times, options.dt, stats=stats)
    else:
        raise ContractError(f"unknown integrator {options.method!r}")

    occ = basis.states.astype(float)
    pops, extras, states, min_eigs = [], {k: [] for k in (observers or {})}, [], []
    max_drift = max_herm = 0.0
    for i, (t, r) in enumerate(stepper):
        rho_t = to_lab(r, t - times[0]) if to_lab is not None else r
        drift = abs(np.trace(rho_t) - 1.0)
        max_drift = max(max_drift, drift)
        if drift > options.trace_tolerance:
            raise IntegrityError(f"trace drifted by {drift:.3e} at t={t!r}", t=t)
        max_herm = max(max_herm, float(np.abs(rho_t - rho_t.conj().T).max()))
        dm = DensityMatrix(rho_t, basis)
        last = i == len(times) - 1
        if last or (options.positivity_every and i % options.positivity_every == 0):
            min_eigs.append((float(t), dm.min_eigenvalue()))
        pops.append(np.real(np.diag(rho_t)) @ occ)
        for name, fn in (observers or {}).items():
            extras[name].append(fn(dm))
        if options.keep_states:
            states.append(dm)

    pops = np.array(pops)
    total = pops.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        safe = np.where(total[:, None] > 0, pops, 1.0)
        n_av, dn = dispersion(safe)
    n_av = np.where(total > 0, n_av, np.nan)
    dn = np.where(total > 0, dn, np.nan)
    return ObservableTrace(
        times=times,
        populations=pops,
        total=total,
        n_av=n_av,
        delta_n=dn,
        extras={k: np.array(v) for k, v in extras.items()},
        states=states if options.keep_states else None,
        max_trace_drift=max_drift,
        max_hermiticity_error=max_herm,
        min_eigenvalues=min_eigs,
        picture=picture,
        steps=stats,
    )


def dispersion_series(trace: ObservableTrace) -> np.ndarray:
    """Spread of the normalised site distribution ``<n_j> / sum <n_j>`` at each time."""
    pops = np.atleast_2d(trace.populations if hasattr(trace, "populations") else trace)
    if np.any(pops.sum(axis=1) <= 0):
        raise UndefinedDistributionError("site populations sum to zero at some time")
    return dispersion(pops)[1]


@dataclass
class ConvergenceReport:
    cutoffs: list
    values: list
    deviations: list

    @property
    def monotone(self) -> bool:
        return all(b <= a for a, b in zip(self.deviations, self.deviations[1:]))

    @property
    def final_deviation(self) -> float:
        return self.deviations[-1]


def truncation_convergence(
    build_hamiltonian: Callable[[FockBasis], object],
    baths: BathSpec,
    initial_state: Callable[[FockBasis], DensityMatrix],
    observable: Callable[[ObservableTrace], np.ndarray],
    cutoffs: Sequence[tuple[int, int]],
    times: Sequence[float],
    n_sites: int,
    options: IntegratorOptions | None = None,
) -> ConvergenceReport:
    """Rerun a propagation at increasing ``(n_max, K)`` and compare an observable.

    ``deviations[i]`` is the max absolute change between cutoff levels i and i+1.
    """
    from .model import build_fock_basis

    if len(cutoffs) < 2:
        raise ContractError("need at least two cutoff levels")
    values = []
    for n_max, k in cutoffs:
        basis = build_fock_basis(n_sites, n_max, k)
        trace = propagate_master(build_hamiltonian(basis), baths, initial_state(basis), times, options)
        values.append(np.asarray(observable(trace), dtype=float))
    devs = [float(np.max(np.abs(b - a))) for a, b in zip(values, values[1:])]
    return ConvergenceReport(list(cutoffs), values, devs)


def save_snapshot(path: str | Path, rho: DensityMatrix, time: float, label: str = "") -> None:
    """Binary dump (``.npz``) of ``rho`` with a versioned JSON header."""
    header = {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "basis": rho.basis.descriptor(),
        "time": float(time),
        "label": label,
    }
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)), rho=rho.matrix)


def load_snapshot(path: str | Path) -> tuple[DensityMatrix, dict]:
    from .model import build_fock_basis

    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        rho = data["rho"]
    if header.get("format") != SNAPSHOT_FORMAT:
        raise ContractError("not a density-matrix snapshot")
    if header.get("version") != SNAPSHOT_VERSION:
        raise ContractError(f"unsupported snapshot version {header.get('version')}")
    b = header["basis"]
    basis = build_fock_basis(b["n_sites"], b["n_max"], b["total_cutoff"])
    return DensityMatrix(rho, basis), header
