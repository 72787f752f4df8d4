"""Quantum states, thermal ensembles and time propagation.

Unitary propagation (pure states and Liouville-von Neumann) uses exact
exponentials: free evolution between pulses is applied in closed form, and
inside pulse windows ``H(t)`` is frozen at each sub-step midpoint and
exponentiated by eigendecomposition. The Lindblad path uses classical RK4 with
step doubling as the error estimate.

States are handled in invariant blocks of the driving operators (fixed
``(k, m)`` or fixed ``m``) whenever the operators and the state allow it, which
keeps thermal runs cheap. Kicks scheduled at a grid time are applied before the
state at that time is recorded.
"""
from dataclasses import dataclass, field
import math

import numpy as np
import scipy.sparse as sp

from .basis import BasisSet
from .hamiltonian import KB_RADPS_PER_K, Operator, free_hamiltonian

WATCHDOG_DEFAULT = 1e-6


class StepSizeError(RuntimeError):
    """Propagation step too coarse for the spectrum of H."""


class TruncationError(RuntimeError):
    """Population reached the top of the truncated basis."""


class PositivityError(RuntimeError):
    """Density matrix lost positivity beyond tolerance."""


# ---------------------------------------------------------------------------
# States

@dataclass(frozen=True, eq=False)
class QuantumState:
    """Pure vector or density matrix over a basis.

    Mixed states are stored as diagonal blocks ``(indices, matrix)``; a general
    density matrix is a single block covering all indices.
    """

    basis: BasisSet
    vector: np.ndarray = None
    blocks: tuple = None

    def __post_init__(self):
        if (self.vector is None) == (self.blocks is None):
            raise ValueError("give exactly one of vector or blocks")
        if self.vector is not None and self.vector.shape != (self.basis.dim,):
            raise ValueError("state vector has wrong dimension")

    @property
    def is_pure(self):
        return self.vector is not None

    # constructors
    @classmethod
    def pure(cls, basis, vector, normalize=False):
        v = np.array(vector, dtype=complex)
        if normalize:
            v = v / np.linalg.norm(v)
        return cls(basis, vector=v)

    @classmethod
    def basis_state(cls, basis, state):
        v = np.zeros(basis.dim, dtype=complex)
        v[basis.index_of(state)] = 1.0
        return cls(basis, vector=v)

    @classmethod
    def mixed(cls, basis, rho):
        rho = np.array(rho, dtype=complex)
        if rho.shape != (basis.dim, basis.dim):
            raise ValueError("density matrix has wrong shape")
        return cls(basis, blocks=((np.arange(basis.dim), rho),))

    @classmethod
    def from_blocks(cls, basis, blocks):
        blocks = tuple((np.asarray(i, dtype=np.int64), np.asarray(r, dtype=complex))
                       for i, r in blocks)
        seen = np.concatenate([i for i, _ in blocks]) if blocks else np.empty(0, int)
        if len(np.unique(seen)) != len(seen):
            raise ValueError("blocks overlap")
        return cls(basis, blocks=blocks)

    def as_mixed(self):
        if not self.is_pure:
            return self
        nz = np.flatnonzero(self.vector)
        ms = np.unique(self.basis.m[nz])
        if len(ms) == 1:
            idx = self.basis.block_index[int(ms[0])]
        else:
            idx = np.arange(self.basis.dim)
        v = self.vector[idx]
        return QuantumState(self.basis, blocks=((idx, np.outer(v, v.conj())),))

    def density_matrix(self):
        n = self.basis.dim
        if self.is_pure:
            return np.outer(self.vector, self.vector.conj())
        rho = np.zeros((n, n), dtype=complex)
        for idx, r in self.blocks:
            rho[np.ix_(idx, idx)] = r
        return rho

    def sparse_density(self):
        n = self.basis.dim
        if self.is_pure:
            return sp.csr_matrix(self.density_matrix())
        rows, cols, vals = [], [], []
        for idx, r in self.blocks:
            rr, cc = np.meshgrid(idx, idx, indexing="ij")
            rows.append(rr.ravel())
            cols.append(cc.ravel())
            vals.append(r.ravel())
        if not rows:
            return sp.csr_matrix((n, n), dtype=complex)
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(n, n))

    def populations(self):
        if self.is_pure:
            return np.abs(self.vector) ** 2
        p = np.zeros(self.basis.dim)
        for idx, r in self.blocks:
            p[idx] = np.real(np.diag(r))
        return p

    def norm(self):
        """Vector norm (pure) or trace (mixed)."""
        if self.is_pure:
            return float(np.linalg.norm(self.vector))
        return float(sum(np.real(np.trace(r)) for _, r in self.blocks))

    def min_eigenvalue(self):
        if self.is_pure:
            return 0.0
        return float(min(np.linalg.eigvalsh(0.5 * (r + r.conj().T)).min() for _, r in self.blocks))

    def hermiticity_error(self):
        if self.is_pure:
            return 0.0
        return float(max(np.abs(r - r.conj().T).max() for _, r in self.blocks))

    def check(self, tol=1e-8, eig_tol=1e-10):
        if self.is_pure:
            if abs(self.norm() - 1.0) > tol:
                raise ValueError(f"state norm {self.norm():.3e} deviates from 1")
            return
        if abs(self.norm() - 1.0) > tol:
            raise ValueError(f"trace {self.norm():.3e} deviates from 1")
        if self.hermiticity_error() > tol:
            raise ValueError("density matrix is not Hermitian")
        if self.min_eigenvalue() < -eig_tol:
            raise ValueError("density matrix has negative eigenvalues")


STATE_FORMAT = "rotorkit-state-1"


def save_state(state, path):
    """Write a state to an ``.npz`` file (the CLI checkpoint format)."""
    b = state.basis
    payload = {"format": np.array(STATE_FORMAT), "top": np.array(b.top.value),
               "j_max": np.array(b.j_max)}
    if state.is_pure:
        payload["vector"] = state.vector
    else:
        payload["sizes"] = np.array([len(i) for i, _ in state.blocks], dtype=np.int64)
        payload["indices"] = np.concatenate([i for i, _ in state.blocks]) if state.blocks \
            else np.empty(0, dtype=np.int64)
        payload["data"] = np.concatenate([r.ravel() for _, r in state.blocks]) if state.blocks \
            else np.empty(0, dtype=complex)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_state(path, basis=None):
    """Read a state written by ``save_state``. If ``basis`` is given the file
    must have been written on the same basis."""
    from .basis import build_basis

    with np.load(path, allow_pickle=False) as f:
        if "format" not in f or str(f["format"]) != STATE_FORMAT:
            raise ValueError(f"{path}: not a rotorkit state file")
        stored = build_basis(str(f["top"]), int(f["j_max"]))
        if basis is not None and not basis.same_as(stored):
            raise ValueError(f"{path}: state was saved on a different basis "
                             f"({stored.top.value}, j_max={stored.j_max})")
        if "vector" in f:
            return QuantumState(stored, vector=f["vector"].astype(complex))
        blocks, pos, start = [], 0, 0
        idx_all, data = f["indices"], f["data"]
        for n in f["sizes"]:
            idx = idx_all[pos:pos + n]
            blocks.append((idx, data[start:start + n * n].reshape(n, n)))
            pos += n
            start += n * n
    return QuantumState.from_blocks(stored, blocks)


# ---------------------------------------------------------------------------
# Thermal ensembles

def free_energies(spec, basis):
    """Eigenvalues of the free Hamiltonian per basis index.

    For diagonal Hamiltonians this is the diagonal; otherwise the returned
    vectors map eigenstates to the basis: ``(energies, eigvecs)`` with eigvecs
    block-diagonal in (j, m).
    """
    H0 = free_hamiltonian(spec, basis)
    off = H0.matrix - sp.diags(H0.matrix.diagonal())
    if off.count_nonzero() == 0:
        return np.real(H0.matrix.diagonal()), None
    n = basis.dim
    energies = np.empty(n)
    vecs = np.zeros((n, n), dtype=complex)
    cols = 0
    for j in range(basis.j_max + 1):
        for m in range(-j, j + 1):
            idx = np.flatnonzero((basis.j == j) & (basis.m == m))
            w, v = np.linalg.eigh(H0.matrix[idx][:, idx].toarray())
            energies[cols:cols + len(idx)] = w
            vecs[idx, cols:cols + len(idx)] = v
            cols += len(idx)
    return energies, vecs


def thermal_state(spec, basis, T, truncation_tol=WATCHDOG_DEFAULT):
    """Canonical ensemble ``rho = sum g_J exp(-E / kT) |n><n| / Z``.

    Energies are the actual eigenvalues of the free Hamiltonian (measured from
    the lowest level, which cancels in Z). ``T = 0`` gives the equal mixture of
    the lowest allowed level (a single projector for non-degenerate ground
    states). Raises ``TruncationError`` if the top j shell holds more than
    ``truncation_tol`` of the population.
    """
    if not (T >= 0 and math.isfinite(T)):
        raise ValueError("temperature must be finite and >= 0")
    energies, vecs = free_energies(spec, basis)
    if vecs is None:
        jn = basis.j
    else:
        # eigenvectors stay inside one j shell
        jn = basis.j[np.argmax(np.abs(vecs), axis=0)]
    g = np.where(jn % 2 == 0, spec.spin_weights["even"], spec.spin_weights["odd"]).astype(float)
    allowed = g > 0
    if not allowed.any():
        raise ValueError("all spin weights vanish")
    e0 = energies[allowed].min()
    if T == 0:
        scale = max(1.0, abs(e0))
        p = np.where(allowed & (np.abs(energies - e0) <= 1e-12 * scale), 1.0, 0.0)
    else:
        beta = 1.0 / (KB_RADPS_PER_K * T)
        p = g * np.exp(-beta * (energies - e0))
    p = p / p.sum()
    top = jn == basis.j_max
    if T > 0 and basis.j_max > 0 and p[top].sum() > truncation_tol:
        raise TruncationError(
            f"top shell j={basis.j_max} holds {p[top].sum():.2e} of the thermal population at "
            f"T={T} K; increase j_max")
    blocks = []
    for mv in range(-basis.j_max, basis.j_max + 1):
        idx = basis.block_index[mv]
        if vecs is None:
            r = np.diag(p[idx]).astype(complex)
        else:
            cols = np.flatnonzero(np.any(vecs[idx] != 0, axis=0))
            v = vecs[np.ix_(idx, cols)]
            r = (v * p[cols]) @ v.conj().T
        if np.any(r != 0):
            blocks.append((idx, r))
    return QuantumState.from_blocks(basis, blocks)


# ---------------------------------------------------------------------------
# Drives and trajectories

@dataclass(eq=False)
class Drive:
    """``H(t) = H0 + sum_i c_i(t) O_i`` plus impulsive kicks ``(t, U)``."""

    H0: Operator
    couplings: list = field(default_factory=list)
    kicks: list = field(default_factory=list)

    @classmethod
    def from_pulses(cls, spec, basis, pulses=(), keep_isotropic=True, H0=None):
        H0 = free_hamiltonian(spec, basis) if H0 is None else H0
        couplings, kicks = [], []
        for p in pulses:
            couplings.extend(p.couplings(spec, basis, keep_isotropic))
            kicks.extend(p.kicks(spec, basis))
        kicks.sort(key=lambda x: x[0])
        return cls(H0, couplings, kicks)

    @property
    def basis(self):
        return self.H0.basis

    def operators(self):
        ops = [self.H0] + [o for c in self.couplings for o in c.operators]
        return ops + [u for _, u in self.kicks]

    def hamiltonian(self, t):
        H = self.H0.matrix
        for c in self.couplings:
            if c.window[0] <= t <= c.window[1]:
                for o, ci in zip(c.operators, c.coefficients(t)):
                    H = H + ci * o.matrix
        return Operator(self.H0.basis, H.tocsr(), label=f"H({t:g})")

    def norm_bound(self):
        def inf_norm(m):
            return float(abs(m).sum(axis=1).max()) if m.nnz else 0.0
        b = inf_norm(self.H0.matrix)
        for c in self.couplings:
            bound = c.coefficient_bound()
            b += sum(bi * inf_norm(o.matrix) for bi, o in zip(bound, c.operators))
        return b


def as_drive(hamiltonian):
    if isinstance(hamiltonian, Drive):
        return hamiltonian
    if isinstance(hamiltonian, Operator):
        return Drive(hamiltonian)
    raise TypeError("expected a Drive or a constant Operator")


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    records: dict
    states: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.records[name]

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("time grid must be strictly increasing")


def _check_grid(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1:
        raise ValueError("time grid must be a non-empty 1-D array")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("time grid must be strictly increasing")
    if not np.all(np.isfinite(grid)):
        raise ValueError("time grid must be finite")
    return grid


def _top_shells(basis, count=2):
    if basis.j_max < count:
        return None
    return np.flatnonzero(basis.j > basis.j_max - count)


# ---------------------------------------------------------------------------
# Unitary engine

def _layouts(basis, ops):
    """Candidate block layouts allowed by the operators, finest first.

    For each of j, k, m the gcd of the changes that actually occur among the
    operators' nonzero elements decides what is conserved: 0 means the value
    itself, g > 1 its residue mod g (e.g. j parity under cos^2 couplings of a
    linear rotor, m parity under elliptic fields).
    """
    labels = np.stack([basis.j, basis.k, basis.m], axis=1)
    steps = [0, 0, 0]
    for o in ops:
        coo = o.matrix.tocoo()
        keep = coo.data != 0
        rows, cols = coo.row[keep], coo.col[keep]
        for i in range(3):
            d = np.unique(np.abs(labels[rows, i] - labels[cols, i]))
            steps[i] = math.gcd(steps[i], *(int(x) for x in d))

    def grouped(use):
        keys = np.stack([labels[:, i] if g == 0 else labels[:, i] % g
                         for i, g in enumerate(steps) if use[i]], axis=1) \
            if any(use) else np.zeros((basis.dim, 1), dtype=np.int64)
        _, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        return [np.flatnonzero(inverse == g) for g in range(inverse.max() + 1)]

    out, seen = [], set()
    for use in ((True, True, True), (False, True, True), (False, False, True),
                (False, False, False)):
        layout = grouped(use)
        sig = tuple(len(b) for b in layout)
        if sig not in seen:
            seen.add(sig)
            out.append(layout)
    return out


def _fit_layout(state, layouts):
    """Restrict the state to the finest layout that captures it exactly.
    Blocks where the state vanishes are dropped."""
    if state.is_pure:
        v = state.vector
        layout = layouts[0]
        kept = [idx for idx in layout if np.any(v[idx] != 0)]
        return kept, [v[idx].copy() for idx in kept]
    rho = state.sparse_density()
    total = float(np.sum(np.abs(rho.data) ** 2))
    for layout in layouts:
        kept, parts, mass = [], [], 0.0
        for idx in layout:
            sub = rho[idx][:, idx]
            if sub.nnz == 0 or not np.any(sub.data):
                continue
            dense = sub.toarray()
            kept.append(idx)
            parts.append(dense)
            mass += float(np.sum(np.abs(dense) ** 2))
        if abs(total - mass) <= 1e-28 + 1e-15 * total:
            return kept, parts
    raise AssertionError("dense layout must always fit")


class _UnitaryEngine:
    """Propagates a pure or block-diagonal mixed state in the eigenbasis of H0
    restricted to each block."""

    def __init__(self, state, drive, layout, max_step, resolution, scheme="midpoint"):
        if scheme not in ("midpoint", "magnus4"):
            raise ValueError("scheme must be 'midpoint' or 'magnus4'")
        self.scheme = scheme
        self.basis = state.basis
        self.drive = drive
        self.pure = state.is_pure
        self.max_step = max_step
        self.resolution = resolution
        H0 = drive.H0.matrix
        diag_H0 = (H0 - sp.diags(H0.diagonal())).count_nonzero() == 0
        self.blocks = layout[0]
        payload = layout[1]
        self.E, self.V = [], []
        for idx, part in zip(self.blocks, payload):
            if diag_H0:
                self.E.append(np.real(H0.diagonal()[idx]))
                self.V.append(None)
            else:
                w, v = np.linalg.eigh(H0[idx][:, idx].toarray())
                self.E.append(w)
                self.V.append(v)
        # working-basis payload
        self.x = []
        for part, v in zip(payload, self.V):
            if v is None:
                self.x.append(part)
            elif self.pure:
                self.x.append(v.conj().T @ part)
            else:
                self.x.append(v.conj().T @ part @ v)
        self._op_cache = {}
        self.substeps = 0

    def _to_work(self, op, b):
        key = (id(op), b)
        if key not in self._op_cache:
            idx = self.blocks[b]
            m = op.matrix[idx][:, idx].toarray()
            v = self.V[b]
            if v is not None:
                m = v.conj().T @ m @ v
            self._op_cache[key] = m
        return self._op_cache[key]

    def free(self, dt):
        if dt == 0:
            return
        for b, e in enumerate(self.E):
            ph = np.exp(-1j * e * dt)
            if self.pure:
                self.x[b] = ph * self.x[b]
            else:
                self.x[b] = ph[:, None] * self.x[b] * ph.conj()[None, :]

    def _apply(self, b, U):
        if self.pure:
            self.x[b] = U @ self.x[b]
        else:
            self.x[b] = U @ self.x[b] @ U.conj().T

    def kick(self, U_op):
        for b in range(len(self.blocks)):
            self._apply(b, self._to_work(U_op, b))

    def _h_block(self, b, couplings, coefs):
        H = np.diag(self.E[b]).astype(complex)
        for c, cs in zip(couplings, coefs):
            for o, ci in zip(c.operators, cs):
                if ci:
                    H += ci * self._to_work(o, b)
        return H

    def driven(self, t0, t1, couplings):
        span = t1 - t0
        n = max(1, math.ceil(span / self.max_step - 1e-12))
        widths = [c.window[1] - c.window[0] for c in couplings]
        if self.resolution and widths:
            n = max(n, math.ceil(span / (min(widths) / self.resolution) - 1e-12))
        dt = span / n
        gauss = 0.5 / math.sqrt(3.0)
        for s in range(n):
            tm = t0 + (s + 0.5) * dt
            if self.scheme == "magnus4":
                c1 = [c.coefficients(tm - gauss * dt) for c in couplings]
                c2 = [c.coefficients(tm + gauss * dt) for c in couplings]
            else:
                cm = [c.coefficients(tm) for c in couplings]
            for b in range(len(self.blocks)):
                if self.scheme == "magnus4":
                    H1 = self._h_block(b, couplings, c1)
                    H2 = self._h_block(b, couplings, c2)
                    # exp(-i dt Heff) with Heff = (H1+H2)/2 - i sqrt(3) dt [H2, H1] / 12
                    H = 0.5 * (H1 + H2) - 1j * math.sqrt(3.0) * dt / 12.0 * (H2 @ H1 - H1 @ H2)
                    H = 0.5 * (H + H.conj().T)
                else:
                    H = self._h_block(b, couplings, cm)
                w, v = np.linalg.eigh(H)
                emax = np.abs(w).max() if w.size else 0.0
                if dt * emax >= 0.5:
                    raise StepSizeError(
                        f"step {dt:.3e} ps at t={tm:.6g} ps with max|E|={emax:.3e} rad/ps "
                        f"violates dt*max|E| < 0.5; reduce max_step below {0.5 / emax:.3e}")
                U = (v * np.exp(-1j * w * dt)) @ v.conj().T
                self._apply(b, U)
            self.substeps += 1

    def to_state(self):
        if self.pure:
            full = np.zeros(self.basis.dim, dtype=complex)
            for idx, x, v in zip(self.blocks, self.x, self.V):
                full[idx] = x if v is None else v @ x
            return QuantumState(self.basis, vector=full)
        blocks = []
        for idx, x, v in zip(self.blocks, self.x, self.V):
            blocks.append((idx, x.copy() if v is None else v @ x @ v.conj().T))
        return QuantumState(self.basis, blocks=tuple(blocks))


class _Recorder:
    """Evaluates observables on the engine state at each output time."""

    def __init__(self, engine, observables, top):
        self.engine = engine
        self.observables = dict(observables or {})
        self.top = top
        n = len(engine.blocks)
        if not engine.pure:
            # flattened O^T per block so <O> = sum(O^T * rho)
            self.flat = {}
            for name, op in self.observables.items():
                self.flat[name] = [engine._to_work(op, b).T for b in range(n)]
            if top is not None:
                self.top_w = []
                for b, idx in enumerate(engine.blocks):
                    mask = np.isin(idx, top).astype(complex)
                    v = engine.V[b]
                    if v is None:
                        self.top_w.append(np.diag(mask))
                    else:
                        self.top_w.append((v.conj().T * mask) @ v)

    def record(self):
        e = self.engine
        out = {}
        if e.pure:
            psi = e.to_state().vector
            for name, op in self.observables.items():
                out[name] = float(np.real(np.vdot(psi, op.matrix @ psi)))
            norm = float(np.vdot(psi, psi).real)
            top = float(np.sum(np.abs(psi[self.top]) ** 2)) if self.top is not None else 0.0
            return out, norm, top
        for name, mats in self.flat.items():
            out[name] = float(np.real(sum(np.sum(m * x) for m, x in zip(mats, e.x))))
        tr = float(np.real(sum(np.trace(x) for x in e.x)))
        top = 0.0
        if self.top is not None:
            top = float(np.real(sum(np.sum(w.T * x) for w, x in zip(self.top_w, e.x))))
        return out, tr, top


def _breakpoints(drive, t_a, t_b):
    pts = {t_b}
    for c in drive.couplings:
        for w in c.window:
            if t_a < w < t_b:
                pts.add(w)
    for tk, _ in drive.kicks:
        if t_a < tk <= t_b:
            pts.add(tk)
    return sorted(pts)


def _propagate_unitary(state, hamiltonian, grid, observables, max_step, watchdog,
                       checkpoints, layout, resolution, scheme):
    drive = as_drive(hamiltonian)
    grid = _check_grid(grid)
    basis = state.basis
    if not drive.basis.same_as(basis):
        raise ValueError("state and Hamiltonian live on different bases")
    for tk, _ in drive.kicks:
        if tk < grid[0]:
            raise ValueError(f"kick at t={tk} precedes the start of the grid")
    if layout == "dense":
        layouts = [[np.arange(basis.dim)]]
    elif layout == "auto":
        layouts = _layouts(basis, drive.operators())
    else:
        raise ValueError("layout must be 'auto' or 'dense'")
    if max_step is None:
        bound = drive.norm_bound() if drive.couplings else 0.0
        max_step = 0.4 / bound if bound > 0 else math.inf
    elif max_step <= 0:
        raise ValueError("max_step must be > 0")
    engine = _UnitaryEngine(state, drive, _fit_layout(state, layouts), max_step, resolution,
                             scheme)
    top = _top_shells(basis) if watchdog is not None else None
    rec = _Recorder(engine, observables, top)
    checkpoints = sorted(set(float(c) for c in checkpoints))
    for c in checkpoints:
        if not np.any(np.abs(grid - c) <= 1e-12 * max(1.0, abs(c))):
            raise ValueError(f"checkpoint t={c} is not a grid time")

    records = {name: np.empty(grid.size) for name in rec.observables}
    norms = np.empty(grid.size)
    top_pop = np.empty(grid.size)
    stored = {}
    kicks = list(drive.kicks)
    ki = 0
    t = grid[0]
    for n, t_out in enumerate(grid):
        if n > 0:
            for s1 in _breakpoints(drive, t, t_out):
                active = [c for c in drive.couplings if c.active(t, s1)]
                if active:
                    engine.driven(t, s1, active)
                else:
                    engine.free(s1 - t)
                t = s1
                while ki < len(kicks) and kicks[ki][0] <= t:
                    engine.kick(kicks[ki][1])
                    ki += 1
        else:
            while ki < len(kicks) and kicks[ki][0] <= t:
                engine.kick(kicks[ki][1])
                ki += 1
        vals, norms[n], top_pop[n] = rec.record()
        for name, v in vals.items():
            records[name][n] = v
        if watchdog is not None and top is not None and top_pop[n] > watchdog:
            raise TruncationError(
                f"population {top_pop[n]:.2e} in shells j >= {basis.j_max - 1} at t={t_out:.6g} ps "
                f"exceeds {watchdog:.1e}; increase j_max")
        for c in checkpoints:
            if abs(c - t_out) <= 1e-12 * max(1.0, abs(c)):
                stored[c] = engine.to_state()
    meta = {
        "norm_drift": float(np.max(np.abs(norms - norms[0]))),
        "norm": norms,
        "top_population": top_pop if top is not None else None,
        "substeps": engine.substeps,
        "blocks": len(engine.blocks),
        "max_step": max_step,
    }
    meta["final_state"] = engine.to_state()
    return Trajectory(grid, records, stored, meta)


def propagate_schrodinger(state, hamiltonian, grid, observables=None, max_step=None,
                          watchdog=WATCHDOG_DEFAULT, checkpoints=(), layout="auto",
                          resolution=400, scheme="midpoint"):
    """Evolve a pure state over ``grid`` (ps).

    ``hamiltonian`` is a ``Drive`` or a constant ``Operator``. ``observables``
    maps names to operators recorded at every grid time. Inside pulse windows
    sub-steps are at most ``max_step`` (default from a norm bound on H) and at
    most ``1/resolution`` of the shortest active window; each step must satisfy
    ``dt * max|E| < 0.5`` or ``StepSizeError`` is raised.

    ``scheme='midpoint'`` freezes H at each sub-step midpoint (second order in
    the envelope variation); ``'magnus4'`` uses the two-point fourth-order
    Magnus exponent. Both are exactly unitary.
    """
    if not state.is_pure:
        raise ValueError("propagate_schrodinger needs a pure state; use propagate_lvn")
    return _propagate_unitary(state, hamiltonian, grid, observables, max_step, watchdog,
                              checkpoints, layout, resolution, scheme)


def propagate_lvn(state, hamiltonian, grid, observables=None, max_step=None,
                  watchdog=WATCHDOG_DEFAULT, checkpoints=(), layout="auto", resolution=400,
                  scheme="midpoint"):
    """Evolve a density matrix by ``rho -> U rho U^dagger`` (same stepping as
    ``propagate_schrodinger``)."""
    return _propagate_unitary(state.as_mixed(), hamiltonian, grid, observables, max_step,
                              watchdog, checkpoints, layout, resolution, scheme)


# ---------------------------------------------------------------------------
# Open systems

@dataclass(frozen=True, eq=False)
class Thermalization:
    """Relaxation model ``D(rho) = gamma (rho_eq Tr(rho) - rho)``.

    Equivalent to the jump operators ``sqrt(gamma p_a) |a><b|`` over all
    pairs of eigenstates of ``rho_eq``; applied directly rather than as a list
    of ``dim^2`` operators.
    """

    rho_eq: QuantumState
    gamma: float

    def __post_init__(self):
        if not (self.gamma >= 0 and math.isfinite(self.gamma)):
            raise ValueError("gamma must be finite and >= 0")


def energy_dephasing(H0, gamma, tol=1e-9):
    """Pure-dephasing model: ``L_E = sqrt(gamma) P_E`` for every distinct level
    ``E`` of ``H0``. Coherences between different levels decay at rate
    ``gamma``; populations and coherences inside a level are untouched."""
    if not (gamma >= 0 and math.isfinite(gamma)):
        raise ValueError("gamma must be finite and >= 0")
    basis = H0.basis
    M = H0.matrix
    diag = (M - sp.diags(M.diagonal())).count_nonzero() == 0
    if diag:
        e = np.real(M.diagonal())
        vecs = None
    else:
        e, vecs = np.linalg.eigh(M.toarray())
    scale = max(1.0, float(np.abs(e).max()))
    order = np.argsort(e, kind="stable")
    levels, cur = [], [order[0]]
    for a, b in zip(order[:-1], order[1:]):
        if e[b] - e[a] <= tol * scale:
            cur.append(b)
        else:
            levels.append(cur)
            cur = [b]
    levels.append(cur)
    ops = []
    g = math.sqrt(gamma)
    for lev in levels:
        lev = np.sort(np.array(lev))
        if vecs is None:
            P = sp.csr_matrix((np.full(len(lev), g, dtype=complex), (lev, lev)),
                              shape=M.shape)
        else:
            v = vecs[:, lev]
            P = sp.csr_matrix(g * (v @ v.conj().T))
        ops.append(Operator(basis, P, H0.selection, f"dephase(E={e[lev[0]]:.6g})"))
    return ops


def _is_diagonal(op):
    m = op.matrix
    return (m - sp.diags(m.diagonal())).count_nonzero() == 0


def propagate_lindblad(state, hamiltonian, collapse_ops, grid, observables=None, tol=1e-9,
                       h0=None, h_min=1e-12, watchdog=WATCHDOG_DEFAULT, positivity_tol=1e-8,
                       exact_free=True):
    """Integrate ``d rho/dt = -i[H, rho] + sum_k (L rho L^+ - {L^+ L, rho}/2)``.

    Works in the interaction picture of H0 (exact for the free part), with RK4
    steps whose error is estimated by step doubling; a step is halved while the
    estimate exceeds ``tol``. Diagonal collapse operators and ``Thermalization``
    entries use elementwise rates, and outside pulse windows such dissipators
    are integrated in closed form (``exact_free``). Positivity is checked at
    every grid time; ``PositivityError`` aborts the run.
    """
    drive = as_drive(hamiltonian)
    grid = _check_grid(grid)
    basis = state.basis
    if not drive.basis.same_as(basis):
        raise ValueError("state and Hamiltonian live on different bases")
    n = basis.dim
    H0 = drive.H0.matrix
    if _is_diagonal(drive.H0):
        E = np.real(H0.diagonal())
        V = None
    else:
        E, V = np.linalg.eigh(H0.toarray())

    def to_eig(m):
        m = m.toarray() if sp.issparse(m) else np.asarray(m)
        return m if V is None else V.conj().T @ m @ V

    def from_eig(m):
        return m if V is None else V @ m @ V.conj().T

    # diagonal L gives D(rho)_ab = -R_ab rho_ab, R_ab = (|l_a|^2 + |l_b|^2)/2 - l_a conj(l_b)
    rates = np.zeros((n, n), dtype=complex)
    general = []
    therm = []
    for L in collapse_ops:
        if isinstance(L, Thermalization):
            if not L.rho_eq.basis.same_as(basis):
                raise ValueError("thermalization target lives on a different basis")
            therm.append((L.gamma, to_eig(L.rho_eq.density_matrix())))
            continue
        if not isinstance(L, Operator) or not L.basis.same_as(basis):
            raise ValueError("collapse operators must be Operators on the state basis")
        if V is None and _is_diagonal(L):
            l = L.matrix.diagonal()
            a = np.abs(l) ** 2
            rates += 0.5 * (a[:, None] + a[None, :]) - np.outer(l, l.conj())
        else:
            general.append(to_eig(L.matrix))
    therm_diag = all(np.count_nonzero(r - np.diag(np.diag(r))) == 0 for _, r in therm)
    gamma_th = sum(g for g, _ in therm)
    rho_th = sum((g * r for g, r in therm), np.zeros((n, n), dtype=complex))
    LdL = [(L, L.conj().T @ L) for L in general]

    coupling_ops = [[to_eig(o.matrix) for o in c.operators] for c in drive.couplings]
    kicks = [(t, to_eig(U.matrix)) for t, U in drive.kicks]
    obs = {name: to_eig(op.matrix).T for name, op in (observables or {}).items()}
    top = _top_shells(basis) if watchdog is not None else None
    top_w = None
    if top is not None:
        mask = np.zeros(n)
        mask[top] = 1.0
        top_w = np.diag(mask) if V is None else (V.conj().T * mask) @ V
        top_w = top_w.T

    for tk, _ in drive.kicks:
        if tk < grid[0]:
            raise ValueError(f"kick at t={tk} precedes the start of the grid")

    rho = to_eig(state.density_matrix())
    dE = E[:, None] - E[None, :]

    def rhs(s, x, t_ref, active):
        # interaction picture referenced to t_ref
        ph = np.exp(1j * dE * (s - t_ref))
        out = -rates * x
        if gamma_th:
            out += rho_th * ph * np.trace(x) - gamma_th * x
        if general:
            xs = x * ph.conj()
            d = np.zeros_like(x)
            for L, ldl in LdL:
                d += L @ xs @ L.conj().T - 0.5 * (ldl @ xs + xs @ ldl)
            out += d * ph
        if active:
            Hs = np.zeros((n, n), dtype=complex)
            for ci, c in active:
                for o, cv in zip(coupling_ops[ci], c.coefficients(s)):
                    if cv:
                        Hs += cv * o
            HI = Hs * ph
            out += -1j * (HI @ x - x @ HI)
        return out

    def rk4(s, x, h, t_ref, active):
        k1 = rhs(s, x, t_ref, active)
        k2 = rhs(s + h / 2, x + h / 2 * k1, t_ref, active)
        k3 = rhs(s + h / 2, x + h / 2 * k2, t_ref, active)
        k4 = rhs(s + h, x + h * k3, t_ref, active)
        return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    fast_ok = exact_free and not general and therm_diag

    def free_exact(x, dt):
        # elementwise linear ODE x' = -(R + g) x + g rho_th tr(x); tr(x) is
        # conserved, and rho_th is diagonal here so the source has no phase
        tr = np.trace(x)
        k = rates + gamma_th
        nz = k != 0
        x_inf = np.zeros_like(x)
        x_inf[nz] = rho_th[nz] * tr / k[nz]
        return np.where(nz, x_inf + (x - x_inf) * np.exp(-k * dt), x)

    def evolve(x, t0, t1, h):
        """Advance x (Schrodinger picture, eigenbasis) from t0 to t1."""
        active = [(i, c) for i, c in enumerate(drive.couplings) if c.active(t0, t1)]
        if not active and fast_ok:
            ph = np.exp(-1j * dE * (t1 - t0))
            return free_exact(x, t1 - t0) * ph, h, 0
        s = t0
        steps = 0
        if h is None:
            h = (t1 - t0)
        while s < t1 - 1e-15 * max(1.0, abs(t1)):
            hh = min(h, t1 - s)
            full = rk4(s, x, hh, t0, active)
            half = rk4(s + hh / 2, rk4(s, x, hh / 2, t0, active), hh / 2, t0, active)
            err = float(np.abs(full - half).max())
            if err > tol:
                h = hh / 2
                if h < h_min:
                    raise StepSizeError(f"Lindblad step fell below {h_min} ps at t={s:.6g} ps")
                continue
            x = half
            s = s + hh
            steps += 1
            if err < tol / 64 and hh == h:
                h = 2 * h
        ph = np.exp(-1j * dE * (t1 - t0))
        return x * ph, h, steps

    records = {name: np.empty(grid.size) for name in obs}
    traces = np.empty(grid.size)
    min_eigs = np.empty(grid.size)
    top_pop = np.empty(grid.size)
    ki = 0
    h = h0
    t = grid[0]
    total_steps = 0
    for nidx, t_out in enumerate(grid):
        if nidx > 0:
            for s1 in _breakpoints(drive, t, t_out):
                rho, h, st = evolve(rho, t, s1, h)
                total_steps += st
                t = s1
                while ki < len(kicks) and kicks[ki][0] <= t:
                    U = kicks[ki][1]
                    rho = U @ rho @ U.conj().T
                    ki += 1
        else:
            while ki < len(kicks) and kicks[ki][0] <= t:
                U = kicks[ki][1]
                rho = U @ rho @ U.conj().T
                ki += 1
        rho = 0.5 * (rho + rho.conj().T)
        for name, m in obs.items():
            records[name][nidx] = float(np.real(np.sum(m * rho)))
        traces[nidx] = float(np.real(np.trace(rho)))
        min_eigs[nidx] = float(np.linalg.eigvalsh(rho).min())
        top_pop[nidx] = float(np.real(np.sum(top_w * rho))) if top_w is not None else 0.0
        if min_eigs[nidx] < -positivity_tol:
            raise PositivityError(
                f"min eigenvalue {min_eigs[nidx]:.3e} at t={t_out:.6g} ps below "
                f"-{positivity_tol:.1e}; tighten tol or check collapse operators")
        if top_w is not None and top_pop[nidx] > watchdog:
            raise TruncationError(
                f"population {top_pop[nidx]:.2e} in shells j >= {basis.j_max - 1} at "
                f"t={t_out:.6g} ps exceeds {watchdog:.1e}; increase j_max")
    final = QuantumState.mixed(basis, from_eig(rho))
    meta = {
        "trace_drift": float(np.max(np.abs(traces - traces[0]))),
        "trace": traces,
        "min_eigenvalue": min_eigs,
        "top_population": top_pop if top_w is not None else None,
        "rk4_steps": total_steps,
        "final_state": final,
    }
    return Trajectory(grid, records, {}, meta)
