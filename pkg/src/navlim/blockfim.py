"""Block-indexed symmetric matrices and Schur-complement elimination.

The joint Fisher information matrix over positions and measurement-parameter
nuisances is stored dense: problem sizes stay in the low hundreds of
dimensions, where dense storage is simpler and directly comparable against
whole-matrix oracles.

The core reduction is the Schur complement A - B C^-1 B^T onto a kept
coordinate subset, which preserves the inverse-matrix block of the kept
coordinates. Rank-deficient eliminated blocks are handled by a symmetric
pseudo-inverse: eigenvalues below PINV_RCOND * |lambda|_max are treated as
exact zeros. If a discarded null direction carries cross-information, the
reduction is undefined and `SingularBlockError` is raised.
"""

from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from enum import Enum

import numpy as np

# Relative eigenvalue cutoff of the symmetric pseudo-inverse.
PINV_RCOND = 1e-12

# Relative cross-information leakage into a discarded null space that still
# counts as zero (round-off).
LEAK_TOL = 1e-8


class SingularBlockError(Exception):
    """An eliminated block is singular beyond the pseudo-inverse tolerance."""


class ParamKind(Enum):
    POSITION = "position"
    INTRA = "intra"
    INTER = "inter"


_KIND_RANK = {ParamKind.POSITION: 0, ParamKind.INTRA: 1, ParamKind.INTER: 2}


@dataclass(frozen=True)
class ParamId:
    """Coordinate of one parameter block: (kind, agent, time[, peer]).

    `peer` identifies the far node of a pairwise measurement parameter and is
    present exactly for kind INTER. Times and node indices are 0-based.
    """

    kind: ParamKind
    agent: int
    time: int
    peer: int | None = None

    def __post_init__(self):
        if self.agent < 0 or self.time < 0:
            raise ValueError(f"negative index in {self!r}")
        if self.kind is ParamKind.INTER:
            if self.peer is None:
                raise ValueError("pairwise parameter requires a peer")
            if self.peer == self.agent:
                raise ValueError("peer must differ from agent")
        elif self.peer is not None:
            raise ValueError(f"{self.kind} parameter takes no peer")


def canonical_key(pid: ParamId) -> tuple:
    """Sort key: time-major, positions before intra before pairwise, then agent.

    Keeps every time step's position band contiguous so cross-step structure
    shows up as a visible matrix band.
    """
    return (pid.time, _KIND_RANK[pid.kind], pid.agent, -1 if pid.peer is None else pid.peer)


class BlockLayout:
    """Ordered (ParamId, block_dim) list with offset lookup."""

    def __init__(self, entries: Iterable[tuple[ParamId, int]]):
        self._ids: list[ParamId] = []
        self._dims: dict[ParamId, int] = {}
        self._offsets: dict[ParamId, int] = {}
        offset = 0
        for pid, dim in entries:
            if dim <= 0:
                raise ValueError(f"non-positive block dim for {pid!r}")
            if pid in self._dims:
                raise ValueError(f"duplicate parameter {pid!r}")
            self._ids.append(pid)
            self._dims[pid] = dim
            self._offsets[pid] = offset
            offset += dim
        self.total_dim = offset

    @property
    def ids(self) -> tuple[ParamId, ...]:
        return tuple(self._ids)

    def __contains__(self, pid: ParamId) -> bool:
        return pid in self._dims

    def dim(self, pid: ParamId) -> int:
        return self._dims[pid]

    def offset(self, pid: ParamId) -> int:
        return self._offsets[pid]

    def slice(self, pid: ParamId) -> slice:
        o = self._offsets[pid]
        return slice(o, o + self._dims[pid])

    def indices(self, pids: Iterable[ParamId]) -> np.ndarray:
        """Flat row indices of the given blocks, in the given order."""
        out = []
        for pid in pids:
            out.extend(range(self._offsets[pid], self._offsets[pid] + self._dims[pid]))
        return np.array(out, dtype=int)


@dataclass
class BlockSymMatrix:
    """Dense symmetric matrix addressed by ParamId blocks."""

    layout: BlockLayout
    data: np.ndarray

    @classmethod
    def zeros(cls, layout: BlockLayout) -> "BlockSymMatrix":
        return cls(layout, np.zeros((layout.total_dim, layout.total_dim)))

    def add_block(self, i: ParamId, j: ParamId, m: np.ndarray) -> None:
        """Add m at block (i, j) and its transpose at (j, i)."""
        m = np.asarray(m, dtype=float)
        si, sj = self.layout.slice(i), self.layout.slice(j)
        if m.shape != (si.stop - si.start, sj.stop - sj.start):
            raise ValueError(
                f"block shape {m.shape} does not match ({i!r}, {j!r})"
            )
        self.data[si, sj] += m
        if i != j:
            self.data[sj, si] += m.T

    def block(self, i: ParamId, j: ParamId) -> np.ndarray:
        return self.data[self.layout.slice(i), self.layout.slice(j)].copy()

    def submatrix(self, pids: Sequence[ParamId]) -> np.ndarray:
        idx = self.layout.indices(pids)
        return self.data[np.ix_(idx, idx)].copy()

    def symmetry_error(self) -> float:
        scale = max(1.0, float(np.abs(self.data).max(initial=0.0)))
        return float(np.abs(self.data - self.data.T).max(initial=0.0)) / scale


def assemble(
    layout: BlockLayout,
    contributions: Iterable[tuple[ParamId, ParamId, np.ndarray]],
) -> BlockSymMatrix:
    """Additive scatter of (i, j, block) contributions into a symmetric matrix.

    Each off-diagonal contribution is mirrored transposed at (j, i); list each
    unordered pair once.
    """
    out = BlockSymMatrix.zeros(layout)
    for i, j, m in contributions:
        out.add_block(i, j, m)
    return out


def sym_pinv(m: np.ndarray, rcond: float = PINV_RCOND) -> np.ndarray:
    """Pseudo-inverse of a symmetric matrix via eigendecomposition.

    Eigenvalues with |lambda| <= rcond * |lambda|_max are treated as exact
    zeros.
    """
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return m.copy()
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    cutoff = rcond * np.abs(w).max(initial=0.0)
    inv_w = np.where(np.abs(w) > cutoff, 1.0, 0.0) / np.where(np.abs(w) > cutoff, w, 1.0)
    return (v * inv_w) @ v.T


def _reduce(
    target: np.ndarray,
    cross: np.ndarray,
    nuisance: np.ndarray,
    cross_back: np.ndarray,
    context: str,
) -> np.ndarray:
    """target - cross @ pinv(nuisance) @ cross_back, with null-leak detection.

    The eliminated block is diagonally scaled to unit diagonal before its
    eigendecomposition so that wildly mixed scales (a 1e12 pinning prior next
    to m^-2 information) cannot push genuine eigenvalues under the null
    cutoff; the scaling is a congruence, so the null space is preserved
    exactly. Discarding a null direction is only legal when no
    cross-information enters it (the reduction is then independent of the
    generalized inverse chosen); otherwise `SingularBlockError` is raised.
    """
    nuisance = 0.5 * (nuisance + nuisance.T)
    if nuisance.size == 0:
        return target.copy()
    diag = np.clip(np.diag(nuisance), 0.0, None)
    scale = np.sqrt(np.where(diag > 0.0, diag, 1.0))
    w, v = np.linalg.eigh(nuisance / scale[:, None] / scale[None, :])
    cutoff = PINV_RCOND * np.abs(w).max(initial=0.0)
    null = np.abs(w) <= cutoff
    if null.any():
        null_basis = v[:, null] / scale[:, None]
        norms = np.linalg.norm(null_basis, axis=0)
        null_basis = null_basis / np.where(norms > 0.0, norms, 1.0)
        ref = max(1.0, float(np.linalg.norm(cross)), float(np.linalg.norm(cross_back)))
        leak = max(
            float(np.linalg.norm(cross @ null_basis)),
            float(np.linalg.norm(null_basis.T @ cross_back)),
        )
        if leak > LEAK_TOL * ref:
            raise SingularBlockError(f"singular nuisance block in {context}")
    inv_w = np.where(null, 0.0, 1.0) / np.where(null, 1.0, w)
    v_descaled = v / scale[:, None]
    return target - (cross @ v_descaled) @ ((inv_w[:, None] * v_descaled.T) @ cross_back)


def eliminate_block(
    target: np.ndarray | float,
    cross: np.ndarray | float,
    nuisance: np.ndarray | float,
    cross_back: np.ndarray | float | None = None,
):
    """One-shot nuisance reduction: target - cross @ nuisance^-1 @ cross_back.

    `cross_back` defaults to cross.T (the symmetric case). Scalar inputs
    return a float.
    """
    scalar = np.ndim(target) == 0
    a = np.atleast_2d(np.asarray(target, dtype=float))
    b = np.atleast_2d(np.asarray(cross, dtype=float))
    c = np.atleast_2d(np.asarray(nuisance, dtype=float))
    bt = b.T if cross_back is None else np.atleast_2d(np.asarray(cross_back, dtype=float))
    out = _reduce(a, b, c, bt, "eliminate_block")
    return float(out[0, 0]) if scalar else out


def schur_complement(m: BlockSymMatrix, keep: Iterable[ParamId]) -> BlockSymMatrix:
    """Reduce onto the kept blocks: the result's inverse equals the kept block
    of the full inverse whenever the full matrix is invertible."""
    keep_set = set(keep)
    for pid in keep_set:
        if pid not in m.layout:
            raise ValueError(f"unknown parameter {pid!r}")
    kept = [pid for pid in m.layout.ids if pid in keep_set]
    dropped = [pid for pid in m.layout.ids if pid not in keep_set]
    ki = m.layout.indices(kept)
    if not dropped:
        layout = BlockLayout((pid, m.layout.dim(pid)) for pid in kept)
        return BlockSymMatrix(layout, m.data[np.ix_(ki, ki)].copy())
    di = m.layout.indices(dropped)
    a = m.data[np.ix_(ki, ki)]
    b = m.data[np.ix_(ki, di)]
    c = m.data[np.ix_(di, di)]
    reduced = _reduce(a, b, c, b.T, "schur_complement")
    layout = BlockLayout((pid, m.layout.dim(pid)) for pid in kept)
    return BlockSymMatrix(layout, 0.5 * (reduced + reduced.T))


@dataclass(frozen=True)
class ChainBlocks:
    """Information blocks of one nuisance chain coupled to per-step states.

    The chain covers steps 0..T-1 of a single hidden-Markov nuisance sequence
    plus the per-step state coordinates it touches:

      state_direct[n]   direct state-state information at step n
      nuis_diag[n]      nuisance-nuisance information at step n
      nuis_offdiag[n]   nuisance cross-information between steps n and n+1
      cross_same[n]     state(n)-nuisance(n) cross-information
      cross_next[n]     state(n)-nuisance(n+1) cross-information

    State and nuisance dimensions may vary per step.
    """

    state_direct: tuple[np.ndarray, ...]
    nuis_diag: tuple[np.ndarray, ...]
    nuis_offdiag: tuple[np.ndarray, ...] = ()
    cross_same: tuple[np.ndarray, ...] = ()
    cross_next: tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        t = len(self.state_direct)
        if t < 1:
            raise ValueError("chain length must be >= 1")
        if len(self.nuis_diag) != t:
            raise ValueError("nuis_diag length mismatch")
        if self.nuis_offdiag and len(self.nuis_offdiag) != t - 1:
            raise ValueError("nuis_offdiag length mismatch")
        if self.cross_same and len(self.cross_same) != t:
            raise ValueError("cross_same length mismatch")
        if self.cross_next and len(self.cross_next) != t - 1:
            raise ValueError("cross_next length mismatch")

    @property
    def length(self) -> int:
        return len(self.state_direct)

    def state_dim(self, n: int) -> int:
        return self.state_direct[n].shape[0]

    def nuis_dim(self, n: int) -> int:
        return self.nuis_diag[n].shape[0]


def _chain_part(parts: tuple[np.ndarray, ...], n: int, rows: int, cols: int) -> np.ndarray:
    if parts and n < len(parts):
        return np.asarray(parts[n], dtype=float)
    return np.zeros((rows, cols))


def eliminate_hmm_chain(chain: ChainBlocks) -> dict[tuple[int, int], np.ndarray]:
    """Eliminate a hidden-Markov nuisance chain in time order.

    Returns the state-state information contribution for every step pair
    n <= m after the whole chain is removed. The forward pass keeps, per step,
    the running nuisance block (its Schur complement given all earlier steps)
    and the filled-in state-nuisance cross blocks; each must stay PD, else
    `SingularBlockError` names the failing step.
    """
    t = chain.length
    running: list[np.ndarray] = []
    running_inv: list[np.ndarray] = []
    for n in range(t):
        b = np.asarray(chain.nuis_diag[n], dtype=float)
        b = 0.5 * (b + b.T)
        if n > 0:
            off = _chain_part(chain.nuis_offdiag, n - 1, chain.nuis_dim(n - 1), chain.nuis_dim(n))
            b = b - off.T @ running_inv[n - 1] @ off
        w = np.linalg.eigvalsh(b)
        if w.min() <= PINV_RCOND * max(1.0, w.max()):
            raise SingularBlockError(
                f"nuisance chain block not positive definite at step {n}"
            )
        running.append(b)
        running_inv.append(np.linalg.inv(b))

    # cross[(a, l)]: state(a)-nuisance(l) cross-information once nuisances
    # before step l are eliminated; fill-in propagates forward only.
    cross: dict[tuple[int, int], np.ndarray] = {}
    for a in range(t):
        cross[(a, a)] = _chain_part(chain.cross_same, a, chain.state_dim(a), chain.nuis_dim(a))
    for n in range(t - 1):
        step = running_inv[n] @ _chain_part(
            chain.nuis_offdiag, n, chain.nuis_dim(n), chain.nuis_dim(n + 1)
        )
        for a in range(n + 1):
            fill = -cross[(a, n)] @ step
            if a == n:
                fill = fill + _chain_part(
                    chain.cross_next, n, chain.state_dim(n), chain.nuis_dim(n + 1)
                )
            cross[(a, n + 1)] = fill

    weighted = {(a, l): cross[(a, l)] @ running_inv[l] for (a, l) in cross}
    out: dict[tuple[int, int], np.ndarray] = {}
    for n in range(t):
        for m_ in range(n, t):
            acc = np.zeros((chain.state_dim(n), chain.state_dim(m_)))
            for l in range(m_, t):
                acc -= weighted[(n, l)] @ cross[(m_, l)].T
            if m_ == n:
                acc = acc + np.asarray(chain.state_direct[n], dtype=float)
                acc = 0.5 * (acc + acc.T)
            out[(n, m_)] = acc
    return out


def block_diag(blocks: Sequence[np.ndarray]) -> np.ndarray:
    """Stack square blocks along the diagonal."""
    if not blocks:
        return np.zeros((0, 0))
    dims = [b.shape[0] for b in blocks]
    out = np.zeros((sum(dims), sum(dims)))
    pos = 0
    for b, d in zip(blocks, dims):
        out[pos : pos + d, pos : pos + d] = b
        pos += d
    return out
