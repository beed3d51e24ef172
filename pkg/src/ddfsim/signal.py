"""Constellations, algebraic spreading, rotation schedules and Alamouti pairing.

Candidate information frames are indexed by the integer whose big-endian
bit expansion (``T * log2(M)`` bits) is the frame's bit sequence. This
index order is the tie-break order used by every decoder in the package.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "Constellation",
    "SpreadingMatrix",
    "RotationSchedule",
    "AssignmentRule",
    "qpsk",
    "map_bits",
    "demap_symbols",
    "bits_to_index",
    "index_to_bits",
    "build_spreading_matrix",
    "rotation_schedule",
    "alamouti_relay_pair",
    "alamouti_combine",
]

# Largest candidate list the exhaustive decoders will materialise.
MAX_CANDIDATES = 1 << 18

# Vandermonde phase offsets maximising the minimum product distance over
# QPSK difference vectors (exhaustive search, T <= 7).
_TUNED_PHASES = {
    1: 0.0,
    2: 0.5900004531765404,
    3: 0.7256781536716836,
    4: 0.2570594979091277,
    5: 0.1808163785226392,
    6: 0.35158523407776193,
    7: 0.38966984857526676,
}


def _gray(n: int) -> int:
    return n ^ (n >> 1)


@dataclass(frozen=True)
class Constellation:
    """Square Gray-labelled M-QAM with unit average energy.

    ``points[label]`` is the symbol carrying the bit pattern ``label``
    (big-endian, in-phase bits first).
    """

    order: int = 4

    def __post_init__(self):
        m = self.order
        if m < 4 or m & (m - 1) or int(math.log2(m)) % 2:
            raise ValueError(f"constellation order must be a power of 4, got {m}")

    @property
    def bits_per_symbol(self) -> int:
        return int(math.log2(self.order))

    @cached_property
    def points(self) -> np.ndarray:
        half = self.bits_per_symbol // 2
        side = 1 << half
        # amplitude of the PAM level carrying each Gray label
        level_of = np.empty(side, dtype=int)
        for p in range(side):
            level_of[_gray(p)] = p
        amp = 2.0 * level_of - (side - 1)
        labels = np.arange(self.order)
        pts = amp[labels >> half] + 1j * amp[labels & (side - 1)]
        return pts / np.sqrt(np.mean(np.abs(pts) ** 2))

    @cached_property
    def min_distance_sq(self) -> float:
        d = np.abs(self.points[:, None] - self.points[None, :]) ** 2
        return float(d[d > 1e-12].min())

    def slice(self, z: np.ndarray) -> np.ndarray:
        """Nearest-point labels for an array of soft estimates."""
        z = np.asarray(z)
        d = np.abs(z[..., None] - self.points) ** 2
        return np.argmin(d, axis=-1)


def qpsk() -> Constellation:
    return Constellation(4)


def map_bits(bits, c: Constellation) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64).ravel()
    k = c.bits_per_symbol
    if bits.size % k:
        raise ValueError(f"bit count {bits.size} is not a multiple of {k}")
    weights = 1 << np.arange(k - 1, -1, -1)
    labels = bits.reshape(-1, k) @ weights
    return c.points[labels]


def demap_symbols(symbols, c: Constellation) -> np.ndarray:
    """Hard-decision demapping; inverse of :func:`map_bits` on exact points."""
    labels = c.slice(np.asarray(symbols).ravel())
    k = c.bits_per_symbol
    shifts = np.arange(k - 1, -1, -1)
    return ((labels[:, None] >> shifts) & 1).astype(np.int8).ravel()


def bits_to_index(bits) -> int:
    idx = 0
    for b in np.asarray(bits).ravel():
        idx = (idx << 1) | int(b)
    return idx


def index_to_bits(index: int, n_bits: int) -> np.ndarray:
    return np.array([(index >> (n_bits - 1 - i)) & 1 for i in range(n_bits)], dtype=np.int8)


@dataclass(frozen=True, eq=False)
class SpreadingMatrix:
    """Unitary ``T x T`` matrix ``U`` mapping information symbols to coded symbols.

    Rows are the Vandermonde vectors of the shifted unit-circle points
    ``exp(i(2 pi k / T + phase))``, scaled by ``1/sqrt(T)``. The phase
    offset breaks the algebraic degeneracy of the plain DFT so that every
    coordinate of ``U d`` is nonzero for any nonzero constellation
    difference vector ``d``.
    """

    matrix: np.ndarray
    phase: float = 0.0

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def spread(self, symbols: np.ndarray) -> np.ndarray:
        """``x = U s``; accepts a single frame or a stack of frames (last axis)."""
        return np.asarray(symbols) @ self.matrix.T

    def despread(self, coded: np.ndarray) -> np.ndarray:
        return np.asarray(coded) @ self.matrix.conj()

    def unitarity_residual(self) -> float:
        u = self.matrix
        return float(np.abs(u @ u.conj().T - np.eye(self.dimension)).max())


def build_spreading_matrix(T: int, phase: float | None = None) -> SpreadingMatrix:
    if T < 1:
        raise ValueError("frame length must be at least 1")
    if phase is None:
        # golden-ratio fraction of the symmetric range for untuned lengths
        phase = _TUNED_PHASES.get(T, (math.pi / T) * (math.sqrt(5) - 1) / 2)
    k = np.arange(T)[:, None]
    l = np.arange(T)[None, :]
    u = np.exp(1j * (2 * np.pi * k * l / T + phase * l)) / np.sqrt(T)
    if T == 1:
        u = np.ones((1, 1), dtype=complex)
    return SpreadingMatrix(u, float(phase))


class Codebook:
    """All ``M**T`` information frames and their spread codewords, in index order."""

    def __init__(self, c: Constellation, U: SpreadingMatrix):
        T = U.dimension
        n = c.order**T
        if n > MAX_CANDIDATES:
            raise ValueError(
                f"{n} candidate frames exceeds the exhaustive-search limit {MAX_CANDIDATES}"
            )
        self.constellation = c
        self.spreading = U
        idx = np.arange(n)
        digits = (idx[:, None] // c.order ** np.arange(T - 1, -1, -1)) % c.order
        self.labels = digits
        self.symbols = c.points[digits]
        self.codewords = U.spread(self.symbols)
        self._prefix_distance: dict[tuple, float] = {}

    @property
    def size(self) -> int:
        return self.codewords.shape[0]

    @property
    def frame_length(self) -> int:
        return self.codewords.shape[1]

    def index_of(self, symbols: np.ndarray) -> np.ndarray:
        """Frame indices for a stack of exact constellation symbol frames."""
        labels = self.constellation.slice(symbols)
        M = self.constellation.order
        T = self.frame_length
        return labels @ (M ** np.arange(T - 1, -1, -1))

    def min_partial_distance(self, slots) -> float:
        """``min_d sum_{t in slots} |(U d)_t|^2`` over nonzero difference vectors."""
        key = tuple(sorted(int(t) for t in slots))
        if key not in self._prefix_distance:
            self._prefix_distance[key] = self._partial_distance(key)
        return self._prefix_distance[key]

    def _partial_distance(self, slots: tuple) -> float:
        if not slots:
            return 0.0
        pts = self.constellation.points
        diffs = np.unique(np.round(pts[:, None] - pts[None, :], 12))
        T = self.frame_length
        n_diff = len(diffs)
        if n_diff**T > 4_000_000:
            # exact enumeration too large; a zero bound disables certificates
            return 0.0
        rows = self.spreading.matrix[list(slots)]
        # enumerate difference vectors slot by slot to bound memory
        acc = np.zeros((1, len(slots)), dtype=complex)
        for l in range(T):
            acc = (acc[:, None, :] + diffs[None, :, None] * rows[None, None, :, l]).reshape(
                -1, len(slots)
            )
        energy = np.sum(np.abs(acc) ** 2, axis=1)
        z = int(np.flatnonzero(np.abs(diffs) < 1e-9)[0])
        energy[z * sum(n_diff**p for p in range(T))] = np.inf  # all-zero difference
        return float(energy.min())

    def prefix_basis(self, slots) -> np.ndarray:
        """Real basis ``[Re C, Im C, |C|^2]`` restricted to ``slots`` for matmul metrics."""
        c = self.codewords[:, list(slots)]
        return np.concatenate([c.real, c.imag, np.abs(c) ** 2], axis=1)


class AssignmentRule(enum.Enum):
    PRODUCT = "product"
    RANDOM = "random"


@dataclass(frozen=True, eq=False)
class RotationSchedule:
    """Per-relay, per-slot rotation indices into ``{2 pi l / L}``.

    ``indices[j, t]`` is the rotation index of relay ``j`` (0-based) at
    slot ``t`` (0-based). The source is never rotated.
    """

    set_size: int
    indices: np.ndarray = field(repr=False)

    @property
    def angles(self) -> np.ndarray:
        return 2 * np.pi * self.indices / self.set_size

    @property
    def phasors(self) -> np.ndarray:
        return np.exp(1j * self.angles)

    @property
    def angle_set(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.set_size) / self.set_size

    def __eq__(self, other):
        return (
            isinstance(other, RotationSchedule)
            and self.set_size == other.set_size
            and np.array_equal(self.indices, other.indices)
        )

    def __hash__(self):
        return hash((self.set_size, self.indices.tobytes()))


def rotation_schedule(
    n_relays: int,
    L: int = 4,
    T: int = 6,
    assignment_rule: AssignmentRule | str = AssignmentRule.PRODUCT,
    seed: int = 0,
) -> RotationSchedule:
    """Fixed rotation order shared by every node.

    ``PRODUCT``: relay number ``j = 1..N`` uses index ``(j * t) mod L``.
    ``RANDOM``: indices drawn once from a seeded stream, rejected unless
    all relay sequences are pairwise distinct.
    """
    if L < 2 or L % 2:
        raise ValueError(f"rotation set size must be an even number >= 2, got {L}")
    rule = AssignmentRule(assignment_rule)
    t = np.arange(T)
    if rule is AssignmentRule.PRODUCT:
        if n_relays >= L:
            raise ValueError(
                f"{n_relays} relays need L > {n_relays} for distinct product sequences (L={L})"
            )
        j = np.arange(1, n_relays + 1)[:, None]
        idx = (j * t[None, :]) % L
    else:
        if n_relays > 1 and L**T < n_relays:
            raise ValueError(f"only {L**T} distinct sequences exist for L={L}, T={T}")
        rng = np.random.default_rng(seed)
        while True:
            idx = rng.integers(0, L, size=(n_relays, T))
            if len({row.tobytes() for row in idx}) == n_relays:
                break
    return RotationSchedule(L, idx.astype(np.int64))


def alamouti_relay_pair(x1: complex, x2: complex) -> tuple[complex, complex]:
    """Relay summands of the distributed Alamouti block for source pair ``(x1, x2)``."""
    return -np.conj(x2), np.conj(x1)


def alamouti_combine(y1, y2, h1, h2):
    """Orthogonal combining of one Alamouti pair.

    Returns ``(z1, z2)`` with ``z_k = (|h1|^2 + |h2|^2) x_k + noise`` when the
    relay sends :func:`alamouti_relay_pair` of the source pair.
    """
    z1 = np.conj(h1) * y1 + h2 * np.conj(y2)
    z2 = np.conj(h1) * y2 - h2 * np.conj(y1)
    return z1, z2
