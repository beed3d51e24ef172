"""Slow Rayleigh fading links, uniform power sharing and equivalent gains.

Node identifiers: relays are ``0..N-1``; the destination is
:data:`DESTINATION`. The source never receives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal import RotationSchedule

__all__ = [
    "DESTINATION",
    "NetworkChannels",
    "PowerModel",
    "ActivityState",
    "complex_normal",
    "sample_network_channels",
    "equivalent_gain",
    "equivalent_gains",
    "awgn_sample",
]

DESTINATION = "D"


def complex_normal(rng: np.random.Generator, shape=(), variance: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples."""
    shape = (shape,) if isinstance(shape, (int, np.integer)) else tuple(shape)
    z = rng.standard_normal(shape + (2,))
    return np.sqrt(variance / 2) * (z[..., 0] + 1j * z[..., 1])


@dataclass(frozen=True, eq=False)
class NetworkChannels:
    """One fading realisation of every link, optionally stacked over a leading batch axis.

    ``g_rr[..., i, j]`` is the gain from relay ``j`` to relay ``i``; the
    diagonal is zero and never used.
    """

    g_sd: np.ndarray
    g_sr: np.ndarray
    g_rd: np.ndarray
    g_rr: np.ndarray

    @property
    def n_relays(self) -> int:
        return self.g_sr.shape[-1]

    @property
    def batch_shape(self) -> tuple:
        return np.shape(self.g_sd)

    def __getitem__(self, item) -> "NetworkChannels":
        return NetworkChannels(self.g_sd[item], self.g_sr[item], self.g_rd[item], self.g_rr[item])

    def link_gains(self, receiver) -> tuple[np.ndarray, np.ndarray]:
        """``(source gain, per-relay gains)`` into ``receiver``."""
        if receiver == DESTINATION:
            return self.g_sd, self.g_rd
        i = int(receiver)
        return self.g_sr[..., i], self.g_rr[..., i, :]

    def scaled(self, *, sd=1.0, sr=1.0, rd=1.0, rr=1.0) -> "NetworkChannels":
        return NetworkChannels(self.g_sd * sd, self.g_sr * sr, self.g_rd * rd, self.g_rr * rr)


def sample_network_channels(n_relays: int, rng: np.random.Generator, size: int | None = None) -> NetworkChannels:
    """Draw i.i.d. unit-variance Rayleigh gains for every link.

    The draw order (``g_sd``, ``g_sr``, ``g_rd``, ``g_rr``) is fixed so that
    configurations sharing a stream see common random numbers.
    """
    if n_relays < 0:
        raise ValueError("n_relays must be non-negative")
    lead = () if size is None else (size,)
    g_sd = complex_normal(rng, lead)
    g_sr = complex_normal(rng, lead + (n_relays,))
    g_rd = complex_normal(rng, lead + (n_relays,))
    g_rr = complex_normal(rng, lead + (n_relays, n_relays))
    eye = np.eye(n_relays, dtype=bool)
    g_rr = np.where(eye, 0.0, g_rr)
    return NetworkChannels(np.asarray(g_sd), g_sr, g_rd, g_rr)


@dataclass(frozen=True)
class PowerModel:
    snr_db: float
    noise_variance: float = 1.0

    @property
    def total_power(self) -> float:
        return self.noise_variance * 10.0 ** (self.snr_db / 10.0)

    @classmethod
    def from_power(cls, total_power: float) -> "PowerModel":
        snr_db = -np.inf if total_power == 0 else 10 * np.log10(total_power)
        return cls(float(snr_db))

    def per_node_power(self, n_transmitters):
        return self.total_power / np.asarray(n_transmitters)

    def amplitude(self, n_transmitters):
        return np.sqrt(self.per_node_power(n_transmitters))


@dataclass(frozen=True, eq=False)
class ActivityState:
    """Relay transmit pattern over a frame: ``active_mask[t, j]``.

    The source is implicitly active in every slot.
    """

    active_mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.active_mask, dtype=bool)
        if m.ndim != 2:
            raise ValueError("active_mask must be (slots, relays)")
        if np.any(m[:-1] & ~m[1:]):
            raise ValueError("relay activity must be monotone over the frame")
        object.__setattr__(self, "active_mask", m)

    @classmethod
    def from_start_slots(cls, start_slots, T: int) -> "ActivityState":
        """Relay ``j`` transmits in slots ``t >= start_slots[j]``."""
        start = np.asarray(start_slots)
        return cls(np.arange(T)[:, None] >= start[None, :])

    @property
    def num_transmitters(self) -> np.ndarray:
        return 1 + self.active_mask.sum(axis=1)

    def source_mask(self) -> np.ndarray:
        return np.ones(self.active_mask.shape[0], dtype=bool)


def equivalent_gain(receiver, t: int, activity: ActivityState, rotations: RotationSchedule,
                    ch: NetworkChannels, pw: PowerModel) -> complex:
    """Single complex gain seen by ``receiver`` in slot ``t``."""
    active = activity.active_mask[t]
    if receiver != DESTINATION and active[int(receiver)]:
        raise ValueError(f"relay {receiver} is transmitting in slot {t} and cannot listen")
    g_s, g_r = ch.link_gains(receiver)
    k = 1 + int(active.sum())
    rot = rotations.phasors[:, t] if rotations.indices.size else np.zeros(0)
    total = complex(g_s) + complex(np.sum(np.where(active, g_r * rot, 0.0)))
    return np.sqrt(pw.total_power / k) * total


def equivalent_gains(g_s: np.ndarray, g_r: np.ndarray, active: np.ndarray,
                     phasors: np.ndarray, total_power: float) -> np.ndarray:
    """Vectorised equivalent gains.

    Parameters
    ----------
    g_s : (F,) source gains into the receiver.
    g_r : (F, N) relay gains into the receiver.
    active : (F, S, N) relay activity in each of ``S`` slots.
    phasors : (N, S) rotation phasors for the same slots.

    Returns
    -------
    (F, S) complex gains including the ``sqrt(P/K)`` amplitude.
    """
    k = 1 + active.sum(axis=-1)
    relay = np.einsum("fsn,fn,ns->fs", active, g_r, phasors) if g_r.shape[-1] else 0.0
    return np.sqrt(total_power / k) * (g_s[:, None] + relay)


def awgn_sample(rng: np.random.Generator, pw: PowerModel, size=None):
    if size is None:
        return complex(complex_normal(rng, (), pw.noise_variance))
    return complex_normal(rng, size, pw.noise_variance)
