"""Block-based dynamic decode-and-forward protocol.

Two simulation modes share the configuration and activity bookkeeping:

* outage mode (:func:`outage_batch`) tracks accumulated mutual
  information only;
* signal-level mode (:func:`simulate_frames`) transmits coded symbols,
  runs the relay decision criteria on noisy observations and decodes at
  the destination.

Batch arrays store activation blocks as integers ``1..B`` with
:data:`NEVER` (``0``) for relays that never decoded. A relay activated
at the end of block ``b`` forwards from slot ``b * T_b`` onwards.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .channel import (
    DESTINATION,
    ActivityState,
    NetworkChannels,
    PowerModel,
    complex_normal,
    equivalent_gain,
    equivalent_gains,
)
from .detect import (
    HypothesisBudgetError,
    activation_hypotheses,
    alamouti_window,
    forney_passes_batch,
    get_codebook,
    glrt_decode_batch,
    ml_decode_batch,
    ml_matches_batch,
)
from .signal import (
    AssignmentRule,
    Codebook,
    Constellation,
    RotationSchedule,
    SpreadingMatrix,
    bits_to_index,
    build_spreading_matrix,
    index_to_bits,
    rotation_schedule,
)

__all__ = [
    "NEVER",
    "ConfigError",
    "Scheme",
    "ActivityModel",
    "CriterionKind",
    "DecisionCriterion",
    "FrameConfig",
    "ActivationProfile",
    "FrameOutcome",
    "FrameBatch",
    "effective_rate",
    "accumulated_mutual_information",
    "activation_profile_outage",
    "criterion_met",
    "outage_batch",
    "simulate_frames",
    "run_frame_signal_level",
    "default_forney_threshold",
    "ConstantThreshold",
]

NEVER = 0


class ConfigError(ValueError):
    """A configuration violates a protocol invariant."""


class Scheme(enum.Enum):
    DISTRIBUTED_ROTATION = "rotation"
    ALAMOUTI_SINGLE_RELAY = "alamouti"


class ActivityModel(enum.Enum):
    GENIE = "genie"
    SIGNALLING = "signalling"
    GLRT = "glrt"


class CriterionKind(enum.Enum):
    OUTAGE = "outage"
    OUTAGE_HALF_FRAME = "outage-half-frame"
    OUTAGE_DELAYED_ONE = "outage-delayed-one"
    SNR_THRESHOLD = "snr-threshold"
    FORNEY = "forney"
    GENIE = "genie"


OUTAGE_FAMILY = (CriterionKind.OUTAGE, CriterionKind.OUTAGE_HALF_FRAME, CriterionKind.OUTAGE_DELAYED_ONE)


def default_forney_threshold(snr_db: float) -> float:
    """Reliability ratio a relay must reach before forwarding.

    Grows with the square of the linear SNR so that the posterior
    probability of forwarding a wrong frame, at most ``1/(1+threshold)``,
    falls off at least as fast as the full-diversity error floor of a
    single-relay link. Never below ``999`` (posterior error ``1e-3``).
    """
    rho = 10.0 ** (snr_db / 10.0)
    return max(999.0, rho**2)


@dataclass(frozen=True)
class ConstantThreshold:
    """SNR-independent Forney threshold (picklable, unlike a lambda)."""

    value: float

    def __call__(self, snr_db: float) -> float:
        return self.value


@dataclass(frozen=True)
class DecisionCriterion:
    """Relay forwarding rule.

    ``snr_thresholds_db[t - 1]`` is the effective-SNR threshold after ``t``
    observed slots; when left ``None`` it is derived from AWGN reference
    curves for ``target_pe`` on first use.
    """

    kind: CriterionKind = CriterionKind.GENIE
    target_pe: float = 1e-2
    forney_threshold: Optional[Callable[[float], float]] = None
    snr_thresholds_db: Optional[tuple] = None

    def __post_init__(self):
        kind = CriterionKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if not 0.0 < self.target_pe < 1.0:
            raise ConfigError(f"target_pe must lie in (0, 1), got {self.target_pe}")
        if isinstance(self.forney_threshold, ConstantThreshold) and not self.forney_threshold.value > 0:
            raise ConfigError(f"Forney threshold must be positive, got {self.forney_threshold.value}")

    def forney_log_threshold(self, snr_db: float) -> float:
        fn = self.forney_threshold or default_forney_threshold
        thr = fn(snr_db)
        if not thr > 0:
            raise ConfigError(f"Forney threshold must be positive, got {thr}")
        return math.log(thr)

    def label(self) -> str:
        return self.kind.value


@dataclass(frozen=True)
class FrameConfig:
    n_relays: int = 1
    frame_length: int = 6
    block_length: int = 1
    order: int = 4
    rate: Optional[float] = None
    snr_db: float = 20.0
    scheme: Scheme = Scheme.DISTRIBUTED_ROTATION
    criterion: DecisionCriterion = DecisionCriterion()
    activity_model: ActivityModel = ActivityModel.GENIE
    rotation_set_size: int = 4
    assignment_rule: AssignmentRule = AssignmentRule.PRODUCT
    spreading_phase: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "activity_model", ActivityModel(self.activity_model))
        object.__setattr__(self, "assignment_rule", AssignmentRule(self.assignment_rule))
        if isinstance(self.criterion, (str, CriterionKind)):
            object.__setattr__(self, "criterion", DecisionCriterion(CriterionKind(self.criterion)))
        N, T, Tb = self.n_relays, self.frame_length, self.block_length
        if N < 0:
            raise ConfigError(f"n_relays must be >= 0, got {N}")
        if T < 1 or Tb < 1:
            raise ConfigError("frame_length and block_length must be >= 1")
        if T % Tb:
            raise ConfigError(f"frame_length T={T} must equal B*T_b for block_length T_b={Tb}")
        if self.scheme is Scheme.ALAMOUTI_SINGLE_RELAY:
            if N != 1:
                raise ConfigError(f"AlamoutiSingleRelay requires n_relays == 1, got {N}")
            if Tb != 2:
                raise ConfigError(f"AlamoutiSingleRelay requires block_length T_b == 2, got {Tb}")
        else:
            try:
                rotation_schedule(N, self.rotation_set_size, T, self.assignment_rule)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        try:
            Constellation(self.order)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.rate is not None and self.rate < 0:
            raise ConfigError("rate must be non-negative")

    @property
    def num_blocks(self) -> int:
        return self.frame_length // self.block_length

    @property
    def constellation(self) -> Constellation:
        return Constellation(self.order)

    @property
    def rate_bits(self) -> float:
        return math.log2(self.order) if self.rate is None else float(self.rate)

    @property
    def rate_eff(self) -> float:
        return effective_rate(self.block_length, self.order, self.n_relays, self.activity_model, self.rate)

    @property
    def power(self) -> PowerModel:
        return PowerModel(self.snr_db)

    @cached_property
    def spreading(self) -> SpreadingMatrix:
        return build_spreading_matrix(self.frame_length, self.spreading_phase)

    @cached_property
    def rotations(self) -> RotationSchedule:
        if self.scheme is Scheme.ALAMOUTI_SINGLE_RELAY:
            return RotationSchedule(self.rotation_set_size, np.zeros((1, self.frame_length), dtype=np.int64))
        return rotation_schedule(self.n_relays, self.rotation_set_size, self.frame_length, self.assignment_rule)

    @property
    def codebook(self) -> Codebook:
        return get_codebook(self.constellation, self.spreading)

    def with_(self, **changes) -> "FrameConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        c = self.criterion
        return {
            "n_relays": self.n_relays,
            "frame_length": self.frame_length,
            "block_length": self.block_length,
            "order": self.order,
            "rate": self.rate,
            "snr_db": self.snr_db,
            "scheme": self.scheme.value,
            "criterion": c.kind.value,
            "target_pe": c.target_pe,
            "forney_threshold": c.forney_threshold.value if isinstance(c.forney_threshold, ConstantThreshold) else None,
            "activity_model": self.activity_model.value,
            "rotation_set_size": self.rotation_set_size,
            "assignment_rule": self.assignment_rule.value,
            "spreading_phase": self.spreading.phase,
        }


def effective_rate(T_b: int, M: int, N: int, activity_model=ActivityModel.SIGNALLING,
                   rate: float | None = None) -> float:
    """Useful bits per channel use after relay-signalling overhead.

    ``ceil(log2 N)`` signalling bits are spent per block of ``T_b`` symbols;
    only :attr:`ActivityModel.SIGNALLING` pays for them.
    """
    bits = math.log2(M)
    base = bits if rate is None else float(rate)
    if ActivityModel(activity_model) is not ActivityModel.SIGNALLING:
        return base
    overhead = math.ceil(math.log2(N)) if N > 1 else 0
    return base * (T_b * bits) / (T_b * bits + overhead)


@dataclass(frozen=True)
class ActivationProfile:
    """Per relay: the block at whose end it decoded, or ``None``."""

    blocks: tuple

    @classmethod
    def from_array(cls, row) -> "ActivationProfile":
        return cls(tuple(None if int(b) == NEVER else int(b) for b in row))

    def to_array(self) -> np.ndarray:
        return np.array([NEVER if b is None else b for b in self.blocks], dtype=np.int64)

    def start_slots(self, T_b: int, T: int) -> np.ndarray:
        return start_slots(self.to_array(), T_b, T)

    def activity(self, T_b: int, T: int) -> ActivityState:
        return ActivityState.from_start_slots(self.start_slots(T_b, T), T)

    def forwarding(self, B: int) -> "ActivationProfile":
        """Profile with activations that leave no slot to forward mapped to ``None``."""
        return ActivationProfile(tuple(b if b is not None and b < B else None for b in self.blocks))


def start_slots(act: np.ndarray, T_b: int, T: int) -> np.ndarray:
    act = np.asarray(act)
    return np.where(act == NEVER, T, np.minimum(act * T_b, T))


@dataclass(frozen=True)
class FrameOutcome:
    dest_bits: np.ndarray
    frame_error: bool
    relay_decode_correct: tuple
    true_activation: ActivationProfile
    detected_activation: ActivationProfile


@dataclass
class FrameBatch:
    """Per-frame results of :func:`simulate_frames` (leading axis = frame)."""

    info_idx: np.ndarray
    dest_idx: np.ndarray
    act_true: np.ndarray
    act_detected: np.ndarray
    relay_idx: np.ndarray

    @property
    def frame_error(self) -> np.ndarray:
        return self.dest_idx != self.info_idx

    @property
    def relay_forwarded(self) -> np.ndarray:
        return self.act_true != NEVER

    @property
    def relay_decode_correct(self) -> np.ndarray:
        return self.relay_forwarded & (self.relay_idx == self.info_idx[:, None])

    @property
    def activity_error(self) -> np.ndarray:
        return np.any(self.act_true != self.act_detected, axis=1)


# outage-mode ---------------------------------------------------------------

def _outage_family_met(kind: CriterionKind, b: int, cfg: FrameConfig, mi, mi_prev, need):
    if kind is CriterionKind.OUTAGE:
        return mi >= need
    if kind is CriterionKind.OUTAGE_HALF_FRAME:
        if 2 * b * cfg.block_length < cfg.frame_length:
            return np.zeros(np.shape(mi), dtype=bool)
        return mi >= need
    if kind is CriterionKind.OUTAGE_DELAYED_ONE:
        if b < 2:
            return np.zeros(np.shape(mi), dtype=bool)
        return mi_prev >= need
    raise ValueError(f"{kind} is not an outage-based criterion")


def criterion_met(kind: CriterionKind, state: dict, b: int, cfg: FrameConfig) -> bool:
    """Forwarding decision at the end of block ``b`` for one listening relay.

    ``state`` carries whatever the rule consumes: ``mi`` and ``mi_prev``
    (accumulated mutual information through blocks ``b`` and ``b-1``),
    ``snr`` (average effective SNR over the listened slots, linear),
    ``log_reliability`` and ``decoded_correctly``.
    """
    kind = CriterionKind(kind)
    need = cfg.frame_length * cfg.rate_eff
    if kind in OUTAGE_FAMILY:
        return bool(_outage_family_met(kind, b, cfg, state["mi"], state.get("mi_prev", 0.0), need))
    if kind is CriterionKind.SNR_THRESHOLD:
        thr_db = _snr_thresholds(cfg)[b * cfg.block_length - 1]
        return bool(state["snr"] >= 10.0 ** (thr_db / 10.0))
    if kind is CriterionKind.FORNEY:
        return bool(state["log_reliability"] >= cfg.criterion.forney_log_threshold(cfg.snr_db))
    return bool(state["decoded_correctly"])


def _snr_thresholds(cfg: FrameConfig) -> tuple:
    crit = cfg.criterion
    if crit.snr_thresholds_db is not None:
        return crit.snr_thresholds_db
    from .metrics import snr_threshold_table

    return snr_threshold_table(cfg.constellation, cfg.spreading, crit.target_pe)


def outage_batch(cfg: FrameConfig, ch: NetworkChannels, rate_eff: float | None = None,
                 kind: CriterionKind = CriterionKind.OUTAGE):
    """Outage-mode activation and destination mutual information.

    Returns ``(act, mi_dest)``: ``(F, N)`` activation blocks (``1..B`` or
    :data:`NEVER`) and ``(F,)`` bits accumulated at the destination.
    """
    rate_eff = cfg.rate_eff if rate_eff is None else rate_eff
    kind = CriterionKind(kind)
    need = cfg.frame_length * rate_eff
    F = ch.g_sd.shape[0]
    N, T, Tb, B = cfg.n_relays, cfg.frame_length, cfg.block_length, cfg.num_blocks
    P = cfg.power.total_power
    ph = cfg.rotations.phasors
    act = np.zeros((F, N), dtype=np.int64)
    mi = np.zeros((F, N))
    for b in range(1, B + 1):
        sl = np.arange((b - 1) * Tb, b * Tb)
        active = sl[None, :, None] >= start_slots(act, Tb, T)[:, None, :]
        mi_prev = mi.copy()
        for i in range(N):
            h = equivalent_gains(ch.g_sr[:, i], ch.g_rr[:, i, :], active, ph[:, sl], P)
            mi[:, i] += np.sum(np.log2(1.0 + np.abs(h) ** 2), axis=1)
        met = _outage_family_met(kind, b, cfg, mi, mi_prev, need)
        act = np.where((act == NEVER) & met, b, act)
    active = np.arange(T)[None, :, None] >= start_slots(act, Tb, T)[:, None, :]
    h_d = equivalent_gains(ch.g_sd, ch.g_rd, active, ph, P)
    mi_dest = np.sum(np.log2(1.0 + np.abs(h_d) ** 2), axis=1)
    return act, mi_dest


def _as_batch(ch: NetworkChannels) -> NetworkChannels:
    if np.ndim(ch.g_sd) == 0:
        return NetworkChannels(
            np.atleast_1d(ch.g_sd), ch.g_sr[None], ch.g_rd[None], ch.g_rr[None]
        )
    return ch


def activation_profile_outage(ch: NetworkChannels, rot: RotationSchedule | None, cfg: FrameConfig,
                              rate_eff: float | None = None,
                              kind: CriterionKind = CriterionKind.OUTAGE) -> ActivationProfile:
    if rot is not None and cfg.scheme is Scheme.DISTRIBUTED_ROTATION and rot != cfg.rotations:
        cfg = _with_rotations(cfg, rot)
    act, _ = outage_batch(cfg, _as_batch(ch), rate_eff, kind)
    return ActivationProfile.from_array(act[0])


def _with_rotations(cfg: FrameConfig, rot: RotationSchedule) -> FrameConfig:
    new = cfg.with_()
    new.__dict__["rotations"] = rot
    return new


def accumulated_mutual_information(receiver, through_block: int, ch: NetworkChannels,
                                   profile: ActivationProfile, rot: RotationSchedule | None,
                                   cfg: FrameConfig) -> float:
    """Bits collected by ``receiver`` over blocks ``1..through_block``."""
    rot = cfg.rotations if rot is None else rot
    T, Tb = cfg.frame_length, cfg.block_length
    activity = profile.activity(Tb, T)
    pw = cfg.power
    total = 0.0
    for t in range(through_block * Tb):
        h = equivalent_gain(receiver, t, activity, rot, ch, pw)
        total += math.log2(1.0 + abs(h) ** 2 / pw.noise_variance)
    return total


# signal-level mode ---------------------------------------------------------

def _relay_signals(cfg: FrameConfig, xhat: np.ndarray, sl: np.ndarray) -> np.ndarray:
    """(F, S, N) rotated (or Alamouti-paired) symbols relays would send in ``sl``."""
    if cfg.scheme is Scheme.ALAMOUTI_SINGLE_RELAY:
        pair = np.where(sl % 2 == 0, sl + 1, sl - 1)
        sign = np.where(sl % 2 == 0, -1.0, 1.0)
        return (sign[None, None, :] * np.conj(xhat[:, :, pair])).transpose(0, 2, 1)
    ph = cfg.rotations.phasors[:, sl]
    return (xhat[:, :, sl] * ph[None]).transpose(0, 2, 1)


def _relay_listen_gains(cfg, ch, i, active, sl, P):
    if cfg.scheme is Scheme.ALAMOUTI_SINGLE_RELAY:
        k = 1 + active.sum(axis=-1)
        return np.sqrt(P / k) * ch.g_sr[:, i][:, None]
    return equivalent_gains(ch.g_sr[:, i], ch.g_rr[:, i, :], active, cfg.rotations.phasors[:, sl], P)


def _relay_decisions(cfg, cb, y, h, truth, mi, mi_prev, b):
    """Forwarding decision and decoded frame for a set of listening relays."""
    kind = cfg.criterion.kind
    n_obs = y.shape[1]
    slots = range(n_obs)
    need = cfg.frame_length * cfg.rate_eff
    n = y.shape[0]
    dec = np.zeros(n, dtype=np.int64)
    if kind in OUTAGE_FAMILY or kind is CriterionKind.SNR_THRESHOLD:
        if kind is CriterionKind.SNR_THRESHOLD:
            thr_db = _snr_thresholds(cfg)[n_obs - 1]
            passes = np.mean(np.abs(h) ** 2, axis=1) >= 10.0 ** (thr_db / 10.0)
        else:
            passes = _outage_family_met(kind, b, cfg, mi, mi_prev, need)
        if passes.any():
            dec[passes], _ = ml_decode_batch(y[passes], h[passes], slots, cb, hints=[truth[passes]])
        return passes, dec
    if kind is CriterionKind.FORNEY:
        log_thr = cfg.criterion.forney_log_threshold(cfg.snr_db)
        dec, passes = forney_passes_batch(y, h, slots, cb, log_thr, hints=[truth])
        return passes, dec
    ok = ml_matches_batch(y, h, slots, cb, truth)
    return ok, np.where(ok, truth, 0)


def simulate_frames(cfg: FrameConfig, ch: NetworkChannels, info_idx: np.ndarray,
                    noise_relay: np.ndarray, noise_dest: np.ndarray,
                    max_hypotheses: int = 4096) -> FrameBatch:
    """Signal-level simulation of a batch of frames.

    Parameters
    ----------
    ch : batched channels, leading axis ``F``.
    info_idx : (F,) transmitted frame indices.
    noise_relay : (F, N, T) unit-variance noise at each relay.
    noise_dest : (F, T) unit-variance noise at the destination.
    """
    cb = cfg.codebook
    F = info_idx.shape[0]
    N, T, Tb, B = cfg.n_relays, cfg.frame_length, cfg.block_length, cfg.num_blocks
    P = cfg.power.total_power
    x = cb.codewords[info_idx]
    xhat = np.zeros((F, N, T), dtype=complex)
    relay_idx = np.full((F, N), -1, dtype=np.int64)
    act = np.zeros((F, N), dtype=np.int64)
    y_r = np.zeros((F, N, T), dtype=complex)
    h_r = np.zeros((F, N, T), dtype=complex)
    mi = np.zeros((F, N))
    for b in range(1, B + 1):
        if N == 0:
            break
        sl = np.arange((b - 1) * Tb, b * Tb)
        active = sl[None, :, None] >= start_slots(act, Tb, T)[:, None, :]
        amp = np.sqrt(P / (1 + active.sum(axis=-1)))
        tx = np.where(active, _relay_signals(cfg, xhat, sl), 0.0)
        mi_prev = mi.copy()
        for i in range(N):
            g_rr = ch.g_rr[:, i, :] if cfg.scheme is Scheme.DISTRIBUTED_ROTATION else np.zeros((F, N))
            sig = amp * (ch.g_sr[:, i][:, None] * x[:, sl] + np.einsum("fsn,fn->fs", tx, g_rr))
            y_r[:, i, sl] = sig + noise_relay[:, i, sl]
            h_r[:, i, sl] = _relay_listen_gains(cfg, ch, i, active, sl, P)
            mi[:, i] += np.sum(np.log2(1.0 + np.abs(h_r[:, i, sl]) ** 2), axis=1)
        if b == B:
            break  # nothing left to forward
        n_obs = b * Tb
        newly = []
        for i in range(N):
            rows = np.flatnonzero(act[:, i] == NEVER)
            if rows.size == 0:
                continue
            passes, dec = _relay_decisions(
                cfg, cb, y_r[rows, i, :n_obs], h_r[rows, i, :n_obs], info_idx[rows],
                mi[rows, i], mi_prev[rows, i], b,
            )
            newly.append((i, rows[passes], dec[passes]))
        for i, r, d in newly:
            act[r, i] = b
            relay_idx[r, i] = d
            xhat[r, i] = cb.codewords[d]

    # destination
    t_all = np.arange(T)
    start = start_slots(act, Tb, T)
    active = t_all[None, :, None] >= start[:, None, :]
    amp = np.sqrt(P / (1 + active.sum(axis=-1)))
    tx = np.where(active, _relay_signals(cfg, xhat, t_all), 0.0) if N else np.zeros((F, T, 0))
    y_d = amp * (ch.g_sd[:, None] * x + np.einsum("fsn,fn->fs", tx, ch.g_rd)) + noise_dest
    if cfg.activity_model is ActivityModel.GLRT:
        dest_idx, act_det = _glrt_destination(cfg, ch, y_d, cb, info_idx, max_hypotheses)
    else:
        y_eq, h_eq = _destination_window(cfg, ch, y_d, start)
        dest_idx, _ = ml_decode_batch(y_eq, h_eq, t_all, cb, hints=[info_idx])
        act_det = act.copy()
    return FrameBatch(info_idx, dest_idx, act, act_det, relay_idx)


def _destination_window(cfg, ch, y_d, start):
    T = cfg.frame_length
    P = cfg.power.total_power
    if cfg.scheme is Scheme.ALAMOUTI_SINGLE_RELAY:
        return alamouti_window(y_d, ch.g_sd, ch.g_rd[:, 0], start[:, 0], np.sqrt(P), np.sqrt(P / 2))
    active = np.arange(T)[None, :, None] >= start[:, None, :]
    return y_d, equivalent_gains(ch.g_sd, ch.g_rd, active, cfg.rotations.phasors, P)


def _glrt_destination(cfg, ch, y_d, cb, info_idx, max_hypotheses):
    N, T, Tb, B = cfg.n_relays, cfg.frame_length, cfg.block_length, cfg.num_blocks
    n_hyp = B**N
    if n_hyp > max_hypotheses:
        raise HypothesisBudgetError(f"{n_hyp} activity hypotheses exceed the budget {max_hypotheses}")
    hyps = activation_hypotheses(N, B)
    F = y_d.shape[0]
    windows = []
    for hyp in hyps:
        arr = np.array([NEVER if v is None else v for v in hyp], dtype=np.int64)
        start = np.broadcast_to(start_slots(arr, Tb, T), (F, N))
        windows.append(_destination_window(cfg, ch, y_d, start))
    dest_idx, pos, _ = glrt_decode_batch(y_d, windows, cb, hints=[info_idx])
    table = np.array([[NEVER if v is None else v for v in h] for h in hyps], dtype=np.int64).reshape(len(hyps), N)
    return dest_idx, table[pos]


def run_frame_signal_level(ch: NetworkChannels, rot: RotationSchedule | None, cfg: FrameConfig,
                           rng: np.random.Generator | None, info_bits) -> FrameOutcome:
    """Simulate one frame; ``rng=None`` runs it noiselessly.

    Noise is drawn as relay noise ``(N, T)`` followed by destination noise
    ``(T,)``.
    """
    if rot is not None and cfg.scheme is Scheme.DISTRIBUTED_ROTATION and rot != cfg.rotations:
        cfg = _with_rotations(cfg, rot)
    N, T = cfg.n_relays, cfg.frame_length
    info_bits = np.asarray(info_bits).ravel()
    n_bits = T * cfg.constellation.bits_per_symbol
    if info_bits.size != n_bits:
        raise ValueError(f"expected {n_bits} information bits, got {info_bits.size}")
    if rng is None:
        nr = np.zeros((1, N, T), dtype=complex)
        nd = np.zeros((1, T), dtype=complex)
    else:
        nr = complex_normal(rng, (1, N, T))
        nd = complex_normal(rng, (1, T))
    info = np.array([bits_to_index(info_bits)], dtype=np.int64)
    out = simulate_frames(cfg, _as_batch(ch), info, nr, nd)
    B = cfg.num_blocks
    return FrameOutcome(
        dest_bits=index_to_bits(int(out.dest_idx[0]), n_bits),
        frame_error=bool(out.frame_error[0]),
        relay_decode_correct=tuple(bool(v) for v in out.relay_decode_correct[0]),
        true_activation=ActivationProfile.from_array(out.act_true[0]).forwarding(B),
        detected_activation=ActivationProfile.from_array(out.act_detected[0]).forwarding(B),
    )
