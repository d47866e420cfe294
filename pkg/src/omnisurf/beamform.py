"""Digital precoding and discrete surface-configuration optimization.

The hybrid optimizer alternates between a closed-form digital precoder on
the effective channel and a coordinate-ascent pass that moves every element
to its best table state while the others stay fixed.  The per-element pass
runs in the `_kernels` backend; per-sweep bookkeeping (precoder refresh,
accept tests, traces) stays in numpy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .channel import ChannelSet, Scenario, cascaded_channel
from .element import REFLECT, REFRACT, PhaseConfig
from .errors import InfeasibleError

EXHAUSTIVE_LIMIT = 2**20


class RankDeficiencyError(ValueError):
    """Effective channel cannot support one stream per user."""


@dataclass(frozen=True, eq=False)
class Beamformer:
    """Digital precoder: columns are per-user transmit vectors.

    The Frobenius power never exceeds the budget (tolerance 1e-9).
    """

    matrix: np.ndarray
    power_budget: float

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.complex128)
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2:
            raise ValueError("beamformer matrix must be 2-D (antennas x streams)")
        if self.power > self.power_budget + 1e-9:
            raise ValueError(
                f"power {self.power:.12g} exceeds budget {self.power_budget:.12g}"
            )

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.matrix) ** 2))

    @property
    def n_streams(self) -> int:
        return self.matrix.shape[1]


def _scaled(v: np.ndarray, p_t: float) -> np.ndarray:
    power = float(np.sum(np.abs(v) ** 2))
    if power <= 0.0:
        return np.zeros_like(v)
    return v * math.sqrt(p_t / power)


def zero_forcing(h_eff: np.ndarray, p_t: float) -> Beamformer:
    """Interference-nulling precoder with one uniform power scaling.

    h_eff is (K, N).  Raises RankDeficiencyError when the rows cannot be
    jointly inverted (K > N or rank < K).
    """
    h = np.asarray(h_eff, dtype=np.complex128)
    k, n = h.shape
    if p_t <= 0:
        raise ValueError("power budget must be positive")
    if k > n:
        raise RankDeficiencyError(f"{k} streams need at least {k} antennas, got {n}")
    rank = np.linalg.matrix_rank(h)
    if rank < k:
        raise RankDeficiencyError(f"effective channel rank {rank} < {k} users")
    v = np.linalg.pinv(h)
    return Beamformer(matrix=_scaled(v, p_t), power_budget=p_t)


def mmse_precoder(h_eff: np.ndarray, p_t: float, noise: float) -> Beamformer:
    """Regularized inverse with loading K*noise/P_T, scaled to the budget.

    Tends to the zero-forcing direction as noise vanishes and to matched
    filtering as it dominates.
    """
    h = np.asarray(h_eff, dtype=np.complex128)
    k = h.shape[0]
    if p_t <= 0:
        raise ValueError("power budget must be positive")
    if noise < 0:
        raise ValueError("noise must be nonnegative")
    gram = h @ h.conj().T + (k * noise / p_t) * np.eye(k)
    v = h.conj().T @ np.linalg.pinv(gram)
    return Beamformer(matrix=_scaled(v, p_t), power_budget=p_t)


def _tolerant_precoder(h: np.ndarray, p_t: float, noise: float, kind: str) -> np.ndarray:
    """Precoder matrix that degrades gracefully on rank-deficient rows."""
    if kind == "zf":
        return _scaled(np.linalg.pinv(h), p_t)
    if kind == "mmse":
        k = h.shape[0]
        gram = h @ h.conj().T + (k * noise / p_t) * np.eye(k)
        return _scaled(h.conj().T @ np.linalg.pinv(gram), p_t)
    raise ValueError(f"unknown precoder {kind!r}, expected 'zf' or 'mmse'")


def rates_from_products(z: np.ndarray, noise: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-user (sinr, rate) from the stream-product matrix z[k, j]."""
    p = np.abs(z) ** 2
    k = z.shape[0]
    idx = np.arange(k)
    sig = p[idx, idx]
    interf = p.sum(axis=1) - sig
    sinr = sig / (interf + noise)
    return sinr, np.log2(1.0 + sinr)


def sinr_and_rates(
    channels: ChannelSet,
    config: PhaseConfig,
    beamformer: Beamformer,
    noise: float,
) -> tuple[np.ndarray, np.ndarray, float]:
    """(per-user SINR, per-user rates, sum rate) for one configuration."""
    rows = cascaded_channel(channels, config)
    z = rows @ beamformer.matrix
    sinr, rates = rates_from_products(z, noise)
    return sinr, rates, float(rates.sum())


# --- coordinate-ascent optimizer -------------------------------------------


@dataclass(frozen=True)
class OptimizerOptions:
    max_sweeps: int = 20
    restarts: int = 4
    precoder: str = "zf"


@dataclass(frozen=True, eq=False)
class OptimizeResult:
    config: PhaseConfig
    beamformer: Beamformer
    sum_rate: float
    per_user_rates: np.ndarray
    trace: tuple[float, ...]
    sweeps: int
    iterations: int


def _side_coefficients(channels: ChannelSet) -> np.ndarray:
    """(S, K) element responses seen by each user's side."""
    table = channels.scenario.panel.table
    per_side = {REFLECT: table.coefficients(REFLECT), REFRACT: table.coefficients(REFRACT)}
    return np.stack([per_side[s] for s in channels.sides], axis=1)


def _weighted_receive(channels: ChannelSet) -> np.ndarray:
    """(K, M) conj(h_iu) scaled by the per-user amplitude weights."""
    k_count = channels.n_users
    a = np.conj(channels.h_iu).copy()
    for k in range(k_count):
        a[k] *= channels.side_gains(k)
    return a


def _sweep_inputs(
    channels: ChannelSet, v: np.ndarray, coeff_ku: np.ndarray, recv: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """(contrib, direct) blocks for the kernel given a fixed precoder.

    contrib[m, s, k, j] adds element m in state s to the stream product
    z[k, j]; direct[k, j] is the surface-independent part.
    """
    bv = channels.h_bi @ v
    base = np.einsum("km,mj->mkj", recv, bv)
    contrib = np.einsum("sk,mkj->mskj", coeff_ku, base)
    direct = np.conj(channels.h_d) @ v
    return np.ascontiguousarray(contrib), direct


@dataclass(frozen=True, eq=False)
class _ExtraCell:
    """Interfering streams: estimated channels toward our users plus the
    interferer's fixed precoder."""

    channels: ChannelSet
    v: np.ndarray


def _ascend(
    channels: ChannelSet,
    states: np.ndarray,
    opts: OptimizerOptions,
    noise: float,
    p_t: float,
    bias: Optional[np.ndarray] = None,
    extras: Sequence[_ExtraCell] = (),
) -> tuple[np.ndarray, np.ndarray, float, float, tuple[float, ...], int]:
    """Alternate precoder refreshes with element sweeps from one start.

    Returns (states, precoder matrix, objective, sum rate, trace, sweeps).
    The objective is the own-cell sum rate plus the bias of the chosen
    states; every accepted step is objective-nondecreasing by construction.
    """
    m_count = channels.n_elements
    s_count = len(channels.scenario.panel.table)
    table = channels.scenario.panel.table
    if bias is None:
        bias = np.zeros((m_count, s_count))
    bias = np.ascontiguousarray(bias, dtype=np.float64)

    coeff_ku = _side_coefficients(channels)
    recv = _weighted_receive(channels)
    extra_parts = [
        (_side_coefficients(e.channels), _weighted_receive(e.channels), e)
        for e in extras
    ]

    def own_rows(st: np.ndarray) -> np.ndarray:
        return cascaded_channel(channels, PhaseConfig(table, st))

    def assemble(st: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Full (contrib, z) including interfering streams."""
        contrib, direct = _sweep_inputs(channels, v, coeff_ku, recv)
        blocks_c, blocks_d = [contrib], [direct]
        for coeff_e, recv_e, e in extra_parts:
            c_e, d_e = _sweep_inputs(e.channels, e.v, coeff_e, recv_e)
            blocks_c.append(c_e)
            blocks_d.append(d_e)
        if len(blocks_c) > 1:
            contrib = np.ascontiguousarray(np.concatenate(blocks_c, axis=3))
            direct = np.concatenate(blocks_d, axis=1)
        z = direct + contrib[np.arange(m_count), st].sum(axis=0)
        return contrib, np.ascontiguousarray(z)

    def objective_of(st: np.ndarray, v: np.ndarray) -> float:
        _, z = assemble(st, v)
        return _kernels.sum_rate(z, noise) + float(bias[np.arange(m_count), st].sum())

    v = _tolerant_precoder(own_rows(states), p_t, noise, opts.precoder)
    objective = objective_of(states, v)
    trace = [objective]
    sweeps = 0

    for _ in range(opts.max_sweeps):
        contrib, z = assemble(states, v)
        saved = states.copy()
        changes, _ = _kernels.ascent_sweep(contrib, bias, z, states, noise)
        sweeps += 1
        new_obj = objective_of(states, v)
        if new_obj < objective:
            # cross-path round-off guard; the kernel itself never descends
            states[:] = saved
            changes = 0
            new_obj = objective
        objective = new_obj
        trace.append(objective)

        v_new = _tolerant_precoder(own_rows(states), p_t, noise, opts.precoder)
        refreshed = objective_of(states, v_new)
        improved_v = refreshed > objective
        if refreshed >= objective:
            v = v_new
            objective = refreshed
        trace.append(objective)

        if changes == 0 and not improved_v:
            break

    _, z = assemble(states, v)
    rate = _kernels.sum_rate(z, noise)
    return states, v, objective, rate, tuple(trace), sweeps


def alternating_optimize(
    channels: ChannelSet,
    scenario: Optional[Scenario] = None,
    opts: Optional[OptimizerOptions] = None,
    seed: int = 0,
    bias: Optional[np.ndarray] = None,
    extras: Sequence[_ExtraCell] = (),
    init_states: Optional[np.ndarray] = None,
) -> OptimizeResult:
    """Best-of-restarts alternating optimization of states and precoder.

    Each restart draws a random initial configuration from `seed`, then
    alternates full element sweeps with precoder refreshes until a sweep
    changes nothing and the refresh stops helping (or max_sweeps is hit).
    The recorded trace of the winning restart is nondecreasing.  When
    `init_states` is given (one configuration, or a stack of them) the
    first restarts ascend from those rows in order (warm starts) before
    any random draws.
    """
    scenario = scenario or channels.scenario
    opts = opts or OptimizerOptions()
    if opts.restarts < 1:
        raise ValueError("need at least one restart")
    rng = np.random.default_rng(seed)
    m_count = channels.n_elements
    s_count = len(scenario.panel.table)
    noise = scenario.noise_power_w
    p_t = scenario.bs.tx_power_w

    warm = np.empty((0, m_count), dtype=np.int64)
    if init_states is not None:
        warm = np.array(init_states, dtype=np.int64, copy=True)
        if warm.ndim == 1:
            warm = warm[None, :]
        if warm.ndim != 2 or warm.shape[1] != m_count:
            raise ValueError("init_states must have one state per element")

    best = None
    total_sweeps = 0
    for restart in range(opts.restarts):
        if restart < warm.shape[0]:
            states0 = warm[restart].copy()
        else:
            states0 = rng.integers(0, s_count, size=m_count, dtype=np.int64)
        states, v, objective, rate, trace, sweeps = _ascend(
            channels, states0, opts, noise, p_t, bias=bias, extras=extras
        )
        total_sweeps += sweeps
        if best is None or objective > best[2]:
            best = (states, v, objective, rate, trace, sweeps)

    states, v, objective, rate, trace, sweeps = best
    config = PhaseConfig(scenario.panel.table, states)
    bf = Beamformer(matrix=v, power_budget=p_t)
    if extras:
        per_user = _rates_with_extras(channels, config, bf, noise, extras)
    else:
        _, per_user, _ = sinr_and_rates(channels, config, bf, noise)
    return OptimizeResult(
        config=config,
        beamformer=bf,
        sum_rate=rate,
        per_user_rates=per_user,
        trace=trace,
        sweeps=sweeps,
        iterations=total_sweeps,
    )


def _rates_with_extras(
    channels: ChannelSet,
    config: PhaseConfig,
    bf: Beamformer,
    noise: float,
    extras: Sequence[_ExtraCell],
) -> np.ndarray:
    z = [cascaded_channel(channels, config) @ bf.matrix]
    for e in extras:
        z.append(cascaded_channel(e.channels, config) @ e.v)
    _, rates = rates_from_products(np.concatenate(z, axis=1), noise)
    return rates


# --- exhaustive oracle -------------------------------------------------------


def _enumerate_configs(s_count: int, m_count: int) -> np.ndarray:
    total = s_count**m_count
    return np.stack(
        np.unravel_index(np.arange(total), (s_count,) * m_count), axis=1
    ).astype(np.int64)


def exhaustive_oracle(
    channels: ChannelSet,
    scenario: Optional[Scenario] = None,
    precoder: str = "zf",
    limit: int = EXHAUSTIVE_LIMIT,
) -> tuple[PhaseConfig, float]:
    """Global optimum over all state assignments, precoder recomputed per
    configuration.

    Batched over configurations; refuses instances with more than `limit`
    assignments.  Returns the best configuration and its sum rate evaluated
    through the same scalar path as the iterative optimizer.
    """
    scenario = scenario or channels.scenario
    table = scenario.panel.table
    s_count = len(table)
    m_count = channels.n_elements
    total = s_count**m_count
    if total > limit:
        raise InfeasibleError(
            f"{s_count}**{m_count} = {total} assignments exceed the limit {limit}"
        )
    noise = scenario.noise_power_w
    p_t = scenario.bs.tx_power_w
    k_count = channels.n_users

    coeff_ku = _side_coefficients(channels)          # (S, K)
    recv = _weighted_receive(channels)               # (K, M)
    t = np.einsum("km,mn->kmn", recv, channels.h_bi)  # (K, M, N)
    direct = np.conj(channels.h_d)                   # (K, N)

    configs = _enumerate_configs(s_count, m_count)
    best_rate = -np.inf
    best_idx = 0
    chunk = 4096
    idx = np.arange(k_count)
    for start in range(0, total, chunk):
        sub = configs[start : start + chunk]
        q = coeff_ku[sub]                             # (C, M, K)
        rows = np.einsum("cmk,kmn->ckn", q, t) + direct[None, :, :]
        if precoder == "zf":
            v = np.linalg.pinv(rows)
        elif precoder == "mmse":
            gram = rows @ rows.conj().transpose(0, 2, 1)
            gram += (k_count * noise / p_t) * np.eye(k_count)[None, :, :]
            v = rows.conj().transpose(0, 2, 1) @ np.linalg.inv(gram)
        else:
            raise ValueError(f"unknown precoder {precoder!r}")
        power = np.sum(np.abs(v) ** 2, axis=(1, 2))
        scale = np.zeros_like(power)
        np.divide(p_t, power, out=scale, where=power > 0)
        v *= np.sqrt(scale)[:, None, None]
        z = rows @ v
        p = np.abs(z) ** 2
        sig = p[:, idx, idx]
        interf = p.sum(axis=2) - sig
        rates = np.log2(1.0 + sig / (interf + noise)).sum(axis=1)
        local = int(np.argmax(rates))
        if rates[local] > best_rate:
            best_rate = float(rates[local])
            best_idx = start + local

    config = PhaseConfig(table, configs[best_idx])
    rows = cascaded_channel(channels, config)
    v = _tolerant_precoder(rows, p_t, noise, precoder)
    _, rates = rates_from_products(rows @ v, noise)
    return config, float(rates.sum())
