"""Distributed control of one surface shared by two cells.

Two access points serve their own user groups from opposite sides of a
dual-sided panel embedded in the wall between two rooms.  Each AP holds the
channel state of its own users only; of its peer it knows just the position
and the digital precoder the peer reports each round.  Every round each AP
re-optimizes its precoder and a panel-configuration proposal, trading its
own sum rate against a quadratic penalty that pulls its per-element phase
values toward the peer's proposal, with scaled dual variables accumulating
persistent disagreement.  The exchange is synchronous: all APs update from
the previous round's proposals, then broadcast.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .beamform import (
    OptimizerOptions,
    _ExtraCell,
    _tolerant_precoder,
    alternating_optimize,
    rates_from_products,
)
from .channel import (
    BaseStation,
    ChannelSet,
    Scenario,
    ScenarioError,
    SurfacePanel,
    UserTerminal,
    cascaded_channel,
    synthesize_channels,
)
from .element import ElementStateTable, PhaseConfig
from .errors import InfeasibleError

MAX_CELLS = 2


# --- network description ------------------------------------------------------


@dataclass(frozen=True)
class CellNetwork:
    """Two co-channel cells sharing one panel.

    `cells[j]` is the full scenario of AP j with its own user group;
    `cross[j]` pairs the *peer* AP with cell j's users and carries the true
    inter-cell propagation (including any wall attenuation on direct paths).
    """

    cells: tuple[Scenario, ...]
    cross: tuple[Scenario, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "cells", tuple(self.cells))
        object.__setattr__(self, "cross", tuple(self.cross))
        n = len(self.cells)
        if not 1 <= n <= MAX_CELLS:
            raise ScenarioError(f"supported cell counts are 1..{MAX_CELLS}, got {n}")
        if n > 1 and len(self.cross) != n:
            raise ScenarioError("need one cross scenario per cell")
        first = self.cells[0]
        for sc in self.cells + self.cross:
            if sc.panel != first.panel:
                raise ScenarioError("all cells must share one identical panel")
            if sc.carrier_hz != first.carrier_hz:
                raise ScenarioError("all cells must share the carrier frequency")
            if sc.noise_power_w != first.noise_power_w:
                raise ScenarioError("all cells must share the noise power")

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def panel(self) -> SurfacePanel:
        return self.cells[0].panel

    @property
    def table(self) -> ElementStateTable:
        return self.panel.table

    @property
    def noise_power_w(self) -> float:
        return self.cells[0].noise_power_w


def build_network(
    aps: Sequence[BaseStation],
    groups: Sequence[Sequence[UserTerminal]],
    panel: SurfacePanel,
    *,
    carrier_hz: float,
    noise_power_w: float,
    kappa: float = 4.0,
    cross_wall_amp: float = 1.0,
    pathloss_mode: str = "scatter",
) -> CellNetwork:
    """Assemble a shared-panel network from APs and their user groups.

    The panel plane is treated as the wall between the rooms: any direct
    link whose endpoints sit on opposite sides of the plane is scaled by
    `cross_wall_amp` (1 = transparent, 0 = opaque) on top of the user's own
    `direct_amp_scale`.
    """
    if len(aps) != len(groups):
        raise ScenarioError("need exactly one user group per AP")
    if not 0.0 <= cross_wall_amp:
        raise ScenarioError("cross_wall_amp must be nonnegative")

    def _scenario(bs: BaseStation, users: Sequence[UserTerminal]) -> Scenario:
        sc = Scenario(
            bs=bs,
            panel=panel,
            users=tuple(users),
            carrier_hz=carrier_hz,
            noise_power_w=noise_power_w,
            kappa=kappa,
            pathloss_mode=pathloss_mode,
        )
        shaded = tuple(
            replace(u, direct_amp_scale=u.direct_amp_scale * cross_wall_amp)
            if sc.user_side(k) == "refract"
            else u
            for k, u in enumerate(sc.users)
        )
        return replace(sc, users=shaded)

    cells = tuple(_scenario(ap, grp) for ap, grp in zip(aps, groups))
    cross: tuple[Scenario, ...] = ()
    if len(aps) > 1:
        cross = tuple(
            _scenario(aps[1 - j], groups[j]) for j in range(len(aps))
        )
    return CellNetwork(cells=cells, cross=cross)


@dataclass(frozen=True, eq=False)
class NetworkChannels:
    """One channel realization of a whole network.

    own[j]: AP j -> cell j users (true).  cross[j]: peer AP -> cell j users
    (true).  est_cross[j]: line-of-sight-only model of cross[j] — everything
    AP j can reconstruct from the peer's position alone.
    """

    network: CellNetwork
    own: tuple[ChannelSet, ...]
    cross: tuple[ChannelSet, ...]
    est_cross: tuple[ChannelSet, ...]


def synthesize_network(network: CellNetwork, seed: int) -> NetworkChannels:
    """Draw one realization per link group, deterministically from `seed`."""
    n = network.n_cells
    children = np.random.SeedSequence(seed).spawn(2 * n)
    child_seeds = [int(c.generate_state(1)[0]) for c in children]
    own = tuple(
        synthesize_channels(network.cells[j], child_seeds[j]) for j in range(n)
    )
    cross: tuple[ChannelSet, ...] = ()
    est: tuple[ChannelSet, ...] = ()
    if n > 1:
        cross = tuple(
            synthesize_channels(network.cross[j], child_seeds[n + j])
            for j in range(n)
        )
        # the estimate is pure geometry, so its synthesis seed is irrelevant
        est = tuple(
            synthesize_channels(replace(network.cross[j], kappa=float("inf")), 0)
            for j in range(n)
        )
    return NetworkChannels(network=network, own=own, cross=cross, est_cross=est)


# --- per-AP state and local update ---------------------------------------------


@dataclass(frozen=True, eq=False)
class InterferenceReport:
    """What an AP broadcasts each round: its identity and digital precoder."""

    ap_id: int
    precoder: np.ndarray


@dataclass(frozen=True, eq=False)
class ApState:
    """One AP's private knowledge and negotiation state.

    `channels` is the CSI of its own users; `est_interference` is the
    line-of-sight model of the peer-to-own-users link built from the peer's
    position (empty tuple when there is no peer).  Peer users' CSI never
    appears here, so a local update cannot read it.
    """

    ap_id: int
    channels: ChannelSet
    est_interference: tuple[ChannelSet, ...]
    proposal: PhaseConfig
    precoder: np.ndarray
    duals: np.ndarray
    local_rate: float = 0.0
    last_trace: tuple[float, ...] = ()

    @property
    def report(self) -> InterferenceReport:
        return InterferenceReport(ap_id=self.ap_id, precoder=self.precoder)


def _phase_embedding(table: ElementStateTable) -> np.ndarray:
    """(S, 2) unit phasors of each state's reflect and refract phase values."""
    return np.array(
        [
            [np.exp(1j * s.refl_phase), np.exp(1j * s.refr_phase)]
            for s in table.states
        ],
        dtype=np.complex128,
    )


def consensus_bias(
    table: ElementStateTable,
    peer_states: Sequence[np.ndarray],
    duals: np.ndarray,
    rho: float,
) -> np.ndarray:
    """(M, S) additive objective bias: minus the consensus penalty.

    The penalty for putting element m into state s is
    rho/M * |x(s) - xbar_m + u_m|^2 where x maps a state to its two
    per-side unit phase phasors and xbar_m averages the peers' proposals.
    Dividing by the element count makes the penalty a mean-square phase
    mismatch, so one rho works across panel sizes.
    """
    emb = _phase_embedding(table)
    xbar = np.mean([emb[st] for st in peer_states], axis=0)  # (M, 2)
    diff = emb[None, :, :] - xbar[:, None, :] + duals[:, None, :]
    m_count = xbar.shape[0]
    return -(rho / m_count) * np.sum(np.abs(diff) ** 2, axis=2)


def local_update(
    ap: ApState,
    peer_proposals: Sequence[PhaseConfig],
    rho: float,
    interference_estimate: Sequence[InterferenceReport] = (),
    *,
    opts: Optional[OptimizerOptions] = None,
    seed: int = 0,
) -> ApState:
    """One AP's round: re-optimize precoder and proposal from local data.

    Maximizes the own-cell sum rate (with inter-cell interference modeled
    through the AP's line-of-sight estimate and the peers' reported
    precoders) minus the consensus penalty toward the peers' proposals.
    With no peers and rho == 0 this is exactly `alternating_optimize`.
    The dual variables are left untouched; they advance only on exchange.
    """
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    opts = opts or OptimizerOptions()
    if not peer_proposals and rho == 0.0 and not interference_estimate:
        res = alternating_optimize(ap.channels, opts=opts, seed=seed)
        return replace(
            ap,
            proposal=res.config,
            precoder=res.beamformer.matrix,
            local_rate=res.sum_rate,
            last_trace=res.trace,
        )

    bias = None
    if peer_proposals and rho > 0.0:
        bias = consensus_bias(
            ap.proposal.table,
            [np.asarray(p.states) for p in peer_proposals],
            ap.duals,
            rho,
        )
    extras = tuple(
        _ExtraCell(channels=cs, v=rep.precoder)
        for cs, rep in zip(ap.est_interference, interference_estimate)
    )
    # warm starts: own previous proposal first, then each peer's proposal
    # (adopt-and-improve); how many are used is capped by opts.restarts
    warm = [np.asarray(ap.proposal.states)]
    warm.extend(np.asarray(p.states) for p in peer_proposals)
    res = alternating_optimize(
        ap.channels,
        opts=opts,
        seed=seed,
        bias=bias,
        extras=extras,
        init_states=np.stack(warm),
    )
    return replace(
        ap,
        proposal=res.config,
        precoder=res.beamformer.matrix,
        local_rate=res.sum_rate,
        last_trace=res.trace,
    )


# --- negotiation ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NegotiationResult:
    """Outcome of one two-cell negotiation, evaluated on the true channels."""

    config: PhaseConfig
    precoders: tuple[np.ndarray, ...]
    per_user_rates: tuple[np.ndarray, ...]
    interference_w: tuple[np.ndarray, ...]
    sum_rate: float
    residual_trace: tuple[float, ...]
    round_rows: tuple[tuple[int, int, float, float], ...]
    converged: bool
    iterations: int


def _pairwise_residual(proposals: Sequence[np.ndarray]) -> float:
    """Mean state-index disagreement over all unordered AP pairs."""
    n = len(proposals)
    if n < 2:
        return 0.0
    dists = [
        float(np.mean(proposals[i] != proposals[j]))
        for i in range(n)
        for j in range(i + 1, n)
    ]
    return float(np.mean(dists))


def _majority_states(proposals: Sequence[np.ndarray], s_count: int) -> np.ndarray:
    """Element-wise majority vote; ties resolved to the lowest state index."""
    stack = np.stack(proposals)  # (J, M)
    counts = np.stack([(stack == s).sum(axis=0) for s in range(s_count)])  # (S, M)
    return counts.argmax(axis=0).astype(np.int64)


def evaluate_network(
    netchans: NetworkChannels,
    config: Optional[PhaseConfig],
    precoders: Sequence[np.ndarray],
) -> tuple[tuple[np.ndarray, ...], tuple[np.ndarray, ...], float]:
    """True per-user rates and inter-cell interference powers (watts).

    `config=None` evaluates the surface-off network: only direct links
    carry signal and interference.
    """
    noise = netchans.network.noise_power_w
    rates: list[np.ndarray] = []
    interf: list[np.ndarray] = []

    def _rows(cs: ChannelSet) -> np.ndarray:
        if config is None:
            return np.conj(cs.h_d)
        return cascaded_channel(cs, config)

    for j in range(netchans.network.n_cells):
        z_own = _rows(netchans.own[j]) @ precoders[j]
        blocks = [z_own]
        if netchans.cross:
            z_x = _rows(netchans.cross[j]) @ precoders[1 - j]
            blocks.append(z_x)
            interf.append(np.sum(np.abs(z_x) ** 2, axis=1))
        else:
            interf.append(np.zeros(netchans.own[j].n_users))
        _, r = rates_from_products(np.concatenate(blocks, axis=1), noise)
        rates.append(r)
    total = float(sum(r.sum() for r in rates))
    return tuple(rates), tuple(interf), total


def _network_precoders(
    netchans: NetworkChannels,
    config: Optional[PhaseConfig],
    kind: str,
) -> tuple[np.ndarray, ...]:
    """Per-cell precoder on the true own-cell rows through `config`."""
    out = []
    for cs in netchans.own:
        rows = np.conj(cs.h_d) if config is None else cascaded_channel(cs, config)
        out.append(
            _tolerant_precoder(
                rows, cs.scenario.bs.tx_power_w, netchans.network.noise_power_w, kind
            )
        )
    return tuple(out)


def negotiate(
    network: "CellNetwork | NetworkChannels",
    rho: float = 1.0,
    max_iter: int = 50,
    tol: float = 0.0,
    seed: int = 0,
    opts: Optional[OptimizerOptions] = None,
) -> NegotiationResult:
    """Round-based consensus on the shared panel configuration.

    Iteration 1 is each AP's standalone proposal (no peer knowledge yet);
    every following iteration exchanges proposals and precoder reports and
    runs one penalized local update per AP, all from the previous round's
    broadcasts.  Scaled duals accumulate after each exchange, and rho grows
    by 1.5x after every 10 rounds without a residual improvement.  The
    final configuration is the agreed one, or the element-wise majority
    (lowest state index on ties) when the residual is still above `tol`
    at max_iter; `converged` is only reported when all proposals are
    element-wise identical.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    netchans = (
        network if isinstance(network, NetworkChannels) else synthesize_network(network, seed)
    )
    net = netchans.network
    opts = opts or OptimizerOptions()
    table = net.table
    m_count = net.panel.rows * net.panel.cols
    s_count = len(table)
    n = net.n_cells

    zero_states = np.zeros(m_count, dtype=np.int64)
    aps = [
        ApState(
            ap_id=j,
            channels=netchans.own[j],
            est_interference=(netchans.est_cross[j],) if netchans.est_cross else (),
            proposal=PhaseConfig(table, zero_states.copy()),
            precoder=np.zeros((net.cells[j].bs.n_antennas, net.cells[j].n_users)),
            duals=np.zeros((m_count, 2), dtype=np.complex128),
        )
        for j in range(n)
    ]

    emb = _phase_embedding(table)
    rho_t = float(rho)
    best_residual = math.inf
    stall = 0
    rows: list[tuple[int, int, float, float]] = []
    residual_trace: list[float] = []
    iterations = 0

    warm_opts = replace(opts, restarts=max(1, n))
    for it in range(1, max_iter + 1):
        cur_props = [np.asarray(ap.proposal.states).copy() for ap in aps]
        prev_reports = [ap.report for ap in aps]
        new_aps = list(aps)
        for j, ap in enumerate(aps):
            if it == 1:
                # standalone proposal: nothing has been exchanged yet
                upd = local_update(ap, (), 0.0, (), opts=opts, seed=seed)
            else:
                # deterministic sequential order: each AP consults the
                # freshest proposals already made this round, while the
                # precoder reports stay those broadcast at the last round
                # boundary; warm starts only (own and adopted-peer ascents)
                # keep rounds stable and deterministic
                peers = [
                    PhaseConfig(table, cur_props[i]) for i in range(n) if i != j
                ]
                reports = [prev_reports[i] for i in range(n) if i != j]
                upd = local_update(
                    ap, peers, rho_t, reports, opts=warm_opts, seed=seed
                )
            cur_props[j] = np.asarray(upd.proposal.states).copy()
            new_aps[j] = upd
        aps = new_aps
        iterations = it

        props = [np.asarray(ap.proposal.states) for ap in aps]
        residual = _pairwise_residual(props)
        residual_trace.append(residual)
        for ap in aps:
            rows.append((it, ap.ap_id, ap.local_rate, residual))

        if n > 1:
            # scaled dual ascent on the exchanged proposals
            aps = [
                replace(
                    ap,
                    duals=ap.duals
                    + emb[props[j]]
                    - np.mean([emb[props[i]] for i in range(n) if i != j], axis=0),
                )
                for j, ap in enumerate(aps)
            ]

        # iteration 1 predates any report exchange, so a zero residual there
        # is not yet an interference-aware agreement; always run one
        # penalized round when there are peers
        if residual <= tol and (n == 1 or it >= 2):
            break
        if residual < best_residual:
            best_residual = residual
            stall = 0
        else:
            stall += 1
            if stall >= 10:
                rho_t *= 1.5
                stall = 0

    props = [np.asarray(ap.proposal.states) for ap in aps]
    final_residual = _pairwise_residual(props)
    converged = final_residual == 0.0
    if converged:
        final_states = props[0]
        precoders = tuple(ap.precoder for ap in aps)
        config = aps[0].proposal
    else:
        final_states = _majority_states(props, s_count)
        config = PhaseConfig(table, final_states)
        precoders = _network_precoders(netchans, config, opts.precoder)

    rates, interf, total = evaluate_network(netchans, config, precoders)
    return NegotiationResult(
        config=config,
        precoders=precoders,
        per_user_rates=rates,
        interference_w=interf,
        sum_rate=total,
        residual_trace=tuple(residual_trace),
        round_rows=tuple(rows),
        converged=converged,
        iterations=iterations,
    )


def random_baseline(netchans: NetworkChannels, seed: int = 0) -> float:
    """True network sum rate of a uniformly random configuration."""
    net = netchans.network
    rng = np.random.default_rng(seed)
    states = rng.integers(0, len(net.table), size=net.panel.rows * net.panel.cols)
    config = PhaseConfig(net.table, states.astype(np.int64))
    precoders = _network_precoders(netchans, config, "zf")
    _, _, total = evaluate_network(netchans, config, precoders)
    return total


def centralized_exhaustive(
    netchans: NetworkChannels,
    precoder: str = "zf",
    limit: int = 2**20,
) -> tuple[PhaseConfig, float]:
    """Global optimum of the true network sum rate over all configurations.

    A full-knowledge upper bound: every configuration is scored with
    per-cell precoders on the true channels and true cross interference.
    """
    net = netchans.network
    s_count = len(net.table)
    m_count = net.panel.rows * net.panel.cols
    total = s_count**m_count
    if total > limit:
        raise InfeasibleError(
            f"{s_count}**{m_count} = {total} assignments exceed the limit {limit}"
        )
    best_rate = -math.inf
    best_states = np.zeros(m_count, dtype=np.int64)
    for flat in range(total):
        states = np.array(
            np.unravel_index(flat, (s_count,) * m_count), dtype=np.int64
        )
        config = PhaseConfig(net.table, states)
        precoders = _network_precoders(netchans, config, precoder)
        _, _, rate = evaluate_network(netchans, config, precoders)
        if rate > best_rate:
            best_rate = rate
            best_states = states
    return PhaseConfig(net.table, best_states), best_rate


# --- interference statistics ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class InterferenceCdf:
    """Empirical CDFs of per-user inter-cell interference, on vs off."""

    levels_dbm: np.ndarray
    cdf_on: np.ndarray
    cdf_off: np.ndarray
    samples_on_w: np.ndarray
    samples_off_w: np.ndarray


def _to_dbm(watts: np.ndarray) -> np.ndarray:
    out = np.full(watts.shape, -np.inf)
    pos = watts > 0
    out[pos] = 10.0 * np.log10(watts[pos] * 1e3)
    return out


def interference_cdf(
    network: CellNetwork,
    trials: int,
    seed: int = 0,
    rho: float = 1.0,
    max_iter: int = 50,
    tol: float = 0.0,
) -> InterferenceCdf:
    """Paired Monte Carlo of inter-cell interference with and without the panel.

    Each trial draws one network realization; the panel-on branch negotiates
    a configuration, the panel-off branch uses direct links only (per-cell
    precoders on the direct rows).  Per-user interference powers are pooled
    over trials and returned as empirical CDFs on the union of sampled
    levels.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if network.n_cells < 2:
        raise ScenarioError("interference statistics need two cells")
    rng = np.random.default_rng(seed)
    trial_seeds = rng.integers(0, 2**31 - 1, size=trials)
    on: list[np.ndarray] = []
    off: list[np.ndarray] = []
    for ts in trial_seeds:
        netchans = synthesize_network(network, int(ts))
        res = negotiate(netchans, rho=rho, max_iter=max_iter, tol=tol, seed=int(ts))
        on.extend(res.interference_w)
        off_pre = _network_precoders(netchans, None, "zf")
        _, interf_off, _ = evaluate_network(netchans, None, off_pre)
        off.extend(interf_off)
    samples_on = np.sort(np.concatenate(on))
    samples_off = np.sort(np.concatenate(off))
    levels = np.unique(np.concatenate([samples_on, samples_off]))
    cdf_on = np.searchsorted(samples_on, levels, side="right") / samples_on.size
    cdf_off = np.searchsorted(samples_off, levels, side="right") / samples_off.size
    return InterferenceCdf(
        levels_dbm=_to_dbm(levels),
        cdf_on=cdf_on,
        cdf_off=cdf_off,
        samples_on_w=samples_on,
        samples_off_w=samples_off,
    )


# --- CSV interfaces --------------------------------------------------------------


def negotiation_trace_csv(result: NegotiationResult) -> str:
    """Per-round rows: `iter, ap, local_sum_rate, residual`."""
    buf = io.StringIO()
    buf.write("iter,ap,local_sum_rate,residual\n")
    for it, ap_id, rate, residual in result.round_rows:
        buf.write(f"{it},{ap_id},{rate:.6f},{residual:.6f}\n")
    return buf.getvalue()


def negotiation_summary_csv(result: NegotiationResult) -> str:
    """Final rows: `user, cell, rate_bpshz, interference_dbm`."""
    buf = io.StringIO()
    buf.write("user,cell,rate_bpshz,interference_dbm\n")
    user = 0
    for cell, (rates, interf) in enumerate(
        zip(result.per_user_rates, result.interference_w)
    ):
        dbm = _to_dbm(np.asarray(interf))
        for k in range(rates.shape[0]):
            buf.write(f"{user},{cell},{rates[k]:.6f},{dbm[k]:.6f}\n")
            user += 1
    return buf.getvalue()
