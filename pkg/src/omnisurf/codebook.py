"""Beam training without channel knowledge.

Implements the joint transmit/surface training protocol: a sector sweep at
the base station, a logarithmic-depth multi-lobe search over the surface's
single-lobe codebook, geometric steering estimation for the selected
sections, and discrete per-element configuration synthesis.  The trainer
interacts with the radio environment only through a power-measurement
probe, never through channel coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .beamform import Beamformer, RankDeficiencyError, mmse_precoder, zero_forcing, sinr_and_rates
from .channel import ChannelSet, Scenario, cascaded_channel
from .element import ElementStateTable, PhaseConfig
from .errors import InfeasibleError

__all__ = [
    "TrainingGeometry",
    "SectorCodebook",
    "LobeCodebook",
    "PowerProbe",
    "BeamTrainResult",
    "PipelineResult",
    "build_sector_codebook",
    "build_lobe_codebook",
    "steering_target",
    "multi_lobe_target",
    "estimate_steering",
    "construct_Q",
    "beam_train",
    "exhaustive_lobe_selection",
    "codebook_pipeline",
    "trace_to_csv",
]


# --- geometry ----------------------------------------------------------------


@dataclass(frozen=True)
class TrainingGeometry:
    """Shared geometric knowledge of trainer and trained hardware.

    Everything here is deployment-time information (array layout, surface
    layout, carrier) plus the rectangular candidate region that the sector
    sweep tiles; none of it involves channel realizations.
    """

    antenna_positions: np.ndarray  # (N, 3)
    element_positions: np.ndarray  # (M, 3)
    element_axis_coords: np.ndarray  # (M,) in-plane coordinate along the sweep axis
    wavelength: float
    region_low: np.ndarray  # (3,)
    region_high: np.ndarray  # (3,)

    @classmethod
    def from_scenario(cls, scenario: Scenario, region: tuple | None = None) -> "TrainingGeometry":
        """Build from a scenario; `region` optionally overrides the sweep box.

        The default region is the axis-aligned bounding box of the transmit
        antennas and the surface elements.  Scenarios typically override it
        with a strip transverse to the line of sight, because a far-field
        array cannot resolve range along that line.
        """
        ant = scenario.bs_antenna_positions()
        elem = scenario.element_positions()
        if region is None:
            pts = np.vstack([ant, elem])
            low, high = pts.min(axis=0), pts.max(axis=0)
        else:
            low = np.asarray(region[0], dtype=float)
            high = np.asarray(region[1], dtype=float)
            if low.shape != (3,) or high.shape != (3,) or np.any(high < low):
                raise ValueError("region must be (low, high) corner triples with high >= low")
        x_hat, _, _ = scenario.panel_frame()
        axis_coords = (elem - np.asarray(scenario.panel.center, float)) @ x_hat
        return cls(
            antenna_positions=ant,
            element_positions=elem,
            element_axis_coords=axis_coords,
            wavelength=scenario.wavelength,
            region_low=np.asarray(low, dtype=float),
            region_high=np.asarray(high, dtype=float),
        )


def _grid_shape(extents: np.ndarray, n_sections: int) -> np.ndarray:
    """Split `n_sections` cells over the two largest-extent axes.

    Degenerate axes always get one cell; among divisor pairs of n_sections
    the pair whose cell-count ratio is closest (in log space) to the extent
    ratio wins, so long boxes split lengthwise.
    """
    order = np.argsort(extents)[::-1]
    counts = np.ones(3, dtype=int)
    e1, e2 = extents[order[0]], extents[order[1]]
    if e1 <= 0.0:
        if n_sections != 1:
            raise ValueError("cannot tile a degenerate region with more than one section")
        return counts
    if e2 <= 0.0:
        counts[order[0]] = n_sections
        return counts
    best = None
    target = math.log(e1 / e2)
    for a in range(1, n_sections + 1):
        if n_sections % a:
            continue
        b = n_sections // a
        score = abs(math.log(a / b) - target)
        if best is None or score < best[0]:
            best = (score, a, b)
    counts[order[0]], counts[order[1]] = best[1], best[2]
    return counts


# --- codebooks ---------------------------------------------------------------


@dataclass(frozen=True)
class SectorCodebook:
    """Sector centers and the transmit codewords steering at them."""

    centers: np.ndarray  # (N_b, 3)
    codewords: np.ndarray  # (N_b, N) complex, |entry| = 1/sqrt(N)

    def __len__(self) -> int:
        return self.centers.shape[0]


def build_sector_codebook(geometry: TrainingGeometry, n_sections: int) -> SectorCodebook:
    """Tile the candidate region into `n_sections` cells and steer at each center.

    Codeword i has entries exp(+j*2*pi/lambda * d(antenna_n, center_i)) / sqrt(N):
    the conjugate of the propagation phase exp(-j*2*pi*d/lambda), so the fields
    radiated by all antennas add coherently at center i (a focused beam), and
    the field re-expanding past the focus carries the point-source phase
    profile exp(-j*2*pi*d(elem, center_i)/lambda) that estimate_steering models.
    """
    if n_sections < 1:
        raise ValueError("n_sections must be >= 1")
    low, high = geometry.region_low, geometry.region_high
    counts = _grid_shape(high - low, n_sections)
    axes = [low[a] + (high[a] - low[a]) * (np.arange(counts[a]) + 0.5) / counts[a] for a in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    dists = np.linalg.norm(
        geometry.antenna_positions[None, :, :] - centers[:, None, :], axis=2
    )
    n = geometry.antenna_positions.shape[0]
    codewords = np.exp(2j * np.pi * dists / geometry.wavelength) / math.sqrt(n)
    return SectorCodebook(centers=centers, codewords=codewords)


@dataclass(frozen=True)
class LobeCodebook:
    """Single-lobe directions over [-1, 1] plus a bit-partition hierarchy.

    Codeword p (1-based) points at directional cosine -1 + (2p-1)/N_G and
    covers [-1 + (2p-2)/N_G, -1 + 2p/N_G]; the hierarchy has
    log2(N_G) + 1 layers, where layer s < depth holds two multi-lobe
    codewords that split the lobe indices on bit s-1 (least significant
    first), so every layer pair partitions the full lobe set.
    """

    n_lobes: int
    directions: np.ndarray  # (N_G,) lobe centers, index p-1
    coverage: np.ndarray  # (N_G, 2) [low, high] directional-cosine intervals

    @property
    def depth(self) -> int:
        """Total number of layers including the single-lobe bottom layer."""
        return int(math.log2(self.n_lobes)) + 1

    def layer_partition(self, layer: int) -> tuple[np.ndarray, np.ndarray]:
        """0-based lobe indices covered by the two codewords of `layer` (1-based)."""
        if not 1 <= layer <= self.depth - 1:
            raise ValueError(f"layer must be in [1, {self.depth - 1}]")
        idx = np.arange(self.n_lobes)
        bit = (idx >> (layer - 1)) & 1
        return idx[bit == 0], idx[bit == 1]


def build_lobe_codebook(n_lobes: int) -> LobeCodebook:
    if n_lobes < 2 or (n_lobes & (n_lobes - 1)) != 0:
        raise ValueError("n_lobes must be a power of two >= 2")
    p = np.arange(1, n_lobes + 1)
    directions = -1.0 + (2.0 * p - 1.0) / n_lobes
    coverage = np.stack(
        [-1.0 + (2.0 * p - 2.0) / n_lobes, -1.0 + 2.0 * p / n_lobes], axis=1
    )
    return LobeCodebook(n_lobes=n_lobes, directions=directions, coverage=coverage)


def steering_target(direction_cosine: float, axis_coords: np.ndarray, wavelength: float) -> np.ndarray:
    """Unit-modulus surface response whose outgoing beam has the given cosine."""
    return np.exp(-2j * np.pi * direction_cosine * np.asarray(axis_coords) / wavelength)


def multi_lobe_target(
    codebook: LobeCodebook,
    layer: int,
    branch: int,
    axis_coords: np.ndarray,
    wavelength: float,
) -> np.ndarray:
    """Uniform sum of the branch's single-lobe targets, scaled to unit mean power."""
    if branch not in (0, 1):
        raise ValueError("branch must be 0 or 1")
    lobes = codebook.layer_partition(layer)[branch]
    total = np.zeros(len(axis_coords), dtype=complex)
    for p in lobes:
        total += steering_target(codebook.directions[p], axis_coords, wavelength)
    rms = math.sqrt(float(np.mean(np.abs(total) ** 2)))
    if rms < 1e-300:
        raise ValueError("degenerate multi-lobe codeword")
    return total / rms


# --- steering estimation and discrete configuration --------------------------


def estimate_steering(
    centers: np.ndarray, element_positions: np.ndarray, wavelength: float
) -> np.ndarray:
    """(M, K) matrix of exp(-j*2*pi/lambda * d) per element/section-center pair.

    Column k models the incident wave launched through section center k with
    the same distance-phase convention every link in the simulator uses, so
    dividing a desired outgoing response by it cancels the incident phase.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    d = np.linalg.norm(
        np.asarray(element_positions)[:, None, :] - centers[None, :, :], axis=2
    )
    return np.exp(-2j * np.pi * d / wavelength)


def construct_Q(
    targets: np.ndarray,
    steering: np.ndarray,
    table: ElementStateTable,
    sides,
) -> PhaseConfig:
    """Per-element state choice minimizing sum_k |target[m,k] - q*steering[m,k]|^2.

    The objective separates over elements, so enumerating the table per
    element is exactly optimal; ties go to the lowest state index.  `sides`
    names, per user k, the surface side whose response multiplies column k.
    """
    targets = np.asarray(targets, dtype=complex)
    steering = np.asarray(steering, dtype=complex)
    if targets.ndim == 1:
        targets = targets[:, None]
    if steering.ndim == 1:
        steering = steering[:, None]
    if targets.shape != steering.shape or targets.ndim != 2:
        raise ValueError("targets and steering must have matching (M, K) shapes")
    m_count, k_count = targets.shape
    sides = list(sides)
    if len(sides) != k_count:
        raise ValueError("one side label per target column required")
    q = np.stack([table.coefficients(side) for side in sides], axis=1)  # (S, K)
    # cost[m, s] = sum_k |t[m,k] - q[s,k]*h[m,k]|^2
    diff = targets[:, None, :] - q[None, :, :] * steering[:, None, :]
    cost = np.sum(np.abs(diff) ** 2, axis=2)
    states = np.argmin(cost, axis=1).astype(np.int64)
    return PhaseConfig(table, states)


# --- power probe -------------------------------------------------------------


class PowerProbe:
    """Received-power oracle used during training.

    Wraps the channel realization so the training logic can only observe
    |received amplitude|^2 scalars (optionally noisy), never coefficients.
    `count` tallies soundings: measurements issued for the same sounding id
    (one per user listening to one transmission) count once.
    """

    def __init__(self, channels: ChannelSet, noise_power: float = 0.0, seed: int | None = None):
        self._channels = channels
        self._noise = float(noise_power)
        self._rng = np.random.default_rng(seed)
        self._soundings: set = set()
        self.n_users = channels.n_users
        self.n_antennas = channels.n_antennas

    @property
    def count(self) -> int:
        return len(self._soundings)

    def measure(self, config: PhaseConfig, bs_vector: np.ndarray, user: int, sounding_id) -> float:
        """Power received by `user` when `bs_vector` is sent through `config`."""
        self._soundings.add(sounding_id)
        amp = complex(cascaded_channel(self._channels, config)[user] @ np.asarray(bs_vector))
        if self._noise > 0.0:
            scale = math.sqrt(self._noise / 2.0)
            amp += complex(self._rng.normal(0.0, scale), self._rng.normal(0.0, scale))
        return abs(amp) ** 2


# --- training ----------------------------------------------------------------


@dataclass
class BeamTrainResult:
    analog_precoder: np.ndarray  # (N, K)
    sections: np.ndarray  # (K,) sector indices
    section_centers: np.ndarray  # (K, 3)
    lobes: np.ndarray  # (K,) 0-based single-lobe indices
    combiners: np.ndarray  # (K,) combiner codeword indices
    training_count: int
    trace: list = field(default_factory=list)  # (round, codeword_id, user, rx_power_dbm)


def _power_dbm(power_w: float) -> float:
    return 10.0 * math.log10(max(power_w, 1e-30) * 1000.0)


def _sounding_config(target, hat_col, table, side) -> PhaseConfig:
    return construct_Q(target[:, None], hat_col[:, None], table, [side])


def _amp_scale(table: ElementStateTable, side: str) -> float:
    """Mean achievable amplitude: multi-lobe targets are scaled to it so the
    per-element projection can track their amplitude structure instead of
    saturating at the largest state."""
    return float(np.mean(np.abs(table.coefficients(side))))


def beam_train(
    probe: PowerProbe,
    geometry: TrainingGeometry,
    sector_codebook: SectorCodebook,
    lobe_codebook: LobeCodebook,
    table: ElementStateTable,
    sides,
    *,
    seed: int,
    compensate_incidence: bool = True,
) -> BeamTrainResult:
    """Run the full training protocol through the power probe.

    Rounds: (a) sweep all sector codewords under one random surface
    configuration and give each user a disjoint best section, greedily in
    order of reported strength; (b) per user, sound the two multi-lobe
    codewords of every hierarchy layer and take the stronger branch as one
    bit of the lobe index; (c) pick each user's combiner (identity for
    single-antenna receivers).  Sounding count: N_b + 2*K*log2(N_G).

    With ``compensate_incidence=False`` the surface soundings skip the
    incident-phase compensation (independent-codebook baseline).
    """
    sides = list(sides)
    k_count = len(sides)
    n_sections = len(sector_codebook)
    if k_count > n_sections:
        raise InfeasibleError("need at least one sector per user")
    rng = np.random.default_rng(seed)
    trace: list = []

    # (a) sector sweep under one random surface configuration
    random_cfg = PhaseConfig(table, rng.integers(0, len(table), size=len(geometry.element_positions)).astype(np.int64))
    sweep = np.empty((n_sections, k_count))
    for i in range(n_sections):
        for k in range(k_count):
            p = probe.measure(random_cfg, sector_codebook.codewords[i], k, ("sector", i))
            sweep[i, k] = p
            trace.append(("sector", i, k, _power_dbm(p)))

    order = np.argsort(-sweep.max(axis=0), kind="stable")  # strongest user first
    taken: set[int] = set()
    sections = np.zeros(k_count, dtype=int)
    for k in order:
        avail = [i for i in range(n_sections) if i not in taken]
        strengths = sweep[avail, k]
        best = avail[int(np.argmax(strengths))]
        if sweep[best, k] <= 0.0:
            raise InfeasibleError(
                "fewer feedback-distinguishable sections than users"
            )
        taken.add(best)
        sections[k] = best
    analog = sector_codebook.codewords[sections].T.copy()  # (N, K)
    centers = sector_codebook.centers[sections]

    # (b) per-user hierarchical lobe search, one bit per layer
    hat_hi = estimate_steering(centers, geometry.element_positions, geometry.wavelength)
    flat = np.ones_like(hat_hi)
    incident = hat_hi if compensate_incidence else flat
    n_bits = lobe_codebook.depth - 1
    lobes = np.zeros(k_count, dtype=int)
    for k in range(k_count):
        index = 0
        scale = _amp_scale(table, sides[k])
        for layer in range(1, n_bits + 1):
            powers = []
            for branch in (0, 1):
                target = scale * multi_lobe_target(
                    lobe_codebook, layer, branch, geometry.element_axis_coords, geometry.wavelength
                )
                cfg = _sounding_config(target, incident[:, k], table, sides[k])
                p = probe.measure(cfg, analog[:, k], k, ("lobe", k, layer, branch))
                powers.append(p)
                trace.append((f"lobe-layer{layer}", branch, k, _power_dbm(p)))
            if powers[1] > powers[0]:
                index |= 1 << (layer - 1)
        lobes[k] = index

    # (c) combiner selection: single-antenna users have the identity combiner
    combiners = np.zeros(k_count, dtype=int)

    return BeamTrainResult(
        analog_precoder=analog,
        sections=sections,
        section_centers=centers,
        lobes=lobes,
        combiners=combiners,
        training_count=probe.count,
        trace=trace,
    )


def exhaustive_lobe_selection(
    probe: PowerProbe,
    geometry: TrainingGeometry,
    lobe_codebook: LobeCodebook,
    table: ElementStateTable,
    side: str,
    user: int,
    bs_vector: np.ndarray,
    incident_column: np.ndarray,
) -> int:
    """Argmax lobe over sounding every single-lobe codeword (ties: lowest index)."""
    best, best_p = 0, -np.inf
    for p in range(lobe_codebook.n_lobes):
        target = steering_target(
            lobe_codebook.directions[p], geometry.element_axis_coords, geometry.wavelength
        )
        cfg = _sounding_config(target, incident_column, table, side)
        power = probe.measure(cfg, bs_vector, user, ("exhaustive", user, p))
        if power > best_p:
            best, best_p = p, power
    return best


# --- end-to-end pipeline ------------------------------------------------------


@dataclass
class PipelineResult:
    sum_rate: float
    per_user_rates: np.ndarray
    training_count: int
    config: PhaseConfig
    beamformer: Beamformer
    training: BeamTrainResult


def _model_equivalent_channel(
    training: BeamTrainResult,
    geometry: TrainingGeometry,
    lobe_codebook: LobeCodebook,
    config: PhaseConfig,
    sides,
) -> np.ndarray:
    """K x K channel the trainer can assemble without channel knowledge.

    Row k models user k as a plane wave from its selected lobe direction;
    the transmit side is modeled as K geometric paths through the selected
    section centers.
    """
    hat_hi = estimate_steering(training.section_centers, geometry.element_positions, geometry.wavelength)
    k_count = len(sides)
    t = np.zeros((k_count, k_count), dtype=complex)
    for k in range(k_count):
        g_k = steering_target(
            lobe_codebook.directions[training.lobes[k]],
            geometry.element_axis_coords,
            geometry.wavelength,
        )
        q = config.q_values(sides[k])
        t[k, :] = (np.conj(g_k) * q) @ hat_hi
    d = np.linalg.norm(
        training.section_centers[:, None, :] - geometry.antenna_positions[None, :, :],
        axis=2,
    )
    b = np.exp(-2j * np.pi * d / geometry.wavelength)  # (K, N)
    return t @ b @ training.analog_precoder


def codebook_pipeline(
    scenario: Scenario,
    seed: int,
    *,
    n_sections: int = 8,
    n_lobes: int = 16,
    feedback_noise: float = 0.0,
    precoder: str = "zf",
    region: tuple | None = None,
    compensate_incidence: bool = True,
    channels: ChannelSet | None = None,
) -> PipelineResult:
    """Train, build the surface configuration, precode, and score true rates."""
    from .channel import synthesize_channels

    if channels is None:
        channels = synthesize_channels(scenario, seed=seed)
    geometry = TrainingGeometry.from_scenario(scenario, region=region)
    sector_cb = build_sector_codebook(geometry, n_sections)
    lobe_cb = build_lobe_codebook(n_lobes)
    table = scenario.panel.table
    sides = scenario.user_sides()
    probe = PowerProbe(channels, noise_power=feedback_noise, seed=seed)
    training = beam_train(
        probe,
        geometry,
        sector_cb,
        lobe_cb,
        table,
        sides,
        seed=seed,
        compensate_incidence=compensate_incidence,
    )

    hat_hi = estimate_steering(training.section_centers, geometry.element_positions, geometry.wavelength)
    targets = np.stack(
        [
            steering_target(lobe_cb.directions[training.lobes[k]], geometry.element_axis_coords, geometry.wavelength)
            for k in range(len(sides))
        ],
        axis=1,
    )
    incident = hat_hi if compensate_incidence else np.ones_like(hat_hi)
    config = construct_Q(targets, incident, table, sides)

    h_eq = _model_equivalent_channel(training, geometry, lobe_cb, config, sides)
    k_count = len(sides)
    try:
        if precoder == "zf":
            digital = zero_forcing(h_eq, 1.0).matrix
        elif precoder == "mmse":
            digital = mmse_precoder(h_eq, 1.0, scenario.noise_power_w).matrix
        else:
            raise ValueError(f"unknown precoder {precoder!r}")
    except RankDeficiencyError:
        digital = np.eye(k_count, dtype=complex) / math.sqrt(k_count)
    full = training.analog_precoder @ digital
    norm = math.sqrt(float(np.sum(np.abs(full) ** 2)))
    if norm < 1e-300:
        raise InfeasibleError("trained precoder carries no power")
    full *= math.sqrt(scenario.bs.tx_power_w) / norm
    bform = Beamformer(matrix=full, power_budget=scenario.bs.tx_power_w)
    _, rates, total = sinr_and_rates(channels, config, bform, scenario.noise_power_w)
    return PipelineResult(
        sum_rate=total,
        per_user_rates=rates,
        training_count=training.training_count,
        config=config,
        beamformer=bform,
        training=training,
    )


def trace_to_csv(trace) -> str:
    """Render training trace rows as `round,codeword_id,user,rx_power_dbm` CSV."""
    lines = ["round,codeword_id,user,rx_power_dbm"]
    for rnd, cid, user, dbm in trace:
        lines.append(f"{rnd},{cid},{user},{dbm:.6f}")
    return "\n".join(lines) + "\n"
