"""Canonical, reproducible scenario builders used by the tests and the CLI.

Every builder returns plain `Scenario` objects (or small setup bundles) with
all geometry, hardware tables, and noise levels pinned, so experiments are
repeatable from a seed alone.  The constants here are the reference operating
points for the acceptance suite; the builders accept overrides where a
parameter sweep is meaningful (element count, user direction, surface type).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .channel import C0, BaseStation, Scenario, SurfacePanel, UserTerminal
from .element import (
    ElementState,
    ElementStateTable,
    discrete_phase_set,
    two_state_pin_table,
    zero_side,
)
from .multicell import CellNetwork, build_network

CANONICAL_CARRIER_HZ = 3.6e9

# Anchor point used by the single-section beam-training scenarios: on the
# base-station-to-surface axis, far enough from both apertures that a beam
# focused there re-expands onto the panel as a clean point-source wavefront.
TRAINING_ANCHOR = (0.0, 1.8, 0.0)


def graded_amplitude_table(
    n_phase_bits: int = 3,
    amplitudes: tuple[float, ...] = (0.7, 0.45, 0.2),
    coupling_deg: float = 100.0,
) -> ElementStateTable:
    """Element table mixing several amplitude levels with a uniform phase grid.

    Beam training needs amplitude diversity: multi-lobe soundings require
    element responses scaled below the maximum so that lobe nulls survive the
    per-element projection.  Both sides share the amplitude; the refraction
    phase tracks the reflection phase with a fixed hardware coupling offset.
    """
    offset = math.radians(coupling_deg)
    states = tuple(
        ElementState(a, p, a, p + offset)
        for a in amplitudes
        for p in discrete_phase_set(n_phase_bits)
    )
    return ElementStateTable(states=states)


@dataclass(frozen=True)
class TrainingSetup:
    """A scenario bundled with the beam-training knobs that belong to it."""

    scenario: Scenario
    region: tuple[tuple[float, float, float], tuple[float, float, float]]
    n_sections: int
    n_lobes: int


def _training_panel() -> SurfacePanel:
    lam = C0 / CANONICAL_CARRIER_HZ
    return SurfacePanel(
        center=(0.0, 0.0, 0.0),
        normal=(0.0, 1.0, 0.0),
        rows=8,
        cols=32,
        pitch_x=lam / 2,
        pitch_y=lam / 2,
        table=graded_amplitude_table(),
    )


def _placed_user(direction_cos: float, side: str, rng: float) -> UserTerminal:
    y = rng * math.sqrt(max(1.0 - direction_cos * direction_cos, 0.0))
    if side == "refract":
        y = -y
    return UserTerminal(position=(direction_cos * rng, y, 0.0), direct_blocked=True)


def training_setup(
    direction_cos: float = 0.35,
    side: str = "reflect",
    *,
    n_lobes: int = 16,
    user_range: float = 20.0,
    noise_power_w: float = 1e-13,
) -> TrainingSetup:
    """Single-user beam-training scenario: one dominant propagation path.

    A 32x8 half-wavelength panel, an 8-antenna base station 3 m in front of
    it, and one far-field user with the direct link blocked.  Pure line of
    sight (infinite Rician factor) makes the via-surface path the single
    dominant one, and the noiseless high-SNR operating point isolates
    protocol losses from noise.  One training section at the canonical
    anchor removes sweep ambiguity.
    """
    bs = BaseStation(position=(0.0, 3.0, 0.0), n_antennas=8)
    user = _placed_user(direction_cos, side, user_range)
    scenario = Scenario(
        bs=bs,
        panel=_training_panel(),
        users=(user,),
        carrier_hz=CANONICAL_CARRIER_HZ,
        noise_power_w=noise_power_w,
        kappa=math.inf,
    )
    return TrainingSetup(
        scenario=scenario,
        region=(TRAINING_ANCHOR, TRAINING_ANCHOR),
        n_sections=1,
        n_lobes=n_lobes,
    )


def two_user_training_setup(*, n_lobes: int = 16, noise_power_w: float = 1e-13) -> TrainingSetup:
    """Two users on opposite faces of the panel, trained in one run.

    Four sections tiled around the canonical anchor give the greedy sweep
    distinct codewords to hand out, and the per-user hierarchical stage then
    runs once per user, exercising the full sounding-count formula.
    """
    bs = BaseStation(position=(0.0, 3.0, 0.0), n_antennas=8)
    users = (
        _placed_user(0.35, "reflect", 15.0),
        _placed_user(-0.20, "refract", 12.0),
    )
    scenario = Scenario(
        bs=bs,
        panel=_training_panel(),
        users=users,
        carrier_hz=CANONICAL_CARRIER_HZ,
        noise_power_w=noise_power_w,
        kappa=math.inf,
    )
    return TrainingSetup(
        scenario=scenario,
        region=((-0.2, 1.3, 0.0), (0.2, 2.3, 0.0)),
        n_sections=4,
        n_lobes=n_lobes,
    )


_SURFACE_KINDS = ("ios", "irs", "rrs")


def surface_comparison_scenario(
    surface: str = "ios",
    *,
    m_elements: int = 64,
    noise_power_w: float = 1e-13,
) -> Scenario:
    """Two blocked-direct users on opposite faces of a square panel.

    `surface` picks the hardware: the full dual-face measured table ("ios"),
    or the same table with one face disabled ("irs" reflects only, "rrs"
    refracts only).  Both direct links are blocked, so a disabled face
    silences the far-side user entirely; the high-SNR operating point makes
    serving both users (two moderate log terms) beat dedicating the surface
    to one (a single slightly larger one).  The transmit main lobe has a
    finite 12-degree opening, which fully illuminates panels up to 8x8 at
    the 3 m standoff but clips larger ones, so the rate gain saturates as
    the element count keeps growing.  Element count must be a perfect
    square (square panel).
    """
    if surface not in _SURFACE_KINDS:
        raise ValueError(f"surface must be one of {_SURFACE_KINDS}, got {surface!r}")
    side_count = math.isqrt(m_elements)
    if side_count * side_count != m_elements:
        raise ValueError(f"m_elements must be a perfect square, got {m_elements}")
    table = two_state_pin_table()
    if surface == "irs":
        table = zero_side(table, "refract")
    elif surface == "rrs":
        table = zero_side(table, "reflect")
    lam = C0 / CANONICAL_CARRIER_HZ
    panel = SurfacePanel(
        center=(0.0, 0.0, 0.0),
        normal=(0.0, 1.0, 0.0),
        rows=side_count,
        cols=side_count,
        pitch_x=lam / 2,
        pitch_y=lam / 2,
        table=table,
    )
    bs = BaseStation(position=(0.0, 3.0, 0.0), n_antennas=4)
    users = (
        UserTerminal(position=(1.2, 2.0, 0.0), direct_blocked=True),
        UserTerminal(position=(-3.0, -6.0, 0.0), direct_blocked=True),
    )
    return Scenario(
        bs=bs,
        panel=panel,
        users=users,
        carrier_hz=CANONICAL_CARRIER_HZ,
        noise_power_w=noise_power_w,
        kappa=4.0,
        tx_beamwidth_deg=12.0,
    )


def element_scaling_scenario(m_elements: int, *, noise_power_w: float = 1e-13) -> Scenario:
    """The surface-comparison scenario at a given element count (full IOS)."""
    return surface_comparison_scenario("ios", m_elements=m_elements, noise_power_w=noise_power_w)


def _panel_shape(m_elements: int) -> tuple[int, int]:
    """Most-square rows x cols factorisation of an element count."""
    rows = math.isqrt(m_elements)
    while m_elements % rows:
        rows -= 1
    return rows, m_elements // rows


def two_room_network(
    m_elements: int = 64,
    *,
    kappa: float = 300.0,
    noise_power_w: float = 1e-10,
    wall_amp: float = 0.02,
) -> CellNetwork:
    """Two access points in adjoining rooms, sharing one panel in the wall.

    The panel sits in the party wall (its plane), with one access point and
    one served user per room, point-symmetric about the panel centre.  Each
    AP's signal reaches the far room two ways: direct leakage through the
    wall (amplitude `wall_amp`, -34 dB in power at the default) and the
    controllable refraction path through the panel.  The refraction cascade
    at under a metre of standoff comfortably exceeds the leakage, so a
    negotiated configuration can cancel the interference it can estimate.

    Strong line of sight (`kappa`) keeps the geometry-only interference
    estimates the APs exchange close to the truth, and the noise floor is
    placed roughly 12 dB below the leakage power: interference suppression
    beyond the noise floor buys no rate, so the negotiation pushes every
    user's interference down to it rather than trading one user's isolation
    for another's.  The two-state element hardware keeps small panels
    exhaustively searchable for oracle comparisons.
    """
    rows, cols = _panel_shape(m_elements)
    lam = C0 / CANONICAL_CARRIER_HZ
    panel = SurfacePanel(
        center=(0.0, 0.0, 0.0),
        normal=(0.0, 1.0, 0.0),
        rows=rows,
        cols=cols,
        pitch_x=lam / 2,
        pitch_y=lam / 2,
        table=two_state_pin_table(),
    )
    aps = [
        BaseStation(position=(-0.8, 2.2, 0.0), n_antennas=4, tx_power_w=1.0),
        BaseStation(position=(0.8, -2.2, 0.0), n_antennas=4, tx_power_w=1.0),
    ]
    groups = [
        [UserTerminal(position=(0.9, 0.8, 0.0))],
        [UserTerminal(position=(-0.9, -0.9, 0.0))],
    ]
    return build_network(
        aps,
        groups,
        panel,
        carrier_hz=CANONICAL_CARRIER_HZ,
        noise_power_w=noise_power_w,
        kappa=kappa,
        cross_wall_amp=wall_amp,
    )


def pattern_stripe_scenario(
    *,
    rows: int = 8,
    cols: int = 80,
    bs_distance: float = 3.0,
    n_antennas: int = 2,
    table: ElementStateTable | None = None,
) -> Scenario:
    """Anechoic beam-pattern measurement rig: a wide active stripe of elements.

    The live aperture is a short, wide stripe (all other panel rows are
    treated as absorber-covered, i.e. simply not modelled), illuminated from
    a transmitter a few metres away on the positive-normal side.  The scan
    circle lies in the horizontal plane through the stripe, so scan angles in
    (0, 180) degrees land on the transmitter's side and (180, 360) behind the
    panel.  Defaults give a 640-element stripe with the measured two-state
    element table at the 3.6 GHz design frequency.
    """
    lam = C0 / CANONICAL_CARRIER_HZ
    panel = SurfacePanel(
        center=(0.0, 0.0, 0.0),
        normal=(0.0, 1.0, 0.0),
        rows=rows,
        cols=cols,
        pitch_x=lam / 2,
        pitch_y=lam / 2,
        table=table if table is not None else two_state_pin_table(),
    )
    bs = BaseStation(
        position=(0.0, bs_distance, 0.0),
        n_antennas=n_antennas,
        tx_power_w=1.0,
    )
    # pattern scans never synthesize fading; the user is only scenario ballast
    probe_user = UserTerminal(position=(0.0, -2.0, 0.0))
    return Scenario(
        bs=bs,
        panel=panel,
        users=(probe_user,),
        carrier_hz=CANONICAL_CARRIER_HZ,
        noise_power_w=1e-10,
        kappa=math.inf,
    )
