"""Far-field scatter patterns of a configured surface and beam-shape metrics.

The panel is scanned along a circle in the plane spanned by its column axis
and its normal; an elevation angle tilts the scan direction out of that
plane.  For each direction the per-transmit-antenna field is the coherent
sum of one spherical-wave hop from the antenna to every element, the
element's complex response for that side, the element radiation gains of
the arrival and departure angles, and a plane-wave departure phase.
Patterns are relative: they are meant to be normalized to their own peak.

Scan-angle convention: with the transmitter on the positive-normal side of
the panel, scan angles in (0, 180) degrees cover the transmitter's own
half-space (reflection) and angles in (180, 360) the opposite half-space
(refraction).  Directions lying in the panel plane radiate nothing, since
the element pattern vanishes at grazing angles.

Grid points are mutually independent and may be evaluated concurrently;
this implementation evaluates them in a deterministic order.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .channel import FOUR_PI, Scenario, effective_area_mask
from .element import REFLECT, REFRACT, PhaseConfig

__all__ = [
    "PatternError",
    "PatternGrid",
    "PatternMetrics",
    "direction_vector",
    "element_field",
    "beam_pattern",
    "pattern_metrics",
    "steer_config",
    "pattern_csv",
]

# relative powers below this floor clamp to a finite dB value in CSV output
_DB_FLOOR = 1e-30


class PatternError(ValueError):
    """Invalid scan grid, or a pattern without usable lobe structure."""


@dataclass(frozen=True, eq=False)
class PatternGrid:
    """Sampled radiated power over scan angle x elevation.

    psi_deg: (P,) scan angles in degrees, strictly increasing.
    phi_deg: (Q,) elevation angles in degrees, strictly increasing.
    power:   (P, Q) linear relative power, nonnegative.
    """

    psi_deg: np.ndarray
    phi_deg: np.ndarray
    power: np.ndarray

    def __post_init__(self) -> None:
        psi = np.atleast_1d(np.asarray(self.psi_deg, dtype=float))
        phi = np.atleast_1d(np.asarray(self.phi_deg, dtype=float))
        pwr = np.asarray(self.power, dtype=float)
        if psi.size == 0 or phi.size == 0:
            raise PatternError("scan grid must be nonempty")
        if psi.ndim != 1 or phi.ndim != 1:
            raise PatternError("grid axes must be one-dimensional")
        if np.any(np.diff(psi) <= 0) or np.any(np.diff(phi) <= 0):
            raise PatternError("grid angles must be strictly increasing")
        if pwr.shape != (psi.size, phi.size):
            raise PatternError(
                f"power shape {pwr.shape} does not match grid "
                f"({psi.size}, {phi.size})"
            )
        if np.any(pwr < 0) or not np.all(np.isfinite(pwr)):
            raise PatternError("power must be finite and nonnegative")
        object.__setattr__(self, "psi_deg", psi)
        object.__setattr__(self, "phi_deg", phi)
        object.__setattr__(self, "power", pwr)

    @property
    def n_points(self) -> int:
        return self.power.size

    def normalized_db(self) -> np.ndarray:
        """(P, Q) relative power in dB with the peak at 0 dB."""
        peak = float(self.power.max())
        if peak <= 0.0:
            raise PatternError("pattern is identically zero; cannot normalize")
        rel = np.maximum(self.power / peak, _DB_FLOOR)
        return 10.0 * np.log10(rel)


@dataclass(frozen=True)
class PatternMetrics:
    """Beam-shape summary of the scan-angle cut through the pattern peak.

    main_lobe_deg: scan angle of the peak (ties resolve to the lowest angle).
    hpbw_deg: contiguous angular width around the peak where the power stays
        at or above half the peak; a single hot sample spans one grid cell.
    sll_db: largest peak outside that contiguous span, relative to the main
        lobe (<= 0); negative infinity when nothing lies outside the span.
    phi_cut_deg: elevation of the evaluated cut.
    """

    main_lobe_deg: float
    hpbw_deg: float
    sll_db: float
    phi_cut_deg: float


# --- geometry ---------------------------------------------------------------------


def direction_vector(
    scenario: Scenario, psi_deg: float, phi_deg: float = 0.0
) -> np.ndarray:
    """Unit direction in global coordinates for one (scan, elevation) pair.

    The scan angle psi rotates from the panel's column axis (psi = 0) through
    the positive normal (psi = 90 degrees) and back; the elevation phi tilts
    toward the panel's row axis.
    """
    x_hat, y_hat, normal = scenario.panel_frame()
    psi = math.radians(psi_deg)
    phi = math.radians(phi_deg)
    in_plane = math.cos(psi) * x_hat + math.sin(psi) * normal
    return math.cos(phi) * in_plane + math.sin(phi) * y_hat


def _direction_side(scenario: Scenario, u: np.ndarray) -> Optional[str]:
    """'reflect' when the direction leaves toward the transmitter's half-space.

    Returns None for directions in the panel plane (no radiated field).
    """
    _, _, normal = scenario.panel_frame()
    out = float(u @ normal)
    if abs(out) < 1e-12:
        return None
    center = np.asarray(scenario.panel.center, dtype=float)
    bs_off = float((np.asarray(scenario.bs.position, dtype=float) - center) @ normal)
    return REFLECT if (out > 0.0) == (bs_off > 0.0) else REFRACT


def _incident_terms(scenario: Scenario) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Direction-independent pieces: incident (M, N), arrival weights, mask."""
    lam = scenario.wavelength
    ref = lam / FOUR_PI
    elems = scenario.element_positions()
    ants = scenario.bs_antenna_positions()
    d = np.linalg.norm(elems[:, None, :] - ants[None, :, :], axis=2)
    phase = np.exp(-1j * 2.0 * math.pi / lam * d)
    incident = (ref / d) * phase if scenario.pathloss_mode == "scatter" else phase

    bs_center = np.asarray(scenario.bs.position, dtype=float)
    to_bs = bs_center[None, :] - elems
    to_bs /= np.linalg.norm(to_bs, axis=1)[:, None]
    _, _, normal = scenario.panel_frame()
    gain_bs = np.abs(to_bs @ normal) ** scenario.radiation_exponent

    if scenario.tx_beamwidth_deg is not None:
        active = effective_area_mask(scenario, scenario.tx_beamwidth_deg)
    else:
        active = np.ones(elems.shape[0], dtype=bool)
    return incident, np.where(active, np.sqrt(gain_bs), 0.0), active


def _departure_terms(
    scenario: Scenario, u: np.ndarray, radius: Optional[float]
) -> tuple[np.ndarray, np.ndarray]:
    """Departure phases (M,) and amplitude-gain weights (M,) for one direction.

    With `radius` set, the field is evaluated at the point `center + radius*u`
    using exact per-element distances (spherical departure waves); otherwise
    plane-wave departure phases are used (far field).
    """
    lam = scenario.wavelength
    elems = scenario.element_positions()
    _, _, normal = scenario.panel_frame()
    q = scenario.radiation_exponent
    if radius is None:
        depart = np.exp(1j * 2.0 * math.pi / lam * (elems @ u))
        g_out = abs(float(u @ normal)) ** q
        return depart, np.full(elems.shape[0], math.sqrt(g_out))
    if radius <= 0:
        raise PatternError("scan radius must be positive")
    point = np.asarray(scenario.panel.center, dtype=float) + radius * u
    rel = point[None, :] - elems
    dist = np.linalg.norm(rel, axis=1)
    if np.any(dist < 1e-9):
        raise PatternError("scan point coincides with a surface element")
    depart = np.exp(-1j * 2.0 * math.pi / lam * dist)
    if scenario.pathloss_mode == "scatter":
        depart = depart * (lam / FOUR_PI / dist)
    g_out = np.abs((rel / dist[:, None]) @ normal) ** q
    return depart, np.sqrt(g_out)


# --- field and pattern ------------------------------------------------------------


def element_field(
    scenario: Scenario,
    config: PhaseConfig,
    direction: Sequence[float],
    radius: Optional[float] = None,
) -> np.ndarray:
    """Per-transmit-antenna complex field radiated toward one direction.

    `direction` is a (scan_deg, elevation_deg) pair.  Entry k superposes,
    over all surface elements, the spherical-wave arrival from transmit
    antenna k, the element's complex response for the direction's side, the
    element radiation gains of both hops, and the departure phase toward the
    direction.  Directions in the panel plane yield a zero field.
    """
    psi_deg, phi_deg = float(direction[0]), float(direction[1])
    u = direction_vector(scenario, psi_deg, phi_deg)
    side = _direction_side(scenario, u)
    n_ant = scenario.bs.n_antennas
    if side is None:
        return np.zeros(n_ant, dtype=np.complex128)
    if len(config) != scenario.n_elements:
        raise PatternError(
            f"config has {len(config)} states for {scenario.n_elements} elements"
        )
    incident, arrive_w, _ = _incident_terms(scenario)
    depart, depart_w = _departure_terms(scenario, u, radius)
    coeff = config.q_values(side) * arrive_w * depart_w * depart
    return coeff @ incident


def beam_pattern(
    scenario: Scenario,
    config: PhaseConfig,
    precoder: np.ndarray,
    psi_deg: Optional[Sequence[float]] = None,
    phi_deg: Optional[Sequence[float]] = None,
    radius: Optional[float] = None,
) -> PatternGrid:
    """Radiated power |sum_k E_k v_k|^2 over a scan grid.

    The default grid sweeps the full circle in 1-degree steps (both
    half-spaces) at zero elevation.  `precoder` holds one complex transmit
    weight per antenna; scaling it by a global phase leaves the pattern
    unchanged.  `radius` switches to finite-distance evaluation (see
    `element_field`).
    """
    if psi_deg is None:
        psi_deg = np.arange(0.5, 360.0, 1.0)
    if phi_deg is None:
        phi_deg = np.array([0.0])
    psi = np.atleast_1d(np.asarray(psi_deg, dtype=float))
    phi = np.atleast_1d(np.asarray(phi_deg, dtype=float))
    if psi.size == 0 or phi.size == 0:
        raise PatternError("scan grid must be nonempty")
    v = np.asarray(precoder, dtype=np.complex128).reshape(-1)
    if v.shape[0] != scenario.bs.n_antennas:
        raise PatternError(
            f"precoder has {v.shape[0]} weights for {scenario.bs.n_antennas} antennas"
        )
    power = np.empty((psi.size, phi.size), dtype=float)
    for i, pv in enumerate(psi):
        for j, fv in enumerate(phi):
            e = element_field(scenario, config, (pv, fv), radius=radius)
            power[i, j] = abs(complex(e @ v)) ** 2
    return PatternGrid(psi_deg=psi, phi_deg=phi, power=power)


# --- metrics ----------------------------------------------------------------------


def _cell_edges(grid_deg: np.ndarray) -> np.ndarray:
    """Midpoint cell boundaries; edge cells extend by the adjacent half-gap."""
    mids = (grid_deg[:-1] + grid_deg[1:]) / 2.0
    first = grid_deg[0] - (grid_deg[1] - grid_deg[0]) / 2.0
    last = grid_deg[-1] + (grid_deg[-1] - grid_deg[-2]) / 2.0
    return np.concatenate(([first], mids, [last]))


def pattern_metrics(grid: PatternGrid) -> PatternMetrics:
    """Main-lobe direction, half-power beamwidth and sidelobe level.

    Metrics evaluate the scan-angle cut through the global peak.  The
    half-power span is the contiguous run of samples around the peak whose
    power stays at or above half the peak; its width sums the grid cells the
    run covers, so a single hot sample spans exactly one cell.  The sidelobe
    level compares the strongest sample outside that run against the peak.
    A flat pattern has no defined lobes and raises `PatternError`.
    """
    pwr = grid.power
    if float(pwr.max()) == float(pwr.min()):
        raise PatternError("flat pattern: main lobe undefined")
    if grid.psi_deg.size < 2:
        raise PatternError("beam metrics need at least two scan angles")
    flat_idx = int(np.argmax(pwr))
    i_max, j_max = np.unravel_index(flat_idx, pwr.shape)
    cut = pwr[:, j_max]
    peak = float(cut[i_max])
    half = peak / 2.0

    lo = int(i_max)
    while lo > 0 and cut[lo - 1] >= half:
        lo -= 1
    hi = int(i_max)
    while hi < cut.size - 1 and cut[hi + 1] >= half:
        hi += 1

    edges = _cell_edges(grid.psi_deg)
    hpbw = float(edges[hi + 1] - edges[lo])

    outside = np.concatenate((cut[:lo], cut[hi + 1 :]))
    if outside.size == 0 or float(outside.max()) <= 0.0:
        sll = float("-inf")
    else:
        sll = 10.0 * math.log10(float(outside.max()) / peak)

    return PatternMetrics(
        main_lobe_deg=float(grid.psi_deg[i_max]),
        hpbw_deg=hpbw,
        sll_db=sll,
        phi_cut_deg=float(grid.phi_deg[j_max]),
    )


# --- steering ---------------------------------------------------------------------


def steer_config(
    scenario: Scenario,
    target: Sequence[float],
    precoder: Optional[np.ndarray] = None,
    sweeps: int = 3,
) -> tuple[PhaseConfig, np.ndarray]:
    """Pick element states (and optionally transmit weights) that aim the beam.

    `target` is a (scan_deg, elevation_deg) pair.  Element states are chosen
    by coordinate ascent on the radiated power toward the target: each pass
    re-picks every element's state to maximize the coherent field magnitude
    given all others.  When `precoder` is None the transmit weights are
    re-matched to the field after every pass; otherwise the given weights are
    held fixed.  Returns the configuration and the unit-norm transmit weights.
    """
    if sweeps < 1:
        raise PatternError("sweeps must be >= 1")
    psi_deg, phi_deg = float(target[0]), float(target[1])
    u = direction_vector(scenario, psi_deg, phi_deg)
    side = _direction_side(scenario, u)
    if side is None:
        raise PatternError("steering target lies in the panel plane")
    incident, arrive_w, _ = _incident_terms(scenario)
    depart, depart_w = _departure_terms(scenario, u, None)
    # terms[m, k]: field of antenna k if element m had unit response
    terms = (arrive_w * depart_w * depart)[:, None] * incident

    table = scenario.panel.table
    gammas = table.coefficients(side)
    m_count = scenario.n_elements
    n_ant = scenario.bs.n_antennas

    if precoder is not None:
        v = np.asarray(precoder, dtype=np.complex128).reshape(-1)
        if v.shape[0] != n_ant:
            raise PatternError(
                f"precoder has {v.shape[0]} weights for {n_ant} antennas"
            )
        v = v / np.linalg.norm(v)
    else:
        v = np.full(n_ant, 1.0 / math.sqrt(n_ant), dtype=np.complex128)

    states = np.zeros(m_count, dtype=np.int64)
    for _ in range(sweeps):
        t = terms @ v  # (M,) per-element field at the target
        contrib = gammas[states] * t
        total = complex(contrib.sum())
        for m in range(m_count):
            rest = total - contrib[m]
            cand = rest + gammas * t[m]
            best = int(np.argmax(np.abs(cand)))
            states[m] = best
            contrib[m] = gammas[best] * t[m]
            total = complex(cand[best])
        if precoder is None:
            field = gammas[states] @ terms  # (N,)
            norm = float(np.linalg.norm(field))
            if norm > 0.0:
                v = np.conj(field) / norm
    return PhaseConfig(table=table, states=states), v


# --- CSV interface ----------------------------------------------------------------


def pattern_csv(grid: PatternGrid) -> str:
    """Rows `psi_deg, phi_deg, power_db`, normalized so the main lobe is 0 dB."""
    db = grid.normalized_db()
    buf = io.StringIO()
    buf.write("psi_deg,phi_deg,power_db\n")
    for i, pv in enumerate(grid.psi_deg):
        for j, fv in enumerate(grid.phi_deg):
            buf.write(f"{pv:.6f},{fv:.6f},{db[i, j]:.6f}\n")
    return buf.getvalue()
