"""Geometry, propagation and channel synthesis.

A scenario pins down one base station, one dual-sided surface panel and a
set of single-antenna users; channel synthesis turns it into deterministic
Rician link matrices.  Per-user effective rows are assembled from a surface
configuration by the cascade helper.

Storage convention: `h_bi[m, n]` carries the physical downlink phase
exp(-j*2*pi*d/lambda).  The per-user vectors `h_iu[k]` and `h_d[k]` are
stored receive-conjugated, i.e. their conjugates carry the physical phase,
so that the Hermitian rows appearing in the cascade (conj(h_iu), conj(h_d))
line up with propagation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal, Optional

import numpy as np

from .element import ElementStateTable, PhaseConfig, REFLECT, REFRACT, two_state_pin_table

C0 = 299_792_458.0
FOUR_PI = 4.0 * math.pi

PathlossMode = Literal["scatter", "lens"]


class ScenarioError(ValueError):
    """Invalid scenario geometry or parameters."""


# --- scenario types ---------------------------------------------------------

Vec3 = tuple[float, float, float]


def _as_vec3(value) -> Vec3:
    arr = tuple(float(v) for v in value)
    if len(arr) != 3:
        raise ScenarioError(f"expected a 3-vector, got {value!r}")
    return arr


@dataclass(frozen=True)
class BaseStation:
    """Transmit array: uniform linear, spacing defaults to half a wavelength."""

    position: Vec3
    n_antennas: int = 4
    tx_power_w: float = 1.0
    antenna_spacing: Optional[float] = None
    axis: Vec3 = (1.0, 0.0, 0.0)


@dataclass(frozen=True)
class SurfacePanel:
    """Rectangular element grid; elements indexed row-major (row * cols + col)."""

    center: Vec3
    normal: Vec3
    rows: int
    cols: int
    pitch_x: float
    pitch_y: float
    table: ElementStateTable = field(default_factory=two_state_pin_table)


@dataclass(frozen=True)
class UserTerminal:
    position: Vec3
    n_antennas: int = 1
    direct_blocked: bool = False
    # amplitude multiplier on the direct link; models partial obstructions
    # (e.g. wall penetration) without killing the path entirely
    direct_amp_scale: float = 1.0


@dataclass(frozen=True)
class Scenario:
    bs: BaseStation
    panel: SurfacePanel
    users: tuple[UserTerminal, ...]
    carrier_hz: float
    noise_power_w: float
    kappa: float = 4.0
    radiation_exponent: float = 3.0
    pathloss_mode: str = "scatter"
    tx_beamwidth_deg: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "users", tuple(self.users))
        self.validate()

    # -- validation ---------------------------------------------------------

    def validate(self) -> None:
        if self.carrier_hz <= 0:
            raise ScenarioError("carrier_hz must be positive")
        if self.noise_power_w <= 0:
            raise ScenarioError("noise_power_w must be positive")
        if self.kappa < 0:
            raise ScenarioError("kappa must be nonnegative")
        if self.radiation_exponent < 0:
            raise ScenarioError("radiation_exponent must be nonnegative")
        if self.pathloss_mode not in ("scatter", "lens"):
            raise ScenarioError(
                f"pathloss_mode must be 'scatter' or 'lens', got {self.pathloss_mode!r}"
            )
        if self.tx_beamwidth_deg is not None and not 0 < self.tx_beamwidth_deg <= 360:
            raise ScenarioError("tx_beamwidth_deg must lie in (0, 360]")
        if self.bs.n_antennas < 1:
            raise ScenarioError("bs.n_antennas must be >= 1")
        if self.bs.tx_power_w <= 0:
            raise ScenarioError("bs.tx_power_w must be positive")
        if self.bs.antenna_spacing is not None and self.bs.antenna_spacing <= 0:
            raise ScenarioError("bs.antenna_spacing must be positive")
        p = self.panel
        if p.rows < 1 or p.cols < 1:
            raise ScenarioError("panel rows/cols must be >= 1")
        if p.pitch_x <= 0 or p.pitch_y <= 0:
            raise ScenarioError("panel pitch must be positive")
        n = np.asarray(p.normal, dtype=float)
        if np.linalg.norm(n) < 1e-12:
            raise ScenarioError("panel normal must be nonzero")
        if not self.users:
            raise ScenarioError("scenario needs at least one user")
        if abs(self._signed_offset(self.bs.position)) < 1e-9:
            raise ScenarioError(
                "base station must sit strictly off the panel plane"
            )
        for i, u in enumerate(self.users):
            if u.n_antennas != 1:
                raise ScenarioError(
                    f"users[{i}].n_antennas must be 1 (single-antenna receivers)"
                )
            if abs(self._signed_offset(u.position)) < 1e-9:
                raise ScenarioError(
                    f"users[{i}] lies on the panel plane; side is undefined"
                )
            if u.direct_amp_scale < 0:
                raise ScenarioError(f"users[{i}].direct_amp_scale must be nonnegative")

    # -- derived geometry -----------------------------------------------------

    @property
    def wavelength(self) -> float:
        return C0 / self.carrier_hz

    @property
    def n_elements(self) -> int:
        return self.panel.rows * self.panel.cols

    @property
    def n_users(self) -> int:
        return len(self.users)

    def _unit_normal(self) -> np.ndarray:
        n = np.asarray(self.panel.normal, dtype=float)
        return n / np.linalg.norm(n)

    def _signed_offset(self, position) -> float:
        rel = np.asarray(position, dtype=float) - np.asarray(self.panel.center, dtype=float)
        return float(rel @ self._unit_normal())

    def panel_frame(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Orthonormal (x_hat, y_hat, normal) frame of the panel.

        x_hat spans the columns, y_hat the rows; chosen deterministically by
        projecting the global x axis (or y, when the normal is x-aligned)
        onto the panel plane.
        """
        n = self._unit_normal()
        seed = np.array([1.0, 0.0, 0.0])
        if abs(seed @ n) > 0.999:
            seed = np.array([0.0, 1.0, 0.0])
        x_hat = seed - (seed @ n) * n
        x_hat /= np.linalg.norm(x_hat)
        y_hat = np.cross(n, x_hat)
        return x_hat, y_hat, n

    def element_positions(self) -> np.ndarray:
        """(M, 3) element centers, row-major over (rows, cols)."""
        x_hat, y_hat, _ = self.panel_frame()
        center = np.asarray(self.panel.center, dtype=float)
        rows, cols = self.panel.rows, self.panel.cols
        col_off = (np.arange(cols) - (cols - 1) / 2.0) * self.panel.pitch_x
        row_off = (np.arange(rows) - (rows - 1) / 2.0) * self.panel.pitch_y
        pos = (
            center[None, None, :]
            + row_off[:, None, None] * y_hat[None, None, :]
            + col_off[None, :, None] * x_hat[None, None, :]
        )
        return pos.reshape(rows * cols, 3)

    def element_plane_coords(self) -> np.ndarray:
        """(M, 2) in-plane (x, y) coordinates of the elements."""
        x_hat, y_hat, _ = self.panel_frame()
        rel = self.element_positions() - np.asarray(self.panel.center, dtype=float)
        return np.stack([rel @ x_hat, rel @ y_hat], axis=1)

    def bs_antenna_positions(self) -> np.ndarray:
        """(N, 3) antenna centers of the transmit ULA."""
        spacing = self.bs.antenna_spacing or self.wavelength / 2.0
        axis = np.asarray(self.bs.axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        n = self.bs.n_antennas
        offs = (np.arange(n) - (n - 1) / 2.0) * spacing
        return np.asarray(self.bs.position, dtype=float)[None, :] + offs[:, None] * axis[None, :]

    def panel_extent(self) -> tuple[float, float]:
        """Physical (width, height) of the element grid."""
        return self.panel.cols * self.panel.pitch_x, self.panel.rows * self.panel.pitch_y

    def user_side(self, k: int) -> str:
        """'reflect' when user k shares the base station's side, else 'refract'."""
        same = self._signed_offset(self.users[k].position) * self._signed_offset(self.bs.position)
        return REFLECT if same > 0 else REFRACT

    def user_sides(self) -> tuple[str, ...]:
        return tuple(self.user_side(k) for k in range(self.n_users))


# --- propagation primitives --------------------------------------------------


def radiation_gain(angle: float, exponent: float = 3.0) -> float:
    """Power pattern |cos(angle)|**exponent of an element; zero past 90 degrees.

    `angle` is measured from the surface normal, radians.
    """
    if exponent < 0:
        raise ValueError("exponent must be nonnegative")
    if abs(angle) > math.pi / 2:
        return 0.0
    return abs(math.cos(angle)) ** exponent


def path_loss(mode: str, d1: float, d2: float, wavelength: float) -> float:
    """Two-hop amplitude attenuation through the surface.

    Scatter mode treats the hops independently (amplitude 1/(d1*d2), one
    lambda/4pi reference per hop); lens mode treats the surface as a
    re-focusing aperture (amplitude 1/(d1+d2), one reference in total).
    """
    if d1 <= 0 or d2 <= 0:
        raise ValueError("hop distances must be positive")
    if wavelength <= 0:
        raise ValueError("wavelength must be positive")
    ref = wavelength / FOUR_PI
    if mode == "scatter":
        return ref * ref / (d1 * d2)
    if mode == "lens":
        return ref / (d1 + d2)
    raise ValueError(f"unknown pathloss mode {mode!r}")


def direct_path_amplitude(d: float, wavelength: float) -> float:
    """Free-space single-hop amplitude (lambda/4pi)/d."""
    if d <= 0:
        raise ValueError("distance must be positive")
    return wavelength / FOUR_PI / d


def rayleigh_distance(aperture: float, wavelength: float) -> float:
    """Far-field boundary 2*L**2/lambda of an aperture of size L."""
    if aperture <= 0 or wavelength <= 0:
        raise ValueError("aperture and wavelength must be positive")
    return 2.0 * aperture * aperture / wavelength


def near_field_beam_area(z: float, aperture: float, wavelength: float) -> float:
    """Focal-spot area lambda**2 * (1 + 4*(z/L)**2) at focus distance z."""
    if z < 0:
        raise ValueError("focus distance must be nonnegative")
    if aperture <= 0 or wavelength <= 0:
        raise ValueError("aperture and wavelength must be positive")
    return wavelength**2 * (1.0 + 4.0 * (z / aperture) ** 2)


def classify_field_region(z: float, aperture: float, wavelength: float) -> str:
    """'near', 'boundary' or 'far' relative to the Rayleigh distance."""
    r = rayleigh_distance(aperture, wavelength)
    if z < r:
        return "near"
    if z == r:
        return "boundary"
    return "far"


def effective_area_mask(scenario: Scenario, tx_beamwidth_deg: float) -> np.ndarray:
    """Boolean per-element activity mask under a conical transmit main lobe.

    Beyond the 2*border/wavelength range the whole panel is illuminated and
    every element stays active.  Closer in, only elements inside the cone
    (apex at the base station, axis through the panel center, full opening
    angle `tx_beamwidth_deg`) keep nonzero responses; the cone cuts the
    panel plane in an ellipse.
    """
    if not 0 < tx_beamwidth_deg <= 360:
        raise ScenarioError("tx_beamwidth_deg must lie in (0, 360]")
    bs = np.asarray(scenario.bs.position, dtype=float)
    center = np.asarray(scenario.panel.center, dtype=float)
    d1 = float(np.linalg.norm(center - bs))
    border = max(scenario.panel_extent())
    if d1 > 2.0 * border / scenario.wavelength:
        return np.ones(scenario.n_elements, dtype=bool)
    axis = (center - bs) / d1
    rel = scenario.element_positions() - bs[None, :]
    rel_norm = np.linalg.norm(rel, axis=1)
    cosang = np.clip(rel @ axis / rel_norm, -1.0, 1.0)
    half = math.radians(tx_beamwidth_deg) / 2.0
    return np.arccos(cosang) <= half + 1e-12


# --- synthesized channels ------------------------------------------------


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """Deterministic channel realization for one (scenario, seed) pair.

    h_bi: (M, N) base-station-to-surface matrix.
    h_iu: (K, M) surface-to-user vectors, receive-conjugated.
    h_d: (K, N) direct links, receive-conjugated; zero rows when blocked.
    gain_bs: (M,) element power gains toward the base station.
    gain_user: (K, M) element power gains toward each user.
    sides: per-user 'reflect'/'refract'.
    active: (M,) element activity mask (effective-area restriction).
    """

    scenario: Scenario
    h_bi: np.ndarray
    h_iu: np.ndarray
    h_d: np.ndarray
    gain_bs: np.ndarray
    gain_user: np.ndarray
    sides: tuple[str, ...]
    active: np.ndarray

    @property
    def n_elements(self) -> int:
        return self.h_bi.shape[0]

    @property
    def n_antennas(self) -> int:
        return self.h_bi.shape[1]

    @property
    def n_users(self) -> int:
        return self.h_iu.shape[0]

    def side_gains(self, k: int) -> np.ndarray:
        """Amplitude weights sqrt(G_bs * G_user_k) with the activity mask folded in."""
        g = np.sqrt(self.gain_bs * self.gain_user[k])
        return np.where(self.active, g, 0.0)


def _rician_weights(kappa: float) -> tuple[float, float]:
    if math.isinf(kappa):
        return 1.0, 0.0
    return math.sqrt(kappa / (kappa + 1.0)), math.sqrt(1.0 / (kappa + 1.0))


def synthesize_channels(scenario: Scenario, seed: int) -> ChannelSet:
    """Draw one Rician channel realization.

    Pure function of (scenario, seed): line-of-sight terms follow exact
    geometric distances, the diffuse parts are unit-variance circularly
    symmetric Gaussians drawn in a fixed order (surface matrix first, then
    per user the surface vector and the direct link), mixed with
    sqrt(kappa/(kappa+1)) and sqrt(1/(kappa+1)).
    """
    rng = np.random.default_rng(seed)
    lam = scenario.wavelength
    two_pi_over_lam = 2.0 * math.pi / lam
    mode = scenario.pathloss_mode
    w_los, w_nlos = _rician_weights(scenario.kappa)

    elems = scenario.element_positions()
    ants = scenario.bs_antenna_positions()
    m_count, n_count, k_count = elems.shape[0], ants.shape[0], scenario.n_users
    ref = lam / FOUR_PI

    def cn(shape) -> np.ndarray:
        re = rng.standard_normal(shape)
        im = rng.standard_normal(shape)
        return (re + 1j * im) / np.sqrt(2.0)

    d_bi = np.linalg.norm(elems[:, None, :] - ants[None, :, :], axis=2)
    los_bi = np.exp(-1j * two_pi_over_lam * d_bi)
    amp_bi = ref / d_bi if mode == "scatter" else np.ones_like(d_bi)
    h_bi = amp_bi * (w_los * los_bi + w_nlos * cn((m_count, n_count)))

    bs_center = np.asarray(scenario.bs.position, dtype=float)
    d1_center = np.linalg.norm(elems - bs_center[None, :], axis=1)

    h_iu = np.empty((k_count, m_count), dtype=np.complex128)
    h_d = np.zeros((k_count, n_count), dtype=np.complex128)
    gain_user = np.empty((k_count, m_count))
    normal = scenario._unit_normal()

    to_bs = (bs_center[None, :] - elems) / d1_center[:, None]
    gain_bs = np.abs(to_bs @ normal) ** scenario.radiation_exponent

    for k in range(k_count):
        upos = np.asarray(scenario.users[k].position, dtype=float)
        d_iu = np.linalg.norm(upos[None, :] - elems, axis=1)
        if mode == "scatter":
            amp_iu = ref / d_iu
        else:
            amp_iu = ref / (d1_center + d_iu)
        # stored conjugated: +phase here, the cascade conjugates back
        los_iu = np.exp(1j * two_pi_over_lam * d_iu)
        h_iu[k] = amp_iu * (w_los * los_iu + w_nlos * cn(m_count))

        d_d = np.linalg.norm(ants - upos[None, :], axis=1)
        los_d = np.exp(1j * two_pi_over_lam * d_d)
        draw_d = cn(n_count)
        if not scenario.users[k].direct_blocked:
            scale = scenario.users[k].direct_amp_scale
            h_d[k] = scale * (ref / d_d) * (w_los * los_d + w_nlos * draw_d)

        to_user = (upos[None, :] - elems) / d_iu[:, None]
        gain_user[k] = np.abs(to_user @ normal) ** scenario.radiation_exponent

    if scenario.tx_beamwidth_deg is not None:
        active = effective_area_mask(scenario, scenario.tx_beamwidth_deg)
    else:
        active = np.ones(m_count, dtype=bool)

    return ChannelSet(
        scenario=scenario,
        h_bi=h_bi,
        h_iu=h_iu,
        h_d=h_d,
        gain_bs=gain_bs,
        gain_user=gain_user,
        sides=scenario.user_sides(),
        active=active,
    )


def cascaded_channel(channels: ChannelSet, config: PhaseConfig) -> np.ndarray:
    """Per-user effective rows h_d^H + h_iu^H * Q * h_bi, stacked (K, N).

    Q is diagonal per user: element responses of the user's side scaled by
    the amplitude weights sqrt(G_bs * G_user); masked elements contribute
    nothing.
    """
    if len(config) != channels.n_elements:
        raise ValueError(
            f"config has {len(config)} states for {channels.n_elements} elements"
        )
    rows = np.empty((channels.n_users, channels.n_antennas), dtype=np.complex128)
    q_by_side = {
        REFLECT: config.q_values(REFLECT),
        REFRACT: config.q_values(REFRACT),
    }
    for k in range(channels.n_users):
        q = q_by_side[channels.sides[k]] * channels.side_gains(k)
        rows[k] = np.conj(channels.h_d[k]) + (np.conj(channels.h_iu[k]) * q) @ channels.h_bi
    return rows
