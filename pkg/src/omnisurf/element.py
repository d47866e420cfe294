"""Dual-sided surface element models.

An element simultaneously reflects and refracts an incident wave; each
hardware state fixes one amplitude/phase pair per side.  Passivity requires
the two power fractions to sum to at most one.  The equivalent-circuit path
reproduces the coefficient pairs of a diode-tuned unit cell from lumped
component values via a five-stage two-port cascade.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

REFLECT = "reflect"
REFRACT = "refract"
_SIDES = (REFLECT, REFRACT)

TWO_PI = 2.0 * math.pi


class CircuitError(ValueError):
    """Degenerate component values or a singular two-port network."""


def _canonical_phase(phase: float) -> float:
    """Map a phase in radians onto [0, 2*pi)."""
    p = math.fmod(phase, TWO_PI)
    if p < 0.0:
        p += TWO_PI
    # fmod can return 2*pi for inputs a hair below a multiple of 2*pi
    return 0.0 if p >= TWO_PI else p


@dataclass(frozen=True)
class ElementState:
    """One hardware state: amplitude and phase per side (radians)."""

    refl_amp: float
    refl_phase: float
    refr_amp: float
    refr_phase: float

    def __post_init__(self) -> None:
        if self.refl_amp < 0.0 or self.refr_amp < 0.0:
            raise ValueError("amplitudes must be nonnegative")
        power = self.refl_amp**2 + self.refr_amp**2
        if power > 1.0:
            raise ValueError(
                f"insertion bound violated: refl_amp^2 + refr_amp^2 = {power:.6g} > 1"
            )
        object.__setattr__(self, "refl_phase", _canonical_phase(self.refl_phase))
        object.__setattr__(self, "refr_phase", _canonical_phase(self.refr_phase))

    def coefficient(self, side: str) -> complex:
        if side == REFLECT:
            return self.refl_amp * cmath.exp(1j * self.refl_phase)
        if side == REFRACT:
            return self.refr_amp * cmath.exp(1j * self.refr_phase)
        raise ValueError(f"unknown side {side!r}, expected 'reflect' or 'refract'")


@dataclass(frozen=True)
class ElementStateTable:
    """Finite list of achievable element states, shared by all elements."""

    states: tuple[ElementState, ...]

    def __post_init__(self) -> None:
        if not self.states:
            raise ValueError("state table must contain at least one state")
        object.__setattr__(self, "states", tuple(self.states))

    def __len__(self) -> int:
        return len(self.states)

    def coefficient(self, state: int, side: str) -> complex:
        if not 0 <= state < len(self.states):
            raise IndexError(
                f"state index {state} out of range for table of {len(self.states)} states"
            )
        return self.states[state].coefficient(side)

    def coefficients(self, side: str) -> np.ndarray:
        """All per-state coefficients for one side as a complex vector."""
        return np.array([s.coefficient(side) for s in self.states], dtype=np.complex128)


def coefficient(table: ElementStateTable, state: int, side: str) -> complex:
    """Complex response of an element in `state` for the given side."""
    return table.coefficient(state, side)


def two_state_pin_table() -> ElementStateTable:
    """Measured two-state table of the fabricated diode-tuned prototype.

    State 0 is the diodes-off reference, state 1 diodes-on; amplitudes are
    linear, phases were measured in degrees at the 3.6 GHz design frequency.
    """
    return ElementStateTable(
        states=(
            ElementState(0.46, math.radians(20.0), 0.58, math.radians(300.0)),
            ElementState(0.55, math.radians(215.0), 0.81, math.radians(123.0)),
        )
    )


def zero_side(table: ElementStateTable, side: str) -> ElementStateTable:
    """Copy of `table` with one side's amplitudes forced to zero.

    Zeroing the refraction side degrades the surface to reflect-only
    operation; zeroing the reflection side to refract-only.
    """
    if side not in _SIDES:
        raise ValueError(f"unknown side {side!r}")
    states = []
    for s in table.states:
        if side == REFLECT:
            states.append(ElementState(0.0, s.refl_phase, s.refr_amp, s.refr_phase))
        else:
            states.append(ElementState(s.refl_amp, s.refl_phase, 0.0, s.refr_phase))
    return ElementStateTable(states=tuple(states))


@dataclass(frozen=True, eq=False)
class PhaseConfig:
    """Surface configuration: one table-state index per element.

    Both sides of every element are set by the single index (the hardware
    couples them), so reflect and refract responses are always read from the
    same row of the table.
    """

    table: ElementStateTable
    states: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.states, dtype=np.int64).copy()
        if arr.ndim != 1:
            raise ValueError("states must be a 1-D index vector")
        if arr.size and (arr.min() < 0 or arr.max() >= len(self.table)):
            raise ValueError(
                f"state indices must lie in [0, {len(self.table)}), got "
                f"[{arr.min()}, {arr.max()}]"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "states", arr)

    def __len__(self) -> int:
        return int(self.states.size)

    def q_values(self, side: str) -> np.ndarray:
        """Per-element complex responses for one side."""
        return self.table.coefficients(side)[self.states]


# --- discrete phase grids -------------------------------------------------


def discrete_phase_set(n_bits: int) -> np.ndarray:
    """Uniform grid of 2**n_bits phases with spacing pi / 2**(n_bits - 1)."""
    if n_bits < 1:
        raise ValueError("n_bits must be >= 1")
    step = math.pi / 2 ** (n_bits - 1)
    return np.arange(2**n_bits) * step


def coupled_phase_table(
    n_bits: int,
    offset: float,
    refl_amp: float,
    refr_amp: float,
) -> ElementStateTable:
    """Grid table whose refraction phase trails the reflection phase by `offset`.

    Models hardware where both sides are tuned by one control with a fixed
    inter-side phase gap: reflection phases lie on the discrete grid and
    every state satisfies refr_phase - refl_phase = offset (mod 2*pi).
    """
    phases = discrete_phase_set(n_bits)
    states = tuple(
        ElementState(refl_amp, p, refr_amp, p + offset) for p in phases
    )
    return ElementStateTable(states=states)


# --- table file I/O -------------------------------------------------------


def load_state_table(path: str) -> ElementStateTable:
    """Read a plain-text state table.

    One state per line: `refl_amp refl_phase_deg refr_amp refr_phase_deg`,
    whitespace separated; `#` starts a comment.  Phases are degrees in the
    file and radians in memory.
    """
    states = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(
                    f"{path}:{lineno}: expected 4 columns "
                    f"(refl_amp refl_phase_deg refr_amp refr_phase_deg), got {len(parts)}"
                )
            try:
                ra, rp, ta, tp = (float(p) for p in parts)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric value ({exc})") from None
            states.append(ElementState(ra, math.radians(rp), ta, math.radians(tp)))
    if not states:
        raise ValueError(f"{path}: no states found")
    return ElementStateTable(states=tuple(states))


def save_state_table(table: ElementStateTable, path: str) -> None:
    """Write a state table in the plain-text format of load_state_table."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# refl_amp refl_phase_deg refr_amp refr_phase_deg\n")
        for s in table.states:
            fh.write(
                f"{s.refl_amp!r} {math.degrees(s.refl_phase)!r} "
                f"{s.refr_amp!r} {math.degrees(s.refr_phase)!r}\n"
            )


# --- equivalent circuit ---------------------------------------------------


@dataclass(frozen=True)
class DiodeBranch:
    """Per-state series impedance of the tuning diode.

    On: small resistance in series with an inductance.  Off: a junction
    capacitance.  Values are ohms, henries, farads.
    """

    r_on: float
    l_on: float
    c_off: float

    def impedance(self, on: bool, omega: float) -> complex:
        if on:
            return complex(self.r_on, omega * self.l_on)
        if self.c_off <= 0.0:
            raise CircuitError("diode off-capacitance must be positive")
        return complex(0.0, -1.0 / (omega * self.c_off))


@dataclass(frozen=True)
class CircuitParams:
    """Lumped model of one unit cell.

    Two parallel series-RLC branches plus the diode form the (identical)
    upper and lower pattern layers; a third series-RLC branch models the
    middle layer; ys1/ys2 are the substrate-layer admittances.  z0 is the
    port reference impedance, d1/d2 the reference-plane offsets (meters)
    and beta the propagation constant (rad/m) used to de-embed phases.
    """

    r1: float
    l1: float
    c1: float
    r2: float
    l2: float
    c2: float
    r3: float
    l3: float
    c3: float
    ys1: complex
    ys2: complex
    diode: DiodeBranch
    z0: float = 50.0
    d1: float = 0.0
    d2: float = 0.0
    beta: float = 0.0


def _series_rlc_admittance(r: float, l: float, c: float, omega: float) -> complex:
    if c <= 0.0:
        raise CircuitError("series branch capacitance must be positive")
    z = complex(r, omega * l - 1.0 / (omega * c))
    if z == 0:
        raise CircuitError("series branch is resonant with zero loss (infinite admittance)")
    return 1.0 / z


def _recip(y: complex, name: str) -> complex:
    """1/y treating an infinite admittance as a short (reciprocal zero)."""
    y = complex(y)
    if y == 0:
        raise CircuitError(f"{name} is zero: series reciprocal diverges")
    if math.isinf(abs(y)):
        return 0j
    return 1.0 / y


def abcd_from_admittances(
    y_um: complex, y_lm: complex, y_f: complex, ys1: complex, ys2: complex
) -> np.ndarray:
    """Five-stage transmission cascade of the unit cell.

    Shunt upper layer, series substrate, middle-layer pi stage, series
    substrate, shunt lower layer.  Every stage has unit determinant, so the
    product does too.
    """
    inv1 = _recip(ys1, "ys1")
    inv2 = _recip(ys2, "ys2")
    y_um = complex(y_um)
    y_lm = complex(y_lm)
    y_f = complex(y_f)

    m_upper = np.array([[1.0, 0.0], [y_um, 1.0]], dtype=np.complex128)
    m_sub = np.array([[1.0, inv1], [0.0, 1.0]], dtype=np.complex128)
    m_mid = np.array(
        [
            [1.0 + y_f * inv2, inv2],
            [2.0 * y_f + y_f * y_f * inv2, 1.0 + y_f * inv2],
        ],
        dtype=np.complex128,
    )
    m_lower = np.array([[1.0, 0.0], [y_lm, 1.0]], dtype=np.complex128)

    abcd = m_upper @ m_sub @ m_mid @ m_sub @ m_lower
    if not np.all(np.isfinite(abcd.view(np.float64))):
        raise CircuitError("non-finite cascade entries (degenerate admittances)")
    return abcd


def abcd_matrix(params: CircuitParams, diode_on: bool, frequency_hz: float) -> np.ndarray:
    """ABCD matrix of the cell for one diode state at `frequency_hz`."""
    if frequency_hz <= 0.0:
        raise CircuitError("frequency must be positive")
    omega = TWO_PI * frequency_hz
    y_pattern = (
        _series_rlc_admittance(params.r1, params.l1, params.c1, omega)
        + _series_rlc_admittance(params.r2, params.l2, params.c2, omega)
        + 1.0 / params.diode.impedance(diode_on, omega)
    )
    y_f = _series_rlc_admittance(params.r3, params.l3, params.c3, omega)
    return abcd_from_admittances(y_pattern, y_pattern, y_f, params.ys1, params.ys2)


def circuit_coefficients(
    abcd: np.ndarray,
    z0: float,
    d1: float = 0.0,
    d2: float = 0.0,
    beta: float = 0.0,
) -> tuple[complex, complex]:
    """Reflection and refraction coefficients of a two-port cascade.

    Converts the ABCD matrix to the port responses with reference impedance
    `z0`, then de-embeds the reference-plane offsets: the reflected wave
    travels 2*d1, the transmitted wave d1 + d2.
    """
    if z0 <= 0.0:
        raise CircuitError("reference impedance must be positive")
    a, b = complex(abcd[0, 0]), complex(abcd[0, 1])
    c, d = complex(abcd[1, 0]), complex(abcd[1, 1])
    denom = a + b / z0 + c * z0 + d
    if abs(denom) < 1e-30:
        raise CircuitError("singular network: vanishing port denominator")
    gamma_l = (a + b / z0 - c * z0 - d) / denom * cmath.exp(-2j * beta * d1)
    gamma_r = 2.0 / denom * cmath.exp(-1j * beta * (d1 + d2))
    return gamma_l, gamma_r


# --- design-principle report ----------------------------------------------


@dataclass(frozen=True)
class DesignReport:
    """Summary statistics used to judge a state table against the
    dual-side design principles.

    amp_gap: largest per-state |refl_amp - refr_amp|.
    phase_sep_*: smallest pairwise separation of the canonical phases of
    one side across states (radians, plain absolute difference).
    coupling_const: mean of the per-state inter-side phase gaps folded into
    [0, pi) (radians); per-state detail in the tuple fields.
    """

    amp_gap: float
    phase_sep_refl: float
    phase_sep_refr: float
    coupling_const: float
    per_state_amp_gap: tuple[float, ...]
    per_state_coupling: tuple[float, ...]
    raw_offsets: tuple[float, ...]


def _min_pairwise_separation(phases: Sequence[float]) -> float:
    best = math.inf
    for i in range(len(phases)):
        for j in range(i + 1, len(phases)):
            best = min(best, abs(phases[i] - phases[j]))
    return best


def validate_design_principles(table: ElementStateTable) -> DesignReport:
    """Report amplitude gaps, per-side phase separations and the inter-side
    phase coupling of a state table.

    Requires at least two states (separations are pairwise).  The folded
    coupling gap |refl_phase - refr_phase| mod pi captures how far the two
    sides are from tracking each other up to a half-turn ambiguity.
    """
    if len(table) < 2:
        raise ValueError("design-principle report needs at least two states")
    amp_gaps = tuple(abs(s.refl_amp - s.refr_amp) for s in table.states)
    raw = tuple(_canonical_phase(s.refr_phase - s.refl_phase) for s in table.states)
    folded = tuple(math.fmod(abs(s.refl_phase - s.refr_phase), math.pi) for s in table.states)
    return DesignReport(
        amp_gap=max(amp_gaps),
        phase_sep_refl=_min_pairwise_separation([s.refl_phase for s in table.states]),
        phase_sep_refr=_min_pairwise_separation([s.refr_phase for s in table.states]),
        coupling_const=sum(folded) / len(folded),
        per_state_amp_gap=amp_gaps,
        per_state_coupling=folded,
        raw_offsets=raw,
    )
