"""Grouped linear estimation of the effective base-station-to-user channel.

The effective channel through the surface is linear in each element's
response coefficient, so with elements tied together in groups of a shared
two-state setting the whole channel is an affine function of the group
bits: a baseline (everything in the low state) plus one complex delta per
group.  Probing the baseline and each single-group-high configuration
identifies the model exactly; repeated probes average out measurement
noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .channel import ChannelSet, cascaded_channel
from .element import PhaseConfig

# probe signature: group bits (G,) of {0, 1} -> measured channel (K, N)
ProbeFn = Callable[[np.ndarray], np.ndarray]


class GroupingError(ValueError):
    """A grouping or probe request is inconsistent with the panel."""


@dataclass(frozen=True)
class ElementGrouping:
    """Partition of a rows x cols panel into rectangular row-major tiles."""

    panel_rows: int
    panel_cols: int
    tile_rows: int
    tile_cols: int
    members: tuple[tuple[int, ...], ...]

    @property
    def n_groups(self) -> int:
        return len(self.members)

    @property
    def n_elements(self) -> int:
        return self.panel_rows * self.panel_cols

    def element_bits(self, group_bits: np.ndarray) -> np.ndarray:
        """Expand per-group bits to a per-element state-index array."""
        bits = np.asarray(group_bits)
        if bits.shape != (self.n_groups,):
            raise GroupingError(
                f"expected {self.n_groups} group bits, got shape {bits.shape}"
            )
        states = np.zeros(self.n_elements, dtype=np.int64)
        for g, elems in enumerate(self.members):
            states[list(elems)] = int(bits[g])
        return states


def make_groups(rows: int, cols: int, tile_rows: int, tile_cols: int) -> ElementGrouping:
    """Tile a rows x cols panel into tile_rows x tile_cols groups, row-major.

    Group 0 is the top-left tile, then groups advance along the columns
    first, matching the row-major element indexing of the panel itself.
    """
    if min(rows, cols, tile_rows, tile_cols) < 1:
        raise GroupingError("panel and tile dimensions must be positive")
    if rows % tile_rows or cols % tile_cols:
        raise GroupingError(
            f"tiles of {tile_rows}x{tile_cols} do not divide a {rows}x{cols} panel"
        )
    members = []
    for tr in range(rows // tile_rows):
        for tc in range(cols // tile_cols):
            elems = tuple(
                (tr * tile_rows + r) * cols + (tc * tile_cols + c)
                for r in range(tile_rows)
                for c in range(tile_cols)
            )
            members.append(elems)
    return ElementGrouping(
        panel_rows=rows,
        panel_cols=cols,
        tile_rows=tile_rows,
        tile_cols=tile_cols,
        members=tuple(members),
    )


@dataclass(frozen=True)
class LinearChannelModel:
    """Affine channel model: baseline plus one delta per group-high bit."""

    base: np.ndarray  # (K, N): channel with every group in the low state
    deltas: np.ndarray  # (G, K, N): change when group g alone goes high
    grouping: ElementGrouping


def estimate(probe: ProbeFn, grouping: ElementGrouping, repeats: int = 1) -> LinearChannelModel:
    """Identify the affine model from (G + 1) probe configurations.

    The baseline (all groups low) and each single-group-high configuration
    are probed `repeats` times each and averaged, so the probe budget is
    exactly (G + 1) * repeats calls.  Probe errors propagate to the caller.
    """
    if repeats < 1:
        raise GroupingError("repeats must be >= 1")
    g_count = grouping.n_groups

    def _mean_probe(bits: np.ndarray) -> np.ndarray:
        acc = None
        for _ in range(repeats):
            h = np.asarray(probe(bits.copy()), dtype=np.complex128)
            acc = h if acc is None else acc + h
        return acc / repeats

    base = _mean_probe(np.zeros(g_count, dtype=np.int64))
    deltas = np.empty((g_count,) + base.shape, dtype=np.complex128)
    for g in range(g_count):
        one_hot = np.zeros(g_count, dtype=np.int64)
        one_hot[g] = 1
        deltas[g] = _mean_probe(one_hot) - base
    return LinearChannelModel(base=base, deltas=deltas, grouping=grouping)


def predict(model: LinearChannelModel, group_bits: Sequence[int]) -> np.ndarray:
    """Channel predicted for the given group bits: base + sum of high deltas."""
    bits = np.asarray(group_bits)
    if bits.shape != (model.grouping.n_groups,):
        raise GroupingError(
            f"expected {model.grouping.n_groups} group bits, got shape {bits.shape}"
        )
    return model.base + np.tensordot(bits.astype(np.float64), model.deltas, axes=1)


def physical_probe(channels: ChannelSet, grouping: ElementGrouping) -> ProbeFn:
    """Noiseless probe measuring the true effective channel of `channels`.

    Group bits map directly to element states (low = table state 0,
    high = state 1), matching two-state hardware.
    """
    if grouping.n_elements != channels.n_elements:
        raise GroupingError(
            f"grouping covers {grouping.n_elements} elements, channels have "
            f"{channels.n_elements}"
        )
    table = channels.scenario.panel.table
    if len(table) < 2:
        raise GroupingError("two-state probing needs a table with >= 2 states")

    def probe(bits: np.ndarray) -> np.ndarray:
        config = PhaseConfig(table, grouping.element_bits(bits))
        return cascaded_channel(channels, config)

    return probe


def noisy_probe(base_probe: ProbeFn, sigma: float, seed: int = 0) -> ProbeFn:
    """Wrap a probe with additive circularly-symmetric Gaussian noise.

    `sigma` is the standard deviation of each complex entry (power sigma^2
    split evenly between the real and imaginary parts).
    """
    if sigma < 0:
        raise GroupingError("sigma must be nonnegative")
    rng = np.random.default_rng(seed)
    scale = sigma / np.sqrt(2.0)

    def probe(bits: np.ndarray) -> np.ndarray:
        h = np.asarray(base_probe(bits), dtype=np.complex128)
        noise = rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)
        return h + scale * noise

    return probe


def model_csv(model: LinearChannelModel) -> str:
    """Serialize the model: one `base` row plus one row per group delta,
    repeated for every (user, antenna) pair."""
    lines = ["user,antenna,group,re(delta),im(delta)"]
    k_count, n_count = model.base.shape
    for k in range(k_count):
        for n in range(n_count):
            b = model.base[k, n]
            lines.append(f"{k},{n},base,{b.real:.12e},{b.imag:.12e}")
            for g in range(model.grouping.n_groups):
                d = model.deltas[g, k, n]
                lines.append(f"{k},{n},{g},{d.real:.12e},{d.imag:.12e}")
    return "\n".join(lines) + "\n"
