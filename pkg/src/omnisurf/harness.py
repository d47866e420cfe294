"""Config parsing, seeded experiment runners, and surface-type comparisons.

Scenario files are flat `key = value` text with `#` comments; repeated keys
describe repeated entities (users, element states, access points).  Parsing
resolves every default, and each experiment's output begins with a header
block echoing the fully resolved configuration, the seed list, and the
artifact version, so a result file is reproducible from its own header.

All outputs are CSV: powers in dB, rates in bits/s/Hz, angles in degrees
(exception: `table_state` lines carry phases in radians so that
parse -> serialize -> parse is bit-exact).  Experiments are pure functions
of (config, seeds); running one twice yields byte-identical files.  Seeds
are dispatched to a thread pool sized by the OMNISURF_WORKERS environment
variable (default 1) and results are always assembled in seed order.
"""

from __future__ import annotations

import math
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import __version__
from .beamform import OptimizerOptions, alternating_optimize, sinr_and_rates
from .chanest import estimate as chanest_estimate
from .chanest import make_groups, noisy_probe, physical_probe, predict
from .channel import (
    BaseStation,
    Scenario,
    ScenarioError,
    SurfacePanel,
    UserTerminal,
    cascaded_channel,
    synthesize_channels,
)
from .codebook import codebook_pipeline
from .element import (
    ElementState,
    ElementStateTable,
    PhaseConfig,
    coupled_phase_table,
    load_state_table,
    two_state_pin_table,
    zero_side,
)
from .multicell import CellNetwork, build_network, negotiate, synthesize_network
from .pattern import beam_pattern, pattern_csv, steer_config

__all__ = [
    "ConfigError",
    "ExperimentSpec",
    "SurfaceComparison",
    "EXPERIMENT_KINDS",
    "SURFACE_VARIANTS",
    "WORKERS_ENV_VAR",
    "parse_scenario",
    "parse_scenario_text",
    "serialize_scenario",
    "parse_network",
    "parse_network_text",
    "run",
    "compare_surfaces",
    "coverage_map",
    "coverage_csv",
    "surface_variant",
]

EXPERIMENT_KINDS = ("pattern", "hybrid", "train", "multicell", "estimate", "compare")
SURFACE_VARIANTS = ("ios", "irs", "rrs", "none")
WORKERS_ENV_VAR = "OMNISURF_WORKERS"
ARTIFACT_VERSION = 1


class ConfigError(ValueError):
    """Malformed experiment or scenario configuration."""


# --- config text ------------------------------------------------------------------


def _config_lines(text: str) -> list[tuple[int, str, str]]:
    """(line_number, key, value) triples; blank and comment lines skipped."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out.append((lineno, key.strip(), value.strip()))
    return out


class _ConfigReader:
    """Collects key/value lines and reports errors with file:line context."""

    def __init__(self, text: str, name: str):
        self.name = name
        self.single: dict[str, tuple[int, str]] = {}
        self.repeated: dict[str, list[tuple[int, str]]] = {}
        try:
            lines = _config_lines(text)
        except ConfigError as exc:
            raise ConfigError(f"{name}: {exc}") from None
        for lineno, key, value in lines:
            if key in _REPEATED_KEYS:
                self.repeated.setdefault(key, []).append((lineno, value))
            elif key in self.single:
                raise ConfigError(
                    f"{name}:{lineno}: duplicate key {key!r} "
                    f"(first set on line {self.single[key][0]})"
                )
            else:
                self.single[key] = (lineno, value)

    def fail(self, lineno: int | None, message: str) -> ConfigError:
        where = f"{self.name}:{lineno}" if lineno is not None else self.name
        return ConfigError(f"{where}: {message}")

    def take(self, key: str) -> Optional[tuple[int, str]]:
        return self.single.pop(key, None)

    def take_repeated(self, key: str) -> list[tuple[int, str]]:
        return self.repeated.pop(key, [])

    def value(self, key: str, convert: Callable, default=None, required=False):
        entry = self.take(key)
        if entry is None:
            if required:
                raise self.fail(None, f"missing required key {key!r}")
            return default
        lineno, text = entry
        try:
            return convert(text)
        except ConfigError:
            raise
        except Exception as exc:
            raise self.fail(lineno, f"invalid value for {key!r}: {exc}") from None

    def finish(self) -> None:
        leftovers = list(self.single.items()) + [
            (k, vs[0]) for k, vs in self.repeated.items()
        ]
        if leftovers:
            key, (lineno, _) = min(leftovers, key=lambda kv: kv[1][0])
            raise self.fail(lineno, f"unknown key {key!r}")


_REPEATED_KEYS = frozenset({"user", "table_state", "ap", "cell_user"})


def _float(text: str) -> float:
    return float(text)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise ValueError("must be >= 1")
    return value


def _vec3(text: str) -> tuple[float, float, float]:
    parts = text.split()
    if len(parts) != 3:
        raise ValueError(f"expected 3 numbers, got {len(parts)}")
    return (float(parts[0]), float(parts[1]), float(parts[2]))


def _parse_table(
    reader: _ConfigReader, config_dir: str
) -> ElementStateTable:
    named = reader.take("table")
    states = reader.take_repeated("table_state")
    if named is not None and states:
        raise reader.fail(named[0], "give either 'table' or 'table_state' lines, not both")
    if states:
        rows = []
        for lineno, text in states:
            parts = text.split()
            if len(parts) != 4:
                raise reader.fail(
                    lineno,
                    "table_state needs 4 numbers: refl_amp refl_phase_rad "
                    f"refr_amp refr_phase_rad, got {len(parts)}",
                )
            try:
                ra, rp, ta, tp = (float(p) for p in parts)
            except ValueError as exc:
                raise reader.fail(lineno, f"invalid table_state: {exc}") from None
            rows.append(ElementState(ra, rp, ta, tp))
        return ElementStateTable(states=tuple(rows))
    if named is None:
        return two_state_pin_table()
    lineno, text = named
    parts = text.split()
    if parts[0] == "two_state" and len(parts) == 1:
        return two_state_pin_table()
    if parts[0] == "phase_bits":
        if len(parts) != 5:
            raise reader.fail(
                lineno, "table = phase_bits <n_bits> <offset_rad> <refl_amp> <refr_amp>"
            )
        try:
            return coupled_phase_table(
                int(parts[1]), float(parts[2]), float(parts[3]), float(parts[4])
            )
        except ValueError as exc:
            raise reader.fail(lineno, f"invalid table: {exc}") from None
    if parts[0] == "file":
        if len(parts) != 2:
            raise reader.fail(lineno, "table = file <path>")
        path = os.path.join(config_dir, parts[1])
        if not os.path.isfile(path):
            raise reader.fail(lineno, f"table file not found: {path}")
        return load_state_table(path)
    raise reader.fail(
        lineno, f"unknown table spec {parts[0]!r} (two_state, phase_bits, or file)"
    )


def _parse_user(reader: _ConfigReader, lineno: int, text: str) -> UserTerminal:
    parts = text.split()
    if len(parts) < 3:
        raise reader.fail(lineno, "user needs at least 'x y z'")
    try:
        pos = (float(parts[0]), float(parts[1]), float(parts[2]))
    except ValueError as exc:
        raise reader.fail(lineno, f"invalid user position: {exc}") from None
    blocked = False
    scale = 1.0
    for extra in parts[3:]:
        if extra == "blocked":
            blocked = True
        elif extra.startswith("scale="):
            try:
                scale = float(extra[len("scale=") :])
            except ValueError as exc:
                raise reader.fail(lineno, f"invalid user scale: {exc}") from None
        else:
            raise reader.fail(lineno, f"unknown user flag {extra!r}")
    return UserTerminal(position=pos, direct_blocked=blocked, direct_amp_scale=scale)


def _parse_panel_and_globals(reader: _ConfigReader, config_dir: str):
    carrier = reader.value("carrier_hz", _float, required=True)
    default_pitch = (299792458.0 / carrier) / 2.0 if carrier > 0 else 1.0
    panel = SurfacePanel(
        center=reader.value("panel_center", _vec3, default=(0.0, 0.0, 0.0)),
        normal=reader.value("panel_normal", _vec3, default=(0.0, 1.0, 0.0)),
        rows=reader.value("panel_rows", _positive_int, required=True),
        cols=reader.value("panel_cols", _positive_int, required=True),
        pitch_x=reader.value("pitch_x", _float, default=default_pitch),
        pitch_y=reader.value("pitch_y", _float, default=default_pitch),
        table=_parse_table(reader, config_dir),
    )
    globals_ = {
        "carrier_hz": carrier,
        "noise_power_w": reader.value("noise_power_w", _float, default=1e-13),
        "kappa": reader.value("kappa", _float, default=4.0),
        "radiation_exponent": reader.value("radiation_exponent", _float, default=3.0),
        "pathloss_mode": reader.value("pathloss", str, default="scatter"),
        "tx_beamwidth_deg": reader.value("tx_beamwidth_deg", _float, default=None),
    }
    return panel, globals_


def parse_scenario_text(text: str, name: str = "<config>", config_dir: str = ".") -> Scenario:
    """Build a validated single-cell scenario from flat config text."""
    reader = _ConfigReader(text, name)
    if "ap" in reader.repeated or "cell_user" in reader.repeated:
        raise reader.fail(
            None, "'ap'/'cell_user' keys describe a network config; use parse_network"
        )
    panel, globals_ = _parse_panel_and_globals(reader, config_dir)
    bs = BaseStation(
        position=reader.value("bs_position", _vec3, required=True),
        n_antennas=reader.value("bs_antennas", _positive_int, default=4),
        tx_power_w=reader.value("tx_power_w", _float, default=1.0),
        antenna_spacing=reader.value("antenna_spacing", _float, default=None),
        axis=reader.value("bs_axis", _vec3, default=(1.0, 0.0, 0.0)),
    )
    user_lines = reader.take_repeated("user")
    if not user_lines:
        raise reader.fail(None, "missing required key 'user' (at least one)")
    users = tuple(_parse_user(reader, ln, tx) for ln, tx in user_lines)
    reader.finish()
    try:
        return Scenario(bs=bs, panel=panel, users=users, **globals_)
    except ScenarioError as exc:
        raise ConfigError(f"{name}: {exc}") from None


def parse_scenario(path: str) -> Scenario:
    """Read and validate a single-cell scenario config file."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_scenario_text(text, name=path, config_dir=os.path.dirname(path) or ".")


def _fmt_vec(v) -> str:
    return " ".join(repr(float(x)) for x in v)


def serialize_scenario(scenario: Scenario) -> str:
    """Flat config text with every default resolved; parses back bit-exactly."""
    buf = io.StringIO()
    buf.write(f"carrier_hz = {scenario.carrier_hz!r}\n")
    buf.write(f"noise_power_w = {scenario.noise_power_w!r}\n")
    buf.write(f"kappa = {scenario.kappa!r}\n")
    buf.write(f"radiation_exponent = {scenario.radiation_exponent!r}\n")
    buf.write(f"pathloss = {scenario.pathloss_mode}\n")
    if scenario.tx_beamwidth_deg is not None:
        buf.write(f"tx_beamwidth_deg = {scenario.tx_beamwidth_deg!r}\n")
    buf.write(f"bs_position = {_fmt_vec(scenario.bs.position)}\n")
    buf.write(f"bs_antennas = {scenario.bs.n_antennas}\n")
    buf.write(f"tx_power_w = {scenario.bs.tx_power_w!r}\n")
    buf.write(f"bs_axis = {_fmt_vec(scenario.bs.axis)}\n")
    if scenario.bs.antenna_spacing is not None:
        buf.write(f"antenna_spacing = {scenario.bs.antenna_spacing!r}\n")
    p = scenario.panel
    buf.write(f"panel_center = {_fmt_vec(p.center)}\n")
    buf.write(f"panel_normal = {_fmt_vec(p.normal)}\n")
    buf.write(f"panel_rows = {p.rows}\n")
    buf.write(f"panel_cols = {p.cols}\n")
    buf.write(f"pitch_x = {p.pitch_x!r}\n")
    buf.write(f"pitch_y = {p.pitch_y!r}\n")
    for s in p.table.states:
        buf.write(
            f"table_state = {s.refl_amp!r} {s.refl_phase!r} "
            f"{s.refr_amp!r} {s.refr_phase!r}\n"
        )
    for u in scenario.users:
        extras = ""
        if u.direct_blocked:
            extras += " blocked"
        if u.direct_amp_scale != 1.0:
            extras += f" scale={u.direct_amp_scale!r}"
        buf.write(f"user = {_fmt_vec(u.position)}{extras}\n")
    return buf.getvalue()


def parse_network_text(text: str, name: str = "<config>", config_dir: str = ".") -> CellNetwork:
    """Build a validated multi-cell network (shared panel) from config text."""
    reader = _ConfigReader(text, name)
    if "user" in reader.repeated or "bs_position" in reader.single:
        raise reader.fail(
            None,
            "'bs_position'/'user' keys describe a single-cell config; use parse_scenario",
        )
    panel, globals_ = _parse_panel_and_globals(reader, config_dir)
    cross_wall_amp = reader.value("cross_wall_amp", _float, default=0.02)

    ap_lines = reader.take_repeated("ap")
    if not ap_lines:
        raise reader.fail(None, "missing required key 'ap' (one per cell)")
    aps = []
    for lineno, text_ in ap_lines:
        parts = text_.split()
        if len(parts) < 3:
            raise reader.fail(lineno, "ap needs at least 'x y z'")
        try:
            pos = (float(parts[0]), float(parts[1]), float(parts[2]))
        except ValueError as exc:
            raise reader.fail(lineno, f"invalid ap position: {exc}") from None
        antennas, power = 4, 1.0
        for extra in parts[3:]:
            if extra.startswith("antennas="):
                antennas = int(extra[len("antennas=") :])
            elif extra.startswith("power="):
                power = float(extra[len("power=") :])
            else:
                raise reader.fail(lineno, f"unknown ap flag {extra!r}")
        aps.append(BaseStation(position=pos, n_antennas=antennas, tx_power_w=power))

    groups: list[list[UserTerminal]] = [[] for _ in aps]
    for lineno, text_ in reader.take_repeated("cell_user"):
        parts = text_.split(None, 1)
        try:
            cell = int(parts[0])
        except (ValueError, IndexError):
            raise reader.fail(lineno, "cell_user needs '<cell> x y z'") from None
        if not 0 <= cell < len(aps):
            raise reader.fail(lineno, f"cell index {cell} out of range (have {len(aps)} aps)")
        if len(parts) < 2:
            raise reader.fail(lineno, "cell_user needs '<cell> x y z'")
        groups[cell].append(_parse_user(reader, lineno, parts[1]))
    reader.finish()
    try:
        return build_network(
            aps,
            groups,
            panel,
            carrier_hz=globals_["carrier_hz"],
            noise_power_w=globals_["noise_power_w"],
            kappa=globals_["kappa"],
            cross_wall_amp=cross_wall_amp,
        )
    except (ScenarioError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


def parse_network(path: str) -> CellNetwork:
    """Read and validate a multi-cell network config file."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_network_text(text, name=path, config_dir=os.path.dirname(path) or ".")


def _is_network_config(text: str) -> bool:
    try:
        return any(key == "ap" for _, key, _ in _config_lines(text))
    except ConfigError:
        return False


# --- surface variants ---------------------------------------------------------------


def surface_variant(scenario: Scenario, surface: str) -> Scenario:
    """The same geometry with the element table degraded to one surface type.

    'ios' keeps the dual-sided table, 'irs' zeroes refraction, 'rrs' zeroes
    reflection, 'none' zeroes both (the panel contributes nothing).  Zeroing
    amplitudes can only lower per-state energy, so every variant satisfies
    the element energy bound.
    """
    if surface not in SURFACE_VARIANTS:
        raise ConfigError(f"surface must be one of {SURFACE_VARIANTS}, got {surface!r}")
    table = scenario.panel.table
    if surface == "irs":
        table = zero_side(table, "refract")
    elif surface == "rrs":
        table = zero_side(table, "reflect")
    elif surface == "none":
        table = zero_side(zero_side(table, "reflect"), "refract")
    if table is scenario.panel.table:
        return scenario
    return replace(scenario, panel=replace(scenario.panel, table=table))


# --- experiment spec ----------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentSpec:
    """One seeded experiment: a kind, a scenario file, seeds, and options."""

    kind: str
    scenario_path: str
    seeds: tuple[int, ...]
    out_path: Optional[str] = None
    options: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(
                f"unknown experiment kind {self.kind!r}; expected one of {EXPERIMENT_KINDS}"
            )
        seeds = tuple(int(s) for s in self.seeds)
        if not seeds:
            raise ConfigError("seed list must be nonempty")
        object.__setattr__(self, "seeds", seeds)
        if not os.path.isfile(self.scenario_path):
            raise ConfigError(f"scenario file not found: {self.scenario_path}")
        object.__setattr__(self, "options", dict(self.options))


def _worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV_VAR, "1")
    try:
        count = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV_VAR} must be an integer, got {raw!r}") from None
    if count < 1:
        raise ConfigError(f"{WORKERS_ENV_VAR} must be >= 1, got {count}")
    return count


def _per_seed(seeds: Sequence[int], task: Callable[[int], object]) -> list[object]:
    """Run `task` for every seed; results in seed-list order."""
    workers = _worker_count()
    if workers == 1:
        return [task(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(task, s) for s in seeds]
        return [f.result() for f in futures]


def _header(spec: ExperimentSpec, config_echo: str) -> str:
    buf = io.StringIO()
    buf.write(f"# artifact_version = {ARTIFACT_VERSION}\n")
    buf.write(f"# kind = {spec.kind}\n")
    buf.write(f"# seeds = {' '.join(str(s) for s in spec.seeds)}\n")
    for key in sorted(spec.options):
        buf.write(f"# option {key} = {spec.options[key]}\n")
    for line in config_echo.rstrip("\n").split("\n"):
        buf.write(f"# config {line}\n")
    return buf.getvalue()


def _aggregate_rows(values: np.ndarray) -> list[str]:
    mean = float(np.mean(values))
    std = float(np.std(values))
    return [f"aggregate,{mean:.9e},{std:.9e}"]


# --- kind runners -------------------------------------------------------------------


def _opts_from(options: Mapping[str, object]) -> OptimizerOptions:
    return OptimizerOptions(
        max_sweeps=int(options.get("max_sweeps", 20)),
        restarts=int(options.get("restarts", 4)),
        precoder=str(options.get("precoder", "zf")),
    )


def _run_hybrid(spec: ExperimentSpec) -> str:
    scenario = surface_variant(
        parse_scenario(spec.scenario_path), str(spec.options.get("surface", "ios"))
    )
    opts = _opts_from(spec.options)

    def one(seed: int) -> float:
        channels = synthesize_channels(scenario, seed)
        return alternating_optimize(channels, opts=opts, seed=seed).sum_rate

    rates = np.array(_per_seed(spec.seeds, one))
    buf = io.StringIO()
    buf.write(_header(spec, serialize_scenario(scenario)))
    buf.write("seed,sum_rate_bpshz,sum_rate_std\n")
    for seed, rate in zip(spec.seeds, rates):
        buf.write(f"{seed},{rate:.9e},\n")
    for row in _aggregate_rows(rates):
        buf.write(row + "\n")
    return buf.getvalue()


def _run_train(spec: ExperimentSpec) -> str:
    scenario = parse_scenario(spec.scenario_path)
    n_sections = int(spec.options.get("sections", 8))
    n_lobes = int(spec.options.get("lobes", 16))

    def one(seed: int):
        res = codebook_pipeline(
            scenario, seed, n_sections=n_sections, n_lobes=n_lobes
        )
        return res.sum_rate, res.training_count

    rows = _per_seed(spec.seeds, one)
    rates = np.array([r[0] for r in rows])
    buf = io.StringIO()
    buf.write(_header(spec, serialize_scenario(scenario)))
    buf.write("seed,sum_rate_bpshz,training_count\n")
    for seed, (rate, count) in zip(spec.seeds, rows):
        buf.write(f"{seed},{rate:.9e},{count}\n")
    mean = float(np.mean(rates))
    std = float(np.std(rates))
    buf.write(f"aggregate,{mean:.9e},{std:.9e}\n")
    return buf.getvalue()


def _run_multicell(spec: ExperimentSpec) -> str:
    network = parse_network(spec.scenario_path)
    rho = float(spec.options.get("rho", 1.0))
    max_iter = int(spec.options.get("max_iter", 50))

    def one(seed: int):
        netchans = synthesize_network(network, seed)
        res = negotiate(netchans, rho=rho, max_iter=max_iter, seed=seed)
        return res.sum_rate, int(res.converged), res.iterations

    rows = _per_seed(spec.seeds, one)
    rates = np.array([r[0] for r in rows])
    buf = io.StringIO()
    buf.write(_header(spec, _network_echo(network)))
    buf.write("seed,sum_rate_bpshz,converged,iterations\n")
    for seed, (rate, conv, iters) in zip(spec.seeds, rows):
        buf.write(f"{seed},{rate:.9e},{conv},{iters}\n")
    mean = float(np.mean(rates))
    std = float(np.std(rates))
    buf.write(f"aggregate,{mean:.9e},,{std:.9e}\n")
    return buf.getvalue()


def _network_echo(network: CellNetwork) -> str:
    """Resolved network description for output headers.

    Echoes every constituent scenario (own-cell and cross-cell), each fully
    resolved, so the header pins all propagation including wall shading.
    """
    buf = io.StringIO()
    for j, cell in enumerate(network.cells):
        for line in serialize_scenario(cell).rstrip("\n").split("\n"):
            buf.write(f"[cell {j}] {line}\n")
    for j, cross in enumerate(network.cross):
        for line in serialize_scenario(cross).rstrip("\n").split("\n"):
            buf.write(f"[cross {j}] {line}\n")
    return buf.getvalue()


def _run_estimate(spec: ExperimentSpec) -> str:
    scenario = parse_scenario(spec.scenario_path)
    tile_rows = int(spec.options.get("tile_rows", 1))
    tile_cols = int(spec.options.get("tile_cols", scenario.panel.cols))
    sigma = float(spec.options.get("sigma", 0.0))
    repeats = int(spec.options.get("repeats", 1))
    grouping = make_groups(scenario.panel.rows, scenario.panel.cols, tile_rows, tile_cols)
    n_groups = grouping.n_groups

    def one(seed: int):
        channels = synthesize_channels(scenario, seed)
        exact = physical_probe(channels, grouping)
        probe = noisy_probe(exact, sigma, seed=seed) if sigma > 0.0 else exact
        model = chanest_estimate(probe, grouping, repeats=repeats)
        if n_groups <= 10:
            configs = [
                [(c >> g) & 1 for g in range(n_groups)] for c in range(2**n_groups)
            ]
        else:
            rng = np.random.default_rng(seed)
            configs = rng.integers(0, 2, size=(64, n_groups)).tolist()
        err = 0.0
        for bits in configs:
            err = max(err, float(np.max(np.abs(predict(model, bits) - exact(np.asarray(bits))))))
        return err, (n_groups + 1) * repeats

    rows = _per_seed(spec.seeds, one)
    errors = np.array([r[0] for r in rows])
    buf = io.StringIO()
    buf.write(_header(spec, serialize_scenario(scenario)))
    buf.write("seed,max_abs_error,probe_count\n")
    for seed, (err, count) in zip(spec.seeds, rows):
        buf.write(f"{seed},{err:.9e},{count}\n")
    mean = float(np.mean(errors))
    std = float(np.std(errors))
    buf.write(f"aggregate,{mean:.9e},{std:.9e}\n")
    return buf.getvalue()


def _run_pattern(spec: ExperimentSpec) -> str:
    scenario = parse_scenario(spec.scenario_path)
    target_psi = float(spec.options.get("target_psi", 141.0))
    target_phi = float(spec.options.get("target_phi", 0.0))
    step = float(spec.options.get("step", 1.0))
    if step <= 0:
        raise ConfigError(f"pattern step must be positive, got {step}")
    config, precoder = steer_config(scenario, (target_psi, target_phi))
    grid = beam_pattern(
        scenario, config, precoder, psi_deg=np.arange(step / 2.0, 360.0, step)
    )
    buf = io.StringIO()
    buf.write(_header(spec, serialize_scenario(scenario)))
    buf.write(pattern_csv(grid))
    return buf.getvalue()


@dataclass(frozen=True)
class SurfaceComparison:
    """Paired per-seed sum rates for each surface variant."""

    surfaces: tuple[str, ...]
    seeds: tuple[int, ...]
    rates: np.ndarray  # (len(surfaces), len(seeds))

    def mean(self, surface: str) -> float:
        return float(np.mean(self.rates[self.surfaces.index(surface)]))

    def std_error(self, surface: str) -> float:
        row = self.rates[self.surfaces.index(surface)]
        return float(np.std(row) / math.sqrt(row.size))


def compare_surfaces(
    scenario: Scenario,
    seeds: Sequence[int],
    opts: Optional[OptimizerOptions] = None,
) -> SurfaceComparison:
    """Optimized sum rates of the ios/irs/rrs/none variants on paired seeds.

    Every variant shares the scenario geometry, so identical seeds draw
    identical fading; only the element table differs.  Each variant is
    optimized independently per seed.
    """
    opts = opts or OptimizerOptions()
    seeds = tuple(int(s) for s in seeds)
    variants = [surface_variant(scenario, s) for s in SURFACE_VARIANTS]

    def one(seed: int) -> list[float]:
        out = []
        for variant in variants:
            channels = synthesize_channels(variant, seed)
            out.append(alternating_optimize(channels, opts=opts, seed=seed).sum_rate)
        return out

    rows = _per_seed(seeds, one)
    rates = np.array(rows).T  # (surfaces, seeds)
    return SurfaceComparison(surfaces=SURFACE_VARIANTS, seeds=seeds, rates=rates)


def _run_compare(spec: ExperimentSpec) -> str:
    scenario = parse_scenario(spec.scenario_path)
    comparison = compare_surfaces(scenario, spec.seeds, opts=_opts_from(spec.options))
    buf = io.StringIO()
    buf.write(_header(spec, serialize_scenario(scenario)))
    buf.write("surface,seed,sum_rate_bpshz\n")
    for i, surface in enumerate(comparison.surfaces):
        for seed, rate in zip(comparison.seeds, comparison.rates[i]):
            buf.write(f"{surface},{seed},{rate:.9e}\n")
    for i, surface in enumerate(comparison.surfaces):
        row = comparison.rates[i]
        buf.write(f"{surface},mean,{float(np.mean(row)):.9e}\n")
        buf.write(f"{surface},std,{float(np.std(row)):.9e}\n")
    return buf.getvalue()


_RUNNERS = {
    "hybrid": _run_hybrid,
    "train": _run_train,
    "multicell": _run_multicell,
    "estimate": _run_estimate,
    "pattern": _run_pattern,
    "compare": _run_compare,
}


def run(spec: ExperimentSpec) -> str:
    """Execute one experiment; returns (and optionally writes) the CSV text."""
    text = _RUNNERS[spec.kind](spec)
    if spec.out_path is not None:
        with open(spec.out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text


# --- coverage maps ------------------------------------------------------------------


def coverage_map(
    scenario: Scenario,
    positions: Sequence[Sequence[float]],
    seeds: Sequence[int],
    surface: str = "ios",
    opts: Optional[OptimizerOptions] = None,
) -> np.ndarray:
    """Mean optimized rate of a probe user at each position; (P, 5) array.

    Columns: x, y, z, mean rate (bits/s/Hz), std across seeds.  The probe
    user replaces the scenario's user list at every grid point, everything
    is re-optimized per seed, and positions are evaluated independently.
    A single position with a single seed is exactly one hybrid run.
    """
    opts = opts or OptimizerOptions()
    base = surface_variant(scenario, surface)
    seeds = tuple(int(s) for s in seeds)
    pts = np.asarray(positions, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ConfigError(f"positions must be (P, 3), got {pts.shape}")

    def one_point(pos: np.ndarray) -> tuple[float, float]:
        probe = UserTerminal(position=tuple(pos))
        local = replace(base, users=(probe,))
        rates = []
        for seed in seeds:
            channels = synthesize_channels(local, seed)
            rates.append(alternating_optimize(channels, opts=opts, seed=seed).sum_rate)
        arr = np.array(rates)
        return float(arr.mean()), float(arr.std())

    rows = _per_seed(range(len(pts)), lambda i: one_point(pts[i]))
    out = np.empty((len(pts), 5))
    out[:, :3] = pts
    out[:, 3] = [r[0] for r in rows]
    out[:, 4] = [r[1] for r in rows]
    return out


def coverage_csv(
    scenario: Scenario,
    positions: Sequence[Sequence[float]],
    seeds: Sequence[int],
    surface: str = "ios",
    opts: Optional[OptimizerOptions] = None,
) -> str:
    """Coverage map as CSV with the standard header block."""
    table = coverage_map(scenario, positions, seeds, surface=surface, opts=opts)
    buf = io.StringIO()
    buf.write(f"# artifact_version = {ARTIFACT_VERSION}\n")
    buf.write("# kind = coverage\n")
    buf.write(f"# seeds = {' '.join(str(int(s)) for s in seeds)}\n")
    buf.write(f"# option surface = {surface}\n")
    for line in serialize_scenario(scenario).rstrip("\n").split("\n"):
        buf.write(f"# config {line}\n")
    buf.write("x,y,z,mean_rate_bpshz,rate_std\n")
    for row in table:
        buf.write(
            f"{row[0]:.6f},{row[1]:.6f},{row[2]:.6f},{row[3]:.9e},{row[4]:.9e}\n"
        )
    return buf.getvalue()
