"""Beam-training codebooks: construction, selection protocol, and pipeline."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from omnisurf import beamform as bf
from omnisurf import channel as ch
from omnisurf import codebook as cb
from omnisurf import element as el
from omnisurf import scenarios as sn
from omnisurf.errors import InfeasibleError

from helpers import LAMBDA_36, make_scenario


def _geometry(scenario, region=None):
    return cb.TrainingGeometry.from_scenario(scenario, region=region)


# --- sector codebook ---------------------------------------------------------


def test_single_section_steers_at_region_center():
    sc = make_scenario()
    region = ((-1.0, 0.5, -0.25), (1.0, 2.5, 0.25))
    geom = _geometry(sc, region)
    book = cb.build_sector_codebook(geom, 1)
    assert len(book) == 1
    np.testing.assert_allclose(book.centers[0], [0.0, 1.5, 0.0], atol=1e-12)
    d = np.linalg.norm(geom.antenna_positions - book.centers[0], axis=1)
    expected = np.exp(2j * np.pi * d / LAMBDA_36) / math.sqrt(geom.antenna_positions.shape[0])
    np.testing.assert_allclose(book.codewords[0], expected, atol=1e-12)


def test_two_sections_split_the_long_axis_at_midpoints():
    sc = make_scenario()
    region = ((0.0, 1.0, 0.0), (10.0, 1.0, 0.0))
    book = cb.build_sector_codebook(_geometry(sc, region), 2)
    xs = sorted(book.centers[:, 0])
    assert xs == pytest.approx([2.5, 7.5])
    assert set(book.centers[:, 1]) == {1.0}


def test_codeword_entries_have_uniform_magnitude():
    sc = make_scenario(n_antennas=6)
    book = cb.build_sector_codebook(_geometry(sc), 4)
    np.testing.assert_allclose(np.abs(book.codewords), 1.0 / math.sqrt(6), atol=1e-12)
    # unit norm as vectors
    np.testing.assert_allclose(np.linalg.norm(book.codewords, axis=1), 1.0, atol=1e-12)


def test_sections_tile_the_region_without_overlap():
    sc = make_scenario()
    region = ((-2.0, 0.5, 0.0), (2.0, 2.5, 0.0))
    book = cb.build_sector_codebook(_geometry(sc, region), 8)
    assert len(book) == 8
    # centers pairwise distinct and inside the region
    assert len({tuple(c) for c in book.centers}) == 8
    assert np.all(book.centers[:, 0] > -2.0) and np.all(book.centers[:, 0] < 2.0)
    assert np.all(book.centers[:, 1] > 0.5) and np.all(book.centers[:, 1] < 2.5)


# --- lobe codebook -----------------------------------------------------------


def test_eight_lobe_directions_and_coverage():
    book = cb.build_lobe_codebook(8)
    assert book.directions[0] == pytest.approx(-0.875)
    np.testing.assert_allclose(book.coverage[0], [-1.0, -0.75])
    assert book.directions[7] == pytest.approx(0.875)
    assert book.depth == 4
    for layer in (1, 2, 3):
        zero, one = book.layer_partition(layer)
        assert len(zero) == 4 and len(one) == 4


@pytest.mark.parametrize("n_lobes", [2, 4, 8, 16, 32])
def test_coverages_partition_the_cosine_interval(n_lobes):
    book = cb.build_lobe_codebook(n_lobes)
    assert book.coverage[0, 0] == pytest.approx(-1.0)
    assert book.coverage[-1, 1] == pytest.approx(1.0)
    np.testing.assert_allclose(book.coverage[1:, 0], book.coverage[:-1, 1], atol=1e-12)
    assert np.all(book.directions == (book.coverage[:, 0] + book.coverage[:, 1]) / 2)


@pytest.mark.parametrize("n_lobes", [4, 8, 16])
def test_layer_partitions_split_every_lobe_exactly_once(n_lobes):
    book = cb.build_lobe_codebook(n_lobes)
    for layer in range(1, book.depth):
        zero, one = book.layer_partition(layer)
        merged = np.sort(np.concatenate([zero, one]))
        np.testing.assert_array_equal(merged, np.arange(n_lobes))


def test_non_power_of_two_lobe_count_rejected():
    for bad in (0, 1, 3, 6, 12):
        with pytest.raises(ValueError):
            cb.build_lobe_codebook(bad)


def test_multi_lobe_target_nulls_complementary_lobe_centers():
    book = cb.build_lobe_codebook(8)
    axis = (np.arange(32) - 15.5) * LAMBDA_36 / 2
    for layer in range(1, book.depth):
        covered, complement = book.layer_partition(layer)
        target = cb.multi_lobe_target(book, layer, 0, axis, LAMBDA_36)
        assert np.mean(np.abs(target) ** 2) == pytest.approx(1.0)
        response = lambda u: abs(
            np.vdot(cb.steering_target(u, axis, LAMBDA_36), target)
        )
        worst_covered = min(response(book.directions[p]) for p in covered)
        worst_null = max(response(book.directions[p]) for p in complement)
        assert worst_null < 1e-9 * worst_covered


# --- steering estimation ------------------------------------------------------


def test_estimate_steering_matches_per_entry_distances():
    rng = np.random.default_rng(7)
    elems = rng.uniform(-1, 1, size=(4, 3))
    centers = rng.uniform(-1, 1, size=(2, 3))
    mat = cb.estimate_steering(centers, elems, LAMBDA_36)
    for m in range(4):
        for k in range(2):
            d = np.linalg.norm(elems[m] - centers[k])
            assert mat[m, k] == pytest.approx(np.exp(-2j * np.pi * d / LAMBDA_36))


def test_estimate_steering_colocated_entry_has_zero_phase():
    elems = np.array([[0.5, 1.0, 0.0]])
    mat = cb.estimate_steering(np.array([[0.5, 1.0, 0.0]]), elems, LAMBDA_36)
    assert mat[0, 0] == pytest.approx(1.0 + 0j)


def test_estimate_steering_periodic_in_wavelength_shifts():
    elems = np.array([[0.0, 0.0, 0.0]])
    near = cb.estimate_steering(np.array([[0.0, 1.0, 0.0]]), elems, LAMBDA_36)
    far = cb.estimate_steering(np.array([[0.0, 1.0 + 5 * LAMBDA_36, 0.0]]), elems, LAMBDA_36)
    assert far[0, 0] == pytest.approx(near[0, 0], abs=1e-9)


# --- discrete configuration construction --------------------------------------


def test_construct_q_picks_nearest_phase():
    table = el.ElementStateTable(
        states=(
            el.ElementState(1.0, 0.0, 0.0, 0.0),
            el.ElementState(1.0, math.pi, 0.0, 0.0),
        )
    )
    target = np.array([np.exp(1j * math.radians(10.0))])
    cfg = cb.construct_Q(target, np.ones(1, dtype=complex), table, ["reflect"])
    assert cfg.states[0] == 0


def test_construct_q_breaks_ties_toward_lowest_state():
    table = el.ElementStateTable(
        states=(
            el.ElementState(1.0, math.pi / 2, 0.0, 0.0),
            el.ElementState(1.0, -math.pi / 2, 0.0, 0.0),
        )
    )
    # target at phase 0 is equidistant from +90 and -90 degree responses
    cfg = cb.construct_Q(np.ones(1, dtype=complex), np.ones(1, dtype=complex), table, ["reflect"])
    assert cfg.states[0] == 0


@settings(deadline=None, max_examples=25)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_construct_q_matches_per_element_enumeration(seed):
    rng = np.random.default_rng(seed)
    n_states = int(rng.integers(2, 7))

    def random_state():
        refl = float(rng.uniform(0.1, 0.9))
        refr = float(rng.uniform(0.1, 1.0)) * math.sqrt(1.0 - refl * refl)
        return el.ElementState(
            refl,
            float(rng.uniform(-math.pi, math.pi)),
            refr,
            float(rng.uniform(-math.pi, math.pi)),
        )

    table = el.ElementStateTable(states=tuple(random_state() for _ in range(n_states)))
    m_count, k_count = 5, 2
    targets = rng.standard_normal((m_count, k_count)) + 1j * rng.standard_normal((m_count, k_count))
    steering = np.exp(2j * np.pi * rng.uniform(size=(m_count, k_count)))
    sides = ["reflect", "refract"]
    cfg = cb.construct_Q(targets, steering, table, sides)

    q = np.stack([table.coefficients(s) for s in sides], axis=1)  # (S, K)
    for m in range(m_count):
        costs = [
            sum(abs(targets[m, k] - q[s, k] * steering[m, k]) ** 2 for k in range(k_count))
            for s in range(n_states)
        ]
        best = int(np.argmin(costs))
        assert cfg.states[m] == best
        # optimality: chosen cost is minimal over the whole table
        assert costs[cfg.states[m]] <= min(costs) + 1e-12


# --- training protocol (probe-only interface) ----------------------------------


class ScriptedProbe:
    """Stand-in probe: returns scripted powers, sees no channel objects."""

    def __init__(self, sector_powers, branch_bits):
        self._sector = sector_powers  # (n_sections, K)
        self._bits = branch_bits  # per user: list of winning branches per layer
        self._ids = set()

    @property
    def count(self):
        return len(self._ids)

    def measure(self, config, bs_vector, user, sounding_id):
        self._ids.add(sounding_id)
        kind = sounding_id[0]
        if kind == "sector":
            return float(self._sector[sounding_id[1]][user])
        _, k, layer, branch = sounding_id
        return 1.0 if self._bits[k][layer - 1] == branch else 0.5


def _tiny_geometry(n_sections=2):
    sc = make_scenario(rows=2, cols=2, n_antennas=3)
    geom = _geometry(sc, region=((-1.0, 1.0, 0.0), (1.0, 2.0, 0.0)))
    return sc, geom, cb.build_sector_codebook(geom, n_sections)


def test_beam_train_counts_soundings_exactly():
    sc, geom, sectors = _tiny_geometry(n_sections=4)
    lobes = cb.build_lobe_codebook(8)
    probe = ScriptedProbe([[3.0, 1.0], [2.0, 5.0], [1.0, 0.5], [0.5, 0.25]], [[1, 0, 1], [0, 1, 0]])
    res = cb.beam_train(
        probe, geom, sectors, lobes, sc.panel.table, ["reflect", "refract"], seed=0
    )
    assert res.training_count == 4 + 2 * 2 * 3
    assert probe.count == res.training_count


def test_beam_train_assembles_lobe_bits_least_significant_first():
    sc, geom, sectors = _tiny_geometry()
    lobes = cb.build_lobe_codebook(8)
    probe = ScriptedProbe([[3.0, 1.0], [2.0, 5.0]], [[1, 0, 1], [0, 1, 0]])
    res = cb.beam_train(
        probe, geom, sectors, lobes, sc.panel.table, ["reflect", "refract"], seed=0
    )
    assert res.lobes[0] == 0b101
    assert res.lobes[1] == 0b010


def test_beam_train_gives_users_disjoint_sections_by_strength():
    sc, geom, sectors = _tiny_geometry()
    # both users strongest in section 0; user 1 reports the higher peak
    probe = ScriptedProbe([[3.0, 5.0], [2.0, 4.0]], [[0, 0, 0], [0, 0, 0]])
    res = cb.beam_train(
        probe, geom, sectors, cb.build_lobe_codebook(8), sc.panel.table,
        ["reflect", "refract"], seed=0,
    )
    assert res.sections[1] == 0  # stronger reporter wins the shared best section
    assert res.sections[0] == 1
    np.testing.assert_allclose(res.analog_precoder[:, 0], sectors.codewords[1])


def test_beam_train_rejects_indistinguishable_sections():
    sc, geom, sectors = _tiny_geometry()
    probe = ScriptedProbe([[3.0, 0.0], [2.0, 0.0]], [[0, 0, 0], [0, 0, 0]])
    with pytest.raises(InfeasibleError):
        cb.beam_train(
            probe, geom, sectors, cb.build_lobe_codebook(8), sc.panel.table,
            ["reflect", "refract"], seed=0,
        )


def test_beam_train_needs_a_section_per_user():
    sc, geom, sectors = _tiny_geometry(n_sections=1)
    probe = ScriptedProbe([[1.0, 1.0]], [[0, 0, 0], [0, 0, 0]])
    with pytest.raises(InfeasibleError):
        cb.beam_train(
            probe, geom, sectors, cb.build_lobe_codebook(8), sc.panel.table,
            ["reflect", "refract"], seed=0,
        )


def test_beam_train_trace_matches_csv_contract():
    sc, geom, sectors = _tiny_geometry()
    probe = ScriptedProbe([[3.0, 1.0], [2.0, 5.0]], [[1, 0, 1], [0, 1, 0]])
    res = cb.beam_train(
        probe, geom, sectors, cb.build_lobe_codebook(8), sc.panel.table,
        ["reflect", "refract"], seed=0,
    )
    text = cb.trace_to_csv(res.trace)
    lines = text.strip().split("\n")
    assert lines[0] == "round,codeword_id,user,rx_power_dbm"
    # 2 sections x 2 users listening, plus 2 users x 3 layers x 2 branches
    assert len(lines) - 1 == 2 * 2 + 2 * 3 * 2
    for line in lines[1:]:
        parts = line.split(",")
        assert len(parts) == 4
        float(parts[3])


def test_beam_train_is_deterministic_per_seed():
    setup = sn.training_setup()
    cs = ch.synthesize_channels(setup.scenario, seed=3)
    geom = _geometry(setup.scenario, setup.region)
    sectors = cb.build_sector_codebook(geom, setup.n_sections)
    lobes = cb.build_lobe_codebook(setup.n_lobes)

    def run():
        probe = cb.PowerProbe(cs)
        return cb.beam_train(
            probe, geom, sectors, lobes, setup.scenario.panel.table,
            setup.scenario.user_sides(), seed=3,
        )

    a, b = run(), run()
    np.testing.assert_array_equal(a.lobes, b.lobes)
    np.testing.assert_array_equal(a.sections, b.sections)
    np.testing.assert_array_equal(a.analog_precoder, b.analog_precoder)
    assert a.training_count == b.training_count
    assert a.trace == b.trace


# --- hierarchical selection equals the exhaustive sweep ------------------------


@pytest.mark.parametrize("n_lobes", [4, 8, 16])
@pytest.mark.parametrize("side", ["reflect", "refract"])
def test_hierarchical_selection_matches_exhaustive_argmax(n_lobes, side):
    book = cb.build_lobe_codebook(n_lobes)
    for p in range(n_lobes):
        setup = sn.training_setup(
            direction_cos=float(book.directions[p]), side=side, n_lobes=n_lobes
        )
        cs = ch.synthesize_channels(setup.scenario, seed=0)
        geom = _geometry(setup.scenario, setup.region)
        sectors = cb.build_sector_codebook(geom, setup.n_sections)
        probe = cb.PowerProbe(cs)
        res = cb.beam_train(
            probe, geom, sectors, book, setup.scenario.panel.table,
            setup.scenario.user_sides(), seed=0,
        )
        hat = cb.estimate_steering(res.section_centers, geom.element_positions, geom.wavelength)
        exhaustive = cb.exhaustive_lobe_selection(
            probe, geom, book, setup.scenario.panel.table,
            setup.scenario.user_sides()[0], 0, res.analog_precoder[:, 0], hat[:, 0],
        )
        assert res.lobes[0] == exhaustive, f"lobe {p}: {res.lobes[0]} != {exhaustive}"


def test_hierarchical_count_beats_exhaustive():
    # identifying one of 16 lobes costs 2*log2(16)=8 soundings, not 16
    setup = sn.training_setup(n_lobes=16)
    cs = ch.synthesize_channels(setup.scenario, seed=0)
    geom = _geometry(setup.scenario, setup.region)
    sectors = cb.build_sector_codebook(geom, setup.n_sections)
    probe = cb.PowerProbe(cs)
    res = cb.beam_train(
        probe, geom, sectors, cb.build_lobe_codebook(16), setup.scenario.panel.table,
        setup.scenario.user_sides(), seed=0,
    )
    hierarchical_soundings = res.training_count - setup.n_sections
    assert hierarchical_soundings == 2 * int(math.log2(16)) < 16


# --- end-to-end pipeline --------------------------------------------------------


def test_pipeline_single_user_close_to_csi_known_optimum():
    setup = sn.training_setup()
    cs = ch.synthesize_channels(setup.scenario, seed=0)
    pres = cb.codebook_pipeline(
        setup.scenario, 0, n_sections=setup.n_sections, n_lobes=setup.n_lobes,
        region=setup.region, channels=cs,
    )
    ores = bf.alternating_optimize(cs, setup.scenario, seed=0)
    assert pres.sum_rate >= 0.9 * ores.sum_rate
    assert pres.training_count == 1 + 2 * int(math.log2(setup.n_lobes))


def test_pipeline_two_sided_users_both_served():
    setup = sn.two_user_training_setup()
    for seed in (0, 1, 2):
        pres = cb.codebook_pipeline(
            setup.scenario, seed, n_sections=setup.n_sections, n_lobes=setup.n_lobes,
            region=setup.region,
        )
        assert pres.per_user_rates.shape == (2,)
        assert np.all(pres.per_user_rates > 0.0)
        assert pres.training_count == setup.n_sections + 2 * 2 * int(math.log2(setup.n_lobes))


def test_pipeline_deterministic_per_seed():
    setup = sn.two_user_training_setup()
    a = cb.codebook_pipeline(
        setup.scenario, 5, n_sections=setup.n_sections, n_lobes=setup.n_lobes,
        region=setup.region,
    )
    b = cb.codebook_pipeline(
        setup.scenario, 5, n_sections=setup.n_sections, n_lobes=setup.n_lobes,
        region=setup.region,
    )
    assert a.sum_rate == b.sum_rate
    np.testing.assert_array_equal(a.config.states, b.config.states)
    np.testing.assert_array_equal(a.beamformer.matrix, b.beamformer.matrix)


def test_incidence_compensation_outperforms_independent_codebook():
    setup = sn.training_setup()
    cs = ch.synthesize_channels(setup.scenario, seed=0)
    kwargs = dict(
        n_sections=setup.n_sections, n_lobes=setup.n_lobes,
        region=setup.region, channels=cs,
    )
    matched = cb.codebook_pipeline(setup.scenario, 0, **kwargs)
    independent = cb.codebook_pipeline(
        setup.scenario, 0, compensate_incidence=False, **kwargs
    )
    assert matched.sum_rate > independent.sum_rate


def test_pipeline_never_reads_true_csi_during_training():
    """The training stage runs on a probe exposing only scalar powers."""
    setup = sn.training_setup()
    cs = ch.synthesize_channels(setup.scenario, seed=1)

    class CountingProbe(cb.PowerProbe):
        calls = 0

        def measure(self, config, bs_vector, user, sounding_id):
            CountingProbe.calls += 1
            out = super().measure(config, bs_vector, user, sounding_id)
            assert isinstance(out, float)
            return out

    geom = _geometry(setup.scenario, setup.region)
    sectors = cb.build_sector_codebook(geom, setup.n_sections)
    probe = CountingProbe(cs)
    res = cb.beam_train(
        probe, geom, sectors, cb.build_lobe_codebook(setup.n_lobes),
        setup.scenario.panel.table, setup.scenario.user_sides(), seed=1,
    )
    assert CountingProbe.calls == res.training_count
