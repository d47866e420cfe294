import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from omnisurf import element as el


# --- independent cascade oracle --------------------------------------------
# Hand-rolled 2x2 chain multiply over plain lists; kept deliberately separate
# from the production numpy path.

def _mul2(a, b):
    return [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]


def cascade_oracle(y_um, y_lm, y_f, ys1, ys2):
    inv1 = 0j if abs(ys1) == math.inf else 1 / ys1
    inv2 = 0j if abs(ys2) == math.inf else 1 / ys2
    stages = [
        [[1, 0], [y_um, 1]],
        [[1, inv1], [0, 1]],
        [[1 + y_f * inv2, inv2], [2 * y_f + y_f * y_f * inv2, 1 + y_f * inv2]],
        [[1, inv1], [0, 1]],
        [[1, 0], [y_lm, 1]],
    ]
    out = stages[0]
    for m in stages[1:]:
        out = _mul2(out, m)
    return out


def test_cascade_matches_oracle_frozen_instance():
    y_um = y_lm = 0.002 + 0.013j
    y_f = 0.001 - 0.02j
    got = el.abcd_from_admittances(y_um, y_lm, y_f, 0.05j, -0.07j)
    want = cascade_oracle(y_um, y_lm, y_f, 0.05j, -0.07j)
    # values frozen from the oracle
    assert want[0][0] == pytest.approx(0.61601714285714282 - 0.08081142857142859j, abs=1e-15)
    assert want[0][1] == pytest.approx(-0.4571428571428573 - 18.862857142857141j, abs=1e-12)
    for i in range(2):
        for j in range(2):
            assert got[i, j] == pytest.approx(want[i][j], rel=1e-12, abs=1e-15)


@given(
    st.integers(0, 2**32 - 1),
)
@settings(max_examples=60, deadline=None)
def test_cascade_matches_oracle_random(seed):
    rng = np.random.default_rng(seed)
    vals = rng.uniform(-0.1, 0.1, size=10)
    y_um = complex(vals[0], vals[1])
    y_lm = complex(vals[2], vals[3])
    y_f = complex(vals[4], vals[5])
    ys1 = complex(vals[6], vals[7]) or 0.01j
    ys2 = complex(vals[8], vals[9]) or 0.01j
    got = el.abcd_from_admittances(y_um, y_lm, y_f, ys1, ys2)
    want = cascade_oracle(y_um, y_lm, y_f, ys1, ys2)
    for i in range(2):
        for j in range(2):
            assert got[i, j] == pytest.approx(want[i][j], rel=1e-12, abs=1e-13)
    assert abs(np.linalg.det(got) - 1.0) < 1e-9


def test_identity_cascade_and_coefficients():
    abcd = el.abcd_from_admittances(0, 0, 0, math.inf, math.inf)
    assert np.allclose(abcd, np.eye(2))
    gl, gr = el.circuit_coefficients(abcd, 50.0, d1=0.0, d2=0.0, beta=0.0)
    assert gl == pytest.approx(0.0, abs=1e-15)
    assert gr == pytest.approx(1.0, abs=1e-15)


def test_shunt_short_reflects_everything():
    y = 1e12
    abcd = el.abcd_from_admittances(y, 0, 0, math.inf, math.inf)
    gl, gr = el.circuit_coefficients(abcd, 50.0)
    assert gl == pytest.approx(-1.0, abs=1e-9)
    assert abs(gr) < 1e-9


def test_reference_plane_offsets_rotate_phases():
    abcd = np.eye(2, dtype=np.complex128)
    beta, d1, d2 = 75.0, 0.004, 0.007
    gl, gr = el.circuit_coefficients(abcd, 50.0, d1=d1, d2=d2, beta=beta)
    assert gr == pytest.approx(cmath.exp(-1j * beta * (d1 + d2)), abs=1e-12)
    # a mismatched network to get a nonzero reflection
    abcd2 = el.abcd_from_admittances(0.01j, 0.01j, 0.002 - 0.01j, 0.05j, 0.05j)
    g0, _ = el.circuit_coefficients(abcd2, 50.0)
    g1, _ = el.circuit_coefficients(abcd2, 50.0, d1=d1, beta=beta)
    assert g1 == pytest.approx(g0 * cmath.exp(-2j * beta * d1), abs=1e-12)


def test_degenerate_admittances_raise():
    with pytest.raises(el.CircuitError):
        el.abcd_from_admittances(0, 0, 0, 0.0, 0.05j)
    with pytest.raises(el.CircuitError):
        el.abcd_from_admittances(0, 0, 0.01j, 0.05j, 0.0)


def _random_params(rng, lossless=False):
    # substrate admittances stay clear of zero: a vanishing ys inflates the
    # cascade entries and drowns the determinant check in round-off
    r = np.zeros(3) if lossless else rng.uniform(0.5, 5.0, size=3)
    l = rng.uniform(0.2, 5.0, size=3) * 1e-9
    c = rng.uniform(0.05, 2.0, size=3) * 1e-12
    sign1, sign2 = rng.choice([-1.0, 1.0], size=2)
    ys1 = complex(0.0 if lossless else rng.uniform(0, 0.01), sign1 * rng.uniform(0.01, 0.09))
    ys2 = complex(0.0 if lossless else rng.uniform(0, 0.01), sign2 * rng.uniform(0.01, 0.09))
    diode = el.DiodeBranch(
        r_on=0.0 if lossless else rng.uniform(0.5, 8.0),
        l_on=rng.uniform(0.1, 1.5) * 1e-9,
        c_off=rng.uniform(0.05, 0.5) * 1e-12,
    )
    return el.CircuitParams(
        r[0], l[0], c[0], r[1], l[1], c[1], r[2], l[2], c[2], ys1, ys2, diode
    )


def test_unit_determinant_over_random_draws():
    rng = np.random.default_rng(20260815)
    for trial in range(250):
        params = _random_params(rng)
        on = bool(trial % 2)
        freq = rng.uniform(1e9, 8e9)
        abcd = el.abcd_matrix(params, on, freq)
        assert abs(np.linalg.det(abcd) - 1.0) < 1e-9


def test_lossless_network_conserves_power():
    # zero resistive parts -> reflected plus refracted power is exactly 1
    rng = np.random.default_rng(7)
    for _ in range(100):
        params = _random_params(rng, lossless=True)
        freq = rng.uniform(1e9, 8e9)
        for on in (False, True):
            gl, gr = el.circuit_coefficients(el.abcd_matrix(params, on, freq), 50.0)
            assert abs(abs(gl) ** 2 + abs(gr) ** 2 - 1.0) < 1e-6


# --- state tables -----------------------------------------------------------


def test_measured_table_energies():
    table = el.two_state_pin_table()
    energies = [s.refl_amp**2 + s.refr_amp**2 for s in table.states]
    assert energies[0] == pytest.approx(0.548, abs=1e-12)
    assert energies[1] == pytest.approx(0.9586, abs=1e-12)
    assert all(e <= 1.0 for e in energies)


def test_measured_table_design_report():
    rep = el.validate_design_principles(el.two_state_pin_table())
    assert math.degrees(rep.phase_sep_refl) == pytest.approx(195.0, abs=1e-9)
    assert math.degrees(rep.phase_sep_refr) == pytest.approx(177.0, abs=1e-9)
    # both folded inter-side gaps sit near a 100 degree offset
    for gap in rep.per_state_coupling:
        assert math.degrees(gap) == pytest.approx(100.0, abs=10.0)
    assert rep.amp_gap == pytest.approx(0.26, abs=1e-12)


def test_phase_canonicalization():
    s = el.ElementState(0.3, -math.pi / 2, 0.4, 2 * math.pi)
    assert s.refl_phase == pytest.approx(3 * math.pi / 2)
    assert s.refr_phase == 0.0
    assert s.coefficient("reflect") == pytest.approx(0.3 * cmath.exp(1.5j * math.pi))


@given(
    refl=st.floats(0.0, 1.0),
    refr=st.floats(0.0, 1.0),
    p1=st.floats(-10.0, 10.0),
    p2=st.floats(-10.0, 10.0),
)
@settings(max_examples=200, deadline=None)
def test_insertion_bound_property(refl, refr, p1, p2):
    power = refl**2 + refr**2
    if power > 1.0:
        with pytest.raises(ValueError):
            el.ElementState(refl, p1, refr, p2)
    else:
        s = el.ElementState(refl, p1, refr, p2)
        assert 0.0 <= s.refl_phase < 2 * math.pi
        assert 0.0 <= s.refr_phase < 2 * math.pi


def test_table_indexing_errors():
    table = el.two_state_pin_table()
    with pytest.raises(IndexError):
        table.coefficient(2, "reflect")
    with pytest.raises(ValueError):
        table.coefficient(0, "sideways")


def test_zero_side_degenerations():
    table = el.two_state_pin_table()
    reflect_only = el.zero_side(table, "refract")
    assert all(s.refr_amp == 0.0 for s in reflect_only.states)
    assert [s.refl_amp for s in reflect_only.states] == [0.46, 0.55]
    refract_only = el.zero_side(table, "reflect")
    assert all(s.refl_amp == 0.0 for s in refract_only.states)
    assert [s.refr_amp for s in refract_only.states] == [0.58, 0.81]


def test_discrete_phase_set_values():
    assert np.allclose(el.discrete_phase_set(1), [0.0, math.pi])
    grid = el.discrete_phase_set(3)
    assert len(grid) == 8
    assert np.allclose(np.diff(grid), math.pi / 4)
    with pytest.raises(ValueError):
        el.discrete_phase_set(0)


def test_coupled_phase_table_offset():
    table = el.coupled_phase_table(2, offset=math.radians(100.0), refl_amp=0.5, refr_amp=0.6)
    assert len(table) == 4
    for s in table.states:
        gap = (s.refr_phase - s.refl_phase) % (2 * math.pi)
        assert gap == pytest.approx(math.radians(100.0), abs=1e-12)


def test_table_file_round_trip(tmp_path):
    path = tmp_path / "table.txt"
    table = el.two_state_pin_table()
    el.save_state_table(table, str(path))
    loaded = el.load_state_table(str(path))
    assert len(loaded) == len(table)
    for a, b in zip(loaded.states, table.states):
        assert a.refl_amp == pytest.approx(b.refl_amp, abs=1e-15)
        assert a.refl_phase == pytest.approx(b.refl_phase, abs=1e-12)
        assert a.refr_amp == pytest.approx(b.refr_amp, abs=1e-15)
        assert a.refr_phase == pytest.approx(b.refr_phase, abs=1e-12)


def test_table_file_errors(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("0.3 10 0.4\n")
    with pytest.raises(ValueError, match="4 columns"):
        el.load_state_table(str(bad))
    empty = tmp_path / "empty.txt"
    empty.write_text("# nothing here\n")
    with pytest.raises(ValueError, match="no states"):
        el.load_state_table(str(empty))
