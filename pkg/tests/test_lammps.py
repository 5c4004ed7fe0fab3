import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polyprop import synth
from polyprop.core import Frame, Trajectory
from polyprop.exceptions import (DanglingBond, HeaderMismatch, InconsistentAtomSet, MalformedRow, MissingIdColumn,
                                 NotAThermoLog, UnsupportedUnits)
from polyprop.lammps import (PPPM_OUT_OF_RANGE, UNKNOWN, VELOCITY_REINIT, detect_errors, parse_data_file,
                             parse_dump, parse_thermo_log, read_data_file, write_data_file, write_dump)

MINIMAL = """\
units real
Step Temp Density
0 300 1.01
10 301 1.02
20 299 1.03
Loop time of 1 on 1 procs
"""


def test_minimal_log():
    t = parse_thermo_log(MINIMAL)
    assert len(t) == 3
    assert t.names == ["Step", "Temp", "Density"]
    assert t.labels == ["run-1"]
    assert t.step.tolist() == [0, 10, 20]


def _two_stage():
    eq, _ = synth.gen_npt_log(85000.0, 300.0, 1.05, -13000.0, n_rows=40, stage="npt-eq", seed=1)
    prod, _ = synth.gen_npt_log(85000.0, 300.0, 1.05, -13000.0, n_rows=60, stage="npt-production", seed=2)
    return eq + prod


def test_two_run_blocks_give_two_sections():
    t = parse_thermo_log(_two_stage())
    assert t.labels == ["npt-eq", "npt-production"]
    assert [(s.start, s.end) for s in t.sections] == [(0, 40), (40, 100)]
    assert len(t.select("npt-production")) == 60


def test_error_between_sections_keeps_rows_and_is_reported():
    eq, _ = synth.gen_npt_log(85000.0, 300.0, 1.05, -13000.0, n_rows=40, stage="npt-eq", seed=1)
    prod, _ = synth.gen_npt_log(85000.0, 300.0, 1.05, -13000.0, n_rows=60, stage="npt-production", seed=2)
    text = eq + "ERROR: Out of range atoms - cannot compute PPPM (../pppm.cpp:1935)\n" + prod
    t = parse_thermo_log(text)
    assert len(t) == 100
    assert [e.category for e in detect_errors(text)] == [PPPM_OUT_OF_RANGE]


def test_unsupported_units():
    with pytest.raises(UnsupportedUnits):
        parse_thermo_log(MINIMAL.replace("units real", "units metal"))


def test_not_a_log():
    with pytest.raises(NotAThermoLog):
        parse_thermo_log("hello\nworld\n")


@pytest.mark.parametrize("bad_row", ["30 300", "30 -nan 1.0", "30 300 inf", "30 300 1.0 7"])
def test_malformed_rows(bad_row):
    text = MINIMAL.replace("Loop time", bad_row + "\nLoop time")
    with pytest.raises(MalformedRow) as err:
        parse_thermo_log(text)
    assert err.value.line_no == 6


def test_scientific_notation_and_warnings_between_rows():
    text = MINIMAL.replace("10 301 1.02", "WARNING: something odd\n1.0e1 3.01e2 1.02")
    t = parse_thermo_log(text)
    assert t.column("Temp")[1] == 301.0


def test_minimize_section_label_and_default_selection():
    text = ("units real\nminimize 1e-4 1e-6 100 1000\nStep Temp Density\n0 0 1.0\n5 0 1.0\nLoop time of 1\n"
            "run 20\nStep Temp Density\n5 300 1.0\n15 300 1.0\nLoop time of 1\n")
    t = parse_thermo_log(text)
    assert t.labels == ["minimize", "run-2"]
    assert t.select().labels == ["run-2"]


def test_round_trip():
    t = parse_thermo_log(_two_stage())
    again = parse_thermo_log(t.to_text())
    assert again.labels == t.labels
    assert np.array_equal(again.step, t.step)
    for name in t.names:
        assert np.array_equal(again.columns[name], t.columns[name], equal_nan=True)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n_rows=st.integers(10, 400), phi=st.floats(0.0, 0.9))
def test_parse_is_total_over_npt_generator(seed, n_rows, phi):
    text, truth = synth.gen_npt_log(50000.0, 250.0, 1.1, -5000.0, n_rows=n_rows, seed=seed, phi=phi)
    assert len(parse_thermo_log(text)) == truth["n_rows"]


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), rows=st.integers(2, 60), sigma=st.floats(0.0, 0.01))
def test_parse_is_total_over_sweep_generator(seed, rows, sigma):
    model = synth.pe_like_model(rows_per_bin=rows, noise_sigma=sigma)
    text, truth = synth.gen_bilinear_log(model, seed)
    t = parse_thermo_log(text)
    assert len(t) == rows * truth["n_bins"]


# --------------------------------------------------------------------------- data files

def test_polyethylene_data_file_counts():
    topo, lo, hi, xyz = synth.gen_polyethylene_topology(10, 150)
    text = write_data_file(topo, lo, hi, xyz)
    parsed = parse_data_file(text)
    assert parsed.n_atoms == 9020
    assert parsed.n_molecules == 10
    assert parsed.type_labels == {1: "c3", 2: "hc"}
    # terminals are the chain-end carbons: first and 300th carbon of each chain
    per_chain = 902
    for m, (a, b) in parsed.chains.items():
        first = (m - 1) * per_chain + 1
        assert (a, b) == (first, first + 299)


def test_data_file_round_trip_with_images():
    traj, topo, _ = synth.gen_trajectory("wrapped_chain")
    f = traj.frames[0]
    df = read_data_file(write_data_file(topo, f.box_lo, f.box_hi, f.coords, f.images))
    assert np.array_equal(df.coords, f.coords)
    assert np.array_equal(df.images, f.images)
    assert df.topology.chains == topo.chains


def _tiny_data(n_atoms_decl=2, bond_j=2):
    return f"""title

{n_atoms_decl} atoms
1 bonds
1 atom types
1 bond types

0 10 xlo xhi
0 10 ylo yhi
0 10 zlo zhi

Masses

1 12.011 # c3

Atoms # full

1 1 1 0.0 1 1 1
2 1 1 0.0 2 1 1

Bonds

1 1 1 {bond_j}
"""


def test_data_file_errors():
    assert parse_data_file(_tiny_data()).chains == {1: (1, 2)}
    with pytest.raises(HeaderMismatch):
        parse_data_file(_tiny_data(n_atoms_decl=3))
    with pytest.raises(DanglingBond):
        parse_data_file(_tiny_data(bond_j=9))


# --------------------------------------------------------------------------- dumps

def test_dump_round_trip_and_wrapped_flag():
    traj, topo, _ = synth.gen_trajectory("rods", {"lengths": [10.0, 20.0], "n_frames": 3}, seed=4)
    back = parse_dump(write_dump(traj, topo.type_ids))
    assert back.wrapped is False  # xu/yu/zu columns
    assert len(back) == 3
    for a, b in zip(traj.frames, back.frames):
        assert np.array_equal(a.coords, b.coords)


def test_single_atom_frame():
    text = ("ITEM: TIMESTEP\n0\nITEM: NUMBER OF ATOMS\n1\nITEM: BOX BOUNDS pp pp pp\n-1 1\n-1 1\n-1 1\n"
            "ITEM: ATOMS id x y z\n1 0 0 0\n")
    t = parse_dump(text)
    assert len(t) == 1 and t.atom_ids.tolist() == [1]


def test_dump_errors():
    good = ("ITEM: TIMESTEP\n0\nITEM: NUMBER OF ATOMS\n1\nITEM: BOX BOUNDS pp pp pp\n-1 1\n-1 1\n-1 1\n"
            "ITEM: ATOMS id x y z\n1 0 0 0\n")
    with pytest.raises(MissingIdColumn):
        parse_dump(good.replace("ATOMS id x", "ATOMS type x"))
    other = good.replace("TIMESTEP\n0", "TIMESTEP\n10").replace("\n1 0 0 0", "\n2 0 0 0")
    with pytest.raises(InconsistentAtomSet):
        parse_dump(good + other)


def test_large_dump_frame_count():
    rng = np.random.default_rng(0)
    ids = np.arange(1, 7021)
    frames = [Frame(k * 1000, np.zeros(3), np.full(3, 45.0), rng.uniform(0, 45.0, (7020, 3))) for k in range(101)]
    text = write_dump(Trajectory(ids, frames, wrapped=True))
    t0 = time.perf_counter()
    traj = parse_dump(text)
    assert len(traj) == 101 and len(traj.atom_ids) == 7020
    assert time.perf_counter() - t0 < 20.0


# --------------------------------------------------------------------------- errors

def test_three_stage_script_with_two_reinits():
    script = "".join(
        f"# STAGE: s{k}\nread_data in{k}.data\nvelocity all create 300 1234 dist gaussian\nrun 1000\n"
        for k in range(3))
    events = detect_errors(script)
    assert [e.category for e in events] == [VELOCITY_REINIT, VELOCITY_REINIT]
    assert [e.line_no for e in events] == [7, 11]


def test_unknown_error_line():
    events = detect_errors("ERROR: Lost atoms: original 9020 current 9000\n")
    assert [e.category for e in events] == [UNKNOWN]
