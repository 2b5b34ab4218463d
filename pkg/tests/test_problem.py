import numpy as np
import pytest

from sublevy.grids import Field
from sublevy.problem import MODES, ProblemError, parse_problem, to_text

MINIMAL = """
[alpha.a]
q = 1
"""

GHEAT = """
[uncertainty]
cutoff = 1.0

[alpha.lo]
q = 0.25

[alpha.hi]
q = 1.0

[initial]
family = cosine
freq = 1.0

[scheme]
final_time = 0.5

[run]
mode = solve
"""


def test_minimal_brownian_parse():
    spec = parse_problem(MINIMAL)
    assert spec.mode == "solve"
    assert len(spec.uncertainty.fields) == 1
    f = spec.uncertainty.fields[0]
    assert f.label == "a"
    assert f.structure == "constant"
    assert np.array_equal(f.base.b, [0.0])
    assert np.array_equal(f.base.Q, [[1.0]])
    assert f.base.nu.is_empty                    # no jump part given
    assert spec.grid.dim == 1
    assert spec.grid.points == 241
    assert spec.grid.half_width == 6.0
    assert spec.scheme.final_time == 1.0
    assert spec.run["seed"] == 0
    assert spec.run["n_paths"] == 10_000


def test_two_sigma_set():
    spec = parse_problem(GHEAT)
    assert spec.uncertainty.labels == ("hi", "lo")   # sorted by member name
    qs = sorted(float(f.base.Q[0, 0]) for f in spec.uncertainty.fields)
    assert qs == [0.25, 1.0]
    assert spec.scheme.final_time == 0.5


def test_atoms_member():
    spec = parse_problem("""
[alpha.a]
b = 0.5
atoms = [[1.0, 2.0], [-0.5, 0.25]]
""")
    nu = spec.uncertainty.fields[0].base.nu
    assert nu.masses.sum() == pytest.approx(2.25)


def test_stable_member():
    spec = parse_problem("""
[alpha.a]
stable_index = 1.2
stable_scale = 0.5
stable_tempering = 1.0
""")
    nu = spec.uncertainty.fields[0].base.nu
    assert nu.index == 1.2
    # symmetric family: one ray per sign, each at the given scale
    assert [r.weight for r in nu.rays] == [0.5, 0.5]
    assert all(r.tempering == 1.0 for r in nu.rays)


def test_affine_drift_member():
    spec = parse_problem("""
[alpha.a]
form = affine-drift
b = 1.0
slope = 0.5
""")
    f = spec.uncertainty.fields[0]
    assert f.structure == "drift"
    assert f.triplet_at(np.array([2.0])).b[0] == pytest.approx(2.0)


def test_sde_member():
    spec = parse_problem("""
[alpha.a]
form = sde
q = 1.0
sigma0 = 1.0
sigma1 = 0.5
""")
    f = spec.uncertainty.fields[0]
    assert f.structure == "general"
    # Q(x) = sigma(x) Q sigma(x)^T with sigma(1) = 1.5
    assert f.triplet_at(np.array([1.0])).Q[0, 0] == pytest.approx(2.25)


def test_negative_atom_mass_names_entry():
    with pytest.raises(ProblemError) as exc:
        parse_problem("""
[alpha.a]
atoms = [[1.0, 0.5], [2.0, -0.5]]
""")
    assert str(exc.value) == \
        "[alpha.a] atoms: entry 2: mass must be positive, got -0.5"


def test_atom_at_origin_rejected():
    with pytest.raises(ProblemError, match="entry 1: atom location must be nonzero"):
        parse_problem("[alpha.a]\natoms = [[0.0, 1.0]]\n")


def test_both_jump_families_rejected():
    with pytest.raises(ProblemError, match="single jump family"):
        parse_problem("""
[alpha.a]
atoms = [[1.0, 1.0]]
stable_index = 1.5
""")


def test_unknown_key_rejected():
    with pytest.raises(ProblemError, match=r"\[grid\] spacing: unknown key"):
        parse_problem("[alpha.a]\nq = 1\n\n[grid]\nspacing = 0.1\n")


def test_unknown_section_rejected():
    with pytest.raises(ProblemError, match=r"\[boundary\]: unknown section"):
        parse_problem("[alpha.a]\nq = 1\n\n[boundary]\nkind = flat\n")


def test_empty_member_name_rejected():
    with pytest.raises(ProblemError, match="member name must be nonempty"):
        parse_problem("[alpha.]\nq = 1\n")


def test_no_members_rejected():
    with pytest.raises(ProblemError, match="at least one"):
        parse_problem("[grid]\ndim = 1\n")


def test_bad_mode_rejected():
    assert "solve" in MODES and len(MODES) == 7
    with pytest.raises(ProblemError, match=r"\[run\] mode: unknown value"):
        parse_problem("[alpha.a]\nq = 1\n\n[run]\nmode = fly\n")


def test_seed_range():
    with pytest.raises(ProblemError, match="64 bits"):
        parse_problem("[alpha.a]\nq = 1\n\n[run]\nseed = -1\n")
    with pytest.raises(ProblemError, match="64 bits"):
        parse_problem(f"[alpha.a]\nq = 1\n\n[run]\nseed = {1 << 64}\n")


def test_cutoff_must_be_positive():
    with pytest.raises(ProblemError, match=r"\[uncertainty\] cutoff"):
        parse_problem("[uncertainty]\ncutoff = 0\n\n[alpha.a]\nq = 1\n")


def test_matrix_shape_checked():
    with pytest.raises(ProblemError, match="2x2 matrix"):
        parse_problem("[grid]\ndim = 2\n\n[alpha.a]\nq = [[1.0, 0.0]]\n")


def test_stable_needs_dim_one():
    with pytest.raises(ProblemError, match="one-dimensional"):
        parse_problem("[grid]\ndim = 2\n\n[alpha.a]\nstable_index = 1.5\n")


def test_tabulated_initial_counts_values():
    text = "[alpha.a]\nq = 1\n\n[grid]\npoints = 5\nhalf_width = 2.0\n\n" \
           "[initial]\nfamily = tabulated\nvalues = [0.0, 1.0, 4.0]\n"
    with pytest.raises(ProblemError, match="expected 5 values"):
        parse_problem(text)
    good = text.replace("[0.0, 1.0, 4.0]", "[4.0, 1.0, 0.0, 1.0, 4.0]")
    spec = parse_problem(good)
    assert isinstance(spec.initial, Field)
    assert spec.initial.values[0] == 4.0


def test_run_alpha_must_name_member():
    with pytest.raises(ProblemError, match=r"\[run\] alpha: unknown value"):
        parse_problem("[alpha.a]\nq = 1\n\n[run]\nalpha = b\n")
    spec = parse_problem("[alpha.a]\nq = 1\n\n[run]\nalpha = a\n")
    assert spec.run["alpha"] == "a"


def test_malformed_file_reported():
    with pytest.raises(ProblemError, match="malformed problem file"):
        parse_problem("alpha.a]\nq = 1\n")


def test_round_trip_canonical():
    text = """
[uncertainty]
cutoff = 2.0

[alpha.jumpy]
b = 0.3
q = 0.5
atoms = [[1.5, 0.75], [-1.0, 0.25]]

[alpha.smooth]
form = affine-drift
q = 1.0
slope = -0.2

[initial]
family = gaussian-bump
center = 0.5
width = 1.5

[grid]
half_width = 8.0
points = 321

[scheme]
final_time = 0.25
eps = 0.01

[run]
mode = dp
seed = 7
n_paths = 500
"""
    first = parse_problem(text)
    rendered = to_text(first)
    second = parse_problem(rendered)
    assert second.canonical == first.canonical
    assert to_text(second) == rendered
    assert second.mode == "dp" and second.run["seed"] == 7
