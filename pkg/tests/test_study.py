import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from febe.problems import example1_spec, example2_spec
from febe.solver import SolverConfig
from febe.study import (CSV_COLUMNS, StudyConfig, StudyError, StudyRow, convergence_rate, emit_csv,
                        extrapolate_energy, read_csv, run_study)

# reference energies of the friction example (uniform meshes)
REF_DOF = [28, 80, 256, 896, 3328, 12800, 50176]
REF_J = [-0.511609, -0.517938, -0.521857, -0.524293, -0.525841, -0.526865, -0.527571]


def test_rate_formula_on_reference_errors():
    assert convergence_rate(0.1945908, 0.1535874, 21, 65) == pytest.approx(-0.209, abs=5e-4)
    assert math.isnan(convergence_rate(0.0, 0.1, 10, 20))
    assert math.isnan(convergence_rate(0.1, 0.1, 10, 10))


def test_extrapolation_recovers_generating_model():
    N = np.array([100.0, 400.0, 1600.0])
    assert extrapolate_energy(1 + 4 * N ** -0.5, N) == pytest.approx(1.0, abs=1e-10)


@given(st.floats(-0.9, -0.1), st.floats(-5, 5), st.floats(0.1, 10))
@settings(max_examples=50)
def test_extrapolation_property(alpha, j_inf, c):
    N = np.array([50.0, 210.0, 800.0])
    J = j_inf + c * N ** alpha
    assert extrapolate_energy(J, N) == pytest.approx(j_inf, abs=1e-8 * (1 + abs(j_inf) + c))


def test_extrapolation_constant_and_non_monotone():
    assert extrapolate_energy([2.0, 2.0, 2.0], [1, 2, 3]) == 2.0
    # non-monotone triple: Aitken delta-squared
    J = np.array([1.0, 0.5, 0.75])
    d1, d2 = J[1] - J[0], J[2] - J[1]
    assert extrapolate_energy(J, [10, 20, 40]) == pytest.approx(J[2] - d2 ** 2 / (d2 - d1))
    with pytest.raises(ValueError):
        extrapolate_energy([1.0, 2.0], [1, 2])


def test_extrapolation_of_reference_energies():
    j_inf = extrapolate_energy(REF_J, REF_DOF)
    assert -0.531 <= j_inf <= -0.526
    # reference delta J of the last row is 0.001287, i.e. J_inf = -0.528858
    assert j_inf == pytest.approx(-0.5289, abs=3e-4)


def test_emit_csv_empty_and_single_row(tmp_path):
    path = tmp_path / "a.csv"
    emit_csv([], path)
    assert path.read_text().splitlines() == [",".join(CSV_COLUMNS)]
    emit_csv([StudyRow(dof=21, err_w1p=0.123456789, uzawa_its=1)], path)
    lines = path.read_text().splitlines()
    assert len(lines) == 2
    assert lines[1].startswith("21,0.1234568,,")


def test_emit_csv_reports_path_on_failure(tmp_path):
    with pytest.raises(OSError, match="missing"):
        emit_csv([], tmp_path / "missing" / "a.csv")


finite = st.floats(-1e6, 1e6, allow_nan=False).filter(lambda v: v == 0 or abs(v) > 1e-6)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 10 ** 6), finite, finite, st.integers(0, 50)), max_size=5))
def test_csv_roundtrip(tmp_path_factory, data):
    rows = [StudyRow(dof=d, err_w1p=e, J_h=j, newton_its=n) for d, e, j, n in data]
    path = tmp_path_factory.mktemp("csv") / "r.csv"
    emit_csv(rows, path)
    back = read_csv(path)
    assert len(back) == len(rows)
    for r, b in zip(rows, back):
        assert b["dof"] == r.dof and b["newton_its"] == r.newton_its
        assert b["err_w1p"] == pytest.approx(r.err_w1p, rel=5e-7)
        assert b["J_h"] == pytest.approx(r.J_h, rel=5e-7)
        assert math.isnan(b["eta"])


def strip_time(path):
    return [line.rsplit(",", 1)[0] for line in path.read_text().splitlines()]


def test_study_is_deterministic(tmp_path):
    spec = example2_spec()
    paths = []
    for k in range(2):
        rows = run_study(spec, "uniform", 3)
        paths.append(tmp_path / f"{k}.csv")
        emit_csv(rows, paths[-1])
    assert strip_time(paths[0]) == strip_time(paths[1])


def test_rates_from_consecutive_rows():
    rows = run_study(example2_spec(), "uniform", 3)
    assert math.isnan(rows[0].rate_w1p)
    for prev, row in zip(rows, rows[1:]):
        assert row.rate_q == pytest.approx(convergence_rate(prev.err_q, row.err_q, prev.dof, row.dof))
    assert [r.dof for r in rows] == [21, 65, 225]


def test_adaptive_refinement_approaches_corner():
    dists = []

    def record(level, row, mesh):
        r = np.linalg.norm(mesh.nodes, axis=1)
        dists.append(r[r > 0].min())

    run_study(example2_spec(), "adaptive", 6, callback=record)
    assert all(b < a for a, b in zip(dists, dists[1:]))


def test_example1_energy_decreases_with_dJ_filled():
    rows = run_study(example1_spec(), "uniform", 3)
    J = [r.J_h for r in rows]
    assert all(b < a for a, b in zip(J, J[1:]))
    assert all(r.uzawa_its <= 3 for r in rows)
    assert all(r.dJ > 0 for r in rows)
    assert [r.dof for r in rows] == [28, 80, 256]


def test_failure_keeps_completed_rows():
    cfg = StudyConfig(solver=SolverConfig(newton_max=10, line_search="never"))
    with pytest.raises(StudyError, match="level 2") as exc:
        run_study(example1_spec(), "uniform", 4, cfg)
    assert len(exc.value.rows) == 2


def test_compatibility_gate_runs_before_solving():
    spec = example2_spec()
    bad = dataclasses.replace(spec, f=lambda pts: 2.0 * spec.f(pts))
    with pytest.raises(ValueError, match="incompatible"):
        run_study(bad, "uniform", 1)


def test_unknown_mode():
    with pytest.raises(ValueError):
        run_study(example2_spec(), "hp", 1)


def test_mesh_dump(tmp_path):
    cfg = StudyConfig(dump_meshes=str(tmp_path), dump_indicators=True)
    run_study(example2_spec(), "adaptive", 2, cfg)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["indicators_00.csv", "indicators_01.csv", "mesh_00.txt", "mesh_01.txt"]
