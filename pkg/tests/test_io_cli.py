import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pqlab.cli import main, parse_grid, UsageError
from pqlab.instances import grid_hodge_instance, random_instance
from pqlab.io import (
    Instance,
    InstanceFormatError,
    dumps_instance,
    loads_instance,
    read_instance,
    read_solution,
    write_instance,
)


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


# file format

@given(st.integers(0, 2**40), st.sampled_from([1.5, 2.0, 3.0, 4.0]), st.integers(1, 5), st.integers(1, 3))
def test_roundtrip_is_byte_identical(seed, p, N, d):
    inst = random_instance(N, d, seed % (N * d + 1), p, seed)
    text = dumps_instance(inst)
    again = loads_instance(text)
    assert dumps_instance(again) == text
    assert np.array_equal(again.a, inst.a) and np.array_equal(again.basis, inst.basis)


def test_roundtrip_special_values(tmp_path):
    inst = Instance(np.array([0.1, 1e-300, 3.0]), 1, np.array([[1.0, -0.0, 2.5e17]]),
                    np.array([-0.0, 1 / 3, 2.0**-1074]), np.zeros(3), 1.25,
                    coefficient=np.array([1.0, 2.0, 0.5]), meta={"note": "x", "nested": {"k": [1, 2]}})
    path = tmp_path / "i.json"
    write_instance(inst, path)
    first = path.read_bytes()
    write_instance(read_instance(path), path)
    assert path.read_bytes() == first
    back = read_instance(path)
    assert np.array_equal(back.a, [0.0, 1 / 3, 2.0**-1074])
    assert np.array_equal(back.coefficient, [1.0, 2.0, 0.5])


def test_file_fields():
    doc = json.loads(dumps_instance(grid_hodge_instance(2, 2, 2.0)))
    assert doc["schema_version"] == 1 and doc["value_dim"] == 1
    assert len(doc["weights"]) == 4 and len(doc["basis"]) == 4 and len(doc["basis"][0]) == 4
    assert doc["map"] == {"kind": "p-power", "coefficient": None}


@pytest.mark.parametrize("mutate,message", [
    (lambda d: d.update(schema_version=2), "schema_version"),
    (lambda d: d.update(weights=[1, -1, 1, 1]), "positive"),
    (lambda d: d.update(a=[1, 2]), "entries"),
    (lambda d: d.update(p=1.0), "p must"),
    (lambda d: d.update(map={"kind": "cubic"}), "map kind"),
    (lambda d: d.pop("basis"), "missing"),
    (lambda d: d.update(basis=[[1, 2, 3]]), "basis rows"),
    (lambda d: d.update(value_dim="one"), "value_dim"),
])
def test_invalid_files_are_rejected(mutate, message):
    doc = json.loads(dumps_instance(grid_hodge_instance(2, 2, 2.0)))
    mutate(doc)
    with pytest.raises(InstanceFormatError, match=message):
        loads_instance(json.dumps(doc))


def test_generators_validate():
    with pytest.raises(ValueError, match="m=9"):
        random_instance(4, 2, 9, 2.0)
    with pytest.raises(ValueError):
        grid_hodge_instance(1, 2, 2.0)


# commands

def test_gen_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for path in (a, b):
        assert run(capsys, "gen", "random", "--N", "8", "--d", "2", "--m", "8", "--seed", "7", "--out", str(path))[0] == 0
    assert a.read_bytes() == b.read_bytes()
    inst = read_instance(a)
    assert inst.subspace().dim_plus == 8


def test_gen_grid_has_rank_three(tmp_path, capsys):
    path = tmp_path / "g.json"
    run(capsys, "gen", "grid-hodge", "--rows", "2", "--cols", "2", "--out", str(path))
    inst = read_instance(path)
    assert inst.space.point_count == 4 and inst.subspace().dim_plus == 3


def test_gen_rejects_oversized_subspace(capsys):
    code, _, err = run(capsys, "gen", "random", "--N", "2", "--d", "1", "--m", "3")
    assert code != 0 and "m=3" in err


def test_solve_linear_example(tmp_path, capsys):
    inst = Instance(np.ones(2), 1, np.array([[1.0, 1.0]]), np.array([1.0, 0.0]), np.array([0.0, 1.0]), 2.0)
    path, sol = tmp_path / "lin.json", tmp_path / "sol.json"
    write_instance(inst, path)
    code, out, _ = run(capsys, "solve", str(path), "--out", str(sol))
    assert code == 0 and "converged=True" in out
    doc = read_solution(sol)
    assert np.allclose(doc["alpha"], [0, 0], atol=1e-12) and np.allclose(doc["beta"], [1, -1])
    assert doc["basic_estimate_ratio"] == pytest.approx(1.0)
    for key in ("residual", "iterations", "converged", "tol"):
        assert key in doc


def test_solve_zero_instance(tmp_path, capsys):
    path, sol = tmp_path / "z.json", tmp_path / "s.json"
    run(capsys, "gen", "random", "--N", "3", "--m", "1", "--zero", "--out", str(path))
    assert run(capsys, "solve", str(path), "--out", str(sol))[0] == 0
    doc = read_solution(sol)
    assert not np.any(doc["alpha"]) and not np.any(doc["beta"]) and doc["basic_estimate_ratio"] == 0


def test_solve_reports_nonconvergence(tmp_path, capsys):
    path = tmp_path / "r.json"
    run(capsys, "gen", "random", "--N", "6", "--d", "2", "--m", "5", "--p", "4", "--out", str(path))
    code, out, _ = run(capsys, "solve", str(path), "--tol", "1e-40")
    assert code == 1 and "converged=False" in out


@pytest.mark.parametrize("content", ["{not json", '{"schema_version": 1}', "[]"])
def test_corrupted_files(tmp_path, capsys, content):
    path = tmp_path / "bad.json"
    path.write_text(content)
    code, _, err = run(capsys, "solve", str(path))
    assert code == 2 and "error" in err


def test_missing_file(capsys):
    code, _, err = run(capsys, "solve", "/nonexistent/instance.json")
    assert code == 2 and "cannot read" in err


def test_commutator_command(tmp_path, capsys):
    g = tmp_path / "g.json"
    run(capsys, "gen", "grid-hodge", "--rows", "3", "--cols", "3", "--out", str(g))
    code, out, _ = run(capsys, "commutator", str(g), "--eps-grid=-0.1,0,0.05,0.1", "--s", "2")
    lines = out.strip().splitlines()
    assert code == 0 and lines[0] == "eps,defect,bound_ratio"
    zero_row = [l for l in lines[1:] if l.startswith("0,")]
    assert zero_row == ["0,0,0"]
    full = tmp_path / "f.json"
    run(capsys, "gen", "random", "--N", "3", "--d", "2", "--m", "6", "--out", str(full))
    _, out, _ = run(capsys, "commutator", str(full))
    assert all(float(l.split(",")[1]) < 1e-12 for l in out.strip().splitlines()[1:])
    code, _, err = run(capsys, "commutator", str(g), "--eps-grid=-1.5")
    assert code == 2


def test_project_and_decompose(tmp_path, capsys):
    r = tmp_path / "r.json"
    run(capsys, "gen", "random", "--N", "5", "--d", "1", "--m", "2", "--p", "3", "--out", str(r))
    code, out, err = run(capsys, "project", str(r))
    assert code == 0 and "ok=True" in err and out.startswith("index,f,alpha")
    code, out, _ = run(capsys, "decompose", str(r), "--count", "3")
    assert code == 0 and len(out.strip().splitlines()) == 4


def test_interpolate_directory(tmp_path, capsys):
    d = tmp_path / "inst"
    d.mkdir()
    run(capsys, "gen", "random", "--N", "4", "--m", "1", "--zero", "--out", str(d / "zero.json"))
    code, out, _ = run(capsys, "interpolate", str(d), "--tau-grid", "0.75,1,1.5")
    assert code == 0
    rows = out.strip().splitlines()[1:]
    assert all(r.split(",")[2] == "0" for r in rows)
    for k in range(3):
        run(capsys, "gen", "random", "--N", "4", "--d", "2", "--m", "3", "--p", "3", "--seed", str(k),
            "--out", str(d / f"r{k}.json"))
    out1 = run(capsys, "interpolate", str(d), "--lambda", "0.75,1.5")[1]
    out2 = run(capsys, "interpolate", str(d), "--lambda", "0.75,1.5")[1]
    assert out1 == out2
    solved = []
    for k in range(3):
        path = tmp_path / f"s{k}.json"
        run(capsys, "solve", str(d / f"r{k}.json"), "--out", str(path))
        solved.append(read_solution(path)["basic_estimate_ratio"])
    tau1 = [r for r in out1.splitlines() if r.startswith("strong,1,")][0]
    assert float(tau1.split(",")[2]) == max(solved)
    assert sum(r.startswith("weak,") for r in out1.splitlines()) == 2


def test_empty_interpolate_dir(tmp_path, capsys):
    code, _, err = run(capsys, "interpolate", str(tmp_path))
    assert code != 0 and "no instances" in err


def test_parse_grid():
    assert parse_grid("1.5,0.75", "x") == (0.75, 1.5)
    with pytest.raises(UsageError):
        parse_grid("", "x")
    with pytest.raises(UsageError):
        parse_grid("a,b", "x")
