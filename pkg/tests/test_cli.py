import json
import math

import numpy as np
import pytest

from cadfit.cli import CD_SENTINEL, main
from cadfit.geometry import TriMesh, box_mesh, load_mesh, save_stl
from cadfit.program import deserialize_program


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    lines = capsys.readouterr().out.strip().splitlines()
    return code, json.loads(lines[-1])


@pytest.fixture(scope="module")
def cube_runs(tmp_path_factory):
    d = tmp_path_factory.mktemp("cube")
    save_stl(box_mesh((0, 0, 0), (2, 2, 2)), d / "cube.stl")
    codes = [main(["reconstruct", str(d / "cube.stl"), "--out", str(d / f"run{k}"), "--seed", "7"]) for k in range(2)]
    return d, codes


def test_cube_reconstruct_writes_outputs(cube_runs):
    d, codes = cube_runs
    assert codes == [0, 0]
    report = json.loads((d / "run0" / "report.json").read_text())
    assert report["iou"] >= 0.98 and not report["invalid"]
    assert report["monotone"]
    for name in ("program.json", "program.py", "reconstruction.stl", "manifest.json"):
        assert (d / "run0" / name).exists()
    manifest = json.loads((d / "run0" / "manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["config"]["seed"] == 7


def test_cube_program_in_world_units(cube_runs):
    d, _ = cube_runs
    prog = deserialize_program((d / "run0" / "program.json").read_text())
    np.testing.assert_allclose(prog.bounds, [[0, 0, 0], [2, 2, 2]], atol=0.05)
    assert load_mesh(d / "run0" / "reconstruction.stl").is_watertight


def test_reconstruct_is_deterministic(cube_runs):
    d, _ = cube_runs
    for name in ("program.json", "report.json", "program.py"):
        assert (d / "run0" / name).read_bytes() == (d / "run1" / name).read_bytes()


def test_open_mesh_exit_two(tmp_path, capsys):
    m = box_mesh()
    save_stl(TriMesh(m.vertices, m.faces[:-2]), tmp_path / "open.stl")
    code, msg = run(capsys, "reconstruct", tmp_path / "open.stl", "--out", tmp_path / "o")
    assert code == 2
    assert msg["error"]["kind"] == "not_watertight"


def test_missing_and_malformed_inputs(tmp_path, capsys):
    code, msg = run(capsys, "reconstruct", tmp_path / "none.stl", "--out", tmp_path / "o")
    assert code == 2 and msg["status"] == "error"
    (tmp_path / "bad.stl").write_bytes(b"\0" * 90)
    code, msg = run(capsys, "reconstruct", tmp_path / "bad.stl", "--out", tmp_path / "o")
    assert code == 2 and msg["error"]["kind"] != "not_watertight"


def test_config_error_exit_three(tmp_path, capsys):
    save_stl(box_mesh(), tmp_path / "c.stl")
    (tmp_path / "cfg.json").write_text(json.dumps({"residual_threshold": -1}))
    code, msg = run(capsys, "reconstruct", tmp_path / "c.stl", "--config", tmp_path / "cfg.json", "--out", tmp_path / "o")
    assert code == 3 and msg["error"]["kind"] == "config"


def test_bad_arguments_exit_two(capsys):
    assert main(["frobnicate"]) == 2
    assert main(["gen", "--n", "3", "--complexity", "extreme"]) == 2
    capsys.readouterr()


# --------------------------------------------------------------------- eval


@pytest.fixture(scope="module")
def gt_path(tmp_path_factory):
    d = tmp_path_factory.mktemp("eval")
    save_stl(box_mesh((-0.5, -0.3, -0.2), (0.5, 0.3, 0.2)), d / "gt.stl")
    save_stl(box_mesh((-0.4, -0.3, -0.2), (0.6, 0.3, 0.2)), d / "moved.stl")
    return d


def test_eval_self(gt_path, capsys):
    code, rep = run(capsys, "eval", "--pred", gt_path / "gt.stl", "--gt", gt_path / "gt.stl")
    assert code == 0
    assert rep["iou"] == pytest.approx(1.0, abs=0.02) and rep["cd"] < 1e-2
    assert set(rep) >= {"iou", "cd", "invalid", "align", "a", "b", "E"}
    assert rep["E"] == pytest.approx(rep["a"] + rep["b"])


def test_eval_translation_removed_by_alignment(gt_path, capsys):
    _, base = run(capsys, "eval", "--pred", gt_path / "gt.stl", "--gt", gt_path / "gt.stl")
    _, moved = run(capsys, "eval", "--pred", gt_path / "moved.stl", "--gt", gt_path / "gt.stl")
    assert moved["iou"] == pytest.approx(base["iou"], abs=1e-2)
    assert moved["cd"] == pytest.approx(base["cd"], abs=1e-2)
    _, raw = run(capsys, "eval", "--pred", gt_path / "moved.stl", "--gt", gt_path / "gt.stl", "--no-align")
    assert raw["iou"] < 0.9
    assert raw["align"]["scale"] == 1.0


def test_eval_malformed_program(gt_path, tmp_path, capsys):
    (tmp_path / "p.json").write_text('{"version":1,"ops":[{"kind":"extrude"}]}')
    code, rep = run(capsys, "eval", "--pred", tmp_path / "p.json", "--gt", gt_path / "gt.stl")
    assert code == 0
    assert rep["invalid"] is True and rep["iou"] == 0.0 and rep["cd"] == CD_SENTINEL


def test_eval_program_json(gt_path, tmp_path, capsys):
    from conftest import box_op
    from cadfit.program import Program, serialize_program

    (tmp_path / "p.json").write_text(serialize_program(Program((box_op((-0.5, -0.3, -0.2), (0.5, 0.3, 0.2)),))))
    _, rep = run(capsys, "eval", "--pred", tmp_path / "p.json", "--gt", gt_path / "gt.stl", "--no-align")
    assert rep["iou"] >= 0.97 and not rep["invalid"]


# ---------------------------------------------------------------------- gen


def test_gen_easy(tmp_path, capsys):
    code, msg = run(capsys, "gen", "--n", 10, "--complexity", "easy", "--seed", 4, "--out", tmp_path)
    assert code == 0 and msg["n"] == 10
    stls = sorted(tmp_path.glob("*.stl"))
    assert len(stls) == 10 and len(list(tmp_path.glob("*.json"))) == 10
    for p in stls:
        assert load_mesh(p).is_watertight
        n_ops = len(deserialize_program(p.with_suffix(".json").read_text()))
        assert 1 <= n_ops <= 2


def test_gen_medium_has_cut(tmp_path, capsys):
    run(capsys, "gen", "--n", 6, "--complexity", "medium", "--seed", 1, "--out", tmp_path)
    for p in tmp_path.glob("*.json"):
        prog = deserialize_program(p.read_text())
        assert 3 <= len(prog) <= 4
        assert any(op.role == "cut" for op in prog.ops)


def test_gen_hard_has_features(tmp_path, capsys):
    run(capsys, "gen", "--n", 4, "--complexity", "hard", "--seed", 2, "--out", tmp_path)
    for p in tmp_path.glob("*.json"):
        prog = deserialize_program(p.read_text())
        assert 5 <= len(prog) <= 6
        assert any(op.role == "cut" for op in prog.ops)
        assert any(op.corner_features for op in prog.ops)


def test_gen_same_seed_same_files(tmp_path, capsys):
    run(capsys, "gen", "--n", 3, "--complexity", "medium", "--seed", 9, "--out", tmp_path / "a")
    run(capsys, "gen", "--n", 3, "--complexity", "medium", "--seed", 9, "--out", tmp_path / "b")
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()


def test_gen_rejects_zero(tmp_path, capsys):
    code, msg = run(capsys, "gen", "--n", 0, "--complexity", "easy", "--out", tmp_path)
    assert code == 2 and msg["status"] == "error"
