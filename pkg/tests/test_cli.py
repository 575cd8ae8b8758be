import json

import pytest

from morphoseek import kernel
from morphoseek.cli import main
from morphoseek.kernel import DESK_GRID
from morphoseek.relations import known_symmetries, serialize


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv, "--json")
    return code, json.loads(out)


@pytest.fixture
def catalogue_files(tmp_path):
    paths = {}
    for name, rel in known_symmetries(DESK_GRID).items():
        path = tmp_path / f"{name}.json"
        path.write_bytes(serialize(rel))
        paths[name] = path
    return paths


def verdicts(report):
    return {(r["id"], r["kernel"]): r["verdict"] for r in report["rows"]}


# -- symmetries -------------------------------------------------------------------

def test_symmetries_cyclic_all_pass(capsys):
    code, report = run_json(capsys, "symmetries")
    assert code == 0
    assert len(report["rows"]) == 10
    assert {r["verdict"] for r in report["rows"]} == {"PASS"}
    assert [r["id"] for r in report["rows"]] == sorted(r["id"] for r in report["rows"])
    meta = report["meta"]
    assert meta["seed"] == 0 and len(meta["config_hash"]) == 16 and "numpy" in meta["versions"]


def test_symmetries_noncyclic(capsys):
    code, report = run_json(capsys, "symmetries", "--kernel", "noncyclic")
    assert code == 1
    v = {r["id"]: r["verdict"] for r in report["rows"]}
    for name in ("translate_0_1", "translate_1_0", "translate_3_2", "transpose_xy"):
        assert v[name] == "FAIL"
    for name in ("negate_ssh", "negate_G", "negate_F", "scale_gf"):
        assert v[name] == "PASS"


def test_symmetries_rectangular_grid_has_no_transpose(capsys):
    code, report = run_json(capsys, "symmetries", "--grid", "2x4x5")
    assert code == 0
    assert "transpose_xy" not in {r["id"] for r in report["rows"]}


def test_table_numbers_match_json(capsys, tmp_path):
    report_path = tmp_path / "r.json"
    code, out, _ = run(capsys, "symmetries", "--report", report_path)
    report = json.loads(report_path.read_text())
    for row in report["rows"]:
        line = next(l for l in out.splitlines() if l.startswith(row["id"] + " "))
        assert repr(row["max_rel_err"]) in line.split()


def test_bad_config(capsys, tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("bogus = 1\n")
    code, _, err = run(capsys, "symmetries", "--config", cfg)
    assert code == 2 and "bogus" in err
    cfg.write_text("seed = [\n")
    assert run(capsys, "symmetries", "--config", cfg)[0] == 2
    assert run(capsys, "symmetries", "--grid", "4x4")[0] == 2


def test_config_file_and_flag_precedence(capsys, tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('seed = 5\nkernel = "noncyclic"\nholdout = 7\n')
    code, report = run_json(capsys, "symmetries", "--config", cfg, "--kernel", "cyclic")
    assert code == 0
    assert report["meta"]["seed"] == 5
    assert report["meta"]["config"]["kernel"] == "cyclic"
    assert report["meta"]["config"]["holdout"] == 7


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


# -- discover ---------------------------------------------------------------------

def test_discover_writes_files(capsys, tmp_path):
    out = tmp_path / "run"
    code, _, _ = run(capsys, "discover", "--seed", 1, "--max-relations", 1, "--max-evaluations", 200000,
                     "--out", out)
    assert code == 0
    assert (out / "relation-1.json").exists()
    result = json.loads((out / "result.json").read_text())
    assert result["schema"] == "morphoseek-result/1"
    assert result["meta"]["seed"] == 1
    code, report = run_json(capsys, "verify", out / "relation-1.json")
    assert code == 0


def test_discover_nothing_found(capsys, tmp_path):
    out = tmp_path / "run"
    code, _, _ = run(capsys, "discover", "--max-relations", 0, "--out", out)
    assert code == 1
    assert not list(out.glob("relation-*.json"))


def test_discover_unwritable_output(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, _, err = run(capsys, "discover", "--max-relations", 0, "--out", blocker / "sub")
    assert code == 2 and "cannot write" in err


# -- verify -----------------------------------------------------------------------

def test_verify_catalogue_roundtrip(capsys, catalogue_files):
    code, report = run_json(capsys, "verify", *catalogue_files.values())
    assert code == 0 and len(report["rows"]) == 10


def test_verify_translation_under_noncyclic(capsys, catalogue_files):
    code, report = run_json(capsys, "verify", catalogue_files["translate_0_1"], "--kernel", "noncyclic")
    assert code == 1
    assert report["rows"][0]["verdict"] == "FAIL"


def test_verify_truncated_file(capsys, tmp_path, catalogue_files):
    bad = tmp_path / "broken.json"
    bad.write_bytes(catalogue_files["negate_ssh"].read_bytes()[:100])
    code, _, err = run(capsys, "verify", bad)
    assert code == 2 and "broken.json" in err


def test_verify_grid_mismatch(capsys, catalogue_files):
    code, _, err = run(capsys, "verify", catalogue_files["negate_ssh"], "--grid", "2x4x4")
    assert code == 2 and "negate_ssh.json" in err


def test_verify_needs_input(capsys):
    assert run(capsys, "verify")[0] == 2


# -- compare ----------------------------------------------------------------------

def test_compare_catalogue(capsys):
    code, report = run_json(capsys, "compare", "--catalogue")
    assert code == 0
    disc = report["discriminating"]
    assert "transpose_xy" in disc and any(d.startswith("translate_") for d in disc)
    assert "negate_ssh" not in disc
    assert len(report["rows"]) == 20


def test_compare_empty(capsys):
    code, report = run_json(capsys, "compare")
    assert code == 0 and report["rows"] == [] and report["discriminating"] == []


def test_compare_same_kernel(capsys):
    code, report = run_json(capsys, "compare", "--catalogue", "--against", "cyclic")
    assert code == 0 and report["discriminating"] == []


# -- emit-tests / bundles ---------------------------------------------------------

@pytest.fixture
def bundle(capsys, tmp_path):
    path = tmp_path / "bundle.json"
    code, _, _ = run(capsys, "emit-tests", "--catalogue", "--out", path)
    assert code == 0
    return path


def test_bundle_contents(bundle):
    doc = json.loads(bundle.read_text())
    assert doc["schema"] == "morphoseek-bundle/1"
    assert doc["kernel"] == "cyclic" and doc["seed"] == 0
    expected = {e["id"]: e["expected"] for e in doc["relations"]}
    assert expected["translate_0_1"] == {"cyclic": "PASS", "noncyclic": "FAIL"}
    assert expected["negate_F"] == {"cyclic": "PASS", "noncyclic": "PASS"}


def test_bundle_replays_clean(capsys, bundle):
    code, out, _ = run(capsys, "verify", "--bundle", bundle)
    assert code == 0 and "all expectations met" in out


def test_bundle_detects_patched_kernel(capsys, bundle, monkeypatch):
    monkeypatch.setitem(kernel.KERNELS, "cyclic", kernel.energy_noncyclic)
    code, report = run_json(capsys, "verify", "--bundle", bundle)
    assert code == 1
    assert "translate_0_1" in report["mismatches"] and "negate_ssh" not in report["mismatches"]


def test_bundle_against_other_kernel(capsys, bundle):
    assert run(capsys, "verify", "--bundle", bundle, "--kernel", "noncyclic")[0] == 1


def test_bundle_tolerance_wins(capsys, bundle):
    doc = json.loads(bundle.read_text())
    doc["tolerance"] = 10.0
    bundle.write_text(json.dumps(doc))
    # the bundle's loose tolerance hides the boundary bug that the strict
    # command-line tolerance would expose
    code, report = run_json(capsys, "verify", "--bundle", bundle, "--tolerance", "1e-8", "--kernel", "noncyclic")
    assert code == 0
    assert {r["verdict"] for r in report["rows"]} == {"PASS"}


def test_bundle_malformed(capsys, tmp_path):
    bad = tmp_path / "b.json"
    bad.write_text('{"schema": "morphoseek-bundle/1", "kernel": "cyclic"}')
    assert run(capsys, "verify", "--bundle", bad)[0] == 2


def test_emit_refuses_unvalidated(capsys, tmp_path, catalogue_files):
    code, _, err = run(capsys, "emit-tests", catalogue_files["translate_0_1"], "--kernel", "noncyclic",
                       "--out", tmp_path / "b.json")
    assert code == 2 and "translate_0_1" in err
    assert not (tmp_path / "b.json").exists()
