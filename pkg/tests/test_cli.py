import json

import numpy as np
import pytest

from subtk.cli import load_config, main, packaged_configs, run
from subtk.io import read_csv, read_matrix_market, read_vector


def write_cfg(path, cfg):
    path.write_text(json.dumps(cfg, indent=2))
    return str(path)


@pytest.fixture
def line_cfg(tmp_path):
    return write_cfg(tmp_path / "line.json", {
        "name": "line",
        "seed": 0,
        "fields": ["(1)"],
        "domain": {"box": [[0, 1]], "resolution": 300},
        "eigen": {"k": 5},
        "nonlinearity": {"B": 1, "p": 4},
        "solve": {"K": 2, "nu_tilde": 1},
        "morse": {"vector": "solution-1.vec"},
    })


def payload(out, task):
    return json.loads((out / ("%s.json" % task)).read_text())


def test_packaged_configs_listed():
    names = packaged_configs()
    for n in ("grushin", "example21", "example51", "elliptic1d", "elliptic2d", "elliptic_exponents"):
        assert n in names


def test_index_elliptic(tmp_path):
    code, rep = run("index", "elliptic2d", tmp_path)
    assert code == 0 and rep["status"] == "ok"
    p = payload(tmp_path, "index")
    assert (p["Q"], p["nu_tilde"], p["metivier_condition_holds"]) == (1, 2, True)
    assert json.loads((tmp_path / "index.report.json").read_text())["exit_code"] == 0


def test_exponents_example51(tmp_path):
    code, _ = run("exponents", "example51", tmp_path)
    assert code == 0
    p = payload(tmp_path, "exponents")
    assert p["exact"] == {"sup_p_A1": "22/9", "sup_p_A2": "12/5"}
    assert p["wider_range"] == "A1"


def test_invalid_sigma_exit_2(tmp_path):
    cfg = write_cfg(tmp_path / "bad.json", {"params": {"p": 2.2, "mu": 4, "sigma": 3.5, "nu_tilde": 3, "theta": 2}})
    code, rep = run("exponents", cfg, tmp_path / "o")
    assert code == 2
    assert rep["error"]["code"] == "violates_h_4"
    assert not (tmp_path / "o" / "exponents.json").exists()


def test_schema_error_reports_line(tmp_path):
    cfg = tmp_path / "s.json"
    cfg.write_text('{\n  "params": {"p": 2.2, "mu": 4},\n  "eigen": {\n    "kk": 3\n  }\n}\n')
    code, rep = run("exponents", str(cfg), tmp_path / "o")
    assert code == 2
    assert rep["error"]["code"] == "schema_invalid"
    with pytest.raises(Exception) as info:
        load_config(str(cfg))
    assert "line" in str(info.value)


def test_json_syntax_error_reports_position(tmp_path):
    cfg = tmp_path / "j.json"
    cfg.write_text('{\n  "params": {"p": 2.2,, "mu": 4}\n}\n')
    code, rep = run("exponents", str(cfg), tmp_path / "o")
    assert code == 2
    assert rep["error"]["code"] == "json_syntax"
    assert "line 2" in rep["error"]["message"]


def test_unknown_config(tmp_path):
    code, rep = run("index", "no-such-config", tmp_path)
    assert code == 2 and rep["error"]["code"] == "config_not_found"


def test_missing_section(tmp_path):
    cfg = write_cfg(tmp_path / "m.json", {"fields": ["(1)"]})
    code, rep = run("eigen", cfg, tmp_path / "o")
    assert code == 2 and rep["error"]["code"] == "missing_section"
    cfg = write_cfg(tmp_path / "c.json", {"fields": ["(1)"], "domain": {"box": [[0, 1]]}})
    code, rep = run("clr", cfg, tmp_path / "o")
    assert code == 2 and rep["error"]["code"] == "missing_section"


def test_eigen_outputs_and_cache(tmp_path):
    cfg = write_cfg(tmp_path / "e.json", {
        "fields": ["(1, 0)", "(0, 1)"],
        "domain": {"box": [[0, 1], [0, 1]], "resolution": 24},
        "eigen": {"k": 40, "export_matrix": True},
    })
    out = tmp_path / "o"
    code, rep = run("eigen", cfg, out)
    assert code == 0 and rep["eigen_cache"] == "miss"
    first = (out / "eigen.json").read_bytes()
    header, rows = read_csv(out / "eigen.csv")
    assert header == ["k", "lambda_k", "residual"] and len(rows) == 40
    assert float(rows[0][1]) == pytest.approx(2 * np.pi ** 2, rel=1e-2)
    M = read_matrix_market(out / "operator.mtx")
    assert M.shape == (23 ** 2, 23 ** 2)
    code, rep = run("eigen", cfg, out)
    assert rep["eigen_cache"] == "hit"
    assert (out / "eigen.json").read_bytes() == first
    cold = tmp_path / "cold"
    run("eigen", cfg, cold)
    assert (cold / "eigen.json").read_bytes() == first


def test_k_too_large(tmp_path):
    cfg = write_cfg(tmp_path / "k.json", {"fields": ["(1)"], "domain": {"box": [[0, 1]], "resolution": 10},
                                          "eigen": {"k": 20}})
    code, rep = run("eigen", cfg, tmp_path / "o")
    assert code == 2 and rep["error"]["code"] == "k_too_large"


def test_clr_elliptic(tmp_path):
    code, _ = run("clr", "elliptic2d", tmp_path)
    assert code == 0
    p = payload(tmp_path, "clr")
    assert abs(p["slope"] - 1.0) < 0.1
    assert p["theoretical_cap"] == 1.0
    assert (tmp_path / "clr.csv").is_file()


def test_solve_then_morse(tmp_path, line_cfg):
    code, _ = run("solve", line_cfg, tmp_path)
    assert code == 0
    p = payload(tmp_path, "solve")
    assert [r["zero_count"] for r in p["records"]] == [0, 1]
    assert p["energies"][0] < p["energies"][1]
    u = read_vector(tmp_path / "solution-1.vec")
    assert u.shape == (301,) and u[0] == 0 and u[-1] == 0
    code, _ = run("morse", line_cfg, tmp_path)
    assert code == 0
    m = payload(tmp_path, "morse")
    assert m["m"] == 1 and m["chain_holds"]


def test_morse_missing_vector(tmp_path, line_cfg):
    code, rep = run("morse", line_cfg, tmp_path / "empty")
    assert code == 2 and rep["error"]["code"] == "vector_not_found"


def test_partial_solve_exit_4(tmp_path):
    cfg = write_cfg(tmp_path / "p.json", {
        "fields": ["(1)"], "domain": {"box": [[0, 1]], "resolution": 100},
        "eigen": {"k": 3}, "solve": {"K": 2, "tol": 1e-30, "max_iter": 2, "nu_tilde": 1},
    })
    code, rep = run("solve", cfg, tmp_path / "o")
    assert code == 4 and rep["status"] == "partial"
    assert rep["warnings"]
    assert (tmp_path / "o" / "solve.json").is_file()


def test_hormander_failure_exit_3(tmp_path):
    cfg = write_cfg(tmp_path / "h.json", {
        "fields": ["(1, 0)", "(x1, 0)"], "domain": {"box": [[0, 1], [0, 1]]},
        "index": {"samples_per_axis": 3, "max_len_cap": 2},
    })
    code, rep = run("index", cfg, tmp_path / "o")
    assert code == 3 and rep["status"] == "error"


def test_main_entry_point(tmp_path, capsys, monkeypatch):
    assert main(["exponents", "--config", "example51", "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out.strip().endswith("exponents.json")
    monkeypatch.setenv("SUBTK_THREADS", "lots")
    assert main(["exponents", "--config", "example51", "--out", str(tmp_path)]) == 2
    monkeypatch.setenv("SUBTK_THREADS", "1")
    assert main(["exponents", "--config", "example51", "--out", str(tmp_path)]) == 0
    assert main(["exponents", "--config", "nope", "--out", str(tmp_path)]) == 2
    assert "config_not_found" in capsys.readouterr().err


def test_seed_override_changes_input_hash(tmp_path):
    _, a = run("eigen", "elliptic2d", tmp_path / "a", seed=0)
    _, b = run("eigen", "elliptic2d", tmp_path / "b", seed=1)
    assert a["input_hash"] != b["input_hash"]
    assert b["seed"] == 1
