import csv
import io
import json
import math

import numpy as np
import pytest
import yaml

from deltasolve.cli import ConfigError, load_config, main, parse_config

J2 = [{"x": 0.25, "alpha_re": 1.0}, {"x": 0.75, "alpha_re": 2.0}]


def _write(tmp_path, cfg, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg, sort_keys=False))
    return p


def _rows(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def _run(tmp_path, command, cfg, *extra, name="out.csv"):
    out = tmp_path / name
    args = [command, "--out", str(out)] + list(extra)
    if cfg is not None:
        args += ["--config", str(_write(tmp_path, cfg, name + ".yaml"))]
    return main(args), out


def test_solve_free_cosine(tmp_path):
    cfg = {"problem": {"b": 2.0, "potential": {"kind": "zero"}},
           "task": {"rho": [1.0], "x_every": 250, "kinds": ["c", "s"]}}
    code, out = _run(tmp_path, "solve", cfg)
    assert code == 0
    rows = _rows(out)
    assert {r["kind"] for r in rows} == {"c", "s"}
    for r in rows:
        x = float(r["x"])
        v, dv = float(r["value_re"]), float(r["dvalue_re"])
        if r["kind"] == "c":
            assert abs(v - math.cos(x)) < 1e-12 and abs(dv + math.sin(x)) < 1e-12
        else:
            assert abs(v - math.sin(x)) < 1e-12 and abs(dv - math.cos(x)) < 1e-12


def test_float_format(tmp_path):
    cfg = {"problem": {"b": 1.0}, "task": {"rho": [1.0], "x": [0.5], "kinds": ["c"]}}
    _, out = _run(tmp_path, "solve", cfg)
    row = _rows(out)[0]
    mant = row["value_re"].split("e")[0].lstrip("-")
    assert len(mant.replace(".", "")) == 17


def test_nsbf_matches_propagation(tmp_path):
    cfg = {"problem": {"b": 1.0, "interactions": J2, "potential": {"kind": "polynomial", "coeffs": [0, 1]}},
           "task": {"rho": [0.5, 3.0, [7.0, 0.4]], "x": [0.2, 0.25, 0.6, 0.75, 1.0],
                    "kinds": ["c", "s", "e", "psi", "theta"]}}
    _, a = _run(tmp_path, "solve", cfg, "--backend", "nsbf", name="a.csv")
    _, b = _run(tmp_path, "solve", cfg, "--backend", "propagation", name="b.csv")
    ra, rb = _rows(a), _rows(b)
    assert len(ra) == len(rb) == 3 * 5 * 5
    cols = ["value_re", "value_im", "dvalue_re", "dvalue_im"]
    for p, q in zip(ra, rb):
        assert (p["kind"], p["x"], p["side"]) == (q["kind"], q["x"], q["side"])
        for c in cols:
            assert abs(float(p[c]) - float(q[c])) <= 1e-7


def test_side_column(tmp_path):
    cfg = {"problem": {"b": 1.0, "interactions": J2}, "task": {"rho": [1.0], "x": [0.25, 0.5], "kinds": ["c"]}}
    _, out = _run(tmp_path, "solve", cfg)
    assert [r["side"] for r in _rows(out)] == ["left", "both"]


def test_spectrum_squares(tmp_path):
    cfg = {"problem": {"b": math.pi}, "task": {"lambda_range": [0.5, 110.0]}}
    code, out = _run(tmp_path, "spectrum", cfg)
    assert code == 0
    lam = np.array([float(r["lambda"]) for r in _rows(out)])
    n = np.arange(1, 11)
    assert np.all(np.abs(lam - n**2) <= 1e-9 * n**2)


@pytest.mark.parametrize("backend", ["nsbf", "oracle"])
def test_spectrum_j1(tmp_path, backend):
    ref = [13.492357146504842251, 39.478417604357434475, 92.769348921422847515]
    cfg = {"problem": {"b": 1.0, "interactions": [{"x": 0.5, "alpha_re": 2.0}]},
           "task": {"lambda_range": [1.0, 100.0], "count": 3}}
    _, out = _run(tmp_path, "spectrum", cfg, "--backend", backend)
    lam = [float(r["lambda"]) for r in _rows(out)]
    assert np.max(np.abs(np.array(lam) - ref) / ref) < 1e-7


def test_spectrum_empty_range(tmp_path):
    cfg = {"problem": {"b": 1.0}, "task": {"lambda_range": [1.0, 5.0]}}
    code, out = _run(tmp_path, "spectrum", cfg)
    assert code == 0
    body = [ln for ln in out.read_text().splitlines() if not ln.startswith("#")]
    assert body == ["index,lambda,rho_re,rho_im,residual"]


def test_kernel_figure_values(tmp_path):
    cfg = {"problem": {"b": 1.0, "interactions": J2}, "task": {"x": [0.3, 0.6, 0.9], "n": 7}}
    code, out = _run(tmp_path, "kernel", cfg)
    assert code == 0
    K = {(round(float(r["x"]), 6), round(float(r["t"]), 6)): float(r["K_re"]) for r in _rows(out)}
    assert K[(0.3, -0.3)] == 0 and K[(0.3, 0.3)] == 0.5
    assert K[(0.6, -0.6)] == 0 and K[(0.6, 0.0)] == 0.5
    # plateau of the product term: x - x1 - |2 x2 - x - x1| = 0.3, times alpha1 alpha2/4
    assert abs(K[(0.9, 0.0)] - (0.5 + 0.3 * 0.5)) < 1e-12


def test_coeffs_backends_agree(tmp_path):
    cfg = {"problem": {"b": 1.0, "interactions": J2}, "task": {"x": [0.6, 1.0], "n_max": 12}}
    _, a = _run(tmp_path, "coeffs", cfg, "--backend", "nsbf", name="a.csv")
    _, b = _run(tmp_path, "coeffs", cfg, "--backend", "oracle", name="b.csv")
    ra, rb = _rows(a), _rows(b)
    assert len(ra) == len(rb) == 2 * 13
    for p, q in zip(ra, rb):
        for c in p:
            if c.startswith("a_"):
                assert abs(float(p[c]) - float(q[c])) < 1e-9


def test_verify_default_passes(tmp_path):
    code, out = _run(tmp_path, "verify", None, name="v.json")
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["passed"] and all(c["status"] == "pass" for c in rep["checks"].values())
    rej = {k: v for k, v in rep["checks"]["direct_vs_recursive"]["variants"].items() if k != "polya"}
    assert min(rej.values()) >= 1e-3


def test_verify_regular_config(tmp_path):
    cfg = {"problem": {"b": 1.0, "potential": {"kind": "polynomial", "coeffs": [1, 0, 2]}}}
    code, out = _run(tmp_path, "verify", cfg, name="v.json")
    rep = json.loads(out.read_text())
    assert code == 0
    assert rep["checks"]["jump_conditions"]["status"] == "n/a"
    assert rep["checks"]["goursat"]["status"] == "n/a"


def test_verify_deterministic(tmp_path):
    _, a = _run(tmp_path, "verify", None, "--seed", "7", name="a.json")
    _, b = _run(tmp_path, "verify", None, "--seed", "7", name="b.json")
    assert a.read_bytes() == b.read_bytes()


def test_solve_deterministic(tmp_path):
    cfg = {"problem": {"b": 1.0, "interactions": J2}, "task": {"rho_range": {"start": 0, "stop": 5, "num": 4}}}
    _, a = _run(tmp_path, "solve", cfg, "--backend", "nsbf", name="a.csv")
    _, b = _run(tmp_path, "solve", cfg, "--backend", "nsbf", name="b.csv")
    assert a.read_bytes() == b.read_bytes()


def test_header_echoes_defaults(tmp_path):
    cfg = {"problem": {"b": 1.0}, "task": {"rho": [1.0], "x": [0.5]}}
    _, out = _run(tmp_path, "solve", cfg)
    line = next(ln for ln in out.read_text().splitlines() if ln.startswith("# config {"))
    resolved = json.loads(line[len("# config "):])
    assert resolved["numerics"]["M"] == 2000 and resolved["task"]["kinds"] == ["c", "s"]


def test_zero_alpha_rejected(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("problem:\n  b: 1.0\n  interactions:\n    - {x: 0.5, alpha_re: 0.0}\n")
    assert main(["verify", "--config", str(p)]) == 2
    err = capsys.readouterr().err
    assert "line 4" in err and "non-zero" in err


@pytest.mark.parametrize("text, needle", [
    ("problem:\n  b: 1.0\n  colour: red\n", "colour"),
    ("problem:\n  b: 1.0\n  b: 2.0\n", "duplicate"),
    ("problem:\n  b: -1.0\n", "problem.b"),
    ("problem:\n  b: 1.0\n  interactions:\n    - {x: 0.6, alpha_re: 1}\n    - {x: 0.4, alpha_re: 1}\n", "increasing"),
    ("problem:\n  b: 1.0\n  potential: {kind: polynomial, coeffs: [" + ", ".join(["1"] * 22) + "]}\n", "degree"),
    ("problem:\n  b: 1.0\nnumerics:\n  M: 2.5\n", "integer"),
])
def test_config_errors(tmp_path, text, needle):
    p = tmp_path / "bad.yaml"
    p.write_text(text)
    with pytest.raises(ConfigError, match=needle):
        load_config(p, "verify")


def test_samples_file_length(tmp_path):
    (tmp_path / "q.txt").write_text("\n".join(["0.0"] * 10))
    cfg = {"problem": {"b": 1.0, "potential": {"kind": "samples", "path": "q.txt"}}, "numerics": {"M": 100}}
    with pytest.raises(ConfigError, match="101"):
        load_config(_write(tmp_path, cfg), "verify")
    (tmp_path / "q.txt").write_text("\n".join(["1.0"] * 101))
    rc = load_config(_write(tmp_path, cfg), "verify")
    assert rc.problem.grid.M == 100


def test_missing_config_file(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "nope.yaml")]) == 2


def test_parse_requires_rho():
    with pytest.raises(ConfigError):
        parse_config({"problem": {"b": 1.0}, "task": {}}, "solve")
