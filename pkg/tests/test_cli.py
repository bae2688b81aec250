"""CLI contract tests: exit codes, outputs, and byte-level determinism."""

import pathlib

import pytest

from nlreg.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, EXIT_UNSUPPORTED, main

BENCH = """\
[kernel]
family = fractional
dim = 1
lam = 1.0
s = 0.5

[mesh]
a = -1.0
b = 1.0
collar = 0.5
h = 0.015625

[experiment]
f = 1.0
g = 0.0
benchmark = true
"""

VERIFY = """\
[kernel]
family = fractional
dim = 1
lam = 1.0
s = 0.25

[mesh]
a = -1.0
b = 1.0
collar = 0.5
h = 0.03125

[experiment]
which = boundedness oscillation continuity
f = 1.0
g = 0.0
refinements = 2
radii = 0.25 0.5 1.0
x0 = 0.0
a_set = -0.25 0.25
b_star = -0.5 0.5
b_set = -0.75 0.75
radii_count = 16
"""

GROWTH_SCENARIO = """\
[kernel]
family = fractional
dim = 1
lam = 1.0
s = 0.25

[mesh]
a = -1.0
b = 1.0
collar = 1.0
h = 0.0625

[experiment]
which = growth
f = 0.0
g_breaks = -2.5 2.5
g_values = 1.0 -1.0 1.0
r_inner = 1.05
r_outer = 1.95
radii_count = 16
"""


def cfg_file(tmp_path, text, name="run.ini") -> str:
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run(cmd, cfg, out) -> int:
    return main([cmd, "--config", cfg, "--out", str(out)])


def tree(root) -> dict:
    root = pathlib.Path(root)
    return {p.name: p.read_bytes() for p in sorted(root.iterdir())}


# -- happy paths ---------------------------------------------------------------


def test_check_writes_reports(tmp_path):
    cfg = cfg_file(tmp_path, BENCH)
    assert run("check", cfg, tmp_path / "o") == EXIT_OK
    text = (tmp_path / "o" / "conditions.txt").read_text()
    for slug in ("integrability", "origin-divergence", "radial-doubling",
                 "variation-control", "asymmetry-control", "moment-order"):
        assert slug in text
    csv = (tmp_path / "o" / "conditions.csv").read_text()
    assert csv.startswith("condition,verdict,constants\n")


def test_growth_emits_params_and_tables(tmp_path):
    cfg = cfg_file(tmp_path, VERIFY)
    assert run("growth", cfg, tmp_path / "o") == EXIT_OK
    names = {p.name for p in (tmp_path / "o").iterdir()}
    assert names == {"params.txt", "h_table.csv", "radii.csv"}
    assert (tmp_path / "o" / "h_table.csv").read_text().startswith("r,h\n")
    assert "improvement:" in (tmp_path / "o" / "params.txt").read_text()


def test_modulus_emits_tables(tmp_path):
    cfg = cfg_file(tmp_path, VERIFY)
    assert run("modulus", cfg, tmp_path / "o") == EXIT_OK
    assert (tmp_path / "o" / "modulus.csv").read_text().startswith("t,omega\n")
    assert (tmp_path / "o" / "schedule.csv").read_text().startswith("n,r,g,g_tilde\n")


def test_solve_benchmark_row(tmp_path):
    cfg = cfg_file(tmp_path, BENCH)
    assert run("solve", cfg, tmp_path / "o") == EXIT_OK
    lines = (tmp_path / "o" / "solution.csv").read_text().strip().splitlines()
    assert lines[0] == "x,u"
    key, val = lines[-1].split(",")
    assert key == "l2_rel_error"
    assert float(val) < 0.05  # measured 0.31% at h = 1/64
    svg = (tmp_path / "o" / "solution.svg").read_text()
    assert svg.startswith("<svg ") and "polyline" in svg


def test_verify_reports_and_plots(tmp_path):
    cfg = cfg_file(tmp_path, VERIFY)
    assert run("verify", cfg, tmp_path / "o") == EXIT_OK
    names = {p.name for p in (tmp_path / "o").iterdir()}
    assert {"report_uniform_bound.txt", "report_modulus_of_continuity.txt",
            "reports.csv", "oscillation.csv", "oscillation.svg", "u.svg",
            "modulus.csv", "schedule.csv", "modulus.svg"} <= names
    rows = (tmp_path / "o" / "reports.csv").read_text().splitlines()
    assert rows[0] == "tag,quantity,value"
    assert any(r.startswith("uniform-bound,verdict,pass") for r in rows)
    assert any(r.startswith("modulus-of-continuity,verdict,pass") for r in rows)


def test_verify_growth_scenario(tmp_path):
    cfg = cfg_file(tmp_path, GROWTH_SCENARIO)
    assert run("verify", cfg, tmp_path / "o") == EXIT_OK
    text = (tmp_path / "o" / "report_decay_step.txt").read_text()
    assert "verdict:   pass" in text
    assert "nonpositive_share = 1.0" in text


# -- exit-code contract ----------------------------------------------------------


def test_missing_kernel_section_exits_2(tmp_path, capsys):
    cfg = cfg_file(tmp_path, "[mesh]\na = -1\nb = 1\ncollar = 0.5\nh = 0.25\n")
    assert run("solve", cfg, tmp_path / "o") == EXIT_CONFIG
    assert "missing [kernel] section" in capsys.readouterr().err


def test_malformed_config_exits_2_with_location(tmp_path, capsys):
    cfg = cfg_file(tmp_path, "[kernel\nfamily = fractional\n")
    assert run("check", cfg, tmp_path / "o") == EXIT_CONFIG
    assert "line" in capsys.readouterr().err


def test_missing_mesh_section_exits_2(tmp_path):
    cfg = cfg_file(tmp_path, "[kernel]\nfamily = fractional\ns = 0.25\n")
    assert run("solve", cfg, tmp_path / "o") == EXIT_CONFIG


def test_unknown_verification_tag_exits_2(tmp_path, capsys):
    text = VERIFY.replace("which = boundedness oscillation continuity", "which = froobration")
    cfg = cfg_file(tmp_path, text)
    assert run("verify", cfg, tmp_path / "o") == EXIT_CONFIG
    assert "froobration" in capsys.readouterr().err


def test_unsupported_kernel_exits_3(tmp_path, capsys):
    # 2s = 1 has no integrable gamma-moment below 1, so the growth
    # constants refuse the kernel
    text = VERIFY.replace("s = 0.25", "s = 0.5")
    cfg = cfg_file(tmp_path, text)
    assert run("growth", cfg, tmp_path / "o") == EXIT_UNSUPPORTED
    assert "unsupported kernel" in capsys.readouterr().err


def test_numeric_failure_exits_4(tmp_path, capsys):
    text = """\
[kernel]
family = custom
dim = 1
lam = 1.0
gamma_hint = 0.5

[kernel.terms]
term0 = power, 1.0, -0.5, 0.0, 1.0

[mesh]
a = -1.0
b = 1.0
collar = 0.5
h = 0.0625

[experiment]
f = 1.0
w = 5.0
"""
    cfg = cfg_file(tmp_path, text)
    assert run("solve", cfg, tmp_path / "o") == EXIT_NUMERIC
    assert "numeric failure" in capsys.readouterr().err


# -- determinism (identical config + seed => identical bytes) -------------------


@pytest.mark.parametrize(
    "cmd,text",
    [
        ("check", BENCH),
        ("growth", VERIFY),
        ("modulus", VERIFY),
        ("solve", BENCH),
        ("verify", VERIFY),
        ("verify", GROWTH_SCENARIO),
    ],
)
def test_reruns_are_byte_identical(tmp_path, cmd, text):
    cfg = cfg_file(tmp_path, text)
    assert run(cmd, cfg, tmp_path / "a") == EXIT_OK
    assert run(cmd, cfg, tmp_path / "b") == EXIT_OK
    ta, tb = tree(tmp_path / "a"), tree(tmp_path / "b")
    assert set(ta) == set(tb)
    for name in ta:
        assert ta[name] == tb[name], name


def test_seed_flag_fixes_sampling(tmp_path):
    text = VERIFY.replace("which = boundedness oscillation continuity",
                          "which = boundedness\nsamples = 3")
    cfg = cfg_file(tmp_path, text)
    assert main(["verify", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "5"]) == EXIT_OK
    assert main(["verify", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "5"]) == EXIT_OK
    assert main(["verify", "--config", cfg, "--out", str(tmp_path / "c"), "--seed", "6"]) == EXIT_OK
    a = (tmp_path / "a" / "reports.csv").read_bytes()
    assert a == (tmp_path / "b" / "reports.csv").read_bytes()
    assert a != (tmp_path / "c" / "reports.csv").read_bytes()


def test_tol_flag_overrides_quadrature(tmp_path):
    cfg = cfg_file(tmp_path, BENCH)
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "a"),
                 "--tol", "1e-6"]) == EXIT_OK
    assert (tmp_path / "a" / "solution.csv").exists()
