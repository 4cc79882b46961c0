import json

import pytest

from fsiopt.cli import ConfigError, load_config, main

MANUFACTURED = """
[scenario]
name = manufactured
h = 1/4
[time]
dt = 0.01
T = 0.03
[coupling]
solver = sqp-exact
"""


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_config_parsing(tmp_path):
    c = load_config(write(tmp_path, MANUFACTURED + "[rom]\ntol_pod = 1e-4\nenrich = false\n"))
    assert c.scenario == "manufactured" and c.h == 0.25 and c.T == 0.03
    assert c.tol_pod_f == c.tol_pod_s == c.tol_pod_c == 1e-4 and c.enrich is False


@pytest.mark.parametrize("text", [
    "[bogus]\nx = 1\n",
    "[scenario]\nname = cylinder\n",
    "[time]\ndt = -1\n",
    "[time]\ndt = abc\n",
    "[coupling]\nsolver = magic\n",
    "[rom]\nenrich = maybe\n",
    "[solid]\nE = 10\n",
])
def test_config_errors_exit_2(tmp_path, text):
    with pytest.raises(ConfigError):
        c = load_config(write(tmp_path, text))
        from fsiopt.cli import build
        build(c)
    assert main(["solve", "--config", write(tmp_path, text), "--out", str(tmp_path / "o")]) == 2


def test_missing_config_exits_2(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "none.ini")]) == 2


def test_missing_archive_exits_4(tmp_path):
    assert main(["pod", "--config", write(tmp_path, MANUFACTURED), "--out", str(tmp_path / "empty")]) == 4


def test_hash_mismatch_exits_4(tmp_path):
    out = str(tmp_path / "o")
    assert main(["solve", "--config", write(tmp_path, MANUFACTURED), "--out", out]) == 0
    other = MANUFACTURED.replace("T = 0.03", "T = 0.02")
    assert main(["pod", "--config", write(tmp_path, other, "b.ini"), "--out", out]) == 4


def test_nonconvergence_exits_3_and_keeps_steps(tmp_path):
    cfg = MANUFACTURED + "max_iter = 1\ntol = 1e-14\n"
    out = tmp_path / "o"
    assert main(["solve", "--config", write(tmp_path, cfg), "--out", str(out)]) == 3
    summary = json.loads((out / "summary.json").read_text())
    assert summary["failed"] and summary["steps"] == 0
    assert (out / "snapshots" / "manifest.json").exists()


def test_solve_is_deterministic(tmp_path):
    cfg = write(tmp_path, MANUFACTURED)
    outs = [tmp_path / "a", tmp_path / "b"]
    for o in outs:
        assert main(["solve", "--config", cfg, "--out", str(o), "--deterministic"]) == 0
    for name in ("history.csv", "summary.json", "snapshots/records.bin", "snapshots/manifest.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    man = json.loads((outs[0] / "snapshots" / "manifest.json").read_text())
    assert man["steps"] == [0, 1, 2, 3]
    head = (outs[0] / "history.csv").read_text().splitlines()[0]
    assert "wall" not in head and all("[" in h for h in head.split(","))


def test_text_archive_flag(tmp_path):
    out = tmp_path / "o"
    assert main(["solve", "--config", write(tmp_path, MANUFACTURED), "--out", str(out), "--text"]) == 0
    assert (out / "snapshots" / "records.csv").exists()


def test_pod_rom_pipeline(tmp_path):
    cfg = write(tmp_path, MANUFACTURED.replace("T = 0.03", "T = 0.06") + "[rom]\ntol_pod = 1e-8\n")
    out = str(tmp_path / "o")
    for cmd in ("solve", "pod", "rom", "hybrid"):
        assert main([cmd, "--config", cfg, "--out", out, "--deterministic"]) == 0, cmd
    rows = (tmp_path / "o" / "eigenvalues_solid.csv").read_text().splitlines()[1:]
    eig = [float(r.split(",")[1]) for r in rows]
    assert all(a >= b for a, b in zip(eig, eig[1:]))
    for tag in ("rom", "hybrid"):
        assert (tmp_path / "o" / f"{tag}_errors.csv").exists()


def test_compare_table(tmp_path):
    cfg = write(tmp_path, MANUFACTURED + "[compare]\nsteps = 2\nsolvers = sqp-exact, dtn\n")
    out = tmp_path / "o"
    assert main(["compare", "--config", cfg, "--out", str(out), "--deterministic"]) == 0
    lines = (out / "compare.csv").read_text().splitlines()
    assert lines[0] == "method,avg_iters[-],time[s]"
    assert [l.split(",")[0] for l in lines[1:]] == ["sqp-exact", "dtn"]
