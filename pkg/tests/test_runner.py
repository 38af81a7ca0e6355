import csv
import io
import json
import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from oracles import pair_hamiltonian, proposed_cycle
from spindd.runner import ConfigError, config_reference, main, parse_config, run

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "demos" / "configs"
GOLDEN = Path(__file__).resolve().parent / "golden"

MINIMAL = """\
run:
  kind: evolve
  n_cycles: 100
  seed: 1
sequence:
  name: proposed
  tau: 0.01
system:
  detunings: [1.0, -1.0]
  couplings: [[0.0, 0.5], [0.5, 0.0]]
"""


def split(text):
    header = [ln for ln in text.splitlines() if ln.startswith("#")]
    body = "".join(ln + "\n" for ln in text.splitlines() if not ln.startswith("#"))
    return header, body


def read_csv(text):
    _, body = split(text)
    return list(csv.DictReader(io.StringIO(body)))


def cli(*args, env=None):
    e = dict(os.environ, NO_COLOR="1", **(env or {}))
    return subprocess.run([sys.executable, "-m", "spindd", *args], capture_output=True, text=True, env=e)


def test_minimal_config_valid():
    cfg = parse_config(MINIMAL)
    assert cfg.kind == "evolve"
    assert cfg.get("sequence", "tau") == 0.01
    assert cfg.get("errors", "flip_error") == 0.0
    assert cfg.seed == 1


def test_rejects_negative_tau():
    with pytest.raises(ConfigError) as exc:
        parse_config(MINIMAL.replace("tau: 0.01", "tau: -1"))
    msg = str(exc.value)
    assert "'tau'" in msg and "line 7" in msg


def test_rejects_angle_power_three():
    text = "run: {kind: fid, seed: 2}\ngeometry:\n  n_spins: 2\n  dipolar_angle_power: 3\n"
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert "dipolar_angle_power" in str(exc.value) and "1, 2" in str(exc.value)
    for ok in (1, 2):
        parse_config(text.replace("3", str(ok)))


@pytest.mark.parametrize("text, needle", [
    (MINIMAL + "  colour: blue\n", "system.colour"),
    (MINIMAL + "plots:\n  x: 1\n", "plots"),
    (MINIMAL.replace("  seed: 1\n", "").replace("system:\n  detunings: [1.0, -1.0]\n  couplings: [[0.0, 0.5], [0.5, 0.0]]\n",
                                                   "geometry:\n  n_spins: 2\n"), "run.seed"),
    (MINIMAL.replace("  tau: 0.01\n", ""), "sequence.tau"),
    (MINIMAL.replace("  tau: 0.01\n", "  tau: 0.01\n  tc_over_td: 0.05\n"), "sequence.tau"),
    (MINIMAL.replace("proposed", "xy16"), "xy16"),
    (MINIMAL.replace("  n_cycles: 100\n", "  n_cycles: 0\n"), "n_cycles"),
    ("run: [1, 2]\n", "mapping"),
    ("run:\n  kind: evolve\n  : :\n", "malformed"),
])
def test_config_errors_name_the_key(text, needle):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert needle in str(exc.value)


def test_unknown_key_reports_line():
    with pytest.raises(ConfigError) as exc:
        parse_config(MINIMAL + "  colour: blue\n")
    assert "(line 11)" in str(exc.value)


def test_exponent_floats_parse():
    cfg = parse_config(MINIMAL.replace("tau: 0.01", "tau: 1e-2"))
    assert cfg.get("sequence", "tau") == 0.01


def test_config_reference_lists_every_key():
    ref = config_reference()
    for key in ("tau", "tc_over_td", "dipolar_angle_power", "flip_error", "gap45", "workers", "format"):
        assert f"  {key}:" in ref
    out = cli("config-reference")
    assert out.returncode == 0 and out.stdout.strip() == ref.strip()


def test_toggling_golden():
    out = cli("toggling", "--config", str(CONFIGS / "toggling_pair.yaml"))
    assert out.returncode == 0, out.stderr
    assert out.stdout == (GOLDEN / "toggling_pair.txt").read_text()
    text = out.stdout
    assert text.split("[zeroth_average]\n")[1].split("\n")[0] == "0"
    out = cli("toggling", "--config", str(CONFIGS / "toggling_pair.yaml"), "--format", "structured")
    assert out.stdout == (GOLDEN / "toggling_pair.json").read_text()


def test_toggling_numeric_pair_zero_average(tmp_path):
    p = tmp_path / "t.yaml"
    p.write_text("sequence: {tau: 0.01}\nsystem:\n  detunings: [1, 2]\n  couplings: [[0, 3], [3, 0]]\n")
    out = cli("toggling", "--config", str(p))
    assert out.returncode == 0
    assert out.stdout.split("[zeroth_average]\n")[1].startswith("0\n")


def _assert_csv_close(text, golden_text, rtol=1e-9, atol=1e-12):
    got, ref = read_csv(text), read_csv(golden_text)
    assert len(got) == len(ref) and got[0].keys() == ref[0].keys()
    for a, b in zip(got, ref):
        for k in a:
            try:
                fa, fb = float(a[k]), float(b[k])
            except ValueError:
                assert a[k] == b[k]
                continue
            assert fa == pytest.approx(fb, rel=rtol, abs=atol), k


def test_evolve_golden_csv():
    out = cli("evolve", "--config", str(CONFIGS / "evolve_pair.yaml"))
    assert out.returncode == 0, out.stderr
    golden = (GOLDEN / "evolve_pair.csv").read_text()
    assert split(out.stdout)[0] == split(golden)[0]
    _assert_csv_close(out.stdout, golden)


def test_evolve_golden_matches_oracle():
    rows = read_csv((GOLDEN / "evolve_pair.csv").read_text())
    u = proposed_cycle(pair_hamiltonian(1.0, -1.0, 0.5), 0.01)
    psi = np.ones(4, dtype=complex) / 2
    for k, row in enumerate(rows):
        assert float(row["time"]) == pytest.approx(0.06 * k, rel=1e-12)
        assert float(row["fidelity"]) == pytest.approx(abs(np.vdot(np.ones(4) / 2, psi)) ** 2, abs=1e-10)
        psi = u @ psi


def test_evolve_golden_structured():
    out = cli("evolve", "--config", str(CONFIGS / "evolve_pair.yaml"), "--format", "structured")
    _, body = split(out.stdout)
    got = json.loads(body)
    ref = json.loads(split((GOLDEN / "evolve_pair.json").read_text())[1])
    assert got["columns"] == ref["columns"]
    np.testing.assert_allclose(np.array(got["rows"]), np.array(ref["rows"]), rtol=1e-9, atol=1e-12)


def test_fid_golden():
    out = cli("fid", "--config", str(CONFIGS / "fid_ensemble.yaml"))
    _assert_csv_close(out.stdout, (GOLDEN / "fid_ensemble.csv").read_text())


def test_fid_exceeds_horizon_marker(tmp_path):
    p = tmp_path / "f.yaml"
    p.write_text("system:\n  detunings: [0.0]\n")
    out = cli("fid", "--config", str(p))
    assert out.returncode == 0
    assert read_csv(out.stdout)[0]["t_d"] == "exceeds_horizon"


def test_exit_codes_and_diagnostics(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text(MINIMAL.replace("tau: 0.01", "tau: -1"))
    out = cli("evolve", "--config", str(bad))
    assert out.returncode == 1
    assert out.stderr.startswith("error:") and "tau" in out.stderr and "\033" not in out.stderr
    out = cli("evolve", "--config", str(tmp_path / "missing.yaml"))
    assert out.returncode == 1
    impossible = tmp_path / "gen.yaml"
    impossible.write_text("run: {seed: 1, n_cycles: 2}\nsequence: {tau: 0.1}\n"
                          "geometry: {n_spins: 30, size: 1.0, min_separation: 0.9}\n")
    out = cli("evolve", "--config", str(impossible))
    assert out.returncode == 2
    assert "realizations failed" in out.stderr


def test_seed_and_out_overrides(tmp_path):
    target = tmp_path / "res.csv"
    rc = main(["fid", "--config", str(CONFIGS / "fid_ensemble.yaml"), "--seed", "12", "--out", str(target)])
    assert rc == 0
    text = target.read_text()
    assert "# seed: 12" in text
    assert text != (GOLDEN / "fid_ensemble.csv").read_text()


def test_determinism_with_workers(tmp_path):
    text = (CONFIGS / "compare_ensemble.yaml").read_text().replace("n_cycles: 400", "n_cycles: 40")
    one = run(parse_config(text.replace("workers: 4", "workers: 1"))).body()
    four_a = run(parse_config(text)).body()
    four_b = run(parse_config(text)).body()
    assert one == four_a == four_b
    assert run(parse_config(text)).body("structured") == run(parse_config(text)).body("structured")


def test_compare_shares_realizations():
    text = (CONFIGS / "compare_ensemble.yaml").read_text().replace("n_cycles: 400", "n_cycles: 5")
    rows = read_csv(run(parse_config(text)).render())
    # with tc_over_td the sampled times encode each realization's decay time
    by_seq = {}
    for r in rows:
        if float(r["time"]) > 0:
            by_seq.setdefault(r["sequence"], {}).setdefault(r["realization"], float(r["time"]))
    assert by_seq["wahuha"] == by_seq["proposed"]


def test_compare_pure_zeeman():
    res = run(parse_config((CONFIGS / "compare_zeeman.yaml").read_text()))
    means = {k: np.array(v["mean_fidelity"]) for k, v in res.extra.items()}
    assert np.all(means["proposed"] >= means["free"])
    assert np.all(means["proposed"] > 1 - 1e-12)


def test_scan_flip_error_monotone():
    res = run(parse_config((CONFIGS / "scan_flip.yaml").read_text()))
    means = res.extra["mean_final_fidelity"]
    assert all(b <= a for a, b in zip(means, means[1:])), means
    rows = read_csv(res.render())
    assert {r["parameter"] for r in rows} == {"flip_error"}
    assert len(rows) == 4 * 8


def test_scan_tau_keeps_total_time(tmp_path):
    text = MINIMAL.replace("kind: evolve", "kind: scan") + "scan:\n  parameter: tau\n  values: [0.01, 0.02]\n"
    rows = read_csv(run(parse_config(text)).render())
    assert [float(r["time"]) for r in rows] == pytest.approx([6.0, 6.0])


def test_output_header_provenance():
    text = run(parse_config(MINIMAL)).render()
    header, _ = split(text)
    keys = [h.split(":")[0] for h in header]
    assert keys == ["# tool", "# kind", "# config_digest", "# seed"]
    assert not math.isnan(float(read_csv(text)[-1]["fidelity"]))
