import csv
import hashlib
import io
import json
import math

import numpy as np
import pytest

from qisim.cli import ANALYTIC_HEADER, EQUIVALENCE_HEADER, RANGE_HEADER, SWEEP_HEADER, main
from qisim.core import SPEED_OF_LIGHT


@pytest.fixture
def write_cfg(tmp_path):
    def write(**kw):
        base = dict(num_modes_M=100, noise_mean_NB=0.01, reflectivity_eta=0.01)
        base.update(kw)
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(base))
        return str(path)

    return write


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_analytic_csv(capsys, write_cfg):
    code, out, _ = run(capsys, "analytic", "--config", write_cfg())
    assert code == 0
    assert out.splitlines()[0] == ",".join(ANALYTIC_HEADER)
    assert "\r\n" in out
    rows = {r["protocol"]: r for r in rows_of(out)}
    assert set(rows) == {"ClassicalSingle", "LloydEntangled", "ClassicalTwoPhoton", "EntangledTwoPhoton"}
    assert float(rows["EntangledTwoPhoton"]["snr"]) == pytest.approx(10198.9801, rel=1e-14)


def test_analytic_no_target(capsys, write_cfg):
    _, out, _ = run(capsys, "analytic", "--config", write_cfg(reflectivity_eta=0.0))
    assert all(float(r["snr"]) == 1.0 for r in rows_of(out))


def test_analytic_db(capsys, write_cfg):
    _, out, _ = run(capsys, "analytic", "--config", write_cfg(), "--db")
    rows = {r["protocol"]: r for r in rows_of(out)}
    assert float(rows["EntangledTwoPhoton"]["snr_db"]) == pytest.approx(10 * math.log10(10198.9801))


def test_analytic_json(capsys, write_cfg):
    _, out, _ = run(capsys, "analytic", "--config", write_cfg(), "--format", "json")
    doc = json.loads(out)
    assert doc["snr"]["snr_qi2r"] == pytest.approx(10198.9801)
    assert doc["snr"]["squaring_residual_entangled"] <= 1e-12 * doc["snr"]["snr_qi2r"]


def test_config_error_exit(capsys, write_cfg):
    code, out, err = run(capsys, "analytic", "--config",
                         write_cfg(noise_mean_NB=2.0, coincidence_window_dt=1e-10))
    assert code == 2 and out == ""
    assert "InvalidNoise" in err and "WindowTooNarrow" in err


def test_unknown_key_exit(capsys, write_cfg):
    code, _, err = run(capsys, "analytic", "--config", write_cfg(colour="blue"))
    assert code == 2 and "colour" in err


def test_simulate_empty_world(capsys, write_cfg):
    code, out, _ = run(capsys, "simulate", "--config", write_cfg(reflectivity_eta=0.0, noise_mean_NB=0.0),
                       "--trials", "20000")
    doc = json.loads(out)
    assert code == 0 and doc["p_pos"] == 0.0 and doc["agreement"] is True


def test_simulate_rerun_identical(capsys, write_cfg):
    args = ("simulate", "--config", write_cfg(noise_mean_NB=0.05), "--trials", "200000", "--seed", "7")
    _, a, _ = run(capsys, *args)
    _, b, _ = run(capsys, *args, "--workers", "4")
    assert a == b


def test_simulate_strict_disagreement(capsys, write_cfg):
    # Poisson background breaks the per-window formula the reference uses
    cfg = write_cfg(noise_mean_NB=0.3, poisson_noise=True, num_modes_M=2)
    code, out, _ = run(capsys, "simulate", "--config", cfg, "--protocol", "ClassicalTwoPhoton",
                       "--hypothesis", "H0", "--trials", "200000", "--strict")
    assert code == 3 and json.loads(out)["agreement"] is False


def test_sweep_eta_row_count(capsys, write_cfg):
    code, out, _ = run(capsys, "sweep", "--config", write_cfg(), "--axis", "eta", "--values", "0,0.05,0.1")
    assert code == 0
    assert out.splitlines()[0] == ",".join(SWEEP_HEADER)
    rows = rows_of(out)
    assert len(rows) == 12
    assert [r["protocol"] for r in rows[:4]] == ["ClassicalSingle", "LloydEntangled",
                                                "ClassicalTwoPhoton", "EntangledTwoPhoton"]


def test_sweep_spec_file(capsys, write_cfg, tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"axis": "M", "values": [10, 100], "protocols": ["EntangledTwoPhoton"],
                                "mode": "Both", "n_trials": 20000}))
    code, out, _ = run(capsys, "sweep", "--config", write_cfg(), "--spec", str(spec))
    rows = rows_of(out)
    assert code == 0 and len(rows) == 2
    assert all(r["mc_agree"] == "true" and r["mc_trials"] == "20000" for r in rows)


@pytest.mark.parametrize("values", ["0.1,0.05", "", "0.1,0.1"])
def test_sweep_bad_values(capsys, write_cfg, values):
    code, _, _ = run(capsys, "sweep", "--config", write_cfg(), "--axis", "eta", "--values", values)
    assert code == 2


def test_sweep_invalid_point(capsys, write_cfg):
    code, _, err = run(capsys, "sweep", "--config", write_cfg(), "--axis", "NB", "--values", "0.01,1.5")
    assert code == 2 and "InvalidNoise" in err


def test_sweep_snr_ordering_over_noise(capsys, write_cfg):
    values = ",".join(repr(float(v)) for v in np.logspace(-5, -1, 15))
    _, out, _ = run(capsys, "sweep", "--config", write_cfg(), "--axis", "NB", "--values", values)
    by_point = {}
    for r in rows_of(out):
        by_point.setdefault(r["value"], {})[r["protocol"]] = float(r["snr"])
    for snr in by_point.values():
        if snr["LloydEntangled"] >= 1:
            assert snr["EntangledTwoPhoton"] >= snr["LloydEntangled"] >= snr["ClassicalSingle"]


def test_sweep_modes_slope(capsys, write_cfg):
    Ms = [10, 30, 100, 300, 1000, 3000, 10000]
    _, out, _ = run(capsys, "sweep", "--config", write_cfg(), "--axis", "M",
                    "--values", ",".join(map(str, Ms)), "--protocols", "EntangledTwoPhoton")
    p0 = [float(r["p0_pos"]) for r in rows_of(out)]
    slope = np.polyfit(np.log(Ms), np.log(p0), 1)[0]
    assert abs(slope + 2) <= 0.01


def test_sweep_matches_analytic_bitwise(capsys, write_cfg):
    cfg = write_cfg(reflectivity_eta=0.05)
    _, a, _ = run(capsys, "analytic", "--config", cfg)
    _, s, _ = run(capsys, "sweep", "--config", cfg, "--axis", "eta", "--values", "0.01,0.05,0.2")
    analytic = {r["protocol"]: (r["p0_pos"], r["p1_pos"], r["snr"]) for r in rows_of(a)}
    sweep = {r["protocol"]: (r["p0_pos"], r["p1_pos"], r["snr"])
             for r in rows_of(s) if float(r["value"]) == 0.05}
    assert analytic == sweep


def test_sweep_trials_axis(capsys, write_cfg):
    _, out, _ = run(capsys, "sweep", "--config", write_cfg(), "--axis", "m", "--values", "1,3",
                    "--protocols", "ClassicalSingle")
    rows = rows_of(out)
    assert float(rows[1]["p0_pos"]) == pytest.approx(1e-6, rel=1e-12)


def test_equivalence(capsys, write_cfg):
    code, out, _ = run(capsys, "equivalence", "--config", write_cfg(), "--m-list", "100")
    assert out.splitlines()[0] == ",".join(EQUIVALENCE_HEADER)
    (row,) = rows_of(out)
    assert code == 0 and float(row["m_prime"]) == pytest.approx(10197.9901, rel=1e-10)
    assert row["in_valid_regime"] == "true"


def test_equivalence_regime_false(capsys, write_cfg):
    _, out, _ = run(capsys, "equivalence", "--config", write_cfg(noise_mean_NB=0.999), "--m-list", "1")
    assert rows_of(out)[0]["in_valid_regime"] == "false"


def test_equivalence_ratio_column(capsys, write_cfg):
    _, out, _ = run(capsys, "equivalence", "--config", write_cfg(noise_mean_NB=0.001),
                    "--m-list", "10,100,1000")
    for r in rows_of(out):
        M = int(r["M"])
        if M / 0.001 >= 1e4:
            predicted = 0.01 * M / 0.001
            assert abs(float(r["ratio_m_prime_over_m"]) - predicted) <= 0.05 * predicted


def test_equivalence_zero_eta(capsys, write_cfg):
    code, _, _ = run(capsys, "equivalence", "--config", write_cfg(reflectivity_eta=0.0))
    assert code == 2


def test_range_exact(capsys, write_cfg):
    cfg = write_cfg(true_range=150.0, reflectivity_eta=1.0, noise_mean_NB=0.0, generation_jitter=0.0)
    code, out, _ = run(capsys, "range", "--config", cfg, "--trials", "500")
    assert code == 0 and out.splitlines()[0] == ",".join(RANGE_HEADER)
    rows = rows_of(out)
    assert len(rows) == 501 and rows[-1]["trial"] == "summary"
    assert all(float(r["estimated_range"]) == pytest.approx(150.0, abs=1e-9) for r in rows[:-1])


def test_range_jitter_bound(capsys, write_cfg):
    cfg = write_cfg(reflectivity_eta=1.0, noise_mean_NB=0.0, generation_jitter=1e-9, coincidence_window_dt=2e-9)
    _, out, _ = run(capsys, "range", "--config", cfg, "--trials", "2000")
    bound = SPEED_OF_LIGHT * 3e-9 / 2
    assert all(abs(float(r["truth_error"])) <= bound for r in rows_of(out))


def test_range_at_max_distance(capsys, write_cfg):
    cfg = write_cfg(true_range=300.0, reflectivity_eta=1.0, noise_mean_NB=0.0)
    _, out, _ = run(capsys, "range", "--config", cfg, "--trials", "2000")
    summary = rows_of(out)[-1]
    assert abs(float(summary["estimated_range"]) - 300.0) <= float(summary["uncertainty"])


def test_range_no_detections(capsys, write_cfg):
    code, _, err = run(capsys, "range", "--config", write_cfg(reflectivity_eta=0.0, noise_mean_NB=0.0),
                       "--trials", "100")
    assert code == 4 and "no detections" in err


def test_out_file(tmp_path, capsys, write_cfg):
    target = tmp_path / "out.csv"
    code, out, _ = run(capsys, "analytic", "--config", write_cfg(), "--out", str(target))
    assert code == 0 and out == ""
    assert target.read_bytes().startswith(b"protocol,p0_pos,p1_pos,snr\r\n")


def sha(text):
    return hashlib.sha256(text.encode()).hexdigest()


@pytest.mark.parametrize("argv", [
    ("analytic",),
    ("simulate", "--trials", "200000"),
    ("sweep", "--axis", "eta", "--values", "0.05,0.1", "--mode", "both", "--trials", "100000"),
    ("equivalence", "--m-list", "10,100"),
    ("range", "--trials", "100000"),
])
def test_worker_count_does_not_change_output(capsys, write_cfg, argv):
    cfg = write_cfg(noise_mean_NB=0.05, reflectivity_eta=0.3)
    _, one, _ = run(capsys, argv[0], "--config", cfg, *argv[1:], "--workers", "1")
    _, eight, _ = run(capsys, argv[0], "--config", cfg, *argv[1:], "--workers", "8")
    assert one and sha(one) == sha(eight)
