import csv
import io
import json

import pytest

from randamp import cli
from randamp.bitstore import RoundLog, RoundRecord, write_roundlog


def run(args, capsys):
    code = cli.main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_simulate_writes_log(tmp_path, capsys):
    code, out, _ = run(["simulate", "--visibility", 1, "--rounds", 100000, "--seed", 7, "-o", tmp_path / "log.bin"], capsys)
    assert code == 0
    assert "M_obs 4" in out
    assert (tmp_path / "log.bin").stat().st_size == 16 + 100000


def test_simulate_reference_visibility(capsys):
    code, out, _ = run(["simulate", "--visibility", 0.8375, "--rounds", 1000000], capsys)
    assert code == 0
    M = float(out.split("M_obs ")[1].split()[0])
    assert abs(M - 3.35) < 0.01


def test_simulate_missing_rounds_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["simulate", "--visibility", "1"])
    assert info.value.code == 2


@pytest.mark.parametrize("args", [["simulate", "--rounds", "10", "--bogus"], ["simulate", "--rounds", "0"], ["run", "--rounds", "10"], ["nope"]])
def test_bad_flags_exit_2(args):
    with pytest.raises(SystemExit) as info:
        cli.main(args)
    assert info.value.code == 2


def test_invalid_values_exit_2(tmp_path, capsys):
    code, _, err = run(["simulate", "--rounds", 10, "--frac-fixed", 0.7, "--frac-random", 0.7], capsys)
    assert code == 2 and "sum" in err
    code, _, _ = run(["rates", "--fig7", "--m-range", 3.0, 2.0, 0.1], capsys)
    assert code == 2
    code, _, _ = run(["rates", "--fig5", "--eps-sv", 0.7], capsys)
    assert code == 2


def test_simulate_io_error(tmp_path, capsys):
    code, _, err = run(["simulate", "--rounds", 10, "-o", tmp_path / "missing" / "log.bin"], capsys)
    assert code == 1


def test_analyze_report(tmp_path, capsys):
    log = tmp_path / "log.bin"
    run(["simulate", "--visibility", 1, "--rounds", 200000, "--frac-fixed", 0.03, "--seed", 3, "-o", log], capsys)
    code, out, _ = run(["analyze", log, "--json", tmp_path / "r.json", "--delta-f", 0.001], capsys)
    assert code == 0 and "n_s" in out
    rep = json.loads((tmp_path / "r.json").read_text())
    s = rep["signalling"]["pairwise"][rep["signalling"]["max_pair"]]
    assert abs(s["s"] - 0.03) <= s["ci"]
    assert rep["entropy"]["certified"]


def test_analyze_non_signalling(tmp_path, capsys):
    log = tmp_path / "log.bin"
    run(["simulate", "--visibility", 0.9, "--rounds", 200000, "--seed", 4, "-o", log], capsys)
    code, out, _ = run(["analyze", log, "--json", "-"], capsys)
    rep = json.loads(out[out.index("{"):])
    assert rep["signalling"]["n_s_debiased"] == 0


def test_analyze_missing_setting(tmp_path, capsys):
    write_roundlog(tmp_path / "l", RoundLog.from_records([RoundRecord(0, 0, 0, 1, 1, 1)]))
    code, _, err = run(["analyze", tmp_path / "l"], capsys)
    assert code == 1 and "(0, 0, 1)" in err


def test_analyze_corrupt_log(tmp_path, capsys):
    (tmp_path / "l").write_bytes(b"garbage")
    code, _, _ = run(["analyze", tmp_path / "l"], capsys)
    assert code == 1


def _csv(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_rates_table1(capsys):
    code, out, _ = run(["rates", "--table1"], capsys)
    rows = _csv(out)
    assert code == 0 and list(rows[0]) == list(cli.CSV_COLUMNS)
    iid = {(float(r["M_obs"]), r["extractor"]): float(r["eps_SV_max"]) for r in rows if r["mode"] == "IID"}
    assert iid[(3.35, "dodis")] == pytest.approx(0.073, abs=1e-3)
    assert iid[(3.35, "raz")] == pytest.approx(0.156, abs=1e-3)
    assert iid[(3.11, "dodis")] == pytest.approx(0.054, abs=1e-3)
    assert iid[(3.11, "raz")] == pytest.approx(0.118, abs=1e-3)


def test_rates_fig7_flat_raz(capsys, tmp_path):
    code, _, _ = run(["rates", "--fig7", "-o", tmp_path / "f.csv"], capsys)
    rows = _csv((tmp_path / "f.csv").read_text())
    raz = [float(r["eps_SV_max"]) for r in rows if r["extractor"] == "raz" and 3.6 <= float(r["M_obs"]) <= 3.9]
    assert code == 0 and len(raz) == 7
    assert all(abs(v - 0.2071) <= 5e-4 for v in raz)


def test_rates_fig4_mbqa_below_iid(capsys):
    code, out, _ = run(["rates", "--fig4", "--eps-sv", 0.05, "--n-range", 1e6, 1e8, 5], capsys)
    rows = _csv(out)
    assert code == 0
    by = {}
    for r in rows:
        by.setdefault((r["M_obs"], r["n"]), {})[r["mode"]] = float(r["eta"])
    assert by and all(v["MBQA"] <= v["IID"] for v in by.values())


def test_rates_fig5_and_fig8(capsys):
    for flag in ("--fig5", "--fig8"):
        code, out, _ = run(["rates", flag, "--eps-sv", 0.05, "--m-range", 3.3, 3.4, 0.05], capsys)
        rows = _csv(out)
        assert code == 0 and rows
        assert all(r["eta"] != "" and r["c_Q"] != "" for r in rows)


def test_run_verify_and_tamper(tmp_path, capsys):
    out = tmp_path / "o.bits"
    code, stdout, _ = run(["run", "--rounds", 100000, "--visibility", 1, "--seed", 1, "-o", out], capsys)
    assert code == 0 and "m2" in stdout
    code, _, _ = run(["verify", tmp_path / "o.bits.cert.json"], capsys)
    assert code == 0
    data = bytearray(out.read_bytes())
    data[-1] ^= 0x01
    out.write_bytes(bytes(data))
    code, _, _ = run(["verify", tmp_path / "o.bits.cert.json"], capsys)
    assert code == 4


def test_verify_missing_artifact_exit_1(tmp_path, capsys):
    out = tmp_path / "o.bits"
    run(["run", "--rounds", 20000, "--seed", 2, "--delta-f", 0.01, "-o", out], capsys)
    (tmp_path / "o.bits.rounds").unlink()
    code, _, _ = run(["verify", tmp_path / "o.bits.cert.json"], capsys)
    assert code == 1
    code, _, _ = run(["verify", tmp_path / "nothing.json"], capsys)
    assert code == 1


def test_run_abort_and_nonce(tmp_path, capsys):
    out = tmp_path / "o"
    code, _, err = run(["run", "--rounds", 10000, "--visibility", 0.4, "-o", out], capsys)
    assert code == 3 and "Mermin below threshold" in err
    code, _, err = run(["run", "--rounds", 10000, "--visibility", 0.4, "-o", out], capsys)
    assert code == 2 and "nonce" in err
    code, _, _ = run(["run", "--rounds", 10000, "--visibility", 0.4, "--nonce", "b", "-o", out], capsys)
    assert code == 3


def test_run_recorded_matches_simulator(tmp_path, capsys):
    flags = ["--eps-sv", 0.02, "--seed", 9]
    run(["simulate", "--rounds", 50000, "--visibility", 0.95, *flags, "-o", tmp_path / "log", "--sv-out", tmp_path / "sv"], capsys)
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    code1, _, _ = run(["run", "--rounds", 50000, "--visibility", 0.95, *flags, "--delta-f", 0.01, "-o", tmp_path / "a" / "out"], capsys)
    code2, _, _ = run(["run", "--log", tmp_path / "log", "--sv-file", tmp_path / "sv", "--eps-sv", 0.02, "--delta-f", 0.01, "-o", tmp_path / "b" / "out"], capsys)
    assert code1 == code2 == 0
    for suffix in ("", ".cert.json", ".rounds", ".sv"):
        assert (tmp_path / "a" / f"out{suffix}").read_bytes() == (tmp_path / "b" / f"out{suffix}").read_bytes()


def test_run_sv_file_too_short(tmp_path, capsys):
    run(["simulate", "--rounds", 5000, "-o", tmp_path / "log", "--sv-out", tmp_path / "sv", "--sv-bits", 10], capsys)
    code, _, err = run(["run", "--log", tmp_path / "log", "--sv-file", tmp_path / "sv", "--delta-f", 0.01, "-o", tmp_path / "o"], capsys)
    assert code == 1 and "exhausted" in err


def test_run_usage_errors(tmp_path, capsys):
    assert run(["run", "--rounds", 100, "--extractor", "raz", "-o", tmp_path / "o"], capsys)[0] == 2
    assert run(["run", "--log", tmp_path / "x", "-o", tmp_path / "o"], capsys)[0] == 2
    assert run(["run", "-o", tmp_path / "o"], capsys)[0] == 2
    assert run(["run", "--rounds", 100, "--threshold", 1.5, "-o", tmp_path / "o"], capsys)[0] == 2


def test_run_mbqa_records_v(tmp_path, capsys):
    code, _, _ = run(["run", "--rounds", 100000, "--mode", "mbqa", "--v-coeff", 10, "--delta-f", 0.01, "-o", tmp_path / "o"], capsys)
    cert = json.loads((tmp_path / "o.cert.json").read_text())
    assert code == 0 and cert["config"]["mode"] == {"kind": "MBQA", "t": None, "v": 10.0}


def test_help_lists_flags(capsys):
    with pytest.raises(SystemExit):
        cli.main(["run", "--help"])
    text = capsys.readouterr().out
    for flag in ("--rounds", "--visibility", "--eps-sv", "--eps-sec", "--delta-f", "--assumption", "--mode", "--v-coeff", "--extractor", "--flow", "--seed", "--output"):
        assert flag in text
