import json

import pytest

from src import nr_ldpc
from src.config import ENV_CONFIG

CODE = "gallager:n=96,wc=3,wr=6,seed=1"


@pytest.fixture(autouse=True)
def no_env_config(monkeypatch):
    monkeypatch.delenv(ENV_CONFIG, raising=False)


def _run(capsys, *argv):
    rc = nr_ldpc.main(list(argv))
    return rc, capsys.readouterr().out.strip()


def test_usage_errors(capsys):
    assert nr_ldpc.main([]) == nr_ldpc.EXIT_USAGE
    assert nr_ldpc.main(["encode", "--bogus"]) == nr_ldpc.EXIT_USAGE
    assert nr_ldpc.main(["bench", "--trials", "3"]) == nr_ldpc.EXIT_USAGE
    assert nr_ldpc.main(["encode", "--code", CODE]) == nr_ldpc.EXIT_USAGE


def test_encode_corrupt_decode_round_trip(tmp_path, capsys):
    alist = tmp_path / "code.alist"
    assert nr_ldpc.main(["make-code", "--n", "96", "--wc", "3", "--wr", "6", "--seed", "1", "--out", str(alist)]) == 0
    ref = f"alist:{alist}"
    from src.ldpc_core import load_code

    k = load_code(ref).k
    info = ("1101" * k)[:k]
    rc, codeword = _run(capsys, "encode", "--code", ref, "--bits", info)
    assert rc == 0 and len(codeword) == 96 and codeword.startswith(info)

    rc, same = _run(capsys, "corrupt", "--ber", "0", "--seed", "3", "--bits", codeword)
    assert rc == 0 and same == codeword

    word = tmp_path / "word.txt"
    word.write_text(codeword[:10] + "\n" + codeword[10:])
    rc, decoded = _run(capsys, "decode", "--code", ref, "--ber", "1%", "--in", str(word))
    assert rc == 0 and decoded == info


def test_decode_errors_are_data_errors(capsys):
    assert nr_ldpc.main(["decode", "--code", CODE, "--ber", "0.01", "--bits", "0101"]) == nr_ldpc.EXIT_DATA
    assert nr_ldpc.main(["decode", "--code", CODE, "--ber", "0.01", "--bits", "01x1"]) == nr_ldpc.EXIT_DATA
    assert nr_ldpc.main(["decode", "--code", CODE, "--ber", "0.01", "--in", "/nonexistent/word"]) == nr_ldpc.EXIT_DATA


def test_bench_replay_and_report(tmp_path, capsys):
    out_dir = tmp_path / "res"
    rc, csv_path = _run(
        capsys, "bench", "--seed", "1", "--trials", "6", "--bers", "2%,0.04", "--code", CODE,
        "--set", "modes=ldpc-only,oracle-nr-ldpc", "--set", "markov.markov=1:0.02,0.98",
        "--out-dir", str(out_dir),
    )
    assert rc == 0
    assert csv_path.endswith("results.csv")
    summary = out_dir / "results.json"
    assert summary.exists() and (out_dir / "results.trials.jsonl").exists()

    assert nr_ldpc.main(["bench", "--replay", str(summary)]) == nr_ldpc.EXIT_OK

    rc, text = _run(capsys, "report", "--in", str(summary), "--modes", "oracle-nr-ldpc", "--types", "all")
    assert rc == 0
    lines = text.splitlines()
    assert lines[0].startswith("ber,mode,file_type")
    assert len(lines) == 3
    assert nr_ldpc.main(["report", "--in", str(summary), "--modes", "nr-ldpc"]) == nr_ldpc.EXIT_DATA

    payload = json.loads(summary.read_text())
    payload["csv_sha256"] = "f" * 64
    summary.write_text(json.dumps(payload))
    assert nr_ldpc.main(["bench", "--replay", str(summary)]) == nr_ldpc.EXIT_NOT_REPRODUCIBLE


def test_scan_prints_manifest_hash(tmp_path, capsys):
    (tmp_path / "h").mkdir()
    (tmp_path / "h" / "a.html").write_bytes(b"<html>" * 20)
    (tmp_path / "h" / "b.html").write_bytes(b"<body>" * 20)
    out = tmp_path / "manifest.jsonl"
    rc, text = _run(capsys, "scan", "--label", f"html={tmp_path / 'h'}", "--k", "64", "--out", str(out))
    assert rc == 0
    assert "html\t30" in text
    assert text.splitlines()[-1].startswith("manifest_hash\t")
    assert out.exists()
    assert nr_ldpc.main(["scan", "--out", str(out)]) == nr_ldpc.EXIT_USAGE


def test_trained_decoder_loads_with_metadata_checks(tmp_path, capsys):
    model = tmp_path / "markov.nrnn"
    rc = nr_ldpc.main([
        "train-softdec", "--type", "markov", "--markov", "1:0.02,0.98", "--segments", "40", "--k", "16",
        "--p-dnn", "0.8%", "--epochs", "1", "--filters", "4", "--out", str(model),
        "--loss-history", str(tmp_path / "loss.csv"),
    ])
    assert rc == 0 and model.exists()
    assert (tmp_path / "loss.csv").read_text().startswith("step,loss")
    word = "0" * 96
    base = ["decode", "--code", CODE, "--ber", "0.01", "--mode", "nr-ldpc", "--bits", word,
            "--set", f"softdec.markov={model}"]
    rc, _ = _run(capsys, *base)
    assert rc == 0
    assert nr_ldpc.main(base + ["--set", "p_dnn=0.004"]) == nr_ldpc.EXIT_DATA
    assert nr_ldpc.main(base + ["--set", "p_dnn=0.004", "--force"]) == nr_ldpc.EXIT_OK


def test_estimate_transitions(tmp_path, capsys):
    out = tmp_path / "t2.csv"
    rc, text = _run(capsys, "estimate-transitions", "--K", "2,3", "--pairs-per-symbol", "100", "--epochs", "1", "--out", str(out))
    assert rc == 0
    assert text.splitlines()[0].startswith("K=2\tN=200")
    assert out.read_text().splitlines()[0] == "K,N,delta_K,wall_seconds"


def test_reproduce_table2(tmp_path, capsys):
    out = tmp_path / "table2.csv"
    rc, text = _run(capsys, "reproduce-table2", "--K", "2", "--seed", "0", "--pairs-per-symbol", "100",
                    "--epochs", "1", "--out", str(out))
    assert rc == 0
    assert text.startswith("K=2\tN=200")
    lines = out.read_text().splitlines()
    assert lines[0] == "K,N,delta_K,wall_seconds" and lines[1].startswith("2,200,")


def test_malformed_replay_summary_is_a_data_error(tmp_path):
    summary = tmp_path / "results.json"
    summary.write_text(json.dumps({"config": {"code": CODE}}))
    assert nr_ldpc.main(["bench", "--replay", str(summary)]) == nr_ldpc.EXIT_DATA
    summary.write_text(json.dumps({"csv_sha256": "0" * 64}))
    assert nr_ldpc.main(["bench", "--replay", str(summary)]) == nr_ldpc.EXIT_DATA
    summary.write_text(json.dumps({"rows": [{"ber": 0.01}]}))
    assert nr_ldpc.main(["report", "--in", str(summary)]) == nr_ldpc.EXIT_DATA


def test_ftr_evaluation_without_splits_warns(tmp_path, capsys, caplog):
    for name, byte in (("a", b"\x00"), ("b", b"\xff")):
        (tmp_path / name).mkdir()
        (tmp_path / name / f"{name}.bin").write_bytes(byte * 64)
    manifest = tmp_path / "manifest.jsonl"
    assert nr_ldpc.main(["scan", "--label", f"a={tmp_path / 'a'}", "--label", f"b={tmp_path / 'b'}",
                         "--out", str(manifest)]) == 0
    rc = nr_ldpc.main([
        "train-ftr", "--manifest", str(manifest), "--k", "32", "--ber", "1%", "--epochs", "1",
        "--layers", "conv1d:2:3,relu,maxpool1d:2:2,dense:2,sigmoid", "--eval-bers", "1%",
        "--out", str(tmp_path / "ftr.nrnn"),
    ])
    assert rc == 0
    assert any("split" in r.getMessage() for r in caplog.records if r.levelname == "WARNING")
