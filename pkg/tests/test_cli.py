import csv
import json
from importlib import resources

import jsonschema
import numpy as np
import pytest

from randembed import bitio
from randembed.cli import main, parse_count

N = "20000"


@pytest.fixture(scope="module")
def schema():
    return json.loads(resources.files("randembed").joinpath("schemas/report.schema.json").read_text())


def run(*argv):
    return main([str(a) for a in argv])


def report(path, schema):
    doc = json.loads(path.read_text())
    jsonschema.validate(doc, schema)
    return doc


def test_parse_count():
    assert parse_count("10^8") == 10 ** 8
    assert parse_count("1e6") == 10 ** 6
    assert parse_count("1_000") == 1000


def test_usage_errors_exit_2(capsys):
    assert run() == 2
    assert run("test") == 2
    assert run("bogus") == 2
    assert run("generate", "--out", "x.bits", "--bits", "ten") == 2
    assert "usage" in capsys.readouterr().err


def test_generate_is_reproducible_from_report(tmp_path, schema):
    out, rep = tmp_path / "a.bits", tmp_path / "a.json"
    assert run("generate", "--out", out, "--bits", "10^5", "--report", rep) == 0
    doc = report(rep, schema)
    seed = doc["seeds"]["source"]
    assert doc["config"]["bits"] == 10 ** 5
    again = tmp_path / "b.bits"
    assert run("generate", "--out", again, "--bits", "10^5", "--seed", seed) == 0
    assert bitio.load(out) == bitio.load(again)


def test_test_command_pass_and_fail(tmp_path, schema):
    good = tmp_path / "good.bits"
    bitio.save(bitio.BitSequence.from_bits(np.random.default_rng(0).integers(0, 2, 4 * 20_000, dtype=np.uint8)),
               good)
    rep, csv_path, figs = tmp_path / "t.json", tmp_path / "t.csv", tmp_path / "figs"
    code = run("test", "--in", good, "--block-len", N, "--report", rep, "--csv", csv_path, "--figures", figs,
               "--p-values", "--threads", 1)
    doc = report(rep, schema)
    assert code == (0 if doc["suite"]["verdict"] == "Success" else 1)
    rows = list(csv.reader(csv_path.open()))
    assert rows[0][0] == "test" and len(rows) == 1 + len(doc["suite"]["tests"])
    assert (figs / "test_pvalues.png").stat().st_size > 0
    assert (figs / "test_proportions.png").stat().st_size > 0

    zeros = tmp_path / "zeros.bits"
    bitio.save(bitio.BitSequence.zeros(2 * 20_000), zeros)
    assert run("test", "--in", zeros, "--block-len", N, "--report", rep) == 1
    assert report(rep, schema)["suite"]["verdict"] == "Failure"


def test_test_command_domain_errors(tmp_path):
    short = tmp_path / "s.bits"
    bitio.save(bitio.BitSequence.zeros(100), short)
    assert run("test", "--in", short, "--block-len", N) == 1
    assert run("test", "--in", tmp_path / "missing.bits") == 1
    assert run("test", "--in", short, "--block-len", "100", "--alpha", "1.5") == 1


def test_keygen_embed_extract_round_trip(tmp_path, schema):
    carrier, key, stego = tmp_path / "c.bits", tmp_path / "k.key", tmp_path / "s.bits"
    msg, back = tmp_path / "m.bin", tmp_path / "back.bin"
    assert run("generate", "--out", carrier, "--bits", "10^5", "--seed", 1) == 0
    assert run("keygen", "--K", 55, "--G", 5, "--seed", 9, "--out", key, "--report", tmp_path / "k.json") == 0
    report(tmp_path / "k.json", schema)
    msg.write_bytes(b"a covert note")
    assert run("embed", "--key", key, "--in", carrier, "--out", stego, "--block", N, "--skip", "2",
               "--message", msg, "--report", tmp_path / "e.json") == 0
    report(tmp_path / "e.json", schema)
    assert run("extract", "--key", key, "--in", stego, "--out", back, "--block", N, "--skip", "2",
               "--count", 8 * len(b"a covert note")) == 0
    assert back.read_bytes() == b"a covert note"
    # message too long is a domain failure
    msg.write_bytes(bytes(10_000))
    assert run("embed", "--key", key, "--in", carrier, "--out", stego, "--block", N, "--message", msg) == 1


def test_keygen_masks(tmp_path):
    key = tmp_path / "k.key"
    assert run("keygen", "--K", 59, "--G", 5, "--mask", "1,24", "--seed", 3, "--out", key) == 0
    assert "MASK=1,24" in key.read_text()
    assert run("keygen", "--K", 13, "--mask", "1,3,7,10,13", "--out", key) == 1


def test_score(tmp_path, schema):
    seq = tmp_path / "c.bits"
    assert run("generate", "--out", seq, "--bits", 4 * 20_000, "--seed", 2) == 0
    rep = tmp_path / "s.json"
    assert run("score", "--in", seq, "--block-len", N, "--grid", "9,200", "--g", 5, "--report", rep,
               "--figures", tmp_path, "--threads", 1) == 0
    doc = report(rep, schema)
    assert [p["K"] for p in doc["strength"]["grid"]] == [9, 200]
    assert doc["strength"]["pass_probability"]["9"] == 0.0
    assert (tmp_path / "strength.png").exists()


def test_repair_skip_and_replace(tmp_path, schema):
    rng = np.random.default_rng(3)
    mat = rng.integers(0, 2, (40, 20_000), dtype=np.uint8)
    mat[4] = (rng.random(20_000) < 0.6).astype(np.uint8)
    carrier = tmp_path / "c.bits"
    bitio.save(bitio.BitSequence.from_bits(mat.reshape(-1)), carrier)
    key = tmp_path / "k.key"
    run("keygen", "--K", 500, "--G", 5, "--mask", "full", "--seed", 1, "--out", key)
    rep = tmp_path / "t.json"
    assert run("test", "--in", carrier, "--block-len", N, "--report", rep) == 1
    out, rrep = tmp_path / "r.bits", tmp_path / "r.json"
    code = run("repair", "--mode", "skip", "--carrier", carrier, "--suite-report", rep, "--key", key,
               "--out", out, "--verify", "--report", rrep)
    doc = report(rrep, schema)
    assert 4 in doc["skip"]
    assert code == (0 if doc["suite"]["verdict"] == "Success" else 1)
    assert np.array_equal(bitio.load(out).bits()[4 * 20_000:5 * 20_000], mat[4])

    out2 = tmp_path / "r2.bits"
    assert run("repair", "--mode", "replace", "--carrier", carrier, "--suite-report", rep, "--out", out2,
               "--fresh-seed", 5, "--report", rrep) == 0
    doc = report(rrep, schema)
    assert bitio.load(out2).length == 40 * 20_000
    assert doc["seeds"]["fresh"] == 5
    assert run("repair", "--mode", "skip", "--carrier", carrier, "--suite-report", rep, "--out", out2) == 1


def test_send_recv(tmp_path, schema):
    key, stream, outdir = tmp_path / "k.key", tmp_path / "st.bits", tmp_path / "msgs"
    run("keygen", "--K", 55, "--G", 5, "--mask", "full", "--seed", 4, "--out", key)
    m1, m2 = tmp_path / "a.bin", tmp_path / "b.txt"
    m1.write_bytes(b"first message")
    m2.write_text("10110")
    assert run("send", "--key", key, "--message", m1, "--message", m2, "--out", stream, "--block", N,
               "--length", 10 * 20_000, "--carrier-seed", 8, "--report", tmp_path / "send.json") == 0
    report(tmp_path / "send.json", schema)
    rep = tmp_path / "recv.json"
    assert run("recv", "--key", key, "--in", stream, "--out", outdir, "--block", N, "--report", rep) == 0
    doc = report(rep, schema)
    assert doc["files"] == ["msg0000.bin", "msg0001.bits"]
    assert (outdir / "msg0000.bin").read_bytes() == b"first message"
    assert bitio.load(outdir / "msg0001.bits").to_ascii() == "10110"
    assert doc["diagnostics"]["frames"] == 2


def test_threads_env_fallback(tmp_path, monkeypatch):
    seq = tmp_path / "c.bits"
    bitio.save(bitio.BitSequence.from_bits(np.random.default_rng(1).integers(0, 2, 2 * 20_000, dtype=np.uint8)),
               seq)
    monkeypatch.setenv("RANDEMBED_THREADS", "2")
    rep = tmp_path / "t.json"
    run("test", "--in", seq, "--block-len", N, "--report", rep)
    assert json.loads(rep.read_text())["config"]["threads"] == 2
