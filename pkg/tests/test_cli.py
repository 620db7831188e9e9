import json

import pytest

from nswatermark.cli import main
from nswatermark.lm import NGramModel


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["train-lm", "--synthetic", "3000", "--output", str(d / "m.json"), "--vocab-out", str(d / "v.txt"), "--corpus-out", str(d / "c.txt")]) == 0
    lines = (d / "c.txt").read_text().splitlines()
    (d / "prompts.txt").write_text("".join(" ".join(l.split()[:3]) + "\n" for l in lines[:6]))
    return d


def _jsonl(text):
    return [json.loads(l) for l in text.splitlines() if l.strip()]


def test_usage_errors_exit_2(capsys):
    assert main([]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["generate", "--bogus"]) == 2
    assert main(["generate", "--mode", "wild"]) == 2
    assert main(["generate", "--key", "nothex"]) == 2


def test_gamma_out_of_range_exit_1(capsys):
    assert main(["generate", "--gamma", "1.5"]) == 1
    assert "gamma must be in (0,1)" in capsys.readouterr().err


def test_missing_model_is_domain_error(capsys):
    assert main(["generate", "--mode", "none"]) == 1
    assert "model" in capsys.readouterr().err


def test_generate_ns_then_detect(workdir, capsys):
    m, prompts = str(workdir / "m.json"), str(workdir / "prompts.txt")
    assert main(["generate", "--mode", "ns", "--gamma", "0.01", "--z", "4", "--tmax", "100", "--key", "0xDEADBEEF", "--model", m, "--input", prompts]) == 0
    out = _jsonl(capsys.readouterr().out)
    assert len(out) == 6
    for o in out:
        assert set(o) == {"tokens", "text", "logprob", "z"} and o["z"] >= 4
    (workdir / "g.jsonl").write_text("".join(json.dumps(o) + "\n" for o in out))
    (workdir / "ids.txt").write_text("".join(" ".join(map(str, o["tokens"])) + "\n" for o in out))
    (workdir / "text.txt").write_text("".join(o["text"] + "\n" for o in out))
    for f in ("g.jsonl", "ids.txt", "text.txt"):
        assert main(["detect", "--gamma", "0.01", "--key", "0xDEADBEEF", "--model", m, "--input", str(workdir / f)]) == 0
        reps = _jsonl(capsys.readouterr().out)
        assert [set(r) for r in reps] == [{"T", "green", "z", "watermarked"}] * 6
        assert all(r["watermarked"] for r in reps)
        assert [r["z"] for r in reps] == pytest.approx([o["z"] for o in out])


def test_wrong_key_does_not_detect(workdir, capsys):
    m = str(workdir / "m.json")
    main(["generate", "--mode", "ns", "--key", "1", "--model", m, "--input", str(workdir / "prompts.txt")])
    out = _jsonl(capsys.readouterr().out)
    (workdir / "k.jsonl").write_text("".join(json.dumps(o) + "\n" for o in out))
    main(["detect", "--key", "2", "--model", m, "--input", str(workdir / "k.jsonl")])
    assert sum(r["watermarked"] for r in _jsonl(capsys.readouterr().out)) <= 1


def test_linear_and_adaptive_extra_fields(workdir, capsys):
    m, prompts = str(workdir / "m.json"), str(workdir / "prompts.txt")
    assert main(["generate", "--mode", "ns-linear", "--gamma", "0.1", "--alpha", "2", "--key", "5", "--model", m, "--input", prompts]) == 0
    assert all("t_hat" in o for o in _jsonl(capsys.readouterr().out))
    assert main(["generate", "--mode", "adaptive-soft", "--gamma", "0.1", "--key", "5", "--model", m, "--input", prompts]) == 0
    assert all(o["delta_used"] in (4, 6, 8, 10, 12, 14) for o in _jsonl(capsys.readouterr().out))


def test_env_key_fallback_and_config_precedence(workdir, capsys, monkeypatch):
    m, prompts = str(workdir / "m.json"), str(workdir / "prompts.txt")
    base = ["generate", "--mode", "ns", "--model", m, "--input", prompts]
    main(base + ["--key", "abc"])
    explicit = capsys.readouterr().out
    monkeypatch.setenv("NSWM_KEY", "abc")
    main(base)
    assert capsys.readouterr().out == explicit
    conf = workdir / "run.conf"
    conf.write_text("key = 0x123\ngamma = 0.1\n")
    main(base + ["--config", str(conf), "--key", "abc", "--gamma", "0.01"])
    assert capsys.readouterr().out == explicit
    conf.write_text("gama = 0.1\n")
    assert main(base + ["--config", str(conf)]) == 1
    assert ":1:" in capsys.readouterr().err


def test_generate_is_reproducible_and_jobs_preserve_order(workdir, capsys):
    m, prompts = str(workdir / "m.json"), str(workdir / "prompts.txt")
    args = ["generate", "--mode", "ns", "--gamma", "0.1", "--key", "9", "--model", m, "--input", prompts]
    main(args)
    a = capsys.readouterr().out
    main(args + ["--jobs", "2"])
    assert capsys.readouterr().out == a
    out = workdir / "o.jsonl"
    main(args + ["--output", str(out)])
    assert out.read_text() == a


def test_generate_token_id_prompts(workdir, capsys):
    m = NGramModel.load(workdir / "m.json")
    ids = workdir / "pids.txt"
    ids.write_text("2 3\n[4, 5]\n")
    assert main(["generate", "--mode", "none", "--ids", "--model", str(workdir / "m.json"), "--input", str(ids)]) == 0
    out = _jsonl(capsys.readouterr().out)
    assert len(out) == 2 and all(0 <= t < m.vocab_size for o in out for t in o["tokens"])


def test_detect_rejects_out_of_range_ids(workdir, capsys):
    bad = workdir / "bad.txt"
    bad.write_text("1 2 999999\n")
    assert main(["detect", "--model", str(workdir / "m.json"), "--input", str(bad), "--format", "ids"]) == 1


def test_simulate(capsys):
    assert main(["simulate", "--theorem1", "--T", "1000", "--N", "20000", "--dist", "exp1", "--seed", "3"]) == 0
    r = json.loads(capsys.readouterr().out)
    assert set(r) == {"p_multi_green", "p_one_green", "ks_Y_exp1", "lemma1_ok"}
    assert abs(r["p_multi_green"] - 0.3069) < 0.02 and r["lemma1_ok"] is True
    assert main(["simulate", "--theorem1", "--T", "1"]) == 1
    assert main(["simulate", "--theorem1", "--dist", "cauchy"]) == 2
    assert main(["simulate"]) == 2


def test_evaluate_writes_artifacts(workdir, capsys):
    out = workdir / "eval"
    assert main(["evaluate", "--modes", "none,ns,soft", "--gamma", "0.1", "--key", "4", "--model", str(workdir / "m.json"), "--input", str(workdir / "prompts.txt"), "--out-dir", str(out)]) == 0
    summary = _jsonl(capsys.readouterr().out)[0]
    assert summary["ns"]["FNR"] == 0.0 and summary["ns"]["n"] == 6
    assert (out / "records.jsonl").exists() and (out / "scatter.csv").exists()
    assert json.loads((out / "summary.json").read_text()) == summary


def test_tune_grid(workdir, capsys):
    lines = (workdir / "c.txt").read_text().splitlines()
    p = workdir / "tune_prompts.txt"
    p.write_text("".join(" ".join(l.split()[:2]) + "\n" for l in lines[:20]))
    assert main(["tune", "--grid-gamma", "0.1,0.01,0.001,0.0001", "--key", "3", "--model", str(workdir / "m.json"), "--input", str(p)]) == 0
    r = _jsonl(capsys.readouterr().out)[0]
    assert [row["gamma"] for row in r["grid"]] == [0.1, 0.01, 0.001, 0.0001]
    assert r["n_validation"] == 2 and r["n_test"] == 18
    assert r["best_gamma"] in (0.1, 0.01, 0.001, 0.0001)
    assert r["test"]["FNR"] == 0.0
    assert main(["tune", "--grid-gamma", "0.1,2", "--model", str(workdir / "m.json"), "--input", str(p)]) == 1


def test_remote_generate(workdir, logit_server, toy_model, capsys, tmp_path):
    toy_model.vocabulary.save(tmp_path / "v.txt")
    toy_model.save(tmp_path / "toy.json")
    prompts = tmp_path / "p.txt"
    prompts.write_text("w0009 w0044\n")
    common = ["generate", "--mode", "ns", "--gamma", "0.1", "--key", "8", "--tmax", "40", "--input", str(prompts)]
    assert main(common + ["--endpoint", logit_server.endpoint, "--vocab", str(tmp_path / "v.txt")]) == 0
    remote = capsys.readouterr().out
    assert main(common + ["--model", str(tmp_path / "toy.json")]) == 0
    assert capsys.readouterr().out == remote
    assert main(common + ["--endpoint", logit_server.endpoint]) == 1
