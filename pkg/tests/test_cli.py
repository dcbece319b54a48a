import numpy as np
import pytest

from ssmnoise.cli import main
from ssmnoise.model_io import TokenCorpus, save_corpus


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli")
    rc = main([
        "gen-toy", "--d-model", "8", "--n-layers", "2", "--d-state", "4",
        "--d-conv", "3", "--expand", "2", "--dt-rank", "2", "--vocab", "32",
        "--seed", "7", "--out", str(path / "toy.ssmw"),
    ])
    assert rc == 0
    rng = np.random.default_rng(23)
    corpus = TokenCorpus(vocab_size=32, tokens=rng.integers(0, 32, 80).astype(np.int64))
    save_corpus(corpus, path / "corpus.toks")
    return path


def test_ratio_prints_value(capsys):
    assert main(["ratio", "--clean", "20", "--noisy", "30", "--ours", "22"]) == 0
    assert capsys.readouterr().out.strip() == "0.8000"


def test_ratio_degenerate_is_usage_error(capsys):
    assert main(["ratio", "--clean", "20", "--noisy", "20", "--ours", "22"]) == 1


def test_unknown_command_usage_error():
    assert main(["frobnicate"]) == 1


def test_missing_checkpoint_io_error(tmp_path):
    assert main(["inspect", str(tmp_path / "nope.ssmw")]) == 2


def test_bad_magic_io_error(tmp_path):
    bad = tmp_path / "bad.ssmw"
    bad.write_bytes(b"XXXX" + b"\x00" * 32)
    assert main(["inspect", str(bad)]) == 2


def test_inspect_lists_tensors(workdir, capsys):
    assert main(["inspect", str(workdir / "toy.ssmw")]) == 0
    out = capsys.readouterr().out
    assert "lm_head.weight" in out
    assert "vocab_size=32" in out


def test_eval_sigma_zero_matches_clean(workdir, capsys):
    assert main(["eval", str(workdir / "toy.ssmw"), str(workdir / "corpus.toks"),
                 "--window", "32", "--stride", "32"]) == 0
    clean = capsys.readouterr().out
    assert main(["eval", str(workdir / "toy.ssmw"), str(workdir / "corpus.toks"),
                 "--sigma", "0", "--trials", "1", "--window", "32", "--stride", "32"]) == 0
    assert capsys.readouterr().out == clean


def test_sweep_deterministic_csv(workdir):
    args = ["sweep", str(workdir / "toy.ssmw"), str(workdir / "corpus.toks"),
            "--sigmas", "0,0.02", "--trials", "2", "--seed", "11",
            "--window", "32", "--stride", "32"]
    assert main(args + ["--csv", str(workdir / "a.csv")]) == 0
    assert main(args + ["--csv", str(workdir / "b.csv")]) == 0
    assert (workdir / "a.csv").read_bytes() == (workdir / "b.csv").read_bytes()


def test_sweep_csv_header(workdir):
    assert main(["sweep", str(workdir / "toy.ssmw"), str(workdir / "corpus.toks"),
                 "--sigmas", "0.01", "--classes", "out_proj", "--blocks", "1",
                 "--window", "32", "--stride", "32",
                 "--csv", str(workdir / "h.csv")]) == 0
    lines = (workdir / "h.csv").read_text().splitlines()
    assert lines[0] == "model,selector,dist,mode,sigma,trial,seed,hpd,ppl,kl,n_tokens"
    assert len(lines) == 2
    assert "out_proj@1" in lines[1]


def test_hpd_apply_then_eval(workdir, capsys):
    assert main(["hpd-apply", str(workdir / "toy.ssmw"),
                 "--out", str(workdir / "hybrid.ssmw")]) == 0
    capsys.readouterr()
    assert main(["eval", str(workdir / "hybrid.ssmw"), str(workdir / "corpus.toks"),
                 "--window", "32", "--stride", "32"]) == 0
    assert "ppl=" in capsys.readouterr().out


def test_eval_json_report(workdir):
    assert main(["eval", str(workdir / "toy.ssmw"), str(workdir / "corpus.toks"),
                 "--sigma", "0.05", "--trials", "2", "--window", "32", "--stride", "32",
                 "--json", str(workdir / "r.json")]) == 0
    import json

    data = json.loads((workdir / "r.json").read_text())
    assert len(data["rows"]) == 2
    assert data["aggregates"][0]["trials"] == 2


def test_eval_lognormal_mode(workdir, capsys):
    assert main(["eval", str(workdir / "toy.ssmw"), str(workdir / "corpus.toks"),
                 "--dist", "lognormal", "--sigma", "0.05", "--window", "32",
                 "--stride", "32"]) == 0
    assert "ppl=" in capsys.readouterr().out
