import subprocess
import sys

from conftest import DIM, SENTENCES


def run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "embdump.cli", *map(str, args)],
        capture_output=True, text=True,
    )


def test_happy_path_writes_dump_and_reports(checkpoint, corpus_file, vocab_file, tmp_path):
    out = tmp_path / "toy.embdump"
    result = run_cli(
        "--checkpoint", checkpoint, "--corpus", corpus_file,
        "--vocab", vocab_file, "--layer", "last", "--out", out,
    )
    assert result.returncode == 0, result.stderr
    assert out.exists()
    assert f"d={DIM}, {len(SENTENCES)} sequences" in result.stderr
    assert result.stdout == ""


def test_missing_flag_is_a_usage_error(tmp_path):
    result = run_cli("--checkpoint", "x", "--out", tmp_path / "x.embdump")
    assert result.returncode == 1
    assert "usage" in result.stderr


def test_non_integer_layer_is_a_usage_error(checkpoint, corpus_file, vocab_file, tmp_path):
    result = run_cli(
        "--checkpoint", checkpoint, "--corpus", corpus_file,
        "--vocab", vocab_file, "--layer", "top", "--out", tmp_path / "x.embdump",
    )
    assert result.returncode == 1
    assert "layer" in result.stderr


def test_unloadable_checkpoint_is_a_data_error(corpus_file, vocab_file, tmp_path):
    result = run_cli(
        "--checkpoint", tmp_path / "nowhere", "--corpus", corpus_file,
        "--vocab", vocab_file, "--out", tmp_path / "x.embdump",
    )
    assert result.returncode == 2
    assert "checkpoint" in result.stderr


def test_over_length_corpus_is_a_data_error(checkpoint, vocab_file, tmp_path):
    corpus = tmp_path / "long.txt"
    corpus.write_text(" ".join(["the"] * 15) + "\n")
    result = run_cli(
        "--checkpoint", checkpoint, "--corpus", corpus,
        "--vocab", vocab_file, "--out", tmp_path / "x.embdump",
    )
    assert result.returncode == 2
    assert "sequence 0" in result.stderr
