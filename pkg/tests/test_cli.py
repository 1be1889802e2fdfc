import csv
import json

import pytest

import main as cli
from config import VARIANTS, expand_variant
from amr.data import Example, Vocabulary, collate, generate_separable, write_corpus
from amr.model import init_model
from amr.training import save_checkpoint
from main import EXIT_FAILURE, EXIT_INVALID, EXIT_OK, main, parameter_violations
from tests.conftest import smooth_model, toy_config


def _read_jsonl(path):
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()]


def _common(run_config, corpus_dir):
    return ["--config", str(run_config),
            "--train", str(corpus_dir / "train.jsonl"),
            "--val", str(corpus_dir / "val.jsonl"),
            "--test", str(corpus_dir / "test.jsonl")]


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """训练一次 d=8 的小模型，供评估 / 预测 / 分析共用"""
    root = tmp_path_factory.mktemp("trained")
    examples = generate_separable(n=32, seed=0)
    write_corpus(examples[:24], root / "train.jsonl")
    write_corpus(examples[24:28], root / "val.jsonl")
    write_corpus(examples[28:], root / "test.jsonl")
    config = root / "run_config.json"
    config.write_text(json.dumps({
        "seed": 5,
        "model": {"r": 8, "d": 8},
        "train": {"learning_rate": 0.001, "batch_size": 8, "max_epochs": 2, "show_progress": False},
        "paths": {"output_dir": "out"},
    }), encoding="utf-8")
    assert main(["train"] + _common(config, root)) == EXIT_OK
    return root, config


# ==================== stats / synth ====================

def test_stats_counts(tmp_path, run_config, fixture_examples):
    corpus = write_corpus(fixture_examples, tmp_path / "fixture.jsonl")
    assert main(["stats", "--config", str(run_config), "--input", str(corpus)]) == EXIT_OK
    stats = json.loads((tmp_path / "out" / "stats.json").read_text(encoding="utf-8"))
    assert stats["total"] == 4
    assert stats["classes"]["sarcastic"]["count"] == 2
    assert stats["classes"]["non-sarcastic"]["count"] == 2


def test_stats_missing_file_is_invalid(tmp_path, run_config):
    assert main(["stats", "--config", str(run_config), "--input", str(tmp_path / "nope.jsonl")]) == EXIT_INVALID


def test_missing_config_file_is_invalid(tmp_path):
    assert main(["stats", "--config", str(tmp_path / "missing.json")]) == EXIT_INVALID


def test_bad_override_is_invalid(run_config, corpus_dir):
    args = ["train", "--dry-run", "--set", "model.width=3"] + _common(run_config, corpus_dir)
    assert main(args) == EXIT_INVALID


def test_unknown_variant_rejected_by_parser(run_config):
    with pytest.raises(SystemExit):
        main(["train", "--config", str(run_config), "--variant", "no-such-variant"])


def test_synth_writes_three_splits(tmp_path, run_config):
    assert main(["synth", "--config", str(run_config), "--n", "20"]) == EXIT_OK
    out = tmp_path / "out"
    sizes = {split: len(_read_jsonl(out / f"synthetic_{split}.jsonl")) for split in ("train", "val", "test")}
    assert sizes == {"train": 20, "val": 2, "test": 4}


# ==================== train / ablate ====================

def test_train_dry_run_prints_resolved_config(capsys, run_config, corpus_dir):
    args = ["train", "--dry-run", "--variant", "no-diff", "--set", "train.batch_size=4"]
    assert main(args + _common(run_config, corpus_dir)) == EXIT_OK
    resolved = json.loads(capsys.readouterr().out)
    assert resolved["variant"] == "no-diff"
    assert resolved["model"]["aug_diff"] is False
    assert resolved["model"]["d"] == 8
    assert resolved["train"]["batch_size"] == 4
    assert resolved["train"]["seed"] == 5


def test_train_writes_artifacts(trained):
    root, _ = trained
    out = root / "out" / "amr"
    history = _read_jsonl(out / "history.jsonl")
    assert [h["epoch"] for h in history] == [1, 2]
    assert (out / "checkpoint.amr").exists()
    metrics = json.loads((out / "metrics.json").read_text(encoding="utf-8"))
    assert metrics["tp"] + metrics["fp"] + metrics["fn"] + metrics["tn"] == 4
    resolved = json.loads((out / "resolved_config.json").read_text(encoding="utf-8"))
    assert resolved["seed"] == 5 and resolved["model"]["r"] == 8


def test_train_history_is_deterministic(trained, tmp_path):
    root, config = trained
    args = ["train", "--out", str(tmp_path / "again")] + _common(config, root)
    assert main(args) == EXIT_OK
    first = (root / "out" / "amr" / "history.jsonl").read_bytes()
    assert (tmp_path / "again" / "amr" / "history.jsonl").read_bytes() == first


def test_ablate_dry_run_lists_all_variants(run_config, corpus_dir):
    assert main(["ablate", "--dry-run"] + _common(run_config, corpus_dir)) == EXIT_OK
    with open(corpus_dir / "out" / "ablation.csv", encoding="utf-8", newline="") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 11
    counts = {row["variant"]: int(row["parameters"]) for row in rows}
    assert counts["amr"] - counts["no-diff"] == 2 * 8 * 8 + 2 * 8 * 2
    assert rows[0]["label"] == "AMR"
    assert rows[0]["f1"] == ""


# ==================== 读取检查点的子命令 ====================

def _with_checkpoint(trained, tmp_path):
    root, config = trained
    return ["--config", str(config), "--out", str(tmp_path),
            "--checkpoint", str(root / "out" / "amr" / "checkpoint.amr"),
            "--test", str(root / "test.jsonl")]


def test_eval_writes_metrics(trained, tmp_path):
    assert main(["eval"] + _with_checkpoint(trained, tmp_path)) == EXIT_OK
    metrics = json.loads((tmp_path / "metrics.json").read_text(encoding="utf-8"))
    assert 0.0 <= metrics["accuracy"] <= 1.0


def test_eval_missing_checkpoint_is_invalid(trained, tmp_path):
    root, config = trained
    args = ["eval", "--config", str(config), "--out", str(tmp_path),
            "--checkpoint", str(tmp_path / "none.amr"), "--test", str(root / "test.jsonl")]
    assert main(args) == EXIT_INVALID


def test_predict_writes_one_line_per_example(trained, tmp_path):
    assert main(["predict"] + _with_checkpoint(trained, tmp_path)) == EXIT_OK
    rows = _read_jsonl(tmp_path / "predictions.jsonl")
    assert [r["index"] for r in rows] == [0, 1, 2, 3]
    for r in rows:
        assert abs(sum(r["probabilities"]) - 1.0) < 1e-9
        assert r["label"] == int(r["probabilities"][1] > r["probabilities"][0])


def test_saliency_writes_map(trained, tmp_path):
    assert main(["saliency", "--index", "1"] + _with_checkpoint(trained, tmp_path)) == EXIT_OK
    payload = json.loads((tmp_path / "saliency_1.json").read_text(encoding="utf-8"))
    assert len(payload["saliency"]) == len(payload["comment_tokens"])
    assert len(payload["saliency"][0]) == len(payload["response_tokens"])
    assert 0.0 <= max(max(row) for row in payload["saliency"]) <= 1.0


def test_saliency_index_out_of_range(trained, tmp_path):
    assert main(["saliency", "--index", "99"] + _with_checkpoint(trained, tmp_path)) == EXIT_INVALID


def test_analyze_writes_reports(trained, tmp_path):
    assert main(["analyze"] + _with_checkpoint(trained, tmp_path)) == EXIT_OK
    assert len(_read_jsonl(tmp_path / "attribution.jsonl")) == 4
    summary = json.loads((tmp_path / "attribution_summary.json").read_text(encoding="utf-8"))
    assert summary["heads_agree"] + summary["heads_disagree"] == 4
    with open(tmp_path / "length_study.csv", encoding="utf-8", newline="") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 3 * (2 + 3)
    assert (tmp_path / "analysis.md").read_text(encoding="utf-8").startswith("# 路径归因与长度分析")


@pytest.mark.slow
def test_eval_memorised_corpus_is_perfect(tmp_path, fixture_examples):
    # 训练集、验证集、测试集相同；早停恢复验证准确率最高的参数
    for split in ("train", "val", "test"):
        write_corpus(fixture_examples, tmp_path / f"{split}.jsonl")
    config = tmp_path / "run_config.json"
    config.write_text(json.dumps({
        "seed": 3,
        "model": {"r": 8, "d": 8},
        "train": {"learning_rate": 0.01, "batch_size": 4, "dropout_rate": 0.0, "max_epochs": 200,
                  "patience": 200, "show_progress": False},
        "paths": {"output_dir": "out"},
    }), encoding="utf-8")
    assert main(["train"] + _common(config, tmp_path)) == EXIT_OK
    history = _read_jsonl(tmp_path / "out" / "amr" / "history.jsonl")
    assert max(h["val_accuracy"] for h in history) == 1.0

    args = ["eval", "--config", str(config), "--out", str(tmp_path / "eval"),
            "--checkpoint", str(tmp_path / "out" / "amr" / "checkpoint.amr"),
            "--test", str(tmp_path / "test.jsonl")]
    assert main(args) == EXIT_OK
    metrics = json.loads((tmp_path / "eval" / "metrics.json").read_text(encoding="utf-8"))
    assert metrics["accuracy"] == 1.0
    assert metrics["f1"] == 1.0


def test_eval_corrupted_checkpoint_is_invalid(trained, tmp_path):
    good = (trained[0] / "out" / "amr" / "checkpoint.amr").read_bytes()
    args = _with_checkpoint(trained, tmp_path)
    bad = tmp_path / "bad.amr"
    args[args.index("--checkpoint") + 1] = str(bad)

    bad.write_bytes(b"garbage!" + good[8:])
    assert main(["eval"] + args) == EXIT_INVALID
    bad.write_bytes(good[: len(good) // 2])
    assert main(["eval"] + args) == EXIT_INVALID
    assert not (tmp_path / "metrics.json").exists()


def test_eval_shape_mismatched_checkpoint_is_invalid(trained, tmp_path):
    vocab = Vocabulary(["a", "b"])
    params = init_model(toy_config(), vocab, seed=0)
    path = save_checkpoint(params, toy_config(d=6), vocab, tmp_path / "mismatch.amr")
    args = _with_checkpoint(trained, tmp_path)
    args[args.index("--checkpoint") + 1] = str(path)
    assert main(["eval"] + args) == EXIT_INVALID


def test_predict_duplicate_lines_and_blank_lines(trained, tmp_path):
    root, _ = trained
    lines = (root / "test.jsonl").read_text(encoding="utf-8").splitlines()
    source = tmp_path / "input.jsonl"
    source.write_text("\n".join([lines[0], lines[0], "", lines[1]]) + "\n", encoding="utf-8")
    args = _with_checkpoint(trained, tmp_path) + ["--input", str(source)]
    assert main(["predict"] + args) == EXIT_OK

    rows = _read_jsonl(tmp_path / "predictions.jsonl")
    assert [r["line"] for r in rows] == [1, 2, 3, 4]
    assert [r["index"] for r in rows] == [0, 1, None, 2]
    assert rows[2]["skipped"] is True and "probabilities" not in rows[2]
    assert rows[0]["label"] == rows[1]["label"]
    assert rows[0]["probabilities"] == pytest.approx(rows[1]["probabilities"], abs=1e-12)


def test_predict_blank_input_is_invalid(trained, tmp_path):
    source = tmp_path / "blank.jsonl"
    source.write_text("\n\n", encoding="utf-8")
    args = _with_checkpoint(trained, tmp_path) + ["--input", str(source)]
    assert main(["predict"] + args) == EXIT_INVALID


# ==================== 显著性校验 ====================

def _single_example_checkpoint(tmp_path, config):
    example = Example(("a", "b", "c"), ("b", "a"), 1)
    vocab = Vocabulary(["a", "b", "c"])
    source = write_corpus([example], tmp_path / "one.jsonl")
    if config.has_conversation_path and config.use_attention:
        params, _ = smooth_model(config, vocab, collate([example], vocab), seed=4)
    else:
        params = init_model(config, vocab, seed=4)
    path = save_checkpoint(params, config, vocab, tmp_path / "one.amr")
    return ["--checkpoint", str(path), "--input", str(source), "--out", str(tmp_path / "out")]


def test_saliency_verify_passes(run_config, tmp_path, capsys):
    args = _single_example_checkpoint(tmp_path, toy_config())
    assert main(["saliency", "--verify", "--config", str(run_config)] + args) == EXIT_OK
    assert "有限差分校验通过" in capsys.readouterr().out
    assert (tmp_path / "out" / "saliency_0.json").exists()


@pytest.mark.parametrize("variant", ["utterance-only", "no-attention"])
def test_saliency_on_variant_without_attention_fails(run_config, tmp_path, variant):
    args = _single_example_checkpoint(tmp_path, toy_config(**expand_variant(variant)))
    assert main(["saliency", "--verify", "--config", str(run_config)] + args) != EXIT_OK
    assert not (tmp_path / "out" / "saliency_0.json").exists()


# ==================== 完整消融 ====================

def test_ablate_full_run(run_config, corpus_dir):
    args = ["ablate", "--max-epochs", "1", "--set", "model.d=4", "--set", "model.r=4"]
    assert main(args + _common(run_config, corpus_dir)) == EXIT_OK
    out = corpus_dir / "out"
    with open(out / "ablation.csv", encoding="utf-8", newline="") as f:
        rows = list(csv.DictReader(f))
    assert [r["variant"] for r in rows] == list(VARIANTS)
    for row in rows:
        assert 0.0 <= float(row["accuracy"]) <= 1.0
        assert row["f1"] != ""
        assert (out / row["variant"] / "checkpoint.amr").exists()
    assert "消融实验" in (out / "ablation.md").read_text(encoding="utf-8")


def test_parameter_violations():
    rows = [{"variant": "amr", "parameters": 100}, {"variant": "no-diff", "parameters": 90},
            {"variant": "no-prod", "parameters": 120}]
    assert len(parameter_violations(rows)) == 1
    assert "no-prod" in parameter_violations(rows)[0]
    assert parameter_violations([{"variant": "amr", "parameters": None}]) == []


def test_ablate_reports_parameter_violation(run_config, corpus_dir, monkeypatch, capsys):
    # 去掉差的变体参数量反而更多
    monkeypatch.setattr(cli, "init_model", lambda model_config, vocab, seed: model_config)
    monkeypatch.setattr(cli, "parameter_count", lambda model_config: 100 if model_config.aug_diff else 200)
    assert main(["ablate", "--dry-run"] + _common(run_config, corpus_dir)) == EXIT_FAILURE
    assert "no-diff" in capsys.readouterr().out

    assert main(["ablate"] + _common(run_config, corpus_dir)) == EXIT_FAILURE
    out = corpus_dir / "out"
    assert "参数量检查失败" in (out / "ablation.md").read_text(encoding="utf-8")
    assert not (out / "amr").exists()
