"""
AMR 讽刺检测命令行入口

子命令：
- stats:    语料统计
- train:    训练并保存最佳检查点、history 与解析后的配置
- eval:     在带标注语料上评估检查点
- predict:  对无标注语料输出每条样本的概率与标签
- saliency: 单个样本的注意力显著性（--verify 做有限差分校验）
- ablate:   11 个消融变体的训练与评估（--dry-run 只展开并校验配置）
- analyze:  路径归因与长度分析
- synth:    生成可分的合成语料
"""

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import json5

from config import Settings, VARIANTS, derive_seed, variant_label
from utils.logger import setup_logger
from amr.data import (
    Vocabulary,
    build_vocab,
    compute_stats,
    generate_separable,
    load_corpus,
    read_corpus_lines,
    load_embeddings,
    split_train_val,
    write_corpus,
)
from amr.errors import AmrError, ConfigError
from amr.model import infer, init_model, parameter_count, predict_labels
from amr.training import load_checkpoint, save_checkpoint, train_loop, write_history
from amr.analysis import (
    ReportBuilder,
    evaluate,
    length_study,
    path_attribution,
    saliency,
    verify_saliency,
)

# 初始化系统日志记录器
logger = setup_logger("Main")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2
EXIT_INTERRUPTED = 130

ABLATION_COLUMNS = ("variant", "label", "parameters", "precision", "recall", "f1", "accuracy")
REDUCED_VARIANTS = ("no-diff", "no-prod", "no-diff-no-prod", "only-prod")


# ==================== 参数解析 ====================

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="运行配置文件（json5），默认 run_config.json")
    common.add_argument("--seed", type=int, help="总随机种子")
    common.add_argument("--variant", choices=list(VARIANTS), help="消融变体名")
    common.add_argument("--train", type=Path, help="训练语料 JSONL")
    common.add_argument("--val", type=Path, help="验证语料 JSONL")
    common.add_argument("--test", type=Path, help="测试语料 JSONL")
    common.add_argument("--embeddings", type=Path, help="GloVe 词向量文件")
    common.add_argument("--checkpoint", type=Path, help="检查点路径")
    common.add_argument("--out", type=Path, help="输出目录")
    common.add_argument("--max-epochs", type=int, help="最大训练轮数")
    common.add_argument("--patience", type=int, help="早停耐心")
    common.add_argument("--dry-run", action="store_true", help="只展开并校验配置，不做计算")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="覆盖任意配置键，如 model.d=64、train.batch_size=16")
    common.add_argument("--no-progress", action="store_true", help="关闭进度条")

    parser = argparse.ArgumentParser(prog="amr", description="AMR 讽刺检测")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", parents=[common], help="语料统计")
    p.add_argument("--input", type=Path, help="要统计的语料，默认为训练语料")

    sub.add_parser("train", parents=[common], help="训练模型")
    sub.add_parser("eval", parents=[common], help="评估检查点")

    p = sub.add_parser("predict", parents=[common], help="预测无标注语料")
    p.add_argument("--input", type=Path, help="无标注语料，默认为测试语料")

    p = sub.add_parser("saliency", parents=[common], help="注意力显著性")
    p.add_argument("--input", type=Path, help="样本文件，默认为测试语料")
    p.add_argument("--index", type=int, default=0, help="样本下标")
    p.add_argument("--verify", action="store_true", help="用有限差分校验显著性")

    sub.add_parser("ablate", parents=[common], help="消融实验")
    sub.add_parser("analyze", parents=[common], help="路径归因与长度分析")

    p = sub.add_parser("synth", parents=[common], help="生成合成语料")
    p.add_argument("--n", type=int, default=200, help="训练集样本数")
    p.add_argument("--vocab-size", type=int, default=50, help="合成词表大小")
    return parser


def _parse_value(raw: str) -> Any:
    try:
        return json5.loads(raw)
    except ValueError:
        return raw


def resolve_settings(args: argparse.Namespace) -> Settings:
    """配置文件 → 命令行参数，后者优先"""
    cfg = Settings()
    cfg.load_from_run_config(args.config)

    if args.seed is not None:
        cfg.SEED = args.seed
    if args.variant:
        cfg.VARIANT = args.variant
    for key in ("train", "val", "test", "embeddings", "checkpoint"):
        value = getattr(args, key)
        if value is not None:
            cfg.set_value(f"paths.{key}", value)
    if args.out is not None:
        cfg.OUTPUT_DIR = args.out
    if args.max_epochs is not None:
        cfg.set_value("train.max_epochs", args.max_epochs)
    if args.patience is not None:
        cfg.set_value("train.patience", args.patience)
    if args.no_progress:
        cfg.set_value("train.show_progress", False)
    for item in args.overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set 需要 KEY=VALUE 形式，实际 {item!r}")
        cfg.set_value(key.strip(), _parse_value(raw.strip()))
    return cfg


# ==================== 输出工具 ====================

def write_json(payload: Any, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")
    return path


def checkpoint_path(cfg: Settings, variant: str) -> Path:
    return cfg.CHECKPOINT_PATH or cfg.OUTPUT_DIR / variant / "checkpoint.amr"


def load_training_data(cfg: Settings):
    train = load_corpus(cfg.TRAIN_PATH)
    if cfg.VAL_PATH is not None:
        val = load_corpus(cfg.VAL_PATH)
    else:
        train, val = split_train_val(train, cfg.TRAIN.val_fraction, derive_seed(cfg.SEED, "split"))
        logger.info(f"从训练集留出验证集: {len(val)} 条")
    if not train or not val:
        raise ConfigError("训练集或验证集为空（语料太小，无法留出验证集）")
    return train, val


def fit_variant(cfg: Settings, variant: str, train, val, vocab: Vocabulary, out_dir: Path):
    """训练一个变体，写出检查点、history 与 resolved_config.json"""
    model_config = cfg.resolve_model_config(variant)
    train_config = cfg.resolve_train_config()
    pretrained = None
    if cfg.EMBEDDINGS_PATH is not None:
        pretrained = load_embeddings(
            cfg.EMBEDDINGS_PATH, vocab, dim=model_config.r,
            seed=derive_seed(cfg.SEED, "embeddings"),
            trainable=model_config.train_embeddings,
            show_progress=train_config.show_progress,
        )

    write_json(cfg.snapshot(variant), out_dir / "resolved_config.json")
    result = train_loop(model_config, train, val, train_config, vocab, pretrained)
    write_history(result.history, out_dir / "history.jsonl")
    ckpt = cfg.CHECKPOINT_PATH if (cfg.CHECKPOINT_PATH and variant == cfg.VARIANT) else out_dir / "checkpoint.amr"
    save_checkpoint(result.params, model_config, vocab, ckpt)
    return result, model_config, ckpt


# ==================== 子命令 ====================

def cmd_stats(cfg: Settings, args: argparse.Namespace) -> int:
    corpus = args.input or cfg.TRAIN_PATH
    if corpus is None:
        raise ConfigError("缺少语料路径（--input 或 --train）")
    if not Path(corpus).exists():
        raise ConfigError(f"输入文件不存在: {corpus}")
    stats = compute_stats(load_corpus(corpus)).to_dict()
    print(json.dumps(stats, ensure_ascii=False, indent=2))
    path = write_json(stats, cfg.OUTPUT_DIR / "stats.json")
    logger.info(f"统计结果已写入 {path}")
    return EXIT_OK


def cmd_train(cfg: Settings, args: argparse.Namespace) -> int:
    required = ["train"] + [k for k in ("val", "test", "embeddings") if getattr(cfg, f"{k.upper()}_PATH")]
    cfg.validate_inputs(required)
    model_config = cfg.resolve_model_config()
    if args.dry_run:
        print(json.dumps(cfg.snapshot(), ensure_ascii=False, indent=2, sort_keys=True))
        return EXIT_OK

    train, val = load_training_data(cfg)
    vocab = build_vocab(train)
    out_dir = cfg.OUTPUT_DIR / cfg.VARIANT
    result, model_config, ckpt = fit_variant(cfg, cfg.VARIANT, train, val, vocab, out_dir)
    logger.info(f"✅ 训练完成: 最佳轮次 {result.best_epoch}，检查点 {ckpt}")

    if cfg.TEST_PATH is not None:
        report = evaluate(result.params, model_config, load_corpus(cfg.TEST_PATH), vocab)
        write_json(report.to_dict(), out_dir / "metrics.json")
        logger.info(f"测试集: F1={report.f1:.4f} Acc={report.accuracy:.4f}")
    return EXIT_OK


def _load_model(cfg: Settings):
    path = checkpoint_path(cfg, cfg.VARIANT)
    cfg.CHECKPOINT_PATH = path
    cfg.validate_inputs(["checkpoint"])
    return load_checkpoint(path)


def cmd_eval(cfg: Settings, args: argparse.Namespace) -> int:
    cfg.validate_inputs(["test"])
    params, model_config, vocab = _load_model(cfg)
    if args.dry_run:
        return EXIT_OK
    report = evaluate(params, model_config, load_corpus(cfg.TEST_PATH), vocab)
    path = report.save(cfg.OUTPUT_DIR / "metrics.json")
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    logger.info(f"评估结果已写入 {path}")
    return EXIT_OK


def cmd_predict(cfg: Settings, args: argparse.Namespace) -> int:
    source = args.input or cfg.TEST_PATH
    if source is None or not Path(source).exists():
        raise ConfigError(f"输入文件不存在: {source}")
    params, model_config, vocab = _load_model(cfg)
    if args.dry_run:
        return EXIT_OK
    # 输出与输入逐行对齐，空行写 skipped 记录
    lines = list(read_corpus_lines(source, require_label=False))
    examples = [ex for _, ex in lines if ex is not None]
    if not examples:
        raise ConfigError(f"输入文件没有样本: {source}")
    probs, _ = infer(params, model_config, examples, vocab)
    labels = predict_labels(probs)

    path = cfg.OUTPUT_DIR / "predictions.jsonl"
    path.parent.mkdir(parents=True, exist_ok=True)
    k = 0
    with open(path, "w", encoding="utf-8") as f:
        for line_no, ex in lines:
            if ex is None:
                record = {"line": line_no, "index": None, "skipped": True}
            else:
                record = {"line": line_no, "index": k, "probabilities": probs[k].tolist(), "label": int(labels[k])}
                k += 1
            f.write(json.dumps(record) + "\n")
    skipped = len(lines) - len(examples)
    logger.info(f"预测结果已写入 {path}（{len(examples)} 条，空行 {skipped} 行）")
    return EXIT_OK


def cmd_saliency(cfg: Settings, args: argparse.Namespace) -> int:
    source = args.input or cfg.TEST_PATH
    if source is None or not Path(source).exists():
        raise ConfigError(f"输入文件不存在: {source}")
    params, model_config, vocab = _load_model(cfg)
    examples = load_corpus(source, require_label=False)
    if not 0 <= args.index < len(examples):
        raise ConfigError(f"样本下标 {args.index} 超出范围 [0, {len(examples)})")
    example = examples[args.index]

    result = saliency(params, model_config, example, vocab)
    path = result.save(cfg.OUTPUT_DIR / f"saliency_{args.index}.json")
    logger.info(f"显著性已写入 {path}")

    if args.verify:
        check = verify_saliency(params, model_config, example, vocab)
        status = "通过" if check.passed else "未通过"
        print(f"有限差分校验{status}: 最大相对误差 {check.max_rel_error:.3e}（{check.checked} 个位置）")
        if not check.passed:
            return EXIT_FAILURE
    return EXIT_OK


def _ablation_rows(cfg: Settings, vocab: Optional[Vocabulary]) -> List[Dict[str, Any]]:
    rows = []
    for variant in VARIANTS:
        model_config = cfg.resolve_model_config(variant)
        row: Dict[str, Any] = {"variant": variant, "label": variant_label(variant), "parameters": None}
        if vocab is not None:
            row["parameters"] = parameter_count(init_model(model_config, vocab, seed=0))
            logger.info(f"[{variant}] {row['label']}: {row['parameters']} 个参数")
        rows.append(row)
    return rows


def parameter_violations(rows: Sequence[Dict[str, Any]]) -> List[str]:
    """去掉增强项的变体参数量不应超过完整模型；返回违反项的说明"""
    counts = {row["variant"]: row["parameters"] for row in rows}
    if counts.get("amr") is None:
        return []
    return [
        f"参数量检查失败: {reduced} ({counts[reduced]}) > amr ({counts['amr']})"
        for reduced in REDUCED_VARIANTS
        if counts.get(reduced) is not None and counts[reduced] > counts["amr"]
    ]


def _report_violations(violations: Sequence[str]) -> int:
    for message in violations:
        logger.error(message)
        print(f"❌ {message}")
    return EXIT_FAILURE if violations else EXIT_OK


def write_ablation_csv(rows: Sequence[Dict[str, Any]], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(ABLATION_COLUMNS)
        for row in rows:
            writer.writerow(["" if row.get(col) is None else row[col] for col in ABLATION_COLUMNS])
    return path


def cmd_ablate(cfg: Settings, args: argparse.Namespace) -> int:
    if args.dry_run:
        vocab = build_vocab(load_corpus(cfg.TRAIN_PATH)) if cfg.TRAIN_PATH and cfg.TRAIN_PATH.exists() else None
        rows = _ablation_rows(cfg, vocab)
        path = write_ablation_csv(rows, cfg.OUTPUT_DIR / "ablation.csv")
        logger.info(f"已展开并校验 {len(rows)} 个变体: {path}")
        return _report_violations(parameter_violations(rows))

    cfg.validate_inputs(["train", "test"] + (["val"] if cfg.VAL_PATH else []))
    train, val = load_training_data(cfg)
    test = load_corpus(cfg.TEST_PATH)
    vocab = build_vocab(train)
    rows = _ablation_rows(cfg, vocab)
    violations = parameter_violations(rows)
    if violations:
        write_ablation_csv(rows, cfg.OUTPUT_DIR / "ablation.csv")
        ReportBuilder("消融实验").add_notes(violations).write(cfg.OUTPUT_DIR / "ablation.md")
        return _report_violations(violations)

    for row in rows:
        variant = row["variant"]
        logger.info(f">>> 变体 {variant} ({row['label']})")
        result, model_config, _ = fit_variant(cfg, variant, train, val, vocab, cfg.OUTPUT_DIR / variant)
        report = evaluate(result.params, model_config, test, vocab)
        row.update(precision=report.precision, recall=report.recall, f1=report.f1, accuracy=report.accuracy)

    path = write_ablation_csv(rows, cfg.OUTPUT_DIR / "ablation.csv")
    ReportBuilder("消融实验").add_ablation(rows).write(cfg.OUTPUT_DIR / "ablation.md")
    logger.info(f"✅ 消融结果已写入 {path}")
    return EXIT_OK


def cmd_analyze(cfg: Settings, args: argparse.Namespace) -> int:
    cfg.validate_inputs(["test"])
    params, model_config, vocab = _load_model(cfg)
    if args.dry_run:
        return EXIT_OK
    data = load_corpus(cfg.TEST_PATH)
    result = path_attribution(params, model_config, data, vocab)
    result.save(cfg.OUTPUT_DIR / "attribution.jsonl", cfg.OUTPUT_DIR / "attribution_summary.json")

    study = length_study(result.system_predictions(), data, model_config.n_cap, model_config.m_cap)
    study.to_csv(cfg.OUTPUT_DIR / "length_study.csv")
    ReportBuilder("路径归因与长度分析").add_notes([
        f"样本数: {result.summary.total}",
        f"两个分类头一致: {result.summary.heads_agree}，不一致: {result.summary.heads_disagree}",
        f"合并输出跟随话语路径: {result.summary.combined_matches_utterance}",
        f"合并输出跟随对话路径: {result.summary.combined_matches_conversation}",
    ]).add_length_study(study).write(cfg.OUTPUT_DIR / "analysis.md")
    logger.info(f"分析结果已写入 {cfg.OUTPUT_DIR}")
    return EXIT_OK


def cmd_synth(cfg: Settings, args: argparse.Namespace) -> int:
    if args.n < 2:
        raise ConfigError("--n 至少为 2")
    splits = {"train": args.n, "val": max(2, args.n // 10), "test": max(2, args.n // 5)}
    for split, n in splits.items():
        examples = generate_separable(n=n, vocab_size=args.vocab_size, seed=derive_seed(cfg.SEED, f"synth-{split}"))
        path = write_corpus(examples, cfg.OUTPUT_DIR / f"synthetic_{split}.jsonl")
        logger.info(f"合成语料 {split}: {n} 条 -> {path}")
    return EXIT_OK


COMMANDS = {
    "stats": cmd_stats,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "saliency": cmd_saliency,
    "ablate": cmd_ablate,
    "analyze": cmd_analyze,
    "synth": cmd_synth,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    解析参数并执行子命令。

    返回:
        int: 退出码（0 成功，2 配置/输入校验失败，1 意外错误，130 用户中断）
    """
    args = build_parser().parse_args(argv)
    try:
        logger.info("=" * 80)
        logger.info(f"🚀 AMR {args.command}")
        logger.info("=" * 80)

        cfg = resolve_settings(args)
        cfg.ensure_directories()
        return COMMANDS[args.command](cfg, args)

    except KeyboardInterrupt:
        logger.warning("用户中断程序执行")
        print("\n⚠️  程序已被用户中断")
        return EXIT_INTERRUPTED
    except (AmrError, OSError) as e:
        logger.error(f"❌ {e}")
        return EXIT_INVALID
    except Exception as e:
        logger.error(f"程序执行出错: {e}", exc_info=True)
        print(f"\n❌ 程序执行失败: {e}")
        print("详细错误信息已记录到日志文件")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
