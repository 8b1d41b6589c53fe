"""``memetron`` command line: ``run``, ``analyze`` and ``export``.

Exit codes: 0 success, 1 validation error, 2 runtime or backend failure,
3 partial run (some prompt ran out of budget or failed; artifacts are valid).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import analysis
from .config import load_config, parse_config
from .errors import ConfigError, MemetronError, StatsError, ValidationError
from .runner import build_reward_backend, export_run, load_prompts, run_corpus, version_string
from .stats import ALTERNATIVES, TWO_SIDED

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_PARTIAL = 0, 1, 2, 3

logger = logging.getLogger("memetron")


def _comparison(text: str) -> tuple[int, int]:
    try:
        a, b = (int(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a:b with integer generations, got {text!r}") from None
    return a, b


def _fraction(text: str) -> float:
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError("must be in (0, 1)")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="memetron", description="Reward-guided search over generator outputs.")
    parser.add_argument("--version", action="version", version=version_string())
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the configured algorithm over a prompt file")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--prompts", required=True, type=Path, help='JSONL of {"id": str, "text": str}')
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--resume", type=Path, metavar="RUN_DIR", help="continue an interrupted run in RUN_DIR")
    run.add_argument("--output", type=Path, help="run directory (overrides output_dir in the config)")

    an = sub.add_parser("analyze", help="compare generations across questions")
    an.add_argument("run_dir", type=Path)
    an.add_argument("--compare", type=_comparison, action="append", metavar="A:B",
                    help="generation pair, 1-based; repeatable (default: final vs each earlier)")
    an.add_argument("--fdr", type=_fraction, default=0.05, help="BH false discovery rate (default 0.05)")
    an.add_argument("--alpha", type=_fraction, default=0.05, help="raw significance level (default 0.05)")
    an.add_argument("--alternative", choices=ALTERNATIVES, default=TWO_SIDED)
    an.add_argument("--out", type=Path, help="report directory (default: RUN_DIR)")

    ex = sub.add_parser("export", help="flatten histories to one file")
    ex.add_argument("run_dir", type=Path)
    ex.add_argument("--format", choices=("csv", "jsonl"), required=True)
    ex.add_argument("--out", type=Path)
    return parser


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    prompts = load_prompts(args.prompts)
    if args.workers < 1:
        raise ValidationError("--workers must be >= 1")
    run_dir = args.resume or args.output or (Path(config.output_dir) if config.output_dir else None)
    if run_dir is None:
        raise ConfigError("output_dir", "required unless --output or --resume is given")
    if args.resume is not None and not run_dir.is_dir():
        raise ValidationError(f"cannot resume: {run_dir} is not a directory")
    report = run_corpus(config, prompts, run_dir, workers=args.workers, resume=args.resume is not None)
    done = sum(s["status"] == "complete" for s in report.summaries)
    print(f"{run_dir}: {done}/{len(report.summaries)} prompts complete")
    if report.fatal:
        print(f"error: {report.fatal}", file=sys.stderr)
    return report.exit_code


def _run_prompts(run_dir: Path) -> dict:
    path = run_dir / "prompts.jsonl"
    if not path.exists():
        return {}
    return {p.id: p for p in load_prompts(path)}


def cmd_analyze(args: argparse.Namespace) -> int:
    run_dir: Path = args.run_dir
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise ValidationError(f"{run_dir} has no manifest.json")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    config = parse_config(manifest["config"])
    histories = analysis.load_histories(run_dir)
    rerank = build_reward_backend(config) if config.reward.kind == "anchored_pairwise" else None
    scores = analysis.generation_scores(histories, _run_prompts(run_dir), rerank)
    pairs = args.compare or analysis.default_comparisons(scores)
    comparisons = [
        analysis.compare_generations(scores, a, b, q=args.fdr, alpha=args.alpha, alternative=args.alternative)
        for a, b in pairs
    ]
    out = args.out or run_dir
    out.mkdir(parents=True, exist_ok=True)
    analysis.write_report(out, comparisons, args.fdr, args.alpha)
    for _, s in comparisons:
        print(
            f"{s['comparison']}: mean diff {s['mean_diff']:.4g}, "
            f"welch/mw {s['welch']}/{s['mann_whitney']}, "
            f"significant raw/fdr {s['significant_raw']}/{s['significant_fdr']} of {s['questions']}"
        )
    return EXIT_OK


def cmd_export(args: argparse.Namespace) -> int:
    path = export_run(args.run_dir, args.format, args.out)
    print(path)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "analyze": cmd_analyze, "export": cmd_export}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValidationError, StatsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except MemetronError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
