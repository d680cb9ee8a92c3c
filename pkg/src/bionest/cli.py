"""Command-line interface.

Commands: ``predict``, ``score``, ``cache warm|compact``, ``prompt preview``.
Exit codes: 0 success, 1 partial failure, 2 configuration/usage error.
"""
from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import figures, scorer
from .config import ConfigError, apply_replay_dir, load_config, load_instruction_pack
from .corpus import Category, load_corpus
from .llm import build_prompt
from .pipeline import run_predict, warm_cache
from .umls import TermCache


class CliConfigError(click.ClickException):
    exit_code = 2


def _load_cli_config(path: str | None, **overrides):
    try:
        return load_config(path, **overrides)
    except ConfigError as exc:
        raise CliConfigError(str(exc)) from exc


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool) -> None:
    """Nested biomedical entity extraction pipeline."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command()
@click.option("--input", "input_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--output", "output_dir", required=True, type=click.Path(file_okay=False))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice(["umls", "priority"]), default=None)
@click.option("--replay", type=click.Path(exists=True, file_okay=False),
              help="Directory of recorded fixtures (llm.jsonl, ner.jsonl, umls_cache.jsonl).")
@click.option("--workers", type=int, default=None)
@click.option("--llm-endpoint", default=None, help="Override llm.endpoint.")
@click.option("--ner-endpoint", default=None, help="Override ner.endpoint.")
@click.option("--umls-base-url", default=None, help="Override umls.base_url.")
@click.option("--cache-path", default=None, help="Override umls.cache_path.")
def predict(input_dir, output_dir, config_path, mode, replay, workers,
            llm_endpoint, ner_endpoint, umls_base_url, cache_path) -> None:
    """Extract entities for every document in INPUT and write BRAT files to OUTPUT."""
    config = _load_cli_config(config_path, mode=mode, workers=workers)
    if llm_endpoint:
        config.llm.endpoint = llm_endpoint
    if ner_endpoint:
        config.ner.endpoint = ner_endpoint
    if umls_base_url:
        config.umls.base_url = umls_base_url
    if cache_path:
        config.umls.cache_path = cache_path
    if replay:
        try:
            apply_replay_dir(config, replay)
        except ConfigError as exc:
            raise CliConfigError(str(exc)) from exc
    try:
        summary = run_predict(config, input_dir, output_dir)
    except (ConfigError, ValueError) as exc:
        raise CliConfigError(str(exc)) from exc
    click.echo(
        f"processed {summary.documents} document(s), "
        f"{summary.mentions} mention(s), "
        f"{summary.candidates_rejected} candidate(s) rejected, "
        f"{len(summary.warnings)} warning(s)"
    )
    if summary.documents_failed:
        click.echo(f"FAILED documents: {', '.join(summary.documents_failed)}", err=True)
        sys.exit(1)


@main.command()
@click.option("--gold", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--pred", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--format", "fmt", type=click.Choice(["table", "json"]), default="table")
@click.option("--report-dir", type=click.Path(file_okay=False),
              help="Also write scores.json, scores.tsv, and scores.png here.")
@click.option("--diff", is_flag=True, help="Append a per-document fp/fn listing.")
def score(gold, pred, fmt, report_dir, diff) -> None:
    """Score predicted annotations against gold annotations."""
    gold_corpus = load_corpus(gold)
    pred_corpus = load_corpus(pred)
    report = scorer.score(gold_corpus, pred_corpus)
    if fmt == "json":
        click.echo(scorer.render_json(report))
    else:
        click.echo(scorer.render_table(report))
    if diff:
        for row in scorer.diff_report(gold_corpus, pred_corpus):
            click.echo(
                f"{row.kind}\t{row.doc_id}\t{row.start}\t{row.end}"
                f"\t{row.category.value}\t{row.surface}"
            )
    if report_dir:
        report_dir = Path(report_dir)
        report_dir.mkdir(parents=True, exist_ok=True)
        (report_dir / "scores.json").write_text(
            scorer.render_json(report) + "\n", encoding="utf-8"
        )
        figures.write_scores_tsv(report, report_dir / "scores.tsv")
        figures.save_score_figure(report, report_dir / "scores.png")
        click.echo(f"report written to {report_dir}", err=True)


@main.group()
def cache() -> None:
    """UMLS cache maintenance."""


@cache.command()
@click.option("--terms", "terms_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
def warm(terms_file, config_path) -> None:
    """Classify every term in a newline-separated file, populating the cache."""
    config = _load_cli_config(config_path)
    terms = Path(terms_file).read_text(encoding="utf-8").splitlines()
    ok, failed, errors = warm_cache(config, terms)
    click.echo(f"warmed {ok} term(s), {failed} failure(s)")
    for message in errors:
        click.echo(message, err=True)
    if failed:
        sys.exit(1)


@cache.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
def compact(config_path) -> None:
    """Rewrite the cache file keeping only the latest record per key."""
    config = _load_cli_config(config_path)
    if not config.umls.cache_path:
        raise CliConfigError("no umls.cache_path configured")
    store = TermCache(config.umls.cache_path, umls_version=config.umls.version)
    click.echo(f"compacted to {store.compact()} record(s)")


@main.group("prompt")
def prompt_group() -> None:
    """Prompt inspection utilities."""


@prompt_group.command()
@click.option("--category", required=True)
@click.option("--doc", "doc_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
def preview(category, doc_path, config_path) -> None:
    """Print exactly the prompt that would be sent for CATEGORY on a document."""
    config = _load_cli_config(config_path)
    try:
        cat = Category.parse(category)
    except ValueError as exc:
        raise CliConfigError(str(exc)) from exc
    target_text = Path(doc_path).read_text(encoding="utf-8")
    if not target_text:
        raise CliConfigError(f"document {doc_path} is empty")
    try:
        pack = load_instruction_pack(config.llm.instruction_pack, config.training_corpus)
        prompt = build_prompt(
            cat,
            pack.instructions[cat],
            pack.examples_for(cat, config.llm.examples_per_category),
            target_text,
        )
    except (ConfigError, ValueError) as exc:
        raise CliConfigError(str(exc)) from exc
    click.echo(prompt, nl=False)


if __name__ == "__main__":
    main()
