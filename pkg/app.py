import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import click

from config.settings import Config, RunConfig, load_run_config
from models import CriteriaCatalog, PromptStrategy
from services.evaluation import evaluate, label_runs
from services.gateway import build_gateway
from services.pipeline import PipelineService, check_pairing
from utils.bm25 import load_index
from utils.corpus_parser import corpus_stats, load_corpus, load_criteria_catalog
from utils.error_handling import (
    ConfigurationError,
    EmptyTrialError,
    GatewayError,
    MakaError,
    error_payload
)
from utils.report_rendering import render_comparison, render_csv, render_json, render_markdown
from utils.run_artifacts import (
    PREPARED_FILE,
    REPORT_FILES,
    manifest_artifact,
    read_decisions,
    read_manifest,
    read_prepared,
    write_prepared,
    write_text
)
from utils.search_api import WebSearchClient

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_GATEWAY = 3


def configure_logging(level: Optional[str] = None):
    # Logs go to stderr; stdout carries command results only
    logging.basicConfig(
        level=getattr(logging, (level or Config.LOG_LEVEL).upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stderr
    )


def run_options(func):
    """Options shared by the commands that build a RunConfig"""
    options = [
        click.option('--config', 'config_path', type=click.Path(dir_okay=False), help='JSON config file'),
        click.option('--corpus', 'corpus_dir', type=click.Path(file_okay=False), help='Patient XML directory'),
        click.option('--criteria', 'criteria_path', type=click.Path(dir_okay=False), help='Criteria catalog'),
        click.option('--variant', type=click.Choice(['original', 'redefined', 'augmented']),
                     help='Catalog variant (default: from the file name)'),
        click.option('--strategy', type=click.Choice([s.value for s in PromptStrategy])),
        click.option('--model', 'model_id'),
        click.option('--backend', type=click.Choice(['http', 'replay', 'scripted'])),
        click.option('--cache-dir', type=click.Path(file_okay=False)),
        click.option('--replay-mode', type=click.Choice(['strict', 'record'])),
        click.option('--script', 'script_path', type=click.Path(dir_okay=False), help='Scripted-backend rules'),
        click.option('--out', 'out_dir', type=click.Path(file_okay=False)),
        click.option('--max-concurrency', type=int),
        click.option('--token-budget', type=int),
        click.option('--trial-threshold', type=int),
        click.option('--seed', type=int),
        click.option('--snippets', 'snippets_path', type=click.Path(dir_okay=False)),
        click.option('--prepared', 'prepared_path', type=click.Path(dir_okay=False)),
        click.option('--revision-limit', type=int),
        click.option('--top-k', type=int)
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _run_config(params: Dict[str, Any]) -> RunConfig:
    flags = dict(params)
    config_path = flags.pop('config_path', None)
    return load_run_config(flags, config_path)


def _catalog(run_config: RunConfig, default_strategy: Optional[PromptStrategy] = None) -> CriteriaCatalog:
    path = run_config.criteria_path
    if not path:
        strategy = default_strategy or run_config.strategy
        variant = next(iter(sorted(strategy.allowed_variants, key=lambda v: v.value)))
        path = Config.CATALOG_PATHS[variant]
        logger.info(f"No --criteria given; using {path}")
    return load_criteria_catalog(path, run_config.variant)


def _require_corpus(run_config: RunConfig) -> str:
    if not run_config.corpus_dir:
        raise ConfigurationError('--corpus is required')
    return run_config.corpus_dir


def _knowledge(run_config: RunConfig):
    index = load_index(run_config.snippets_path) if run_config.snippets_path else None
    search_client = WebSearchClient(run_config.search_url) if run_config.search_url else None
    return index, search_client


@click.group()
@click.option('--log-level', default=None, help='Logging level (default: MAKA_LOG_LEVEL or INFO)')
def cli(log_level):
    """Multi-agent knowledge augmentation for trial-centric patient matching."""
    configure_logging(log_level)


@cli.command()
@run_options
def ingest(**params):
    """Validate a corpus and print its statistics."""
    run_config = _run_config(params)
    catalog = _catalog(run_config)
    corpus = load_corpus(_require_corpus(run_config), catalog)
    stats = corpus_stats(corpus, catalog)

    notes = ','.join(f'{count}:{patients}' for count, patients in sorted(stats.notes_per_patient.items()))
    click.echo(f'patient_count={stats.patient_count}')
    click.echo(f'pair_count={stats.pair_count}')
    click.echo(f'total_tokens={stats.total_tokens}')
    click.echo(f'mean_tokens_per_patient={stats.mean_tokens_per_patient:.1f}')
    click.echo(f'notes_per_patient={notes}')
    click.echo(f'corpus_digest={corpus.digest()}')


@cli.command()
@run_options
def augment(**params):
    """Prepare every criterion and write the prepared-criteria file."""
    run_config = _run_config(params)
    catalog = _catalog(run_config, PromptStrategy.MAKA)
    check_pairing(PromptStrategy.MAKA, catalog)

    index, search_client = _knowledge(run_config)
    gateway = build_gateway(run_config)
    pipeline = PipelineService.from_run_config(run_config, gateway, index=index, search_client=search_client)
    finals = pipeline.prepare_all(catalog)

    path = write_prepared(Path(run_config.out_dir) / PREPARED_FILE, finals)
    for final in finals:
        click.echo(f'{final.criterion_id}\t{final.provenance.value}')
    click.echo(f'prepared={path}')


@cli.command()
@run_options
def run(**params):
    """Run the full pipeline and write decisions, audit log and manifest."""
    run_config = _run_config(params)
    catalog = _catalog(run_config)
    prepared = read_prepared(run_config.prepared_path) if run_config.prepared_path else None
    check_pairing(run_config.strategy, catalog, prepared)

    corpus = load_corpus(_require_corpus(run_config), catalog)
    index, search_client = (None, None)
    if run_config.strategy is PromptStrategy.MAKA and prepared is None:
        index, search_client = _knowledge(run_config)

    gateway = build_gateway(run_config)
    pipeline = PipelineService.from_run_config(run_config, gateway, index=index, search_client=search_client)
    decisions, audit = pipeline.run(corpus, catalog, run_config.strategy, prepared=prepared,
                                    out_dir=run_config.out_dir, run_config=run_config,
                                    backend_tag=gateway.backend_tag.value)

    click.echo(f'decisions={len(decisions)}')
    click.echo(f'parse_failures={sum(1 for d in decisions if not d.parse_ok)}')
    click.echo(f'audit_events={len(audit)}')
    click.echo(f'out_dir={run_config.out_dir}')


def _write_reports(out_dir: Optional[str], report) -> None:
    if not out_dir:
        return
    write_text(Path(out_dir) / REPORT_FILES['markdown'], render_markdown(report))
    write_text(Path(out_dir) / REPORT_FILES['csv'], render_csv(report))
    write_text(Path(out_dir) / REPORT_FILES['json'], render_json(report))
    logger.info(f"Wrote reports to {out_dir}")


def _evaluate_with_trial(decisions, corpus, catalog, threshold: int, label: str):
    try:
        return evaluate(decisions, corpus.gold, catalog, threshold, label=label)
    except EmptyTrialError as e:
        logger.warning(f"{e.message}; reporting criterion-level metrics only")
        return evaluate(decisions, corpus.gold, catalog, None, label=label)


@cli.command('evaluate')
@run_options
@click.option('--decisions', 'decisions_path', required=True, type=click.Path(dir_okay=False))
@click.option('--label', default='', help='Run name shown in the report')
def evaluate_command(decisions_path, label, **params):
    """Score a decisions file against the corpus gold labels."""
    out_dir = params.get('out_dir')
    run_config = _run_config(params)
    catalog = _catalog(run_config)
    corpus = load_corpus(_require_corpus(run_config), catalog)
    decisions = read_decisions(decisions_path)

    report = _evaluate_with_trial(decisions, corpus, catalog, run_config.trial_threshold, label)
    _write_reports(out_dir or str(Path(decisions_path).parent), report)
    click.echo(render_markdown(report), nl=False)


@cli.command()
@click.option('--run', 'run_dirs', multiple=True, required=True, type=click.Path(file_okay=False),
              help='Run directory holding a manifest (repeatable)')
@click.option('--corpus', 'corpus_dir', type=click.Path(file_okay=False),
              help='Corpus directory (default: the one recorded in each manifest)')
@click.option('--criteria', 'criteria_path', type=click.Path(dir_okay=False))
@click.option('--trial-threshold', type=int, default=100, show_default=True)
@click.option('--out', 'out_path', type=click.Path(dir_okay=False), help='Also write the markdown here')
def report(run_dirs, corpus_dir, criteria_path, trial_threshold, out_path):
    """Compare several runs side by side."""
    if trial_threshold < 1:
        raise ConfigurationError('--trial-threshold must be positive')

    reports = []
    labels = label_runs([PromptStrategy(read_manifest(d).strategy).display_name for d in run_dirs])
    for run_dir, label in zip(run_dirs, labels):
        manifest = read_manifest(run_dir)
        recorded = manifest.config
        catalog_path = criteria_path or _manifest_path(run_dir, recorded.get('criteria_path'))
        if not catalog_path:
            raise ConfigurationError(f'{run_dir}: manifest records no criteria path; pass --criteria')
        catalog = load_criteria_catalog(catalog_path)
        run_corpus = corpus_dir or _manifest_path(run_dir, recorded.get('corpus_dir'))
        if not run_corpus:
            raise ConfigurationError(f'{run_dir}: manifest records no corpus; pass --corpus')
        corpus = load_corpus(run_corpus, catalog)
        decisions = read_decisions(manifest_artifact(run_dir, manifest, 'decisions'))
        reports.append(_evaluate_with_trial(decisions, corpus, catalog, trial_threshold, label))

    text = render_comparison(reports)
    if out_path:
        write_text(out_path, text)
    click.echo(text, nl=False)


def _manifest_path(run_dir: str, recorded: Optional[str]) -> Optional[str]:
    """Manifest paths are stored relative to the run directory"""
    if not recorded:
        return None
    return str(Path(run_dir) / recorded)


def _report_error(error: MakaError):
    click.echo(f'Error: {error.message}', err=True)
    click.echo(json.dumps(error_payload(error), sort_keys=True, default=str), err=True)


def run_cli(argv: Optional[List[str]] = None) -> int:
    """
    Run the command line and map failures to exit codes

    Returns:
        0 on success, 1 on usage or configuration errors, 2 on data errors,
        3 on gateway failures
    """
    try:
        cli.main(args=argv, prog_name='maka', standalone_mode=False)
        return EXIT_OK
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except click.Abort:
        return EXIT_USAGE
    except ConfigurationError as e:
        _report_error(e)
        return EXIT_USAGE
    except GatewayError as e:
        _report_error(e)
        return EXIT_GATEWAY
    except MakaError as e:
        _report_error(e)
        return EXIT_DATA


if __name__ == '__main__':
    sys.exit(run_cli())
