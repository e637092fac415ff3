"""
Command line interface for the surrogate UQ toolkit.
"""
import os
import sys
from typing import Optional, Tuple

import click

from .. import __version__
from ..core.config import config_from_dict, load_config, shipped_configs
from ..core.pipeline import MANIFEST, Pipeline
from ..core.storage import ArtifactStorage
from ..exceptions import ConfigurationError, UqSurroError
from ..logger import get_logger


def handle_error(message: str, exception: Exception = None):
    """
    Handle and display errors consistently.

    Args:
        message: Error message to display
        exception: Optional exception for logging
    """
    click.secho(f"Error: {message}", fg="red", bold=True, err=True)
    if exception is not None and not isinstance(exception, UqSurroError):
        get_logger().exception(f"CLI Error: {message}")
    else:
        get_logger().error(f"CLI Error: {message}")


def exit_on_error(exception: Exception):
    """Report an exception and exit with its code (1 for unexpected errors)."""
    handle_error(str(exception), exception)
    sys.exit(getattr(exception, "exit_code", 1))


def build_pipeline(config: Optional[str], out: Optional[str], seed: Optional[int],
                   force: bool = False) -> Pipeline:
    """
    Load the run configuration and bind it to a run directory.

    Without --config the configuration recorded in the run manifest under
    --out is used.
    """
    if config:
        return Pipeline(load_config(config, seed=seed, output_dir=out), force=force)
    if not out:
        raise ConfigurationError("either --config or --out is required", key="config")
    storage = ArtifactStorage(out)
    storage.require([MANIFEST])
    recorded = storage.read_json(MANIFEST).get("config")
    if recorded is None:
        raise ConfigurationError(f"manifest in {out} records no configuration", key="config")
    return Pipeline(config_from_dict(recorded, seed=seed, output_dir=out), force=force)


def run_options(func):
    """Options shared by every stage command."""
    func = click.option("--seed", type=int, default=None, help="Master seed (overrides the config)")(func)
    func = click.option("--out", "-o", default=None, help="Run directory (overrides the config)")(func)
    func = click.option("--config", "-c", default=None,
                        help="Config file, or the name of a shipped config")(func)
    return func


@click.group()
@click.version_option(version=__version__, prog_name="uqsurro")
def cli():
    """Neural surrogate uncertainty quantification."""
    pass


@cli.command()
@run_options
@click.option("--force", "-f", is_flag=True, help="Overwrite a non-empty run directory")
def generate(config: Optional[str], out: Optional[str], seed: Optional[int], force: bool):
    """Generate (or ingest) the dataset."""
    try:
        pipeline = build_pipeline(config, out, seed, force)
        manifest = pipeline.generate()
    except Exception as e:
        exit_on_error(e)
    data = manifest["data"]
    click.secho(f"Generated {data['rows']} rows ({len(data['inputs'])} inputs, "
                f"{len(data['outputs'])} outputs) in {pipeline.run_dir}", fg="green")


@cli.command()
@run_options
def pca(config: Optional[str], out: Optional[str], seed: Optional[int]):
    """Reduce curve outputs to principal-component scores."""
    try:
        model = build_pipeline(config, out, seed).fit_pca()
    except Exception as e:
        exit_on_error(e)
    click.secho(f"Kept {model.p_star} of {model.p} components "
                f"(explained fraction {model.explained_fraction:.6f})", fg="green")


@cli.command()
@run_options
def train(config: Optional[str], out: Optional[str], seed: Optional[int]):
    """Train one model (or ensemble) per response."""
    try:
        pipeline = build_pipeline(config, out, seed)
        responses = pipeline.train()
    except Exception as e:
        exit_on_error(e)
    click.secho(f"Trained {pipeline.config.method} for: {', '.join(responses)}", fg="green")


def _echo_summary(summary):
    for entry in summary:
        click.echo(f"{entry['method']:>4} {entry['response']:<10} cases={entry['cases']:<4} "
                   f"rmse={entry['rmse']:.4g} mean_std={entry['mean_std']:.4g} "
                   f"cov68={entry['coverage68']:.3f} cov95={entry['coverage95']:.3f}")


@cli.command()
@run_options
def uq(config: Optional[str], out: Optional[str], seed: Optional[int]):
    """Predict the test cases with uncertainty."""
    try:
        summary = build_pipeline(config, out, seed).uq()
    except Exception as e:
        exit_on_error(e)
    _echo_summary(summary)


@cli.command()
@run_options
@click.option("--compare", multiple=True, type=click.Path(file_okay=False),
              help="Another run directory to include in the comparison (repeatable)")
def report(config: Optional[str], out: Optional[str], seed: Optional[int], compare: Tuple[str, ...]):
    """Write plot-ready tables for a completed run."""
    try:
        pipeline = build_pipeline(config, out, seed)
        written = pipeline.report(compare)
    except Exception as e:
        exit_on_error(e)
    for path in written:
        click.echo(os.path.relpath(path, pipeline.run_dir))


@cli.command()
@run_options
@click.option("--force", "-f", is_flag=True, help="Overwrite a non-empty run directory")
@click.option("--compare", multiple=True, type=click.Path(file_okay=False),
              help="Another run directory to include in the comparison (repeatable)")
def run(config: Optional[str], out: Optional[str], seed: Optional[int], force: bool,
        compare: Tuple[str, ...]):
    """Run generate, pca, train, uq and report in one go."""
    try:
        summary = build_pipeline(config, out, seed, force).run(compare)
    except Exception as e:
        exit_on_error(e)
    _echo_summary(summary)


@cli.command(name="configs")
def configs():
    """List the shipped configurations."""
    for name in shipped_configs():
        click.echo(name)
