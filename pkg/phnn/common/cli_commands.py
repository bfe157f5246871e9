"""
Flask CLI Command Extensions

Every command builds its RunConfig from the application defaults, the
selected profile, the --config file and the flags, then hands over to
phnn.commands. Results go to stdout; errors leave as one JSON line on
stderr with the exit code of their handler.
"""
import functools
import json

import click

from phnn import app, commands
from phnn.common import error_handlers, log_handlers
from phnn.common.errors import ConfigError
from phnn.integrate import SCHEMES
from phnn.runconfig import build_run_config, defaults_from


def reports_errors(function):
    """Turns exceptions into the handler's payload and exit code"""

    @functools.wraps(function)
    def wrapper(*args, **kwargs):
        try:
            return function(*args, **kwargs)
        except (click.ClickException, click.exceptions.Exit, click.Abort):
            raise
        except Exception as error:  # pylint: disable=broad-except
            code, payload = error_handlers.handle(error)
            click.echo(json.dumps(payload), err=True)
            click.get_current_context().exit(code)
        return None

    return wrapper


def run_options(function):
    """The flags shared by every command that reads a run configuration"""
    options = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False), help="key=value config file"),
        click.option("--profile", default=None, help="Named profile, e.g. kdvburgers-desk"),
        click.option("--seed", type=int, default=None, help="Master seed"),
        click.option("--out", "output_dir", default=None, help="Output directory"),
        click.option("--jobs", type=int, default=None, help="Worker processes"),
        click.option("--preset", default=None, help="Model preset"),
        click.option("--integrator", type=click.Choice(SCHEMES), default=None, help="Training integrator"),
        click.option("--epochs", type=int, default=None, help="Training epochs"),
    ]
    for option in reversed(options):
        function = option(function)
    return function


def load_run_config(config_path=None, profile=None, seed=None, output_dir=None, jobs=None, preset=None,
                    integrator=None, epochs=None):
    """Merges the application defaults with the profile, config file and flags"""
    flags = {
        "PROFILE": profile,
        "SEED": seed,
        "OUTPUT_DIR": output_dir,
        "JOBS": jobs,
        "MODEL_PRESET": preset,
        "TRAIN_INTEGRATOR": integrator,
        "TRAIN_EPOCHS": epochs,
    }
    run_config = build_run_config(defaults_from(app.config), path=config_path, flags=flags)
    log_handlers.set_level(app, run_config["LOG_LEVEL"])
    return run_config


def _int_list(ctx, param, value):  # pylint: disable=unused-argument
    if value is None:
        return None
    try:
        numbers = [int(part) for part in value.split(",") if part.strip()]
    except ValueError as error:
        raise click.BadParameter(f"expected comma separated integers, got '{value}'") from error
    if not numbers:
        raise click.BadParameter("expected at least one integer")
    return numbers


######################################################################
# Generate the training data
# Usage:
#   phnn generate-data --profile kdvburgers-desk --out out
######################################################################
@app.cli.command("generate-data", with_appcontext=False)
@run_options
@reports_errors
def generate_data(**flags):
    """Integrates the reference solver and writes the dataset file"""
    path, dataset = commands.cmd_generate_data(load_run_config(**flags))
    click.echo(f"{dataset.n_states} states written to {path}")


######################################################################
# Train an ensemble on a dataset file
######################################################################
@app.cli.command("train", with_appcontext=False)
@click.argument("dataset", type=click.Path(dir_okay=False))
@run_options
@reports_errors
def train(dataset, **flags):
    """Trains TRAIN_N_MODELS members and writes checkpoints and reports"""
    for path in commands.cmd_train(load_run_config(**flags), dataset):
        click.echo(path)


######################################################################
# Evaluate checkpoints
######################################################################
@app.cli.command("evaluate", with_appcontext=False)
@click.argument("checkpoints", nargs=-1, required=True, type=click.Path(dir_okay=False))
@run_options
@reports_errors
def evaluate(checkpoints, **flags):
    """Writes metrics.csv and the prediction panel exports"""
    table = commands.cmd_evaluate(load_run_config(**flags), list(checkpoints))
    for row in table:
        click.echo(f"{row.model_type},{row.mean:.6e},{row.std:.6e}")


@app.cli.command("rollout", with_appcontext=False)
@click.argument("checkpoint", type=click.Path(dir_okay=False))
@click.option("--t-end", type=float, default=None, help="End time, EVAL_T by default")
@run_options
@reports_errors
def rollout(checkpoint, t_end, **flags):
    """Writes the trajectory of one model from the showcase state"""
    click.echo(commands.cmd_rollout(load_run_config(**flags), checkpoint, t_end))


@app.cli.command("ablate", with_appcontext=False)
@click.argument("checkpoint", type=click.Path(dir_okay=False))
@click.option("--drop-force", is_flag=True, help="Remove the external force")
@click.option("--drop-dissipation", is_flag=True, help="Remove the dissipation term")
@run_options
@reports_errors
def ablate(checkpoint, drop_force, drop_dissipation, **flags):
    """Writes a checkpoint without the selected terms"""
    if not (drop_force or drop_dissipation):
        raise ConfigError("Nothing to ablate: pass --drop-force and/or --drop-dissipation")
    click.echo(commands.cmd_ablate(load_run_config(**flags), checkpoint, drop_force, drop_dissipation))


@app.cli.command("regrid", with_appcontext=False)
@click.argument("checkpoint", type=click.Path(dir_okay=False))
@click.option("--sizes", callback=_int_list, default="50,100,200", show_default=True, help="Grid sizes M")
@click.option("--t-end", type=float, default=None, help="End time, EVAL_T by default")
@click.option("--rescale", is_flag=True, help="Scale the learned integrals by h_new / h_train")
@run_options
@reports_errors
def regrid(checkpoint, sizes, t_end, rescale, **flags):
    """Rolls an informed model out on other grid sizes"""
    for path in commands.cmd_regrid(load_run_config(**flags), checkpoint, sizes, t_end, rescale):
        click.echo(path)


######################################################################
# Check the forward Euler error identity
######################################################################
@app.cli.command("theorem-check", with_appcontext=False)
@click.option("--dims", type=int, default=16, show_default=True)
@click.option("--steps", "n_steps", type=int, default=50, show_default=True)
@click.option("--dt", type=float, default=0.01, show_default=True)
@click.option("--p", type=float, default=2.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@reports_errors
def theorem_check(dims, n_steps, dt, p, seed):
    """Prints lhs, rhs and their gap; fails when they differ"""
    lhs, rhs, gap = commands.cmd_theorem_check(dims, n_steps, dt, p, seed)
    click.echo(f"lhs={lhs:.17g}")
    click.echo(f"rhs={rhs:.17g}")
    click.echo(f"gap={gap:.3e}")
    click.echo("PASS")


@app.cli.command("stability", with_appcontext=False)
@click.argument("dataset", type=click.Path(dir_okay=False))
@click.option("--epoch-counts", callback=_int_list, default="100,500,1000", show_default=True)
@run_options
@reports_errors
def stability(dataset, epoch_counts, **flags):
    """Ensemble band and error against training length"""
    for path in commands.cmd_stability(load_run_config(**flags), dataset, epoch_counts):
        click.echo(path)


@app.cli.command("print-config", with_appcontext=False)
@run_options
@reports_errors
def print_config(**flags):
    """Prints the merged configuration as a config file"""
    click.echo(commands.cmd_print_config(load_run_config(**flags)), nl=False)
