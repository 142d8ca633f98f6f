"""
bellml のコマンドラインエントリポイント。

    python -m bellml.cli gen --scenario bipartite --m 2 --n 1000 --seed 7 -o data/m2.csv
    python -m bellml.cli oracle nl --point 1,1,1,-1
"""
import logging
from typing import Any, Dict, List, Optional

import click
import yaml

from .errors import ConfigurationError
from .repositories.report_repo import to_plain
from .services import config_loader, pipeline
from .settings import load_settings

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"


def _parse_floats(text: Optional[str], what: str) -> Optional[List[float]]:
    if text is None:
        return None
    try:
        return [float(v) for v in text.replace(" ", "").split(",") if v != ""]
    except ValueError as exc:
        raise click.BadParameter(f"{what} must be comma-separated numbers, got {text!r}") from exc


def _parse_ints(text: str, what: str) -> List[int]:
    try:
        return [int(v) for v in text.replace(" ", "").split(",") if v != ""]
    except ValueError as exc:
        raise click.BadParameter(f"{what} must be comma-separated integers, got {text!r}") from exc


def _effective_config(ctx: click.Context, **flags) -> Dict[str, Any]:
    """既定値 → 設定ファイル → --set → 個別フラグの順に重ねて検証する。失敗時は終了コード 2。"""
    state = ctx.obj
    overrides = dict(state["assignments"])
    overrides.update({k: v for k, v in flags.items() if v is not None})
    result = config_loader.load_run_config(state["config_path"], overrides)
    if not result.success:
        for error in result.errors:
            click.echo(f"config error: {error}", err=True)
        ctx.exit(ConfigurationError.exit_code)
    return result.config


def _finish(ctx: click.Context, result: Dict[str, Any]) -> None:
    """結果を YAML で表示し、status を終了コードにする。"""
    if result.get("ok"):
        click.echo(yaml.safe_dump(to_plain(result), sort_keys=False, allow_unicode=True).rstrip())
    else:
        click.echo(f"error ({result.get('error_type')}): {result.get('error')}", err=True)
        if result.get("diagnostics"):
            click.echo(yaml.safe_dump(to_plain({"diagnostics": result["diagnostics"]}), sort_keys=False).rstrip(), err=True)
    ctx.exit(int(result.get("status", 1)))


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None, help="YAML config or dataset/model sidecar.")
@click.option("--set", "assignments", multiple=True, metavar="KEY=VALUE", help="Override a config key (repeatable).")
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False), default=None)
@click.pass_context
def main(ctx: click.Context, config_path: Optional[str], assignments, log_level: Optional[str]):
    """Exact Bell-nonlocality quantifiers and the learned surrogates trained on them."""
    try:
        settings = load_settings()
    except ConfigurationError as exc:
        click.echo(f"config error: {exc}", err=True)
        ctx.exit(exc.exit_code)
    logging.basicConfig(level=(log_level or settings.log_level).upper(), format=LOG_FORMAT)
    try:
        parsed = config_loader.parse_assignments(list(assignments))
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="--set") from exc
    ctx.obj = {"config_path": config_path or settings.config_path, "assignments": parsed}


@main.command()
@click.option("--scenario", type=click.Choice(config_loader.SCENARIOS), default=None)
@click.option("--m", type=int, default=None)
@click.option("--n", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=int, default=None)
@click.option("--probe", "probes", type=float, multiple=True, help="Known-answer probe (visibility or theta).")
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.pass_context
def gen(ctx, scenario, m, n, seed, workers, probes, output):
    """Generate a labeled dataset (CSV + .meta.yaml sidecar)."""
    config = _effective_config(ctx, scenario=scenario, m=m, n=n, seed=seed, workers=workers)
    _finish(ctx, pipeline.run_gen(config, output, probes=list(probes) or None))


@main.command()
@click.argument("kind", type=click.Choice(["nl", "nbl", "class"]))
@click.option("--point", default=None, help="Comma-separated correlators, e.g. 1,1,1,-1")
@click.option("--m", type=int, default=None)
@click.option("--grid", type=int, default=None, help="Override the nu grid size.")
@click.option("--werner", type=float, default=None, help="Use the entanglement-swapping point with this visibility.")
@click.pass_context
def oracle(ctx, kind, point, m, grid, werner):
    """Evaluate NL, NBL or the analytic class of one point."""
    config = _effective_config(ctx)
    values = _parse_floats(point, "--point")
    _finish(ctx, pipeline.run_oracle(kind, config, point=values, m=m, grid=grid, werner=werner))


@main.command()
@click.argument("dataset", type=click.Path(dir_okay=False))
@click.option("--model-dir", required=True, type=click.Path(file_okay=False))
@click.option("--workers", type=int, default=None)
@click.pass_context
def train(ctx, dataset, model_dir, workers):
    """Train the 36-member MLP grid."""
    config = _effective_config(ctx, workers=workers)
    _finish(ctx, pipeline.run_train(config, dataset, model_dir))


@main.command()
@click.argument("dataset", type=click.Path(dir_okay=False))
@click.option("--model-dir", required=True, type=click.Path(file_okay=False))
@click.pass_context
def blend(ctx, dataset, model_dir):
    """Filter the grid against the baseline and fit the blender."""
    config = _effective_config(ctx)
    _finish(ctx, pipeline.run_blend(config, dataset, model_dir))


@main.command(name="eval")
@click.argument("dataset", type=click.Path(dir_okay=False))
@click.option("--model-dir", required=True, type=click.Path(file_okay=False))
@click.option("--output-dir", required=True, type=click.Path(file_okay=False))
@click.pass_context
def eval_cmd(ctx, dataset, model_dir, output_dir):
    """Evaluate the ensemble on the test split and write report tables."""
    config = _effective_config(ctx)
    _finish(ctx, pipeline.run_eval(config, dataset, model_dir, output_dir))


@main.command()
@click.option("--model-dir", required=True, type=click.Path(file_okay=False))
@click.option("--output-dir", required=True, type=click.Path(file_okay=False))
@click.option("--restarts", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.pass_context
def search(ctx, model_dir, output_dir, restarts, seed):
    """Search quantum settings the bilocal ensemble flags as nonlocal."""
    config = _effective_config(ctx, search_restarts=restarts, seed=seed)
    _finish(ctx, pipeline.run_search(config, model_dir, output_dir))


@main.command()
@click.option("--model-dir", required=True, type=click.Path(file_okay=False))
@click.option("--points", type=int, default=None)
@click.pass_context
def bench(ctx, model_dir, points):
    """Time the exact oracle against ensemble prediction."""
    config = _effective_config(ctx)
    _finish(ctx, pipeline.run_bench(config, model_dir, points=points))


@main.command()
@click.argument("dataset", type=click.Path(dir_okay=False))
@click.option("--sizes", required=True, help="Ascending training sizes, e.g. 1000,10000,50000")
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.pass_context
def curve(ctx, dataset, sizes, output):
    """Learning curve of one 3x200 network versus training-set size."""
    config = _effective_config(ctx)
    _finish(ctx, pipeline.run_curve(config, dataset, _parse_ints(sizes, "--sizes"), output))


@main.command()
@click.option("--model-dir", required=True, type=click.Path(file_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.option("--points", type=int, default=None)
@click.pass_context
def transfer(ctx, model_dir, output, points):
    """Apply the NS-trained ensemble to quantum points and compare with the oracle."""
    config = _effective_config(ctx)
    _finish(ctx, pipeline.run_transfer(config, model_dir, output, points=points))


if __name__ == "__main__":
    main()
