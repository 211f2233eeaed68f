"""Command-line interface for tierbench."""

import json
import logging
import sys
from contextlib import contextmanager
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import click

from . import __version__
from .catalog import CatalogError, PlatformEntry, find_platforms, load_catalog, parse_datatype, validate_catalog
from .config import ConfigError, ConfigurationManager
from .findings import ValidationReport
from .measurements import (
    EFFICIENCY_BASES,
    MeasurementError,
    MeasurementRecord,
    ReferenceResolver,
    StatsSummary,
    aggregate_stats,
    efficiency_getter,
    filter_records,
    group_stats,
    ingest_files,
    parse_filters,
    serialize_measurements,
    validate_records,
)
from .pareto import Objective, ParetoError, frontier_csv, pareto_frontier, scatter_csv
from .report import (
    REPORT_FORMATS,
    InvalidFilenameError,
    ReportError,
    UnknownFormatError,
    artifact_name,
    build_store,
    render_report,
    write_artifact,
)
from .roofline import (
    RooflineError,
    log_spaced_samples,
    prediction_table,
    ridge_point,
    roofline_curve,
    serialize_curve,
    serialize_predictions,
)
from .topology import (
    ModelRequirements,
    TopologyError,
    load_model,
    memory_footprint,
    model_requirements,
    published_requirements,
    requirements_summary,
    training_requirements,
)
from .units import format_number, format_table, gop, me

SOURCES = ("topology", "published")

DEFAULT_OBJECTIVES = ("top5:max", "throughput:max")

# Intensity range sampled for roofline plot data, in OP/byte.
CURVE_RANGE = (0.1, 10000.0)

# Faults in user input; everything else is unexpected.
USAGE_ERRORS = (
    ConfigError,
    TopologyError,
    CatalogError,
    RooflineError,
    MeasurementError,
    ParetoError,
    UnknownFormatError,
    InvalidFilenameError,
)


@dataclass
class CliContext:
    config: ConfigurationManager
    verbose: bool = False

    def out_dir(self, override: Optional[Path]) -> Path:
        return override if override is not None else Path(self.config.get_output_dir())

    def catalog(self, override: Optional[Path]) -> List[PlatformEntry]:
        return load_catalog(override or self.config.get_catalog_path())

    def resolver(self, source: str, models_dir: Optional[Path] = None) -> ReferenceResolver:
        return ReferenceResolver.bundled(
            source, models_dir or self.config.get_models_dir(), self.config.get_default_seq_len(),
        )


pass_context = click.make_pass_decorator(CliContext)


@contextmanager
def _reporting_errors(verbose: bool) -> Iterator[None]:
    """Turn library errors into a message on stderr and the matching exit code."""
    logger = logging.getLogger(__name__)
    try:
        yield
    except click.ClickException:
        raise
    except USAGE_ERRORS as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(2)
    except ReportError as e:
        click.echo(f"Output error: {e}", err=True)
        sys.exit(1)
    except PermissionError as e:
        click.echo(f"Permission denied: {e}", err=True)
        sys.exit(1)
    except OSError as e:
        click.echo(f"File error: {e}", err=True)
        sys.exit(1)
    except Exception as e:
        logger.error(f"Unexpected error: {e}", exc_info=verbose)
        click.echo(f"Unexpected error: {e}", err=True)
        sys.exit(1)


def _split(values: Optional[str]) -> List[str]:
    if not values:
        return []
    return [value.strip() for value in values.split(",") if value.strip()]


def _requirements(
    names: Sequence[str], source: str, ctx: CliContext, models_dir: Optional[Path] = None,
) -> List[ModelRequirements]:
    if source == "published":
        return [published_requirements(name) for name in names]
    search_dir = models_dir or ctx.config.get_models_dir()
    return [model_requirements(load_model(name, search_dir, ctx.config.get_default_seq_len())) for name in names]


def _ingest(ctx: CliContext, files: Sequence[Path]) -> Tuple[List[MeasurementRecord], ValidationReport]:
    records, report = ingest_files(files, ctx.config.get_max_workers())
    click.echo(f"Ingested {len(records)} records from {len(files)} files")
    return records, report


def _echo_written(path: Path) -> None:
    click.echo(f"✓ Wrote {path}")


def _cell(value: Optional[Decimal]) -> str:
    return "-" if value is None else str(value)


def _stats_table(rows: Sequence[Tuple[str, StatsSummary]], exact: bool = False) -> str:
    header = ("group", "field", "count", "min", "max", "mean", "variance", "sample_var")
    cells = [
        [name, s.field, str(s.count)]
        + [format_number(value, 4, exact=exact) for value in (s.min, s.max, s.mean, s.variance)]
        + [format_number(s.sample_variance, 4, exact=exact) or "-"]
        for name, s in rows
    ]
    return format_table(header, cells)


@click.group()
@click.option('-v', '--verbose', is_flag=True, help='Enable verbose logging')
@click.option(
    '-c', '--config',
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help='Path to configuration file (YAML, JSON or key=value)'
)
@click.version_option(version=__version__)
@click.pass_context
def cli(ctx: click.Context, verbose: bool = False, config: Optional[Path] = None) -> None:
    """Cost models, roofline predictions and benchmark analysis for NN inference hardware."""
    log_level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=log_level,
        format='%(levelname)s: %(message)s' if verbose else '%(message)s'
    )

    try:
        manager = ConfigurationManager(config)
        manager.validate_config()
    except ConfigError as e:
        click.echo(f"Configuration error: {e}", err=True)
        sys.exit(2)

    ctx.obj = CliContext(config=manager, verbose=verbose)


@cli.command()
@click.argument('topologies', nargs=-1, required=True)
@click.option('--source', type=click.Choice(SOURCES), default='topology', show_default=True,
              help='Compute totals from topology files or use published totals')
@click.option('--datatype', 'datatype_name', help='Also report storage footprint at this datatype')
@click.option('--training', is_flag=True, help='Also report training requirements')
@click.option('--exact', is_flag=True, help='Print full precision instead of two decimals')
@click.option('--out', type=click.Path(file_okay=False, path_type=Path), help='Output directory')
@pass_context
def analyze(
    ctx: CliContext,
    topologies: Tuple[str, ...],
    source: str,
    datatype_name: Optional[str],
    training: bool,
    exact: bool,
    out: Optional[Path],
) -> None:
    """Compute level 0 requirements for each TOPOLOGY (file path or bundled model name)."""
    with _reporting_errors(ctx.verbose):
        reqs = _requirements(topologies, source, ctx)
        datatype = parse_datatype(datatype_name) if datatype_name else None

        rows = []
        for req in reqs:
            click.echo(req.name)
            click.echo(f"  O_total: {format_number(gop(req.o_total), exact=exact)} GOP")
            click.echo(f"  W_total: {format_number(me(req.w_total), exact=exact)} ME")
            if source == "topology":
                click.echo(f"  T_total: {format_number(me(req.t_total), exact=exact)} ME")
            train = training_requirements(req)
            if training:
                click.echo(f"  OT_total: {format_number(gop(train.ot_total), exact=exact)} GOP")
                click.echo(f"  WU_total: {format_number(me(train.wu_total_elems), exact=exact)} ME")
                click.echo(f"  TG_total: {format_number(me(train.tg_total_elems), exact=exact)} ME")
            if datatype is not None:
                footprint = memory_footprint(req, datatype)
                click.echo(f"  weights ({datatype.name}): {format_number(me(footprint.weight_bytes), exact=exact)} MB")
                click.echo(f"  tensors ({datatype.name}): {format_number(me(footprint.tensor_bytes), exact=exact)} MB")
            rows.append(",".join(str(cell) for cell in (
                req.name, source, req.o_total, req.w_total, req.t_total,
                train.ot_total, train.wu_total_elems, train.tg_total_elems, train.tensor_buffer_elems,
            )))

        if len(reqs) > 1:
            summary = requirements_summary(reqs)
            click.echo("")
            click.echo(f"Ranges over {summary.count} models:")
            ranges = [
                ("O_total GOP", summary.ops, gop),
                ("W_total ME", summary.weights, me),
                ("OT_total GOP", summary.training_ops, gop),
                ("WU_total ME", summary.training_weights, me),
            ]
            click.echo(format_table(("quantity", "min", "max", "mean"), [
                [name, format_number(scale(r.minimum)), format_number(scale(r.maximum)), format_number(scale(r.mean))]
                for name, r, scale in ranges
            ]))

        header = "model,source,o_total,w_total,t_total,ot_total,wu_total,tg_total,tensor_buffer"
        content = "\n".join([header] + rows) + "\n"
        click.echo("")
        _echo_written(write_artifact(ctx.out_dir(out), "analysis.csv", content))


@cli.command()
@click.option('--models', required=True, help='Comma-separated model names or topology paths')
@click.option('--platforms', required=True, help='Comma-separated platform name queries')
@click.option('--modes', help='Comma-separated operating modes to keep')
@click.option('--datatypes', help='Comma-separated datatypes; unsupported combinations are listed')
@click.option('--batch', type=click.IntRange(min=1), default=1, show_default=True, help='Batch size')
@click.option('--source', type=click.Choice(SOURCES), default='topology', show_default=True,
              help='Compute totals from topology files or use published totals')
@click.option('--catalog', 'catalog_path', type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help='Platform catalog CSV')
@click.option('--exact', is_flag=True, help='Write full precision values')
@click.option('--out', type=click.Path(file_okay=False, path_type=Path), help='Output directory')
@pass_context
def predict(
    ctx: CliContext,
    models: str,
    platforms: str,
    modes: Optional[str],
    datatypes: Optional[str],
    batch: int,
    source: str,
    catalog_path: Optional[Path],
    exact: bool,
    out: Optional[Path],
) -> None:
    """Roofline predictions for models on catalog platforms."""
    with _reporting_errors(ctx.verbose):
        reqs = _requirements(_split(models), source, ctx)
        entries = ctx.catalog(catalog_path)
        requested_types = _split(datatypes) or None
        selected = find_platforms(entries, _split(platforms), _split(modes) or None)
        predictions = prediction_table(reqs, selected, requested_types, batch)

        click.echo(format_table(
            ("model", "platform", "mode", "datatype", "batch", "ai", "gop_s", "bound"),
            [
                [p.model, p.platform_key[0], p.platform_key[1] or "-", p.platform_key[2], str(p.batch),
                 format_number(p.ai, exact=exact), format_number(p.attainable_gops, exact=exact) or "-",
                 p.bound.value]
                for p in predictions
            ],
        ))
        for prediction in predictions:
            if prediction.warning:
                click.echo(f"! {prediction.warning}")

        out_dir = ctx.out_dir(out)
        click.echo("")
        _echo_written(write_artifact(out_dir, "predictions.csv", serialize_predictions(predictions, exact)))

        used = {p.platform_key for p in predictions if p.supported}
        samples = log_spaced_samples(*CURVE_RANGE)
        for entry in selected:
            if entry.key not in used:
                continue
            ridge = ridge_point(entry)
            if ridge is not None:
                click.echo(f"  ridge {entry.label}: {format_number(ridge)} OP/byte")
            name = artifact_name("roofline", entry.platform, entry.mode, entry.datatype.name)
            _echo_written(write_artifact(out_dir, name, serialize_curve(roofline_curve(entry, samples), exact)))


@cli.command()
@click.argument('files', nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option('--out', type=click.Path(file_okay=False, path_type=Path), help='Output directory')
@pass_context
def ingest(ctx: CliContext, files: Tuple[Path, ...], out: Optional[Path]) -> None:
    """Ingest measurement FILES into one merged table."""
    with _reporting_errors(ctx.verbose):
        records, report = _ingest(ctx, files)
        out_dir = ctx.out_dir(out)
        _echo_written(write_artifact(out_dir, "measurements.csv", serialize_measurements(records)))
        _echo_written(write_artifact(out_dir, "ingest_report.txt", report.to_text()))
        _echo_written(write_artifact(
            out_dir, "ingest_report.json", json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
        ))
        click.echo(f"warn: {report.warn_count}, fail: {report.fail_count}")

    if report.has_failures:
        sys.exit(1)


@cli.command()
@click.argument('files', nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option('--catalog', 'catalog_path', type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help='Platform catalog CSV')
@click.option('--source', type=click.Choice(SOURCES), default='topology', show_default=True,
              help='Reference requirements for level 3 records')
@click.option('--models-dir', type=click.Path(exists=True, file_okay=False, path_type=Path),
              help='Directory searched for <model>.topo files before the bundled models')
@click.option('--threshold', type=click.FloatRange(min=0, min_open=True),
              help='Relative ops deviation that raises a warning')
@click.option('--efficiency-basis', type=click.Choice(EFFICIENCY_BASES),
              help='Peak used as the efficiency denominator')
@click.option('--threads-multiply/--no-threads-multiply', default=None,
              help='Count each thread as one input per pass')
@click.option('--exact', is_flag=True, help='Print full precision numbers in findings')
@click.option('--out', type=click.Path(file_okay=False, path_type=Path), help='Output directory')
@pass_context
def validate(
    ctx: CliContext,
    files: Tuple[Path, ...],
    catalog_path: Optional[Path],
    source: str,
    models_dir: Optional[Path],
    threshold: Optional[float],
    efficiency_basis: Optional[str],
    threads_multiply: Optional[bool],
    exact: bool,
    out: Optional[Path],
) -> None:
    """Check measurement FILES for consistency with requirements and the catalog."""
    with _reporting_errors(ctx.verbose):
        records, ingest_report = _ingest(ctx, files)
        report = validate_records(
            records,
            ctx.catalog(catalog_path),
            ctx.resolver(source, models_dir),
            threshold if threshold is not None else ctx.config.get_consistency_threshold(),
            threads_multiply if threads_multiply is not None else ctx.config.should_multiply_threads(),
            efficiency_basis or ctx.config.get_efficiency_basis(),
            ctx.config.get_reported_tolerance(),
            exact,
        ).with_findings(ingest_report.findings)

        click.echo(report.to_text(), nl=False)
        out_dir = ctx.out_dir(out)
        _echo_written(write_artifact(out_dir, "validation.txt", report.to_text()))
        _echo_written(write_artifact(
            out_dir, "validation.json", json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
        ))

    if report.has_failures:
        sys.exit(1)


@cli.command()
@click.argument('files', nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option('--field', 'field_name', required=True, help='Numeric field, e.g. latency or throughput')
@click.option('--filter', 'filters', multiple=True, help='key=value filter (glob patterns allowed); repeatable')
@click.option('--group-by', help='Report one summary per distinct value of this field')
@click.option('--exact', is_flag=True, help='Print full precision instead of four decimals')
@pass_context
def stats(
    ctx: CliContext,
    files: Tuple[Path, ...],
    field_name: str,
    filters: Tuple[str, ...],
    group_by: Optional[str],
    exact: bool,
) -> None:
    """Min, max, mean and variance of a field over the selected records."""
    with _reporting_errors(ctx.verbose):
        records, _ = _ingest(ctx, files)
        selected = filter_records(records, parse_filters(filters))
        if group_by:
            rows = list(group_stats(selected, field_name, group_by).items())
        else:
            rows = [("all", aggregate_stats(selected, field_name))]
        click.echo(_stats_table(rows, exact))


@cli.command()
@click.argument('files', nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option('--objective', 'objectives', multiple=True, required=True,
              help='field:max or field:min; give at least two')
@click.option('--filter', 'filters', multiple=True, help='key=value filter (glob patterns allowed); repeatable')
@click.option('--catalog', 'catalog_path', type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help='Platform catalog CSV, used for the efficiency objective')
@click.option('--efficiency-basis', type=click.Choice(EFFICIENCY_BASES),
              help='Peak used as the efficiency denominator')
@click.option('--exact', is_flag=True, help='Write full precision efficiency values')
@click.option('--out', type=click.Path(file_okay=False, path_type=Path), help='Output directory')
@pass_context
def pareto(
    ctx: CliContext,
    files: Tuple[Path, ...],
    objectives: Tuple[str, ...],
    filters: Tuple[str, ...],
    catalog_path: Optional[Path],
    efficiency_basis: Optional[str],
    exact: bool,
    out: Optional[Path],
) -> None:
    """Pareto frontier of the selected records under the given objectives."""
    with _reporting_errors(ctx.verbose):
        parsed = [Objective.parse(text) for text in objectives]
        records, _ = _ingest(ctx, files)
        selected = filter_records(records, parse_filters(filters))
        efficiency_of = efficiency_getter(
            ctx.catalog(catalog_path), efficiency_basis or ctx.config.get_efficiency_basis()
        )
        result = pareto_frontier(selected, parsed, efficiency_of)

        click.echo(f"Frontier ({', '.join(str(o) for o in parsed)}): "
                   f"{len(result.frontier)} of {len(selected)} records, {result.dominated_count} dominated")
        for record in result.frontier:
            click.echo(f"  {record.record_id[0]}:{record.record_id[1]} {record.label}")
        for finding in result.excluded:
            click.echo(f"! {finding.to_line()}")

        out_dir = ctx.out_dir(out)
        _echo_written(write_artifact(out_dir, "frontier.csv", frontier_csv(result, efficiency_of, exact)))
        _echo_written(write_artifact(out_dir, "scatter.csv", scatter_csv(selected, result, efficiency_of, exact)))


@cli.command()
@click.argument('files', nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option('--format', 'fmt', type=click.Choice(REPORT_FORMATS), help='Report format')
@click.option('--models', help='Comma-separated models for the roofline section')
@click.option('--platforms', help='Comma-separated platform queries for the roofline section')
@click.option('--batch', type=click.IntRange(min=1), default=1, show_default=True, help='Batch size')
@click.option('--source', type=click.Choice(SOURCES), default='topology', show_default=True,
              help='Reference requirements for predictions and validation')
@click.option('--models-dir', type=click.Path(exists=True, file_okay=False, path_type=Path),
              help='Directory searched for <model>.topo files before the bundled models')
@click.option('--objective', 'objectives', multiple=True,
              help=f'field:max or field:min (default: {" ".join(DEFAULT_OBJECTIVES)})')
@click.option('--catalog', 'catalog_path', type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help='Platform catalog CSV')
@click.option('--exact', is_flag=True, help='Print full precision numbers')
@click.option('--out', type=click.Path(file_okay=False, path_type=Path), help='Output directory')
@pass_context
def report(
    ctx: CliContext,
    files: Tuple[Path, ...],
    fmt: Optional[str],
    models: Optional[str],
    platforms: Optional[str],
    batch: int,
    source: str,
    models_dir: Optional[Path],
    objectives: Tuple[str, ...],
    catalog_path: Optional[Path],
    exact: bool,
    out: Optional[Path],
) -> None:
    """Combined report over measurement FILES and optional roofline predictions."""
    with _reporting_errors(ctx.verbose):
        fmt = fmt or ctx.config.get_report_format()
        parsed = [Objective.parse(text) for text in (objectives or DEFAULT_OBJECTIVES)]
        entries = ctx.catalog(catalog_path)
        records, ingest_report = _ingest(ctx, files)

        predictions = []
        if models and platforms:
            predictions = prediction_table(
                _requirements(_split(models), source, ctx, models_dir),
                find_platforms(entries, _split(platforms)),
                None,
                batch,
            )
        elif models or platforms:
            raise click.UsageError("--models and --platforms must be given together")

        store = build_store(
            records,
            entries,
            ctx.resolver(source, models_dir),
            predictions,
            parsed,
            ctx.config.get_consistency_threshold(),
            ctx.config.should_multiply_threads(),
            ctx.config.get_efficiency_basis(),
            ctx.config.get_reported_tolerance(),
            ingest_report,
            exact,
        )
        rendered = render_report(store, fmt)
        if fmt == "text":
            click.echo(rendered, nl=False)
        _echo_written(write_artifact(ctx.out_dir(out), f"report.{'txt' if fmt == 'text' else fmt}", rendered))


@cli.command()
@click.option('--catalog', 'catalog_path', type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help='Platform catalog CSV')
@click.option('--validate', 'check', is_flag=True, help='Flag published TOPs/W ratios that disagree with peak/power')
@pass_context
def catalog(ctx: CliContext, catalog_path: Optional[Path], check: bool) -> None:
    """List catalog platforms."""
    with _reporting_errors(ctx.verbose):
        entries = ctx.catalog(catalog_path)
        click.echo(format_table(
            ("platform", "mode", "datatype", "peak_tops", "mem_bw_gbps", "tdp_watts", "cost_usd", "ridge"),
            [
                [e.platform, e.mode or "-", e.datatype.name, str(e.peak_tops),
                 _cell(e.mem_bw_gbps), _cell(e.tdp_watts), _cell(e.cost_usd),
                 format_number(ridge_point(e)) or "-"]
                for e in entries
            ],
        ))
        click.echo(f"\n{len(entries)} entries")

        if check:
            findings = validate_catalog(entries, ctx.config.get_ratio_tolerance())
            click.echo(f"{len(findings)} ratio mismatches")
            for finding in findings:
                click.echo(f"! {finding.message}")


if __name__ == "__main__":
    cli()
