"""
sats command line: build SATs from a manifest, aggregate, query, draw
diagrams and bar charts, compare models and run the watermark sweep

Exits 0 on success, 1 when a file can't be found, read or written, and 2 on
usage, schema and every other library error.
"""

# pylint: disable=too-many-statements

import os
import sys
import json
import logging
import argparse
import dataclasses

import sats
import sats.core
import sats.field
import sats.record
import sats.schema
import sats.ingest
import sats.builder
import sats.aggregate
import sats.query
import sats.stats
import sats.render
import sats.synth

logger = logging.getLogger(__name__)

FILE_ERRORS = (sats.ingest.MissingFile, sats.ingest.IoError)

LIBRARY_ERRORS = (
    sats.field.FieldError,
    sats.record.RecordError,
    sats.schema.SchemaError,
    sats.core.CoreError,
    sats.ingest.IngestError,
    sats.builder.BuildError,
    sats.aggregate.AggregateError,
    sats.query.QueryError,
    sats.stats.StatsError,
    sats.render.RenderError,
    sats.synth.SynthError
)

class UsageError(Exception):
    """
    Usage Error which captures the flag or value with the issue
    """

    def __init__(self, subject, message):

        self.subject = subject
        self.message = message
        super().__init__(self.message)

def write_text(path, text):
    """
    Writes text, translating failures
    """

    try:
        with open(path, "w", encoding="utf-8", newline="") as file:
            file.write(text)
    except OSError as exception:
        raise sats.ingest.IoError(path, exception.strerror or str(exception))

def prevalences(text):
    """
    Comma separated prevalences
    """

    try:
        return [float(value) for value in text.split(",") if value.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}")

def labels(args):
    """
    Class labels by image_id from --manifest, if given
    """

    if not getattr(args, "manifest", None):
        return None

    return sats.ingest.load_manifest(args.manifest).labels()

def corpus(args):
    """
    SATs from the SAT CSV, narrowed by --require, --method and --class-label
    """

    sats_list = sats.ingest.read_sat_csv(args.sat_csv)

    if getattr(args, "require", None):
        sats_list = sats.aggregate.require_segments(sats_list, args.require)

    if getattr(args, "method", None):
        sats_list = [sat for sat in sats_list if sat.method_tag == args.method]

    if getattr(args, "class_label", None):

        known = labels(args)

        if known is None:
            raise UsageError("--class-label", "--class-label needs --manifest")

        sats_list = [sat for sat in sats_list if known.get(sat.image_id) == args.class_label]

    return sats_list

def cmd_build(args):
    """
    Builds one SAT per manifest entry and writes them as one CSV
    """

    manifest = sats.ingest.load_manifest(args.manifest)

    sats_list = sats.builder.build_corpus(manifest, pad_radius=args.pad_radius, jobs=args.jobs)

    sats.ingest.write_sat_csv(sats_list, args.out_csv)

    logger.info("wrote %d SATs to %s", len(sats_list), args.out_csv)

    return 0

def cmd_aggregate(args):
    """
    Aggregates a SAT CSV, one aggregate per (class label, method) stratum
    """

    aggregates = sats.aggregate.aggregate_strata(
        corpus(args), labels=labels(args), mode=args.mode, merge_classes=args.merge_classes
    )

    sats.aggregate.write_aggregate_csv(aggregates, args.out_csv, decimals=args.decimals)

    return 0

def cmd_diagram(args):
    """
    Critical difference diagram of one stratum of a SAT CSV
    """

    report = sats.stats.build_significance(corpus(args), alpha=args.alpha, mode=args.test)

    write_text(args.out_svg, sats.render.render_cd_diagram(report, counts=not args.no_counts, width=args.width, height=args.height))

    if args.report:
        sats.stats.write_report(report, args.report)

    return 0

def cmd_barplot(args):
    """
    Top-k bar chart of an aggregate CSV, panels when it holds several strata
    """

    aggregates = sats.aggregate.read_aggregate_csv(args.agg_csv)

    if not aggregates:
        raise sats.aggregate.EmptyCorpus(args.agg_csv, f"{args.agg_csv} has no aggregate rows")

    if len(aggregates) == 1:
        svg = sats.render.render_bar_chart(aggregates[0], top_k=args.top_k, highlight=args.highlight, metric=args.metric, width=args.width)
    else:
        svg = sats.render.render_bar_panels(aggregates, top_k=args.top_k, highlight=args.highlight, metric=args.metric, columns=args.columns, panel_width=args.width)

    write_text(args.out_svg, svg)

    return 0

def cmd_query(args):
    """
    Filters, groups, reduces and sorts SAT rows, or aggregate rows with --aggregate
    """

    sats_list = corpus(args)
    known = labels(args)

    if args.aggregate:
        schema = sats.aggregate.AggregateSchema
        rows = sats.aggregate.aggregate_rows(sats.aggregate.aggregate_strata(sats_list, labels=known)) if sats_list else []
    else:
        schema = sats.core.LabelledSatSchema if known is not None else sats.core.SatSchema
        rows = sats.core.sat_rows(sats_list, known)

    table = sats.query.Query(
        wheres=args.filter,
        group_bys=args.group_by,
        reduces=args.reduce,
        order_bys=args.sort,
        limits=args.top_k
    ).get(schema, rows)

    sats.query.write_table(table, sys.stdout if args.out == "-" else args.out)

    return 0

def cmd_compare(args):
    """
    Per name attribution delta and rank shift between two aggregate CSVs
    """

    sides = []

    for path in (args.baseline, args.other):

        aggregates = sats.aggregate.read_aggregate_csv(path)

        if len(aggregates) != 1:
            raise sats.aggregate.AggregateError(path, f"{path} holds {len(aggregates)} strata, compare needs exactly 1")

        sides.append(aggregates[0])

    sats.aggregate.write_comparison_csv(sats.aggregate.compare_aggregates(*sides, family=args.family), args.out_csv)

    return 0

def cmd_watermark_sweep(args):
    """
    Trains across watermark prevalences, writing sweep.csv plus an aggregate
    CSV and a rank bar chart per prevalence
    """

    base = sats.synth.SynthConfig(
        image_size=args.image_size,
        n_train=args.n_train,
        n_test=args.n_test,
        jitter=args.jitter,
        seed=args.seed,
        class_contrast=args.class_contrast,
        watermark_test=args.watermark_test
    )

    hyper = sats.synth.TrainConfig(epochs=args.epochs)

    report = sats.synth.run_prevalence_sweep(base, args.prevalences, hyper=hyper, jobs=args.jobs)

    os.makedirs(args.out_dir, exist_ok=True)

    sats.synth.write_sweep_csv(report, os.path.join(args.out_dir, "sweep.csv"))

    for point in report.points:

        stem = f"{point.prevalence:.2f}"

        sats.aggregate.write_aggregate_csv(point.aggregate, os.path.join(args.out_dir, f"aggregate_{stem}.csv"))

        write_text(
            os.path.join(args.out_dir, f"ranks_{stem}.svg"),
            sats.render.render_bar_chart(
                point.aggregate,
                top_k=args.top_k,
                highlight=sats.synth.WATERMARK,
                metric="relative_mean_rank",
                title=f"prevalence {stem}"
            )
        )

    if args.dump_prevalence is not None:

        config = dataclasses.replace(base, watermark_prevalence=args.dump_prevalence)
        dataset = sats.synth.generate_dataset(config)
        model = sats.synth.train_classifier(dataset.train, hyper)

        sats.synth.dump_corpus(dataset.test_watermarked, model, os.path.join(args.out_dir, f"corpus_{args.dump_prevalence:.2f}"))

    trend = sats.synth.sweep_trend(report)

    logger.info("prevalence to watermark rank trend %.3f", trend)

    return 0

def parser():
    """
    The argument parser and its subparsers by command
    """

    main = argparse.ArgumentParser(prog="sats", description="Segment Attribution Tables")

    main.add_argument("--config", help="JSON object of flag defaults for the command, keyed like the flags' dests")
    main.add_argument("-v", "--verbose", action="store_true", help="log progress, not just warnings")

    commands = main.add_subparsers(dest="command", metavar="COMMAND")
    commands.required = True

    subparsers = {}

    def command(name, handler, help_text):
        subparser = commands.add_parser(name, help=help_text, description=help_text)
        subparser.set_defaults(handler=handler)
        subparsers[name] = subparser
        return subparser

    build = command("build", cmd_build, "build a SAT per manifest entry")
    build.add_argument("manifest", help="corpus manifest JSON")
    build.add_argument("out_csv", help="SAT CSV to write")
    build.add_argument("--pad-radius", type=int, default=2, help="dilate each mask by this many pixels first (default 2)")
    build.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")

    def selection(subparser):
        subparser.add_argument("--manifest", help="manifest to take class labels from")
        subparser.add_argument("--require", action="append", metavar="NAME", help="keep only SATs having NAME, repeatable")

    aggregate = command("aggregate", cmd_aggregate, "aggregate a SAT CSV")
    aggregate.add_argument("sat_csv", help="SAT CSV to read")
    aggregate.add_argument("out_csv", help="aggregate CSV to write")
    aggregate.add_argument("--mode", choices=sats.aggregate.MODES, default="both", help="column families to compute (default both)")
    aggregate.add_argument("--merge-classes", action="store_true", help="one stratum per method whatever the class")
    aggregate.add_argument("--decimals", type=int, help="fixed decimals for attribution and rank columns")
    selection(aggregate)

    diagram = command("diagram", cmd_diagram, "critical difference diagram of a SAT CSV")
    diagram.add_argument("sat_csv", help="SAT CSV to read")
    diagram.add_argument("out_svg", help="SVG to write")
    diagram.add_argument("--alpha", type=float, default=0.05, help="significance level (default 0.05)")
    diagram.add_argument("--test", choices=["auto", "exact", "normal", "normal-approx"], default="auto", help="Wilcoxon p value computation (default auto)")
    diagram.add_argument("--method", help="method_tag to draw")
    diagram.add_argument("--class-label", help="class label to draw, needs --manifest")
    diagram.add_argument("--no-counts", action="store_true", help="plain names, without relative rank and appearance count")
    diagram.add_argument("--width", type=float, help="SVG width")
    diagram.add_argument("--height", type=float, help="SVG height")
    diagram.add_argument("--report", help="also write the significance report as JSON here")
    selection(diagram)

    barplot = command("barplot", cmd_barplot, "top-k bar chart of an aggregate CSV")
    barplot.add_argument("agg_csv", help="aggregate CSV to read")
    barplot.add_argument("out_svg", help="SVG to write")
    barplot.add_argument("--top-k", type=int, default=7, help="bars to draw (default 7)")
    barplot.add_argument("--highlight", help="name to draw in blue")
    barplot.add_argument("--metric", choices=sats.render.METRICS, default="relative_mean_attr", help="value to rank and draw (default relative_mean_attr)")
    barplot.add_argument("--columns", type=int, default=2, help="panels per row for several strata (default 2)")
    barplot.add_argument("--width", type=float, help="chart or panel width")

    query = command("query", cmd_query, "filter, group and sort SAT rows")
    query.add_argument("sat_csv", help="SAT CSV to read")
    query.add_argument("--out", default="-", help="CSV to write, - for stdout (default)")
    query.add_argument("--filter", action="append", metavar="CONDITION", help='condition like "mask_size>=100", repeatable')
    query.add_argument("--group-by", help="comma separated columns to group by")
    query.add_argument("--reduce", action="append", metavar="REDUCER", help='reducer like "mean:abs_mean_attr" or "count", repeatable')
    query.add_argument("--sort", help="comma separated columns to sort by, - prefix for descending")
    query.add_argument("--top-k", type=int, help="rows to keep")
    query.add_argument("--aggregate", action="store_true", help="query aggregate rows instead of SAT rows")
    selection(query)

    compare = command("compare", cmd_compare, "attribution delta and rank shift between two aggregate CSVs")
    compare.add_argument("baseline", help="baseline aggregate CSV")
    compare.add_argument("other", help="other aggregate CSV")
    compare.add_argument("out_csv", help="comparison CSV to write")
    compare.add_argument("--family", choices=["relative", "absolute"], default="relative", help="columns to compare (default relative)")

    defaults = sats.synth.SynthConfig()

    sweep = command("sweep", cmd_watermark_sweep, "watermark prevalence sweep on synthetic data")
    sweep.add_argument("out_dir", help="directory to write into")
    sweep.add_argument("--prevalences", type=prevalences, default=list(sats.synth.DEFAULT_PREVALENCES), help="comma separated ascending prevalences (default 0,0.05,0.1,0.15,0.2,0.25,0.5)")
    sweep.add_argument("--seed", type=int, default=defaults.seed, help=f"seed for everything random (default {defaults.seed})")
    sweep.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    sweep.add_argument("--image-size", type=int, default=defaults.image_size, help=f"image side in pixels (default {defaults.image_size})")
    sweep.add_argument("--n-train", type=int, default=defaults.n_train, help=f"training images per class (default {defaults.n_train})")
    sweep.add_argument("--n-test", type=int, default=defaults.n_test, help=f"test images per class (default {defaults.n_test})")
    sweep.add_argument("--jitter", type=int, default=defaults.jitter, help=f"watermark jitter in pixels (default {defaults.jitter})")
    sweep.add_argument("--class-contrast", type=float, default=defaults.class_contrast, help=f"real class signal, 0 for none (default {defaults.class_contrast})")
    sweep.add_argument("--watermark-test", choices=["positive", "all"], default=defaults.watermark_test, help="which watermarked test images get the mark (default positive)")
    sweep.add_argument("--epochs", type=int, default=sats.synth.TrainConfig().epochs, help="gradient descent epochs")
    sweep.add_argument("--top-k", type=int, default=7, help="bars per rank chart (default 7)")
    sweep.add_argument("--dump-prevalence", type=float, help="also dump the watermarked test corpus trained at this prevalence")

    return main, subparsers

def configure(arguments, subparsers, argv):
    """
    Applies --config defaults to the chosen command and parses again
    """

    if not arguments.config:
        return arguments

    document = sats.ingest.read_json(arguments.config)

    if not isinstance(document, dict):
        raise UsageError(arguments.config, f"{arguments.config}: config must be a JSON object")

    subparser = subparsers[arguments.command]

    flags = {action.dest for action in subparser._actions if action.option_strings and action.dest != "help"} # pylint: disable=protected-access

    unknown = sorted(set(document) - flags)

    if unknown:
        raise UsageError(unknown, f"{arguments.config}: unknown keys {unknown} for {arguments.command}, valid: {sorted(flags)}")

    subparser.set_defaults(**document)

    return subparser.parse_args(argv[argv.index(arguments.command) + 1:], namespace=argparse.Namespace(
        config=arguments.config, verbose=arguments.verbose, command=arguments.command
    ))

def main(argv=None):
    """
    Runs a command, returning the exit code
    """

    argv = list(sys.argv[1:] if argv is None else argv)

    main_parser, subparsers = parser()

    try:
        arguments = main_parser.parse_args(argv)
    except SystemExit as exit_:
        return exit_.code or 0

    logging.basicConfig(
        level=logging.INFO if arguments.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr
    )

    try:
        arguments = configure(arguments, subparsers, argv)
        return arguments.handler(arguments)
    except SystemExit as exit_:
        return exit_.code or 0
    except FILE_ERRORS as exception:
        logger.error("%s", exception)
        return 1
    except LIBRARY_ERRORS as exception:
        logger.error("%s", exception)
        return 2
    except UsageError as exception:
        logger.error("%s", exception.message)
        return 2
