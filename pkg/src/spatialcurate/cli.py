"""Command-line front end.

    spatialcurate curate instances_train2017.json --out runs/scop
    spatialcurate stats instances_train2017.json --reference
    spatialcurate prompts --out prompts.jsonl
    spatialcurate retrieve prompts.jsonl clip_l.jsonl --name "CLIP ViT-L"
    spatialcurate visor detections.jsonl --out runs/visor
    spatialcurate tenor-check
"""
from __future__ import annotations

import logging
import sys
from collections import Counter
from pathlib import Path

import click

from . import __version__
from . import constraints, decoder, ingest, proxy, reports, tenor, visor
from .config import ConfigError, load_config
from .synthetic import coco_category_names


def _threads(n: int | None) -> int:
    return n if n else constraints.default_threads()


def _config(ctx_params: dict, config_path: str | None):
    keys = (
        "tau_v", "tau_u", "tau_o", "tau_s", "union_mode", "relation_rule", "and_probability",
        "max_expansion", "global_seed", "templates", "images_dir", "proxy_mode", "metric",
        "conf_threshold",
    )
    overrides = {k: ctx_params.get(k) for k in keys if ctx_params.get(k) is not None}
    try:
        return load_config(config_path, overrides)
    except ConfigError as e:
        raise click.UsageError(f"configuration: {e}") from None


_config_opt = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="key = value config file.")
_threads_opt = click.option("--threads", type=int, default=None, help="Worker threads [env SPATIALCURATE_THREADS, default 1].")


def _threshold_opts(f):
    for name in ("tau_s", "tau_o", "tau_u", "tau_v"):
        f = click.option(f"--{name.replace('_', '-')}", name, type=str, default=None)(f)
    f = click.option("--union-mode", type=click.Choice(constraints.UNION_MODES), default=None)(f)
    f = click.option("--relation-rule", type=click.Choice(("octant", "axis_dominant")), default=None)(f)
    return f


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", count=True)
def main(verbose: int):
    """Spatial-relation data curation and evaluation."""
    logging.basicConfig(
        level=logging.WARNING - 10 * min(verbose, 2),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


@main.command()
@click.argument("annotations", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Output directory.")
@_config_opt
@_threshold_opts
@click.option("--and-probability", type=float, default=None)
@click.option("--max-expansion", type=float, default=None)
@click.option("--seed", "global_seed", type=int, default=None)
@click.option("--templates", type=click.Path(exists=True, dir_okay=False), default=None, help="Template pool JSON.")
@click.option("--images-dir", type=click.Path(file_okay=False), default=None, help="Also write pixel crops.")
@click.option("--figures/--no-figures", default=True)
@_threads_opt
def curate(annotations, out, config_path, threads, figures, **params):
    """Ingest, pair, filter and decode into a training manifest."""
    cfg = _config(params, config_path)
    try:
        pool = decoder.TemplatePool.from_json(cfg.templates) if cfg.templates else decoder.TemplatePool.default()
    except (ValueError, OSError) as e:
        raise click.ClickException(f"template pool: {e}") from None
    n = _threads(threads)
    try:
        ds = ingest.load_dataset(annotations, ingest.ValidityFilter(cfg.exclude_crowd, cfg.min_area))
    except (ValueError, KeyError) as e:
        raise click.ClickException(f"{annotations}: {e}") from None
    descs, stats = constraints.run_pipeline(ds, cfg.thresholds, cfg.union_mode, cfg.relation_rule, threads=n)
    records = decoder.decode_all(descs, ds.images, pool, cfg.decode, threads=n)

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = decoder.emit_manifest(records, out / "manifest.jsonl")
    ingest.write_rejects(ds, out / "rejects.jsonl")
    doc = stats.as_dict() | {"thresholds": cfg.thresholds.as_dict(), "union_mode": cfg.union_mode, "relation_rule": cfg.relation_rule}
    reports.write_json(doc, out / "stats.json")
    table = reports.stats_table(stats.as_dict())
    (out / "stats.txt").write_text(table, encoding="utf-8")
    if figures:
        reports.stats_figure(stats.as_dict(), out / "stats.png")
        tok_counts = Counter(r.relation.value for r in records)
        reports.relation_figure({t.value: tok_counts.get(t.value, 0) for t in decoder.RelationToken}, out / "relations.png")
    if cfg.images_dir:
        for r in records:
            decoder.crop_pixels(r, cfg.images_dir, out / "crops")
    click.echo(table, nl=False)
    click.echo(f"wrote {written} manifest records to {out / 'manifest.jsonl'}")


@main.command()
@click.argument("annotations", type=click.Path(exists=True, dir_okay=False))
@_config_opt
@_threshold_opts
@click.option("--reference", is_flag=True, help="Show deviation from the published COCO 2017 train counts.")
@click.option("--sweep", is_flag=True, help="Report every union_mode setting.")
@click.option("--out", type=click.Path(file_okay=False), default=None)
@_threads_opt
def stats(annotations, config_path, reference, sweep, out, threads, **params):
    """Stage statistics only, no decoding."""
    cfg = _config(params, config_path)
    try:
        ds = ingest.load_dataset(annotations, ingest.ValidityFilter(cfg.exclude_crowd, cfg.min_area))
    except (ValueError, KeyError) as e:
        raise click.ClickException(f"{annotations}: {e}") from None
    modes = constraints.UNION_MODES if sweep else (cfg.union_mode,)
    results = {}
    for mode in modes:
        # relation tokens do not enter any constraint, so relation_rule cannot move these counts
        _, st = constraints.run_pipeline(ds, cfg.thresholds, mode, cfg.relation_rule, threads=_threads(threads))
        results[mode] = st.as_dict()
        click.echo(f"union_mode={mode} relation_rule={cfg.relation_rule}")
        ref = constraints.COCO2017_TRAIN_REFERENCE if reference else None
        click.echo(reports.stats_table(results[mode], ref))
    if out:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        reports.write_json(results if sweep else results[cfg.union_mode], out / "stats.json")
        for mode, st in results.items():
            reports.stats_figure(st, out / f"stats_{mode}.png")


def _read_categories(path: str | None) -> list[str]:
    if path is None:
        return coco_category_names()
    if path.endswith(".json"):
        ds = ingest.load_dataset(path)
        return [name for _, name in ingest.category_table(ds)]
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [l.strip() for l in lines if l.strip()]


@main.command()
@click.option("--categories", "categories_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="COCO JSON or one name per line [default: the 80 COCO names].")
@click.option("--mode", "proxy_mode", type=click.Choice(("paper", "full")), default=None)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@_config_opt
def prompts(categories_path, proxy_mode, out, config_path):
    """Write base prompts with their rephrased / negated / swapped variations."""
    cfg = _config({"proxy_mode": proxy_mode}, config_path)
    try:
        groups = proxy.generate_groups(_read_categories(categories_path), cfg.proxy_mode)
    except ValueError as e:
        raise click.ClickException(str(e)) from None
    n = proxy.write_groups(groups, out)
    click.echo(f"wrote {n} prompt groups to {out}")


@main.command("oracle-embed")
@click.argument("prompts_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("out", type=click.Path(dir_okay=False))
@click.option("--kind", type=click.Choice(("bow", "ordered")), default="bow")
@click.option("--dim", type=int, default=None, help="[bow: 64, ordered: 8]")
def oracle_embed(prompts_path, out, kind, dim):
    """Embed a prompts file with a reference (non-neural) embedder."""
    fn = proxy.bag_of_words_embedding if kind == "bow" else proxy.order_sensitive_embedding
    dim = dim or (64 if kind == "bow" else 8)
    n = proxy.write_embeddings(proxy.embed_groups(proxy.read_groups(prompts_path), fn, dim), out)
    click.echo(f"wrote {n} embeddings to {out}")


@main.command()
@click.argument("prompts_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("embeddings", type=click.Path(exists=True, dir_okay=False), nargs=-1, required=True)
@click.option("--name", "names", multiple=True, help="Label per embeddings file.")
@click.option("--metric", type=click.Choice(proxy.METRICS), default=None)
@click.option("--out", type=click.Path(file_okay=False), default=None)
@click.option("--figures/--no-figures", default=True)
@_config_opt
def retrieve(prompts_path, embeddings, names, metric, out, figures, config_path):
    """Nearest-variation retrieval report for one or more embedding files."""
    cfg = _config({"metric": metric}, config_path)
    groups = proxy.read_groups(prompts_path)
    names = list(names) + [Path(p).stem for p in embeddings[len(names):]]
    results = {}
    for name, path in zip(names, embeddings):
        try:
            results[name] = proxy.retrieve(groups, proxy.read_embeddings(path), cfg.metric).as_dict()
        except ValueError as e:
            raise click.ClickException(f"{path}: {e}") from None
    table = reports.retrieval_table(results)
    click.echo(table, nl=False)
    if out:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        reports.write_json(results, out / "retrieval.json")
        (out / "retrieval.txt").write_text(table, encoding="utf-8")
        if figures:
            reports.retrieval_figure(results, out / "retrieval.png")


@main.command("visor")
@click.argument("detections", type=click.Path(exists=True, dir_okay=False))
@click.option("--name", default="model")
@click.option("--conf-threshold", type=float, default=None)
@click.option("--out", type=click.Path(file_okay=False), default=None)
@click.option("--figures/--no-figures", default=True)
@_config_opt
def visor_cmd(detections, name, conf_threshold, out, figures, config_path):
    """VISOR scores from a detections JSONL file."""
    cfg = _config({"conf_threshold": conf_threshold}, config_path)
    try:
        scores = visor.aggregate(visor.read_trials(detections), cfg.conf_threshold)
    except (ValueError, KeyError) as e:
        raise click.ClickException(str(e)) from None
    rows = {name: scores.as_percent()}
    table = reports.visor_table(rows)
    click.echo(table, nl=False)
    if out:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        reports.write_json({name: scores.as_dict()}, out / "visor.json")
        (out / "visor.txt").write_text(table, encoding="utf-8")
        if figures:
            reports.visor_figure(rows, out / "visor.png")


@main.command("tenor-check")
@click.option("--seed", type=int, default=0)
def tenor_check(seed):
    """Order-sensitivity properties of position-code injection."""
    results = tenor.property_suite(seed=seed)
    for r in results:
        click.echo(r.line())
    if not all(r.passed for r in results):
        sys.exit(1)


if __name__ == "__main__":
    main()
