"""Command-line front door for batch use.

Every subcommand is a thin wrapper over the library: machine output goes to
stdout, diagnostics to stderr. Exit codes: 0 success, 1 validation failure,
2 runtime error.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click

from . import __version__, geoloc
from .augment import AugmentationSpec, augment_dataset
from .geocode import default_boundaries, load_boundaries, resolve_country
from .ingest import make_folds, merge_metadata, restructure
from .kb import ClfClass, default_kb, load_kb
from .pipeline import ImageRef, PipelineConfig, load_backend_config, run_pipeline
from .vision_eval import (
    classification_report,
    confusion_matrix,
    detection_report,
    read_gt_csv,
    read_pred_csv,
)

# Validation failures (including usage errors) exit 1 per the CLI contract.
click.UsageError.exit_code = 1

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".webp")


def _version(f):
    return click.version_option(__version__, "--version")(f)


@click.group()
@_version
def main():
    """Socket-based indoor geolocation toolkit."""


@main.command("ingest")
@_version
@click.option("--meta", "meta_csvs", multiple=True, required=True, type=click.Path(exists=True))
@click.option("--boundaries", "boundaries_path", type=click.Path(exists=True),
              help="GeoJSON boundary file (default: bundled 110m set)")
@click.option("--images-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def cmd_ingest(meta_csvs, boundaries_path, images_dir, out_dir):
    """Merge metadata CSVs, reverse-geocode, and restructure by country."""
    records = merge_metadata(list(meta_csvs))
    b = load_boundaries(boundaries_path) if boundaries_path else default_boundaries()
    resolved = []
    skipped = 0
    for r in records:
        country = r.country or resolve_country(b, r.latitude, r.longitude)
        if country is None:
            skipped += 1
            click.echo(f"no country for {r.image_id} ({r.latitude}, {r.longitude})", err=True)
            continue
        resolved.append(type(r)(r.image_id, r.hotel_id, r.latitude, r.longitude, r.source, country))
    manifest = restructure(resolved, images_dir, out_dir)
    click.echo(json.dumps({"manifest_rows": len(manifest), "skipped": skipped,
                           "manifest_path": str(Path(out_dir) / "manifest.csv")}))


@main.command("run")
@_version
@click.option("--images", "images_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--detector", "detector_cfg", required=True, type=click.Path(exists=True))
@click.option("--classifier", "classifier_cfg", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--jobs", default=1, show_default=True)
def cmd_run(images_dir, detector_cfg, classifier_cfg, config_path, out_path, jobs):
    """Run the detect/classify pipeline over a directory of images."""
    detector = load_backend_config(detector_cfg)
    classifier = load_backend_config(classifier_cfg)
    cfg = (
        PipelineConfig.from_dict(json.loads(Path(config_path).read_text()))
        if config_path else PipelineConfig()
    )
    images = sorted(
        p for p in Path(images_dir).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    )
    refs = [ImageRef(id=p.stem, path=p) for p in images]
    result = run_pipeline(refs, detector, classifier, cfg, jobs=jobs)
    doc = result.to_dict()
    doc["metadata"] = {
        "detector": detector.descriptor,
        "classifier": classifier.descriptor,
        "config": cfg.to_dict(),
    }
    Path(out_path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    for e in result.errors:
        click.echo(f"error: {e}", err=True)
    click.echo(json.dumps({"images": len(refs), "findings": len(result.findings),
                           "counts": result.counts, "out": str(out_path)}))


@main.command("evaluate")
@_version
@click.option("--findings", "findings_path", required=True, type=click.Path(exists=True))
@click.option("--truth", "truth_path", required=True, type=click.Path(exists=True))
@click.option("--kb", "kb_path", type=click.Path(exists=True))
@click.option("--thresholds", default="0.7,0.8,0.9", show_default=True)
@click.option("--comparator", type=click.Choice(["inclusive", "strict"]),
              default="inclusive", show_default=True)
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json",
              show_default=True)
@click.option("--chart-out", type=click.Path(), help="write threshold,accuracy,total CSV")
def cmd_evaluate(findings_path, truth_path, kb_path, thresholds, comparator, fmt, chart_out):
    """Score findings against ground truth across confidence thresholds."""
    kb = load_kb(kb_path) if kb_path else default_kb()
    findings = geoloc.read_findings_json(findings_path)
    if not findings:
        raise click.UsageError("nothing to evaluate: findings file is empty")
    truth = geoloc.read_truth_csv(truth_path)
    ts = sorted(float(x) for x in thresholds.split(","))
    report = geoloc.sweep_report(findings, truth, kb, ts, comparator)
    if chart_out:
        rows = geoloc.threshold_sweep(findings, truth, kb, ts, comparator)
        Path(chart_out).write_text(geoloc.sweep_chart_csv(rows))
    if fmt == "json":
        click.echo(json.dumps(report, indent=1, sort_keys=True))
    else:
        w = csv.writer(sys.stdout)
        w.writerow(["threshold", "correct", "wrong", "total", "accuracy_pct"])
        for row in report["rows"]:
            w.writerow([row["threshold"], row["correct"], row["wrong"], row["total"],
                        f"{row['accuracy'] * 100:.2f}"])


@main.command("detmetrics")
@_version
@click.option("--preds", "preds_path", required=True, type=click.Path(exists=True))
@click.option("--gts", "gts_path", required=True, type=click.Path(exists=True))
def cmd_detmetrics(preds_path, gts_path):
    """Detection metrics: precision, recall, mAP@0.5, mAP@0.5:0.95."""
    report = detection_report(read_pred_csv(preds_path), read_gt_csv(gts_path))
    click.echo(json.dumps(report.to_dict(), indent=1, sort_keys=True))


@main.command("clfmetrics")
@_version
@click.option("--preds", "preds_path", required=True, type=click.Path(exists=True),
              help="CSV with item_id,label")
@click.option("--truth", "truth_path", required=True, type=click.Path(exists=True),
              help="CSV with item_id,label")
def cmd_clfmetrics(preds_path, truth_path):
    """Classification metrics from predicted vs true labels."""

    def read_labels(path):
        with open(path, newline="", encoding="utf-8") as f:
            return {r["item_id"]: ClfClass(r["label"]) for r in csv.DictReader(f)}

    preds = read_labels(preds_path)
    truth = read_labels(truth_path)
    common = sorted(set(preds) & set(truth))
    if not common:
        raise click.UsageError("no overlapping item ids between predictions and truth")
    m = confusion_matrix([truth[i] for i in common], [preds[i] for i in common])
    report = classification_report(m)
    report["confusion"] = {
        "classes": [c.value for c in m.classes],
        "counts": m.counts.tolist(),
    }
    click.echo(json.dumps(report, indent=1, sort_keys=True))


@main.command("folds")
@_version
@click.option("--items", "items_path", required=True, type=click.Path(exists=True),
              help="CSV with item_id,label")
@click.option("--k", default=5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path())
def cmd_folds(items_path, k, seed, out_path):
    """Generate a stratified k-fold assignment."""
    with open(items_path, newline="", encoding="utf-8") as f:
        items = [(r["item_id"], ClfClass(r["label"])) for r in csv.DictReader(f)]
    fa = make_folds(items, k, seed)
    doc = {"k": fa.k, "seed": seed, "sizes": fa.sizes(),
           "assignment": dict(sorted(fa.assignment.items()))}
    payload = json.dumps(doc, indent=1, sort_keys=True) + "\n"
    if out_path:
        Path(out_path).write_text(payload)
        click.echo(json.dumps({"k": fa.k, "sizes": fa.sizes(), "out": out_path}))
    else:
        click.echo(payload)


@main.command("augment")
@_version
@click.option("--in", "in_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--spec", "spec_path", type=click.Path(exists=True),
              help="JSON AugmentationSpec override")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def cmd_augment(in_dir, spec_path, seed, out_dir):
    """Double a directory of images: originals plus one augmented copy each."""
    from PIL import Image

    if spec_path:
        raw = json.loads(Path(spec_path).read_text())
        raw.setdefault("seed", seed)
        raw = {k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()}
        spec = AugmentationSpec(**raw)
    else:
        spec = AugmentationSpec(seed=seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    images = sorted(
        p for p in Path(in_dir).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    )
    pairs = [(p.stem, Image.open(p)) for p in images]
    results = augment_dataset(pairs, spec)
    for image_id, payload in results:
        (out / f"{image_id}.png").write_bytes(payload)
    click.echo(json.dumps({"inputs": len(images), "outputs": len(results), "out": str(out)}))


@main.command("serve")
@_version
@click.option("--data-dir", required=True, type=click.Path(file_okay=False),
              envvar="SOCKETGEO_DATA_DIR")
@click.option("--detector", "detector_cfg", required=True, type=click.Path(exists=True),
              envvar="SOCKETGEO_DETECTOR")
@click.option("--classifier", "classifier_cfg", required=True, type=click.Path(exists=True),
              envvar="SOCKETGEO_CLASSIFIER")
@click.option("--kb", "kb_path", type=click.Path(exists=True), envvar="SOCKETGEO_KB")
@click.option("--static-dir", type=click.Path(file_okay=False), envvar="SOCKETGEO_STATIC")
@click.option("--token", envvar="SOCKETGEO_TOKEN")
@click.option("--host", default="127.0.0.1", show_default=True, envvar="SOCKETGEO_HOST")
@click.option("--port", default=8077, show_default=True, envvar="SOCKETGEO_PORT")
@click.option("--jobs", default=4, show_default=True)
def cmd_serve(data_dir, detector_cfg, classifier_cfg, kb_path, static_dir, token, host, port, jobs):
    """Run the case-oriented HTTP service."""
    import uvicorn

    from .service import create_app

    app = create_app(
        data_dir=data_dir,
        detector=load_backend_config(detector_cfg),
        classifier=load_backend_config(classifier_cfg),
        kb=load_kb(kb_path) if kb_path else default_kb(),
        static_dir=static_dir,
        token=token,
        workers=jobs,
    )
    uvicorn.run(app, host=host, port=port)


def entrypoint(argv: list[str] | None = None) -> int:
    """Programmatic entry with the documented exit-code contract."""
    try:
        main.main(args=argv, standalone_mode=False)
        return 0
    except click.UsageError as e:
        click.echo(f"error: {e.format_message()}", err=True)
        return 1
    except (ValueError, OSError) as e:
        click.echo(f"error: {e}", err=True)
        return 1
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.Abort:
        return 2
    except Exception as e:  # noqa: BLE001 - runtime failures map to exit 2
        click.echo(f"runtime error: {e}", err=True)
        return 2


def script() -> None:
    sys.exit(entrypoint())


if __name__ == "__main__":
    script()
