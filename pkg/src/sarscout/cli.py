"""Command-line client for the pipeline.

Each subcommand is a thin wrapper over the package API: detect an image,
run an interactive chat, evaluate detections against ground truth, render
an overlay, or serve the HTTP API. Exit codes: 0 success, 1 usage error,
2 runtime error; --json-errors switches stderr to machine-readable JSON.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from .config import load_config
from .dataset import load_coco_annotations, load_dims_index, load_yolo_annotations
from .detector import (
    DetectionSet,
    FileBackend,
    OnnxBackend,
    SidecarConfig,
    StubBackend,
    parse_detections_jsonl,
    write_detections_jsonl,
)
from .errors import IntegrityError, InvalidArgumentError, SarScoutError
from .evaluation import comparison_table, evaluate
from .grounding import extract_regions, render_overlay
from .prompting import WITH_BOXES, WITHOUT_BOXES, load_templates
from .session import DirectorySessionStore, InMemorySessionStore, SessionManager
from .vlm_client import MockVlmClient, OpenAiCompatClient

_MODE_ALIASES = {"with": WITH_BOXES, "without": WITHOUT_BOXES,
                 WITH_BOXES: WITH_BOXES, WITHOUT_BOXES: WITHOUT_BOXES}


def _build_backend(backend, dets, model, sidecar):
    if backend == "file":
        if not dets:
            raise click.UsageError("--backend file requires --dets")
        return FileBackend(dets)
    if backend == "onnx":
        if not model:
            raise click.UsageError("--backend onnx requires --model")
        side = SidecarConfig.load(sidecar) if sidecar else None
        return OnnxBackend(model, sidecar=side)
    return StubBackend()


@click.group()
@click.option("--json-errors", is_flag=True, help="Emit errors to stderr as JSON.")
def cli(json_errors):
    """Box-grounded SAR ship VQA pipeline."""


@cli.command()
@click.argument("image", type=click.Path())
@click.option("--backend", type=click.Choice(["file", "onnx", "stub"]), default="file",
              show_default=True)
@click.option("--dets", type=click.Path(), help="Detections JSONL (file backend).")
@click.option("--model", type=click.Path(), help="Exported model path (onnx backend).")
@click.option("--sidecar", type=click.Path(), help="Model sidecar config JSON.")
@click.option("--conf", type=float, default=None, help="Confidence threshold.")
@click.option("--nms", type=float, default=None, help="NMS IoU threshold.")
@click.option("--out", type=click.Path(), help="Append detections to a JSONL file.")
def detect(image, backend, dets, model, sidecar, conf, nms, out):
    """Run the detector on IMAGE and print the DetectionSet as JSON."""
    ds = _build_backend(backend, dets, model, sidecar).detect(
        image, conf_threshold=conf, nms_threshold=nms
    )
    if out:
        write_detections_jsonl(out, [ds])
    click.echo(ds.to_json(), nl=False)


@cli.command()
@click.argument("image", type=click.Path())
@click.option("--mode", type=click.Choice(sorted(_MODE_ALIASES)), default="with",
              show_default=True, help="Include detector boxes in prompts or not.")
@click.option("--backend", type=click.Choice(["file", "onnx", "stub"]), default="file",
              show_default=True)
@click.option("--dets", type=click.Path(), help="Detections JSONL (file backend).")
@click.option("--model", type=click.Path(), help="Exported model path (onnx backend).")
@click.option("--sidecar", type=click.Path(), help="Model sidecar config JSON.")
@click.option("--script", type=click.Path(), help="Mock VLM script JSON; omit to use the live endpoint from VLM_* env vars.")
@click.option("--store", type=click.Path(), help="Session store directory (default: in-memory).")
@click.option("--template-dir", type=click.Path(), help="Prompt template directory.")
def chat(image, mode, backend, dets, model, sidecar, script, store, template_dir):
    """Interactive dialogue about IMAGE; turn numbering starts at 0."""
    vlm = (
        MockVlmClient.from_file(script)
        if script
        else OpenAiCompatClient.from_env(os.environ)
    )
    manager = SessionManager(
        DirectorySessionStore(store) if store else InMemorySessionStore(),
        _build_backend(backend, dets, model, sidecar),
        vlm,
        load_templates(template_dir),
        default_mode=_MODE_ALIASES[mode],
    )
    session = manager.start_session(image)
    _print_turn(session.turns[0])
    interactive = sys.stdin.isatty()
    while True:
        if interactive:
            click.echo("you> ", nl=False, err=True)
        line = sys.stdin.readline()
        if not line:
            break
        question = line.strip()
        if not question:
            continue
        if question.lower() in ("exit", "quit"):
            break
        _print_turn(manager.ask(session.session_id, question))
    if store:
        click.echo(f"transcript saved under {store}/{session.session_id}.json", err=True)


def _print_turn(turn):
    click.echo(f"turn {turn.index}")
    click.echo(f"user: {turn.user_text}")
    click.echo(f"model: {turn.answer_text}")
    click.echo("")


@cli.command(name="eval")
@click.option("--dets", type=click.Path(), required=True, help="Detections JSONL.")
@click.option("--gt", type=click.Path(), required=True,
              help="Ground truth: YOLO label directory or COCO JSON file.")
@click.option("--dims", type=click.Path(), help="image_id,width,height CSV (required with a label directory).")
@click.option("--format", "fmt", type=click.Choice(["table", "json", "csv"]), default="table",
              show_default=True)
@click.option("--dataset-name", default="", help="Dataset label for the report.")
@click.option("--detector-name", default=None, help="Detector label for the report.")
@click.option("--interpolation", type=click.Choice(["101point", "all_points"]),
              default="101point", show_default=True)
def eval_cmd(dets, gt, dims, fmt, dataset_name, detector_name, interpolation):
    """Evaluate detections against ground truth (mAP.50 / mAP.50:.95)."""
    gt_path = Path(gt)
    if gt_path.is_dir():
        if not dims:
            raise click.UsageError("--dims is required when --gt is a label directory")
        gts = load_yolo_annotations(gt_path, load_dims_index(dims))
    else:
        gts = load_coco_annotations(gt_path)
    dims_index = load_dims_index(dims) if dims else {}

    grouped = parse_detections_jsonl(dets)
    dets_by_image = {}
    for image_id, boxes in grouped.items():
        if image_id in gts:
            w, h = gts[image_id].image_w, gts[image_id].image_h
        elif image_id in dims_index:
            w, h = dims_index[image_id]
        else:
            raise IntegrityError(
                f"no dimensions known for detected image {image_id!r}; add it to --dims"
            )
        ordered = tuple(sorted((b.clamped(w, h) for b in boxes), key=lambda b: -b.confidence))
        dets_by_image[image_id] = DetectionSet(image_id, w, h, ordered, "file", 0.0, 0.45)

    report = evaluate(
        dets_by_image, gts,
        detector_name=detector_name, dataset_name=dataset_name,
        interpolation=interpolation,
    )
    if fmt == "json":
        click.echo(report.to_json(), nl=False)
    else:
        click.echo(comparison_table([report], fmt="markdown" if fmt == "table" else "csv"),
                   nl=False)


@cli.command()
@click.argument("image", type=click.Path())
@click.option("--dets", type=click.Path(), required=True, help="Detections JSONL.")
@click.option("--answer", type=click.Path(), help="Answer text file; cited regions are drawn too.")
@click.option("--out", type=click.Path(), required=True, help="Output PNG path.")
def overlay(image, dets, answer, out):
    """Render detection boxes (and answer regions) over IMAGE."""
    from PIL import Image as PilImage

    image_path = Path(image)
    try:
        with PilImage.open(image_path) as img:
            w, h = img.size
    except Exception as exc:  # noqa: BLE001 - normalized below
        raise InvalidArgumentError(f"cannot read image {image}: {exc}") from exc
    boxes = parse_detections_jsonl(dets).get(image_path.stem, [])
    regions = ()
    if answer:
        regions = extract_regions(Path(answer).read_text(encoding="utf-8"), w, h)
    Path(out).write_bytes(render_overlay(image_path, detections=boxes, regions=regions))
    click.echo(f"wrote {out} ({len(boxes)} boxes, {len(regions)} regions)")


@cli.command()
@click.option("--config", "config_path", type=click.Path(), help="Service TOML config.")
def serve(config_path):
    """Run the HTTP API."""
    import uvicorn

    from .service import create_app

    config = load_config(config_path)
    uvicorn.run(create_app(config), host=config.listen_host, port=config.listen_port)


def main(argv=None) -> int:
    args = list(sys.argv[1:] if argv is None else argv)
    json_errors = "--json-errors" in args

    def emit(kind: str, exc: Exception) -> None:
        if json_errors:
            click.echo(json.dumps({"error": {"type": kind, "message": str(exc)}}), err=True)
        else:
            click.echo(f"error: {exc}", err=True)

    try:
        cli.main(args=args, standalone_mode=False)
        return 0
    except click.UsageError as exc:
        emit("UsageError", exc)
        return 1
    except click.Abort:
        return 1
    except click.ClickException as exc:
        emit(type(exc).__name__, exc)
        return 1
    except SarScoutError as exc:
        emit(type(exc).__name__, exc)
        return 2
    except OSError as exc:
        emit("OSError", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
