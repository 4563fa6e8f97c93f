# !cli.py
"""
CLI entrypoints for scene generation, pipeline runs, evaluation, ablation and benchmarking.

Streamlining plan:
- Keep this file as thin command wrappers around `services` functions.
- Successful commands print one JSON object on stdout; tables go to stderr.
- Errors print {"error": ...} and exit 2 (invalid input/config) or 4 (missing input).
"""
from __future__ import annotations

import contextlib
import json
from pathlib import Path
from typing import Any, Iterator, Optional

import click
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from core_utils import get_logger, load_pipeline_config, safe_load_yaml, setup_env
from models.registry import registry


console = Console(stderr=True)


@contextlib.contextmanager
def cli_errors() -> Iterator[None]:
    try:
        yield
    except FileNotFoundError as e:
        print(json.dumps({"error": str(e)}))
        raise SystemExit(4)
    except (ValueError, ValidationError) as e:
        print(json.dumps({"error": str(e)}))
        raise SystemExit(2)


def _overrides(**flags: Any) -> dict[str, Any]:
    """Nested config overrides from flags that were actually given."""
    out: dict[str, Any] = {}
    for key, value in flags.items():
        if value is None:
            continue
        section, _, name = key.partition("__")
        if name:
            out.setdefault(section, {})[name] = value
        else:
            out[key] = value
    return out


def pipeline_options(fn):
    """Flags mirroring PipelineConfig; a --config file sets everything and flags override it."""
    options = [
        click.option("--config", "config_path", type=str, required=False, help="Pipeline config YAML"),
        click.option("--udepth/--no-udepth", default=None),
        click.option("--dbscan/--no-dbscan", default=None),
        click.option("--madlift/--no-madlift", default=None),
        click.option("--ensemble/--no-ensemble", default=None),
        click.option("--parallel/--no-parallel", default=None, help="Run detectors on a thread pool"),
        click.option("--association", type=click.Choice(["FEATURE", "CENTER_DISTANCE"]), required=False),
        click.option("--motion-model", type=click.Choice(["CONSTANT_ACCELERATION", "CONSTANT_VELOCITY"])),
        click.option("--max-range", type=float, required=False, help="Dense-range cutoff for U-depth and DBSCAN"),
        click.option("--no-visibility-filter", is_flag=True, default=False),
        click.option("--log-level", type=str, required=False),
        click.option("--seed", type=int, required=False),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def build_config(
    config_path: Optional[str],
    udepth: Optional[bool],
    dbscan: Optional[bool],
    madlift: Optional[bool],
    ensemble: Optional[bool],
    parallel: Optional[bool],
    association: Optional[str],
    motion_model: Optional[str],
    max_range: Optional[float],
    no_visibility_filter: bool,
):
    overrides = _overrides(
        enable_udepth=udepth,
        enable_dbscan=dbscan,
        enable_madlift=madlift,
        enable_ensemble=ensemble,
        parallel_detectors=parallel,
        tracker__association=association,
        tracker__motion_model=motion_model,
        udepth__max_range=max_range,
        dbscan__max_range=max_range,
        identify__use_visibility_filter=False if no_visibility_filter else None,
    )
    return load_pipeline_config(config_path, overrides)


@click.group()
def cli() -> None:
    """Root command group for dynamic obstacle detection and tracking."""
    pass


@cli.command("gen")
@click.option("--out", "out_dir", required=True, type=str, help="Output sequence directory")
@click.option("--scene", type=str, required=False, help="Scene script YAML")
@click.option("--preset", type=str, required=False, help="Built-in scene preset name")
@click.option("--suite", type=int, required=False, help="Write this many random noisy sequences under --out")
@click.option("--duration", type=float, required=False, help="Override the preset duration (s)")
@click.option("--width", type=int, default=registry.CameraDefaults.WIDTH, show_default=True)
@click.option("--height", type=int, default=registry.CameraDefaults.HEIGHT, show_default=True)
@click.option("--noisy/--no-noisy", default=False, show_default=True)
@click.option("--blob-probability", type=float, required=False)
@click.option("--det2d/--no-det2d", default=True, show_default=True)
@click.option("--jitter-px", type=float, default=0.0, show_default=True)
@click.option("--dropout", type=float, default=0.0, show_default=True)
@click.option("--log-level", type=str, required=False)
@click.option("--seed", type=int, required=False)
def cmd_gen(
    out_dir: str,
    scene: Optional[str],
    preset: Optional[str],
    suite: Optional[int],
    duration: Optional[float],
    width: int,
    height: int,
    noisy: bool,
    blob_probability: Optional[float],
    det2d: bool,
    jitter_px: float,
    dropout: float,
    log_level: Optional[str] = None,
    seed: Optional[int] = None,
) -> None:
    """Render a scene script (or preset) to the on-disk sequence format."""
    setup_env(log_level, seed=seed)
    from factories.scene_presets import build_preset, noisy_suite, preset_noise
    from services.scenegen import write_sequence
    from services.validators import validate_scene_script

    with cli_errors():
        if sum(x is not None for x in (scene, preset, suite)) != 1:
            raise ValueError("provide exactly one of --scene, --preset or --suite")
        intr = registry.CameraIntrinsics.scaled(width, height)
        if suite is not None:
            if suite < 1:
                raise ValueError("--suite needs at least one sequence")
            kwargs = {"duration": duration} if duration is not None else {}
            written = []
            for script, noise in noisy_suite(suite, seed=seed or 0, **kwargs):
                validate_scene_script(script)
                path = write_sequence(script, Path(out_dir) / script.name, intr, noise, det2d, jitter_px, dropout)
                written.append({"sequence": str(path), "name": script.name, "frames": script.num_frames})
            print(json.dumps({"suite": written}))
            return
        if scene:
            data = safe_load_yaml(scene)
            if duration is not None:
                data["duration"] = duration
            script = registry.SceneScript.model_validate(data)
        else:
            script = build_preset(preset, **({"duration": duration} if duration is not None else {}))
        validate_scene_script(script)
        noise = preset_noise(noisy, seed or 0, blob_probability)
        path = write_sequence(script, out_dir, intr, noise, det2d, jitter_px, dropout)
        print(json.dumps({"sequence": str(path), "name": script.name, "frames": script.num_frames}))


@cli.command("run")
@click.option("--sequence", required=True, type=str, help="Sequence directory")
@click.option("--out", "out_dir", type=str, required=False, help="Directory for tracks/report/timing")
@pipeline_options
def cmd_run(sequence: str, out_dir: Optional[str], log_level: Optional[str], seed: Optional[int], **flags) -> None:
    """Process a sequence: detect, ensemble, track, identify; evaluate when truth is present."""
    setup_env(log_level, flags.get("config_path"), seed)
    from services.pipeline import run_sequence

    with cli_errors():
        cfg = build_config(**flags)
        result = run_sequence(sequence, cfg, out_dir)
        print(json.dumps(result.summary()))


@cli.command("eval")
@click.option("--tracks", required=True, type=str, help="tracks.csv written by `run`")
@click.option("--truth", required=True, type=str, help="Sequence directory holding truth.csv")
@click.option("--match-iou", type=float, default=registry.enums.EvalDefaults.MATCH_IOU, show_default=True)
@click.option("--skip-frames", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=str, required=False, help="Write the full report JSON here")
@click.option("--log-level", type=str, required=False)
def cmd_eval(
    tracks: str,
    truth: str,
    match_iou: float,
    skip_frames: int,
    out_path: Optional[str] = None,
    log_level: Optional[str] = None,
) -> None:
    """Score track outputs against a sequence's ground truth."""
    setup_env(log_level)
    from services import sequence_io
    from services.metrics import evaluate, write_report

    with cli_errors():
        seq = sequence_io.load_sequence(truth)
        if not seq.truth:
            raise FileNotFoundError(f"no {sequence_io.TRUTH_FILE} in {truth}")
        report = evaluate(sequence_io.read_tracks(Path(tracks)), seq.truth, match_iou, skip_frames)
        if out_path:
            write_report(out_path, report)
        print(json.dumps(report.summary()))


def _print_table(title: str, df) -> None:
    table = Table(title=title)
    for col in df.columns:
        table.add_column(str(col))
    for row in df.itertuples(index=False):
        table.add_row(*[f"{v:.4f}" if isinstance(v, float) else str(v) for v in row])
    console.print(table)


@cli.command("ablate")
@click.option("--sequence", required=True, type=str, help="Sequence directory with truth")
@click.option("--profiles", type=str, required=False, help="Variant profiles YAML (name -> config overrides)")
@click.option("--out", "out_dir", type=str, required=False, help="Write one report per variant here")
@pipeline_options
def cmd_ablate(
    sequence: str,
    profiles: Optional[str],
    out_dir: Optional[str],
    log_level: Optional[str],
    seed: Optional[int],
    **flags,
) -> None:
    """Compare the full system against single-detector and center-distance/CV variants."""
    setup_env(log_level, flags.get("config_path"), seed)
    from services.pipeline import ablation_table, run_ablation, write_outputs

    with cli_errors():
        cfg = build_config(**flags)
        variants = safe_load_yaml(profiles).get("variants") if profiles else None
        results = run_ablation(sequence, cfg, variants)
        if out_dir:
            for name, result in results.items():
                write_outputs(Path(out_dir) / name, result)
        _print_table("Ablation", ablation_table(results))
        print(json.dumps({name: r.summary() for name, r in results.items()}))


@cli.command("bench")
@click.option("--frames", "num_frames", type=int, default=30, show_default=True)
@click.option("--width", type=int, default=registry.CameraDefaults.WIDTH, show_default=True)
@click.option("--height", type=int, default=registry.CameraDefaults.HEIGHT, show_default=True)
@click.option("--out", "out_path", type=str, required=False, help="Write timing JSON here")
@pipeline_options
def cmd_bench(
    num_frames: int,
    width: int,
    height: int,
    out_path: Optional[str],
    log_level: Optional[str],
    seed: Optional[int],
    **flags,
) -> None:
    """Per-stage compute time of the non-learning pipeline on the 5-object scene."""
    setup_env(log_level, flags.get("config_path"), seed)
    import pandas as pd

    from services.pipeline import bench
    from services.sequence_io import write_json

    with cli_errors():
        if num_frames < 2:
            raise ValueError("--frames must be >= 2")
        cfg = build_config(**flags)
        cfg = cfg.model_copy(update={"intrinsics": registry.CameraIntrinsics.scaled(width, height)})
        result = bench(cfg, num_frames, seed or 0)
        stages = pd.DataFrame.from_dict(result["timing"]["stages"], orient="index")
        _print_table("Per-stage time (ms)", stages.reset_index(names="stage"))
        if out_path:
            write_json(Path(out_path), result)
        get_logger(__name__).info(f"median frame time {result['median_frame_ms']} ms")
        print(json.dumps(result))


if __name__ == "__main__":
    cli()
