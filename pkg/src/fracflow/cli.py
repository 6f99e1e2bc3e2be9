"""Command-line surface: the full pipeline from toy data to evaluation.

Every command resolves its configuration (preset -> optional JSON file ->
--set overrides), prints it with the content hashes of its inputs, writes its
artifact plus a JSON-lines log, and exits 0. Failures print machine-readable
error JSON on stderr; exit codes: 1 usage, 2 state mismatch, 3 IO.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

click.UsageError.exit_code = 1

CONTEXT_SETTINGS = {"help_option_names": ["-h", "--help"]}


def _set_threads_from_argv():
    """BLAS thread caps must be set before numpy loads."""
    threads = None
    argv = sys.argv
    for i, a in enumerate(argv):
        if a == "--threads" and i + 1 < len(argv):
            threads = argv[i + 1]
        elif a.startswith("--threads="):
            threads = a.split("=", 1)[1]
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(threads)


def _fail(err):
    sys.stderr.write(json.dumps(err.to_json()) + "\n")
    sys.exit(err.exit_code)


def run_guarded(fn):
    from .errors import FracflowError

    try:
        fn()
    except FracflowError as e:
        _fail(e)


def common_options(fn):
    fn = click.option("--preset", default="desk", show_default=True,
                      help="Configuration preset (desk or paper).")(fn)
    fn = click.option("--config", "config_path", default=None, type=click.Path(),
                      help="JSON config overriding the preset.")(fn)
    fn = click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
                      help="Dotted-path config override (repeatable).")(fn)
    fn = click.option("--seed", default=None, type=int, help="Override config seed.")(fn)
    fn = click.option("--threads", default=None, type=int,
                      help="CPU thread cap for linear algebra.")(fn)
    return fn


def load_config(preset, config_path, overrides, seed):
    from .config import resolve_config

    cfg = resolve_config(preset, config_path, overrides)
    if seed is not None:
        cfg["seed"] = int(seed)
    return cfg


def announce(command, cfg, inputs):
    from .config import config_hash

    doc = {
        "command": command,
        "config_hash": config_hash(cfg)[:12],
        "inputs": {k: v[:12] for k, v in inputs.items()},
        "config": cfg,
    }
    click.echo(json.dumps(doc, sort_keys=True))


def _log_path(cfg, name):
    p = Path(cfg["paths"]["logs"])
    p.mkdir(parents=True, exist_ok=True)
    return p / f"{name}.jsonl"


def _stamp_path(artifact):
    return Path(str(artifact) + ".stamp.json")


def stamp_matches(artifact, payload) -> bool:
    sp = _stamp_path(artifact)
    if not Path(artifact).exists() or not sp.exists():
        return False
    try:
        return json.loads(sp.read_text()) == payload
    except json.JSONDecodeError:
        return False


def write_stamp(artifact, payload):
    _stamp_path(artifact).write_text(json.dumps(payload, indent=1, sort_keys=True))


@click.group(context_settings=CONTEXT_SETTINGS)
def cli():
    """Rigid-fragment reassembly: flow matching on SE(3) with fracture-aware
    point features."""


# -- data ---------------------------------------------------------------------


@cli.command("gen-toy")
@common_options
@click.option("--count", default=None, type=int, help="Number of problems.")
@click.option("--out", default=None, type=click.Path(), help="Dataset directory.")
@click.option("--lora", "lora_set", is_flag=True,
              help="Generate the held-out fine-tuning category instead of the main corpus.")
def gen_toy(preset, config_path, overrides, seed, threads, count, out, lora_set):
    """Generate a deterministic toy-fracture dataset."""

    def run():
        from .config import config_hash, tree_hash
        from .corpus import generate_toy_dataset

        cfg = load_config(preset, config_path, overrides, seed)
        data = cfg["data"]
        if lora_set:
            categories = [data["lora_category"]]
            n = count or (data["lora_train_count"] + data["lora_val_count"])
            root = Path(out or cfg["paths"]["lora_dataset"])
            val_fraction = data["lora_val_count"] / n if count is None else data["val_fraction"]
            gen_seed = cfg["seed"] + 1
        else:
            categories = data["categories"]
            n = count or data["count"]
            root = Path(out or cfg["paths"]["dataset"])
            val_fraction = data["val_fraction"]
            gen_seed = cfg["seed"]
        announce("gen-toy", cfg, {})
        manifest = generate_toy_dataset(
            root, n, gen_seed, categories=categories,
            points_per_object=data["points_per_object"],
            min_fragments=data["min_fragments"], max_fragments=data["max_fragments"],
            cuts=tuple(data["cuts"]), val_fraction=val_fraction,
            min_points=cfg["encoder"]["knn"] + 1,
        )
        click.echo(json.dumps({
            "dataset": str(root), "problems": len(manifest),
            "content_hash": tree_hash(root)[:12],
        }))

    run_guarded(run)


@cli.command("preprocess")
@common_options
@click.option("--source", required=True, type=click.Path(),
              help="JSON listing assemblies of mesh files in a shared frame.")
@click.option("--out", default=None, type=click.Path())
def preprocess(preset, config_path, overrides, seed, threads, source, out):
    """Sample and label user meshes (OBJ/PLY) into a dataset."""

    def run():
        from .config import file_hash, tree_hash
        from .corpus import preprocess_meshes
        from .errors import SchemaError
        from .meshio import load_mesh

        cfg = load_config(preset, config_path, overrides, seed)
        src = Path(source)
        if not src.exists():
            raise SchemaError(f"source manifest not found: {src}", path=src)
        doc = json.loads(src.read_text())
        assemblies = []
        for a in doc.get("assemblies", []):
            meshes = [load_mesh(src.parent / m) for m in a["meshes"]]
            assemblies.append({"id": a["id"], "category": a.get("category", ""), "meshes": meshes})
        announce("preprocess", cfg, {"source": file_hash(src)})
        root = Path(out or cfg["paths"]["dataset"])
        manifest = preprocess_meshes(
            root, assemblies, cfg["seed"],
            points_per_object=cfg["data"]["points_per_object"],
            val_fraction=cfg["data"]["val_fraction"],
            min_points=cfg["encoder"]["knn"] + 1,
        )
        click.echo(json.dumps({"dataset": str(root), "problems": len(manifest),
                               "content_hash": tree_hash(root)[:12]}))

    run_guarded(run)


# -- training -----------------------------------------------------------------


@cli.command("pretrain")
@common_options
@click.option("--dataset", default=None, type=click.Path())
@click.option("--out", default=None, type=click.Path(), help="Encoder checkpoint path.")
def pretrain_cmd(preset, config_path, overrides, seed, threads, dataset, out):
    """Fracture-segmentation pretraining of the point encoder."""

    def run():
        from .checkpoint import save_checkpoint
        from .config import encoder_config, tree_hash
        from .corpus import split_problems
        from .data import load_manifest
        from .encoder import pretrain
        from .manifold import derive_rng
        from .report import write_training_curve

        cfg = load_config(preset, config_path, overrides, seed)
        root = Path(dataset or cfg["paths"]["dataset"])
        manifest = load_manifest(root)
        announce("pretrain", cfg, {"dataset": tree_hash(root)})
        train_p, val_p = split_problems(manifest)
        enc_cfg = encoder_config(cfg)
        log_file = _log_path(cfg, "pretrain")
        arrays, log = pretrain(
            train_p, val_p, enc_cfg, derive_rng(cfg["seed"], "pretrain"),
            log_file=log_file, stop_f1=cfg["encoder"].get("stop_f1"),
        )
        ckpt = Path(out or Path(cfg["paths"]["checkpoints"]) / "encoder.ckpt")
        digest = save_checkpoint(ckpt, arrays, kind="encoder")
        write_training_curve(log_file, ckpt.parent / "pretrain_curve.png",
                             keys=("train_dice", "val_dice", "val_f1"))
        click.echo(json.dumps({"checkpoint": str(ckpt), "hash": digest[:12],
                               "best_val_f1": max((r["val_f1"] for r in log), default=None)}))

    run_guarded(run)


@cli.command("train")
@common_options
@click.option("--dataset", default=None, type=click.Path())
@click.option("--encoder", "encoder_path", default=None, type=click.Path())
@click.option("--out", default=None, type=click.Path(), help="Denoiser checkpoint path.")
def train_cmd(preset, config_path, overrides, seed, threads, dataset, encoder_path, out):
    """Flow-matching training of the pose denoiser (frozen encoder)."""

    def run():
        from .checkpoint import load_checkpoint, save_checkpoint
        from .config import denoiser_config, encoder_config, tree_hash
        from .corpus import split_problems
        from .data import load_manifest
        from .denoiser import train
        from .manifold import derive_rng
        from .report import write_training_curve

        cfg = load_config(preset, config_path, overrides, seed)
        root = Path(dataset or cfg["paths"]["dataset"])
        enc_path = Path(encoder_path or Path(cfg["paths"]["checkpoints"]) / "encoder.ckpt")
        enc_arrays, _, _, enc_hash = load_checkpoint(enc_path)
        manifest = load_manifest(root)
        announce("train", cfg, {"dataset": tree_hash(root), "encoder": enc_hash})
        train_p, val_p = split_problems(manifest)
        log_file = _log_path(cfg, "train")
        arrays, log = train(
            train_p, val_p[: min(8, len(val_p))], enc_arrays, encoder_config(cfg),
            denoiser_config(cfg), derive_rng(cfg["seed"], "fmtrain"), log_file=log_file,
        )
        ckpt = Path(out or Path(cfg["paths"]["checkpoints"]) / "denoiser.ckpt")
        digest = save_checkpoint(ckpt, arrays, kind="denoiser", linked_hash=enc_hash)
        write_training_curve(log_file, ckpt.parent / "train_curve.png")
        click.echo(json.dumps({"checkpoint": str(ckpt), "hash": digest[:12],
                               "final_fm_loss": log[-1]["fm_loss"] if log else None}))

    run_guarded(run)


@cli.command("finetune")
@common_options
@click.option("--dataset", default=None, type=click.Path(), help="Domain dataset (train split used).")
@click.option("--encoder", "encoder_path", default=None, type=click.Path())
@click.option("--denoiser", "denoiser_path", default=None, type=click.Path())
@click.option("--out", default=None, type=click.Path(), help="Adapter checkpoint path.")
def finetune_cmd(preset, config_path, overrides, seed, threads, dataset, encoder_path, denoiser_path, out):
    """Low-rank adapter fine-tuning on a small domain dataset."""

    def run():
        from .checkpoint import save_checkpoint
        from .assembler import load_checkpoints
        from .config import denoiser_config, encoder_config, lora_config, tree_hash
        from .corpus import split_problems
        from .data import load_manifest
        from .denoiser import apply_lora, merge_lora, train
        from .encoder import params_from_arrays
        from .manifold import derive_rng

        cfg = load_config(preset, config_path, overrides, seed)
        root = Path(dataset or cfg["paths"]["lora_dataset"])
        enc_path = Path(encoder_path or Path(cfg["paths"]["checkpoints"]) / "encoder.ckpt")
        den_path = Path(denoiser_path or Path(cfg["paths"]["checkpoints"]) / "denoiser.ckpt")
        enc_arrays, den_arrays, enc_hash, den_hash = load_checkpoints(enc_path, den_path)
        manifest = load_manifest(root)
        announce("finetune", cfg, {"dataset": tree_hash(root), "encoder": enc_hash, "denoiser": den_hash})
        train_p, val_p = split_problems(manifest)

        den_cfg = denoiser_config(cfg)
        lora_cfg = lora_config(cfg)
        params = params_from_arrays(den_arrays, trainable=True)
        rng = derive_rng(cfg["seed"], "finetune")
        trainable = apply_lora(params, den_cfg, lora_cfg, rng)
        tune_cfg = denoiser_config(cfg)
        tune_cfg.lr = lora_cfg.lr
        tune_cfg.epochs = lora_cfg.epochs
        log_file = _log_path(cfg, "finetune")
        arrays, log = train(
            train_p, val_p[: min(4, len(val_p))], enc_arrays, encoder_config(cfg),
            tune_cfg, rng, log_file=log_file, params=params, lora=lora_cfg, trainable=trainable,
        )
        delta = {k: v for k, v in arrays.items() if ".lora." in k or k.startswith(("den.rot.", "den.trans."))}
        ckpt = Path(out or Path(cfg["paths"]["checkpoints"]) / "lora.ckpt")
        digest = save_checkpoint(ckpt, delta, kind="lora", linked_hash=den_hash)
        merged = merge_lora(arrays, lora_cfg)
        merged_path = ckpt.with_name(ckpt.stem + "_merged.ckpt")
        merged_digest = save_checkpoint(merged_path, merged, kind="denoiser", linked_hash=enc_hash)
        click.echo(json.dumps({
            "adapter": str(ckpt), "adapter_hash": digest[:12],
            "merged": str(merged_path), "merged_hash": merged_digest[:12],
            "final_fm_loss": log[-1]["fm_loss"] if log else None,
        }))

    run_guarded(run)


# -- inference / evaluation ----------------------------------------------------


@cli.command("assemble")
@common_options
@click.option("--dataset", default=None, type=click.Path())
@click.option("--encoder", "encoder_path", default=None, type=click.Path())
@click.option("--denoiser", "denoiser_path", default=None, type=click.Path())
@click.option("--out", default=None, type=click.Path(), help="Results directory.")
@click.option("--split", default="val", show_default=True)
def assemble_cmd(preset, config_path, overrides, seed, threads, dataset, encoder_path,
                 denoiser_path, out, split):
    """Two-session flow-matching inference over a dataset split."""

    def run():
        from .assembler import assemble, load_checkpoints, save_result
        from .config import denoiser_config, encoder_config, inference_config, tree_hash
        from .data import load_manifest, load_problems
        from .manifold import derive_rng

        cfg = load_config(preset, config_path, overrides, seed)
        root = Path(dataset or cfg["paths"]["dataset"])
        enc_path = Path(encoder_path or Path(cfg["paths"]["checkpoints"]) / "encoder.ckpt")
        den_path = Path(denoiser_path or Path(cfg["paths"]["checkpoints"]) / "denoiser.ckpt")
        enc_arrays, den_arrays, enc_hash, den_hash = load_checkpoints(enc_path, den_path)
        manifest = load_manifest(root)
        announce("assemble", cfg, {"dataset": tree_hash(root), "encoder": enc_hash, "denoiser": den_hash})
        problems = load_problems(manifest, split)
        infer_cfg = inference_config(cfg)
        out_dir = Path(out or cfg["paths"]["results"])
        log_file = _log_path(cfg, "assemble")
        with open(log_file, "a") as logf:
            for problem in problems:
                rng = derive_rng(infer_cfg.seed, "assemble", problem.id)
                result = assemble(problem, enc_arrays, encoder_config(cfg), den_arrays,
                                  denoiser_config(cfg), infer_cfg, rng=rng)
                save_result(result, out_dir / f"{problem.id}.json")
                logf.write(json.dumps({"id": problem.id, "wall_ms": result.wall_ms}) + "\n")
        click.echo(json.dumps({"results": str(out_dir), "objects": len(problems)}))

    run_guarded(run)


@cli.command("eval")
@common_options
@click.option("--dataset", default=None, type=click.Path())
@click.option("--results", "results_dir", default=None, type=click.Path())
@click.option("--out", default=None, type=click.Path(), help="Report directory.")
@click.option("--split", default="val", show_default=True)
def eval_cmd(preset, config_path, overrides, seed, threads, dataset, results_dir, out, split):
    """Score results against ground truth; writes JSON, table, CSV, figures."""

    def run():
        from .assembler import load_result
        from .config import metric_config, tree_hash
        from .data import load_manifest, load_problems
        from .errors import IoError
        from .metrics import evaluate_corpus
        from .report import report_table, write_report_files

        cfg = load_config(preset, config_path, overrides, seed)
        root = Path(dataset or cfg["paths"]["dataset"])
        rdir = Path(results_dir or cfg["paths"]["results"])
        if not rdir.exists():
            raise IoError(f"results directory not found: {rdir}", path=rdir)
        manifest = load_manifest(root)
        announce("eval", cfg, {"dataset": tree_hash(root), "results": tree_hash(rdir)})
        problems = load_problems(manifest, split)
        results = []
        for p in problems:
            rpath = rdir / f"{p.id}.json"
            if rpath.exists():
                results.append(load_result(rpath))
        report = evaluate_corpus(results, problems, metric_config(cfg))
        out_dir = Path(out or cfg["paths"]["reports"])
        paths = write_report_files(report, out_dir)
        click.echo(report_table(report))
        click.echo(json.dumps({"report": str(paths["json"]), "objects": len(results),
                               "pa": report.part_accuracy_pct,
                               "rmse_r_geodesic": report.rmse_r_geodesic_deg}))

    run_guarded(run)


@cli.command("export-ply")
@common_options
@click.option("--result", "result_path", required=True, type=click.Path())
@click.option("--dataset", default=None, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--gt-overlay", is_flag=True, help="Add ground-truth placement in gray.")
def export_ply_cmd(preset, config_path, overrides, seed, threads, result_path, dataset, out, gt_overlay):
    """Merge a result's posed fragments into a color-coded PLY point cloud."""

    def run():
        import numpy as np

        from .assembler import load_result
        from .data import load_problem
        from .errors import IoError
        from .meshio import write_ply_points

        cfg = load_config(preset, config_path, overrides, seed)
        rpath = Path(result_path)
        if not rpath.exists():
            raise IoError(f"result not found: {rpath}", path=rpath)
        result = load_result(rpath)
        root = Path(dataset or cfg["paths"]["dataset"])
        problem = load_problem(root / result.problem_id)
        announce("export-ply", cfg, {})

        palette = np.array([
            [31, 119, 180], [255, 127, 14], [44, 160, 44], [214, 39, 40],
            [148, 103, 189], [140, 86, 75], [227, 119, 194], [127, 127, 127],
            [188, 189, 34], [23, 190, 207],
        ], dtype=np.uint8)
        pts, colors = [], []
        for i, (frag, pose) in enumerate(zip(problem.fragments, result.poses)):
            placed = pose.apply(frag.points.astype(np.float64))
            pts.append(placed)
            colors.append(np.tile(palette[i % len(palette)], (len(placed), 1)))
        if gt_overlay:
            for frag, pose in zip(problem.fragments, problem.gt_poses):
                placed = pose.apply(frag.points.astype(np.float64))
                pts.append(placed)
                colors.append(np.tile(np.uint8([90, 90, 90]), (len(placed), 1)))
        write_ply_points(out, np.concatenate(pts), np.concatenate(colors))
        click.echo(json.dumps({"ply": str(out), "vertices": int(sum(len(p) for p in pts))}))

    run_guarded(run)


# -- pipeline -------------------------------------------------------------------


@cli.command("pipeline")
@common_options
@click.option("--force", is_flag=True, help="Re-run stages even when stamps match.")
def pipeline_cmd(preset, config_path, overrides, seed, threads, force):
    """gen-toy -> pretrain -> train -> assemble -> eval, with stage skipping."""

    def run():
        from .checkpoint import load_checkpoint, save_checkpoint
        from .assembler import assemble, load_checkpoints, save_result
        from .config import (
            canonical_json, config_hash, denoiser_config, encoder_config,
            inference_config, metric_config, tree_hash,
        )
        from .corpus import generate_toy_dataset, split_problems
        from .data import load_manifest, load_problems
        from .denoiser import train as fm_train
        from .encoder import pretrain
        from .manifold import derive_rng
        from .metrics import evaluate_corpus
        from .report import report_table, write_report_files, write_training_curve

        cfg = load_config(preset, config_path, overrides, seed)
        announce("pipeline", cfg, {})
        paths = cfg["paths"]
        dataset_dir = Path(paths["dataset"])
        ckpt_dir = Path(paths["checkpoints"])
        results_dir = Path(paths["results"])
        reports_dir = Path(paths["reports"])

        # stage 1: data
        data_stamp = {"stage": "gen-toy", "config": config_hash({"data": cfg["data"], "seed": cfg["seed"]})}
        if force or not stamp_matches(dataset_dir / "manifest.json", data_stamp):
            generate_toy_dataset(
                dataset_dir, cfg["data"]["count"], cfg["seed"],
                categories=cfg["data"]["categories"],
                points_per_object=cfg["data"]["points_per_object"],
                min_fragments=cfg["data"]["min_fragments"],
                max_fragments=cfg["data"]["max_fragments"],
                cuts=tuple(cfg["data"]["cuts"]), val_fraction=cfg["data"]["val_fraction"],
                min_points=cfg["encoder"]["knn"] + 1,
            )
            write_stamp(dataset_dir / "manifest.json", data_stamp)
            click.echo(json.dumps({"stage": "gen-toy", "status": "built"}))
        else:
            click.echo(json.dumps({"stage": "gen-toy", "status": "skipped"}))
        dataset_hash = tree_hash(dataset_dir)
        manifest = load_manifest(dataset_dir)
        train_p, val_p = split_problems(manifest)

        # stage 2: pretrain
        enc_ckpt = ckpt_dir / "encoder.ckpt"
        enc_stamp = {"stage": "pretrain", "dataset": dataset_hash,
                     "config": config_hash({"encoder": cfg["encoder"], "seed": cfg["seed"]})}
        if force or not stamp_matches(enc_ckpt, enc_stamp):
            log_file = _log_path(cfg, "pretrain")
            arrays, _ = pretrain(
                train_p, val_p, encoder_config(cfg), derive_rng(cfg["seed"], "pretrain"),
                log_file=log_file, stop_f1=cfg["encoder"].get("stop_f1"),
            )
            save_checkpoint(enc_ckpt, arrays, kind="encoder")
            write_training_curve(log_file, ckpt_dir / "pretrain_curve.png",
                                 keys=("train_dice", "val_dice", "val_f1"))
            write_stamp(enc_ckpt, enc_stamp)
            click.echo(json.dumps({"stage": "pretrain", "status": "built"}))
        else:
            click.echo(json.dumps({"stage": "pretrain", "status": "skipped"}))
        enc_arrays, _, _, enc_hash = load_checkpoint(enc_ckpt)

        # stage 3: flow-matching training
        den_ckpt = ckpt_dir / "denoiser.ckpt"
        den_stamp = {"stage": "train", "dataset": dataset_hash, "encoder": enc_hash,
                     "config": config_hash({"denoiser": cfg["denoiser"], "seed": cfg["seed"]})}
        if force or not stamp_matches(den_ckpt, den_stamp):
            log_file = _log_path(cfg, "train")
            arrays, _ = fm_train(
                train_p, val_p[: min(8, len(val_p))], enc_arrays, encoder_config(cfg),
                denoiser_config(cfg), derive_rng(cfg["seed"], "fmtrain"), log_file=log_file,
            )
            save_checkpoint(den_ckpt, arrays, kind="denoiser", linked_hash=enc_hash)
            write_training_curve(log_file, ckpt_dir / "train_curve.png")
            write_stamp(den_ckpt, den_stamp)
            click.echo(json.dumps({"stage": "train", "status": "built"}))
        else:
            click.echo(json.dumps({"stage": "train", "status": "skipped"}))

        # stage 4: assemble the validation split
        enc_arrays, den_arrays, enc_hash, den_hash = load_checkpoints(enc_ckpt, den_ckpt)
        infer_cfg = inference_config(cfg)
        asm_stamp = {"stage": "assemble", "denoiser": den_hash,
                     "config": config_hash({"inference": cfg["inference"]})}
        if force or not stamp_matches(results_dir / "done", asm_stamp):
            results_dir.mkdir(parents=True, exist_ok=True)
            for problem in val_p:
                rng = derive_rng(infer_cfg.seed, "assemble", problem.id)
                result = assemble(problem, enc_arrays, encoder_config(cfg), den_arrays,
                                  denoiser_config(cfg), infer_cfg, rng=rng)
                save_result(result, results_dir / f"{problem.id}.json")
            (results_dir / "done").write_text("ok\n")
            write_stamp(results_dir / "done", asm_stamp)
            click.echo(json.dumps({"stage": "assemble", "status": "built", "objects": len(val_p)}))
        else:
            click.echo(json.dumps({"stage": "assemble", "status": "skipped"}))

        # stage 5: evaluate
        from .assembler import load_result

        results = [load_result(results_dir / f"{p.id}.json") for p in val_p]
        report = evaluate_corpus(results, val_p, metric_config(cfg))
        write_report_files(report, reports_dir)
        click.echo(report_table(report))
        click.echo(json.dumps({
            "stage": "eval", "pa": report.part_accuracy_pct,
            "rmse_r_geodesic": report.rmse_r_geodesic_deg,
            "rmse_r": report.rmse_r_deg, "rmse_t": report.rmse_t, "chamfer": report.chamfer,
        }))

    run_guarded(run)


def main():
    _set_threads_from_argv()
    cli(prog_name="fracflow")


if __name__ == "__main__":
    main()
