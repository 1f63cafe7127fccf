"""Command-line entry point.

Exit codes: 0 success, 2 usage error, 3 config error, 4 planning error,
5 generator error, 6 remote backend error, 7 frame budget exhausted,
8 input/output error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness as H
from . import metrics as M
from . import preference_opt as P
from .kinematics import MotionClip
from .scene import MeshParseError, load_scene


def _apply_flags(cfg: H.ScenarioConfig, args) -> H.ScenarioConfig:
    changes = {}
    if getattr(args, "no_critic", False):
        changes["critic"] = False
    if getattr(args, "no_planner", False):
        changes["planner"] = False
    if getattr(args, "backend", None):
        changes["backend"] = args.backend
    if getattr(args, "endpoint", None):
        changes["endpoint"] = args.endpoint
    try:
        return replace(cfg, **changes) if changes else cfg
    except H.ConfigError:
        raise
    except ValueError as e:
        raise H.ConfigError(str(e)) from None


def _out(args) -> Path:
    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def save_clip(path, clip: MotionClip) -> None:
    np.savez(path, root=clip.root, yaw=clip.yaw, joint_angles=clip.joint_angles, shape=clip.shape,
             fps=np.array(clip.fps))


def load_clip(path) -> MotionClip:
    with np.load(path) as z:
        return MotionClip(z["root"], z["yaw"], z["joint_angles"], z["shape"], fps=int(z["fps"]))


def _write_run(out: Path, stem: str, tr: H.RunTrace) -> None:
    (out / f"{stem}.trace.jsonl").write_text(tr.to_jsonl())
    if tr.graph is not None:
        from .graph import export_jsonl
        (out / f"{stem}.graph.jsonl").write_text(export_jsonl(tr.graph))
    if tr.path_clip is not None:
        save_clip(out / f"{stem}.clip.npz", tr.path_clip)
    (out / f"{stem}.report.json").write_text(M.to_json(tr.report.to_dict()) + "\n")
    (out / f"{stem}.report.csv").write_text(M.to_csv([tr.report.row()]))


def cmd_run(args) -> int:
    cfg = _apply_flags(H.load_config(args.config), args)
    out = _out(args)
    seeds = [args.seed] if args.seed is not None else cfg.seeds
    code = 0
    for s in seeds:
        tr = H.run_scenario(cfg, s)
        _write_run(out, f"{cfg.id}.{cfg.ablation}.seed{s}", tr)
        print(f"{cfg.id} seed={s} status={tr.status} goal_completion={tr.report.goal_completion:.3f} "
              f"prunings={tr.report.prunings} frames={tr.report.frames}")
        code = code or H.EXIT_CODES[tr.status]
    return code


def cmd_suite(args) -> int:
    files = sorted(Path(args.directory).glob("*.json"))
    if not files:
        raise H.ConfigError(f"no scenario configs in {args.directory}")
    cfgs = [_apply_flags(H.load_config(f), args) for f in files]
    seeds = [args.seed] if args.seed is not None else (list(range(args.seeds)) if args.seeds else None)
    res = H.run_suite(cfgs, seeds, tuple(args.ablations))
    out = _out(args)
    (out / "suite.csv").write_text(res.csv())
    (out / "suite.json").write_text(M.to_json({"runs": [r.to_dict() for r in res.reports],
                                               "aggregate": res.aggregate}) + "\n")
    for row in res.aggregate:
        print(f"{row['ablation']}: runs={row['seed']} goal_completion={row['goal_completion']:.3f} "
              f"p_score={row['p_score']:.4f} fs={row['fs']:.4f}")
    return 0


def cmd_obstacles(args) -> int:
    cfg = _apply_flags(H.load_config(args.config), args)
    out = _out(args)
    seeds = [args.seed] if args.seed is not None else cfg.seeds
    rows = []
    for s in seeds:
        res = H.obstacle_experiment(cfg, s, aware=not args.unaware)
        stem = f"{cfg.id}.{'unaware' if args.unaware else 'aware'}.seed{s}"
        _write_run(out, stem + ".with", res.with_trace)
        _write_run(out, stem + ".without", res.without_trace)
        rows.append({"scenario": cfg.id, "seed": s, "aware": not args.unaware, "pos": res.pos, "rds": res.rds})
        print(f"{cfg.id} seed={s} pos={res.pos:.4f} rds={res.rds:.4f}")
    (out / f"{cfg.id}.obstacles.json").write_text(M.to_json(rows) + "\n")
    return 0


def cmd_dpo(args) -> int:
    preset = P.LARGE_BETA_PRESET if args.preset == "large-beta" else P.TOY_PRESET
    cfg = P.DpoConfig(beta=args.beta or preset["beta"], lr=args.lr or preset["lr"], steps=args.steps,
                      seed=args.seed or 0, reference=args.reference)
    train = P.synth_pairs(args.pairs, cfg.seed)
    held = P.synth_pairs(args.pairs, cfg.seed + 1)
    model = P.DenoiserModel.init(cfg.seed)
    before = P.eval_preference_accuracy(model, held, cfg)
    res = P.train(model, train, cfg)
    after = P.eval_preference_accuracy(res.model, held, cfg)
    out = _out(args)
    P.save_checkpoint(out / "denoiser.ckpt", res.model, seed=cfg.seed, steps=res.steps)
    (out / "dpo_trace.csv").write_text(P.trace_csv(res.trace))
    summary = {"beta": cfg.beta, "lr": cfg.lr, "steps": cfg.steps, "pairs": args.pairs, "seed": cfg.seed,
               "reference": cfg.reference, "accuracy_before": before, "accuracy_after": after,
               "final_loss": res.trace[-1] if res.trace else None}
    (out / "dpo_summary.json").write_text(M.to_json(summary) + "\n")
    print(f"held-out preference accuracy {before:.3f} -> {after:.3f} after {cfg.steps} steps")
    return 0


def cmd_metrics(args) -> int:
    clip = load_clip(args.clip)
    result = {"fs": M.foot_sliding(clip) if len(clip) > 1 else 0.0}
    if args.scene:
        scene = load_scene(args.scene)
        warns: list = []
        result["p_score"] = M.penetration_score(clip, scene, report=warns)
        if args.obstacles:
            result["pos"] = M.penetration_obstacle_score(clip, scene, args.obstacles, report=warns)
        result["warnings"] = warns
    if args.against:
        others = [load_clip(p) for p in args.against]
        result["rds"] = M.reaction_divergence(clip, others[0])
        if len(others) >= 1:
            result["diversity"] = M.diversity([clip] + others)
    text = M.to_json(result)
    if args.out_dir:
        (_out(args) / "metrics.json").write_text(text + "\n")
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hsigraph", description="Closed-loop human-scene interaction simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("config", help="scenario config (JSON)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--no-critic", action="store_true", help="append clips verbatim")
        sp.add_argument("--no-planner", action="store_true", help="one free-text action per milestone")
        sp.add_argument("--backend", choices=["rule", "remote"], default=None)
        sp.add_argument("--endpoint", default=None)
        sp.add_argument("--out-dir", default="out")

    sp = sub.add_parser("run", help="run one scenario")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("suite", help="run every scenario in a directory")
    sp.add_argument("directory")
    common(sp, config=False)
    sp.add_argument("--seeds", type=int, default=None, help="use seeds 0..N-1")
    sp.add_argument("--ablations", nargs="+", default=["full", "no_critic", "no_planner"],
                    choices=["full", "no_critic", "no_planner"])
    sp.set_defaults(func=cmd_suite)

    sp = sub.add_parser("obstacles", help="paired with/without-obstacle runs")
    common(sp)
    sp.add_argument("--unaware", action="store_true", help="agents ignore injected obstacles")
    sp.set_defaults(func=cmd_obstacles)

    sp = sub.add_parser("dpo", help="train and evaluate the toy preference-optimized denoiser")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--pairs", type=int, default=200)
    sp.add_argument("--steps", type=int, default=500)
    sp.add_argument("--preset", choices=["toy", "large-beta"], default="toy")
    sp.add_argument("--beta", type=float, default=None)
    sp.add_argument("--lr", type=float, default=None)
    sp.add_argument("--reference", action="store_true", help="reference-relative losses")
    sp.add_argument("--out-dir", default="out")
    sp.set_defaults(func=cmd_dpo)

    sp = sub.add_parser("metrics", help="metrics for a stored clip (.npz)")
    sp.add_argument("clip")
    sp.add_argument("--scene", default=None, help="MESHv1 scene for penetration")
    sp.add_argument("--obstacles", nargs="*", default=None, help="object tags for POS")
    sp.add_argument("--against", nargs="*", default=None, help="clips for RDS / diversity")
    sp.add_argument("--out-dir", default=None)
    sp.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    from .agents import PlanningError
    from .generator import GeneratorError
    from .remote import BackendError
    try:
        return args.func(args)
    except (H.ConfigError, MeshParseError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return H.EXIT_CODES["config"]
    except PlanningError as e:
        print(f"planning error: {e}", file=sys.stderr)
        return H.EXIT_CODES["planning"]
    except GeneratorError as e:
        print(f"generator error: {e}", file=sys.stderr)
        return H.EXIT_CODES["generator"]
    except BackendError as e:
        print(f"backend error: {e}", file=sys.stderr)
        return H.EXIT_CODES["backend"]
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return H.EXIT_CODES["io"]


if __name__ == "__main__":
    sys.exit(main())
