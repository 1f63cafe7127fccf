import copy
import json
from dataclasses import replace

import numpy as np
import pytest

from hsigraph import cli
from hsigraph import harness as H
from hsigraph import metrics as M
from hsigraph.generator import NoiseModel

from conftest import SCENARIOS

BASE = SCENARIOS / "obstacles"

CORRIDOR = {
    "schema": "hsigraph-scenario/1",
    "id": "unit_corridor",
    "scene": "../meshes/open_room.mesh",
    "bounds_xy": [[0.0, 0.0], [9.0, 5.0]],
    "start": {"position": [1.0, 2.5], "yaw_deg": 0.0},
    "task": "walk to the east wall",
    "subgoals": [{"position": [7.5, 2.5], "label": "arrive east"}],
    "seeds": [0, 1, 2, 3, 4],
    "frame_budget": 3000,
}


def config(**changes):
    d = copy.deepcopy(CORRIDOR)
    d.update(changes)
    return H.config_from_dict(d, BASE)


def write_config(tmp_path, name="c.json", **changes):
    d = copy.deepcopy(CORRIDOR)
    d.update(changes)
    d["scene"] = str((BASE / d["scene"]).resolve())
    p = tmp_path / name
    p.write_text(json.dumps(d))
    return p


# ---------------------------------------------------------------- config


def test_all_fixture_configs_load():
    files = sorted(SCENARIOS.glob("*/*.json"))
    assert len(files) == 12
    for f in files:
        cfg = H.load_config(f)
        assert "not a SceneBench instance" in cfg.note
        assert cfg.seeds == [0, 1, 2, 3, 4]


@pytest.mark.parametrize("changes, match", [
    ({"subgoals": []}, "subgoals"),
    ({"frame_budget": 0}, "frame_budget"),
    ({"schema": "hsigraph-scenario/0"}, "schema"),
    ({"backend": "remote"}, "endpoint"),
    ({"scene": "../meshes/nope.mesh"}, "does not exist"),
    ({"subgoals": [{"position": [20.0, 2.5], "label": "arrive"}]}, "outside"),
])
def test_config_errors(changes, match):
    with pytest.raises(H.ConfigError, match=match):
        config(**changes)


def test_ablation_names():
    cfg = config()
    assert cfg.ablation == "full"
    assert replace(cfg, critic=False).ablation == "no_critic"
    assert replace(cfg, planner=False, obstacle_aware=False).ablation == "no_planner+obstacle_unaware"


# ---------------------------------------------------------------- run loop


def test_zero_noise_corridor():
    tr = H.run_scenario(config(), 0)
    assert tr.status == "ok"
    assert tr.report.goal_completion == 1.0
    assert tr.count("pruning") == 0
    assert tr.count("milestone_reached") == 1
    assert all(e["verdict"] == "accept" for e in tr.events if e["event"] == "critique")


def test_same_seed_same_bytes():
    cfg = config(noise={"trans_sigma": 0.05, "yaw_sigma": 0.2, "p_extra": 0.5})
    a, b = H.run_scenario(cfg, 3), H.run_scenario(cfg, 3)
    assert a.to_jsonl() == b.to_jsonl()
    assert a.path_clip.equals(b.path_clip)
    assert a.to_jsonl() != H.run_scenario(cfg, 4).to_jsonl()


def test_event_timestamps_monotone_and_prunings_follow_generation():
    cfg = config(noise={"yaw_sigma": 0.3, "p_extra": 0.5})
    for s in range(5):
        tr = H.run_scenario(cfg, s)
        ts = [e["t"] for e in tr.events]
        assert ts == sorted(ts)
        generated = set()
        for e in tr.events:
            if e["event"] == "clip_generated":
                generated.add(e["gen"])
            if e["event"] == "pruning":
                assert e["gen"] in generated


def test_every_extra_clip_is_pruned():
    cfg = config(noise={"p_extra": 1.0})
    tr = H.run_scenario(cfg, 0)
    extra = [e["gen"] for e in tr.events if e["event"] == "clip_generated" and e["extra"] > 0]
    pruned = {e["gen"] for e in tr.events if e["event"] == "pruning"}
    assert extra and set(extra) <= pruned
    assert tr.report.goal_completion == 1.0


@pytest.mark.parametrize("budget", [1, 37, 100, 250])
def test_budget_never_exceeded(budget):
    cfg = config(frame_budget=budget, noise={"yaw_sigma": 0.2, "p_extra": 0.5})
    tr = H.run_scenario(cfg, 1)
    assert tr.report.frames <= budget
    assert tr.path_clip.duration <= budget
    assert tr.status == "budget"
    assert tr.count("budget_exhausted") == 1


def test_critic_off_appends_verbatim_and_keeps_planning():
    noisy = {"yaw_sigma": 0.15, "p_extra": 0.3}
    on = H.run_scenario(config(noise=noisy), 2)
    off = H.run_scenario(config(noise=noisy, critic=False), 2)
    assert off.count("critique") == off.count("pruning") == off.count("correction") == 0
    plans_on = [e for e in on.events if e["event"] == "plan_issued"]
    plans_off = [e for e in off.events if e["event"] == "plan_issued"]
    strip = lambda e: {k: v for k, v in e.items() if k not in ("seq", "t")}
    assert strip(plans_on[0]) == strip(plans_off[0]) and strip(plans_on[1]) == strip(plans_off[1])
    gens = [e["frames"] for e in off.events if e["event"] == "clip_generated"]
    assert off.path_clip.duration == sum(gens)


def test_planner_off_falls_back_to_straight_walk():
    tr = H.run_scenario(config(planner=False), 0)
    assert tr.count("fallback") >= 1
    verbs = [e["verbs"] for e in tr.events if e["event"] == "plan_issued" and e["kind"] == "chain"]
    assert verbs == [["custom_text"]]
    assert tr.report.goal_completion == 0.0   # one 3 s unit cannot cover 6.5 m


def test_planning_error_is_recorded():
    tr = H.run_scenario(config(subgoals=[{"position": [4.5, 2.5], "label": "juggle"}]), 0)
    assert tr.status == "planning"
    assert tr.events[-1]["event"] == "error"


# ---------------------------------------------------------------- suite


def test_suite_counts_and_means():
    cfgs = [config(id=f"c{i}", subgoals=[{"position": [3.0 + i, 2.5], "label": "arrive"}],
                   noise={"yaw_sigma": 0.1, "p_extra": 0.2}) for i in range(4)]
    res = H.run_suite(cfgs, seeds=[0, 1, 2, 3, 4])
    assert len(res.reports) == 20
    assert [r["ablation"] for r in res.aggregate] == ["full"]
    for col in ("p_score", "fs", "goal_completion", "diversity"):
        vals = [getattr(r, col) for r in res.reports]
        assert res.aggregate[0][col] == pytest.approx(float(np.mean(vals)), abs=1e-15)
    lines = res.csv().strip().split("\n")
    assert len(lines) == 1 + 20 + 1


def test_suite_ablation_rows():
    res = H.run_suite([config()], seeds=[0, 1], ablations=("full", "no_critic"))
    assert [r["ablation"] for r in res.aggregate] == ["full", "no_critic"]
    res = H.run_suite([config()], seeds=[0], ablations=("full", "no_critic", "no_planner"), diversity=False)
    assert [r["ablation"] for r in res.aggregate] == ["full", "no_critic", "no_planner"]
    with pytest.raises(H.ConfigError):
        H.run_suite([config()], ablations=("no_such",))


def test_zero_noise_diversity_collapses():
    res = H.run_suite([config()], seeds=[0, 1, 2])
    assert res.aggregate[0]["diversity"] == 0.0


# ---------------------------------------------------------------- obstacles

OBSTACLE_NOISE = {"trans_sigma": 0.02, "yaw_sigma": 0.05, "p_extra": 0.1}


def test_far_obstacle_leaves_run_untouched():
    cfg = config(noise=OBSTACLE_NOISE,
                 obstacles=[{"tag": "crate", "box": [0.4, 0.4, 0.4], "translation": [4.5, 4.6, 0.0]}])
    for s in range(3):
        res = H.obstacle_experiment(cfg, s)
        assert res.rds == pytest.approx(0.0, abs=1e-12)
        assert res.pos == 0.0


def test_no_obstacle_twin_is_identical():
    cfg = config(noise=OBSTACLE_NOISE, obstacles=[{"tag": "p", "box": [0.4, 0.4, 0.3], "translation": [4.5, 2.5, 0]}])
    a = H.run_scenario(cfg, 2, with_obstacles=False)
    b = H.run_scenario(cfg, 2, with_obstacles=False)
    assert M.reaction_divergence(a.path_clip, b.path_clip) == 0.0


def test_obstacle_on_path_is_stepped_over():
    cfg = config(noise=OBSTACLE_NOISE, obstacles=[{"tag": "p", "box": [0.4, 0.4, 0.3], "translation": [4.5, 2.5, 0]}])
    res = H.obstacle_experiment(cfg, 0)
    verbs = [e["verb"] for e in res.with_trace.events if e["event"] == "clip_generated"]
    assert "step_over" in verbs
    assert res.rds > 0.05 and res.pos <= 0.01
    unaware = H.obstacle_experiment(cfg, 0, aware=False)
    assert "step_over" not in [e["verb"] for e in unaware.with_trace.events if e["event"] == "clip_generated"]
    with pytest.raises(H.ConfigError):
        H.obstacle_experiment(config(), 0)


def test_late_trigger_injects_mid_run():
    cfg = config(obstacles=[{"tag": "p", "box": [0.4, 0.4, 0.3], "translation": [5.0, 2.5, 0],
                             "trigger": {"within": 2.0}}])
    tr = H.run_scenario(cfg, 0)
    inj = [e for e in tr.events if e["event"] == "obstacle_injected"]
    assert len(inj) == 1 and inj[0]["t"] > 0
    assert tr.report.goal_completion == 1.0


# ---------------------------------------------------------------- CLI


def test_cli_run_and_metrics(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    assert cli.main(["run", str(cfg), "--seed", "0", "--out-dir", str(out)]) == 0
    stem = out / "unit_corridor.full.seed0"
    for ext in (".trace.jsonl", ".graph.jsonl", ".clip.npz", ".report.json", ".report.csv"):
        assert (stem.parent / (stem.name + ext)).exists()
    assert cli.main(["run", str(cfg), "--seed", "0", "--no-critic", "--out-dir", str(out)]) == 0
    assert (out / "unit_corridor.no_critic.seed0.trace.jsonl").exists()
    clip = str(out / "unit_corridor.full.seed0.clip.npz")
    other = str(out / "unit_corridor.no_critic.seed0.clip.npz")
    capsys.readouterr()
    assert cli.main(["metrics", clip, "--scene", str(BASE / "../meshes/open_room.mesh"), "--against", other]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["rds"] == 0.0 and result["p_score"] == 0.0


def test_cli_suite_obstacles_dpo(tmp_path):
    d = tmp_path / "cfgs"
    d.mkdir()
    write_config(d, "a.json", id="a")
    write_config(d, "b.json", id="b", obstacles=[{"tag": "p", "box": [0.4, 0.4, 0.3], "translation": [4.5, 2.5, 0]}])
    out = tmp_path / "out"
    assert cli.main(["suite", str(d), "--seeds", "2", "--ablations", "full", "no_critic", "--out-dir", str(out)]) == 0
    rows = (out / "suite.csv").read_text().strip().split("\n")
    assert len(rows) == 1 + 8 + 2
    assert cli.main(["obstacles", str(d / "b.json"), "--seed", "1", "--out-dir", str(out)]) == 0
    assert json.loads((out / "b.obstacles.json").read_text())[0]["seed"] == 1
    assert cli.main(["dpo", "--pairs", "20", "--steps", "5", "--out-dir", str(out)]) == 0
    assert (out / "denoiser.ckpt").exists() and (out / "dpo_trace.csv").exists()


def test_cli_exit_codes(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["run", str(bad)]) == H.EXIT_CODES["config"]
    cfg = write_config(tmp_path, "p.json", subgoals=[{"position": [4.5, 2.5], "label": "juggle"}])
    assert cli.main(["run", str(cfg), "--seed", "0", "--out-dir", str(tmp_path / "o")]) == H.EXIT_CODES["planning"]
    cfg = write_config(tmp_path, "b.json", frame_budget=20)
    assert cli.main(["run", str(cfg), "--seed", "0", "--out-dir", str(tmp_path / "o")]) == H.EXIT_CODES["budget"]
    assert cli.main(["run", str(write_config(tmp_path)), "--backend", "remote", "--seed", "0",
                     "--out-dir", str(tmp_path / "o")]) == H.EXIT_CODES["config"]
    with pytest.raises(SystemExit):
        cli.main(["run"])
