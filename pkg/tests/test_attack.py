import json

import numpy as np
import pytest

from depthattack.attack import (
    AttackConfig,
    evaluate_solution,
    make_target,
    run_attack,
    select_knee,
    validate_config,
)
from depthattack.cli import main
from depthattack.errors import ConfigError, EmptyRegionError
from depthattack.imaging import DepthMap, RegionMask, load_dmap, save_dmap, save_mask
from depthattack.moead import Archive


class TestMakeTarget:
    def test_masked_pixel_interpolates_row_neighbors(self):
        depth = DepthMap(np.array([[4.0, 9.0, 6.0]]))
        mask = RegionMask(np.array([[False, True, False]]))
        target = make_target(depth, mask)
        assert target.values[0].tolist() == [4.0, 5.0, 6.0]

    def test_constant_scene_fills_with_same_constant(self):
        depth = DepthMap(np.full((5, 5), 3.2))
        flags = np.zeros((5, 5), dtype=bool)
        flags[1:4, 1:4] = True
        target = make_target(depth, RegionMask(flags))
        assert np.allclose(target.values, 3.2, atol=1e-12)

    def test_fully_masked_frame_is_an_error(self):
        with pytest.raises(EmptyRegionError):
            make_target(DepthMap(np.ones((3, 3))), RegionMask(np.ones((3, 3), dtype=bool)))

    def test_one_sided_mask_extends_nearest_neighbor(self):
        depth = DepthMap(np.array([[7.0, 1.0, 1.0]]))
        mask = RegionMask(np.array([[False, True, True]]))
        target = make_target(depth, mask)
        assert target.values[0].tolist() == [7.0, 7.0, 7.0]

    def test_fully_masked_row_falls_back_to_columns(self):
        depth = DepthMap(
            np.array(
                [
                    [2.0, 4.0],
                    [9.0, 9.0],
                    [6.0, 8.0],
                ]
            )
        )
        mask = RegionMask(np.array([[False, False], [True, True], [False, False]]))
        target = make_target(depth, mask)
        assert target.values[1].tolist() == [4.0, 6.0]

    def test_isolated_pixels_take_global_mean(self):
        # middle row and middle column fully masked: their crossing pixel
        # has no unmasked row or column support
        flags = np.zeros((3, 3), dtype=bool)
        flags[1, :] = True
        flags[:, 1] = True
        depth = DepthMap(np.array([[1.0, 0.0, 3.0], [0.0, 0.0, 0.0], [5.0, 0.0, 7.0]]))
        target = make_target(depth, RegionMask(flags))
        assert target.values[1, 1] == pytest.approx(4.0)  # mean of {1,3,5,7}

    def test_unmasked_pixels_are_untouched(self):
        rng = np.random.default_rng(0)
        depth = DepthMap(rng.uniform(1, 9, size=(6, 6)))
        flags = rng.random((6, 6)) < 0.4
        flags[0, 0] = False
        target = make_target(depth, RegionMask(flags))
        assert np.array_equal(target.values[~flags], depth.values[~flags])


class TestConfigValidation:
    def test_all_problems_reported_at_once(self, tmp_path):
        config = AttackConfig(
            image_path=str(tmp_path / "missing.png"),
            mask_path=str(tmp_path / "missing-mask.png"),
            oracle={},
            target_path=None,
            target_rule="teleport",
            eval_region="sideways",
        )
        problems = validate_config(config)
        assert len(problems) >= 4

    def test_oracle_spec_must_be_single(self, scene_factory):
        scene = scene_factory()
        config = AttackConfig.from_file(scene["config_path"])
        both = AttackConfig(
            image_path=config.image_path,
            mask_path=config.mask_path,
            oracle={"builtin": "plane", "url": "http://x"},
        )
        assert any("exactly one" in p for p in validate_config(both))

    def test_budget_must_cover_population_and_report(self, scene_factory):
        scene = scene_factory(query_budget=21)
        with pytest.raises(ConfigError) as info:
            run_attack(AttackConfig.from_file(scene["config_path"]))
        assert any("budget" in p for p in info.value.problems)

    def test_valid_config_passes(self, scene_factory):
        scene = scene_factory()
        config = AttackConfig.from_file(scene["config_path"])
        assert validate_config(config) == []


class TestRunAttack:
    def test_artifacts_written_and_reloadable(self, scene_factory):
        scene = scene_factory(frame=32, object_size=8, generations=5)
        report = run_attack(AttackConfig.from_file(scene["config_path"]))
        out = scene["dir"] / "out"
        for name in (
            "adversarial.png",
            "perturbation.dmap",
            "knee_solution.json",
            "best_solution.json",
            "depth_original.dmap",
            "depth_original.png",
            "depth_adversarial.dmap",
            "depth_adversarial.png",
            "pareto.csv",
            "trace.jsonl",
            "report.csv",
        ):
            assert (out / name).exists(), name
        field = load_dmap(out / "perturbation.dmap")
        assert field.shape == (32, 32)
        assert np.all(field[~scene["mask_flags"]] == 0.0)
        assert report.queries == 20 + 5 * 20 + 2

    def test_zero_generations_reports_initial_population_only(self, scene_factory):
        scene = scene_factory(frame=32, object_size=8, generations=0)
        report = run_attack(AttackConfig.from_file(scene["config_path"]))
        trace = (scene["dir"] / "out" / "trace.jsonl").read_text().strip().splitlines()
        assert len(trace) == 1
        assert json.loads(trace[0])["gen"] == 0
        assert report.queries == 20 + 2

    def test_same_seed_byte_identical_artifacts(self, scene_factory):
        a = scene_factory("a", frame=32, object_size=8, generations=6)
        b = scene_factory("b", frame=32, object_size=8, generations=6)
        run_attack(AttackConfig.from_file(a["config_path"]))
        run_attack(AttackConfig.from_file(b["config_path"]))
        for name in ("pareto.csv", "trace.jsonl", "report.csv"):
            assert (a["dir"] / "out" / name).read_bytes() == (b["dir"] / "out" / name).read_bytes()

    def test_ledger_never_exceeds_budget(self, scene_factory):
        scene = scene_factory(frame=32, object_size=8, generations=500, query_budget=80)
        report = run_attack(AttackConfig.from_file(scene["config_path"]))
        assert report.queries <= 80

    def test_batch_mode_runs(self, scene_factory):
        scene = scene_factory(frame=32, object_size=8, generations=4)
        config = AttackConfig.from_file(scene["config_path"])
        config = AttackConfig(
            **{**config.__dict__, "batch": True}
        )
        report = run_attack(config)
        assert report.queries == 20 + 4 * 20 + 2


class TestEvaluate:
    def test_stored_knee_matches_report_row(self, scene_factory):
        scene = scene_factory(frame=32, object_size=8, generations=5)
        config = AttackConfig.from_file(scene["config_path"])
        report = run_attack(config)
        row = evaluate_solution(config, scene["dir"] / "out" / "knee_solution.json")
        assert row.f1 == pytest.approx(report.rows[0].f1, abs=1e-6)
        assert row.f2 == pytest.approx(report.rows[0].f2, abs=1e-6)
        assert row.v_adv == pytest.approx(report.rows[0].v_adv, abs=1e-6)

    def test_identity_solution_reduces_nothing(self, scene_factory):
        scene = scene_factory(frame=32, object_size=8)
        config = AttackConfig.from_file(scene["config_path"])
        identity = {"map": [0.0] * 1, "patterns": [[0.0] * 64 for _ in range(4)]}
        path = scene["dir"] / "identity.json"
        path.write_text(json.dumps(identity))
        row = evaluate_solution(config, path)
        assert row.f2 == 0.0
        assert row.reduction_pct == pytest.approx(0.0, abs=1e-12)


class TestKneeSelection:
    def test_min_f1_subject_to_median_f2(self):
        archive = Archive()
        points = [(10.0, 0.1), (6.0, 0.4), (3.0, 0.9), (1.0, 1.5), (0.5, 2.0)]
        for i, (f1, f2) in enumerate(points):
            archive.insert(np.array([float(i)]), np.array([f1, f2]))
        knee = select_knee(archive)
        # median f2 = 0.9; best f1 among f2 <= 0.9 is (3.0, 0.9)
        assert knee.objectives.tolist() == [3.0, 0.9]


class TestCli:
    def test_attack_and_evaluate_round_trip(self, scene_factory, capsys):
        scene = scene_factory(frame=32, object_size=8, generations=4)
        assert main(["attack", str(scene["config_path"])]) == 0
        out = capsys.readouterr().out
        assert "knee" in out
        assert (
            main(
                [
                    "evaluate",
                    str(scene["config_path"]),
                    str(scene["dir"] / "out" / "knee_solution.json"),
                ]
            )
            == 0
        )

    def test_config_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"image": "none.png", "mask": "none.png", "oracle": {}}))
        assert main(["attack", str(bad)]) == 2
        assert "config error" in capsys.readouterr().err

    def test_oracle_error_exit_code(self, capsys):
        assert main(["serve-check", "http://127.0.0.1:9", "--retries", "0"]) == 3
        assert "oracle error" in capsys.readouterr().err

    def test_make_target_command(self, tmp_path, capsys):
        depth = DepthMap(np.array([[4.0, 0.0, 6.0]]))
        save_dmap(depth, tmp_path / "scene.dmap")
        save_mask(RegionMask(np.array([[False, True, False]])), tmp_path / "mask.png")
        out = tmp_path / "target.dmap"
        assert (
            main(
                [
                    "make-target",
                    str(tmp_path / "scene.dmap"),
                    str(tmp_path / "mask.png"),
                    "--out",
                    str(out),
                ]
            )
            == 0
        )
        assert load_dmap(out)[0].tolist() == [4.0, 5.0, 6.0]

    def test_seed_flag_overrides_config(self, scene_factory):
        a = scene_factory("a", frame=32, object_size=8, generations=3)
        b = scene_factory("b", frame=32, object_size=8, generations=3)
        main(["attack", str(a["config_path"]), "--seed", "99"])
        main(["attack", str(b["config_path"]), "--seed", "99"])
        assert (a["dir"] / "out" / "pareto.csv").read_bytes() == (
            b["dir"] / "out" / "pareto.csv"
        ).read_bytes()
        c = scene_factory("c", frame=32, object_size=8, generations=3)
        main(["attack", str(c["config_path"]), "--seed", "100"])
        assert (a["dir"] / "out" / "pareto.csv").read_bytes() != (
            c["dir"] / "out" / "pareto.csv"
        ).read_bytes()
