import json
from pathlib import Path

import pytest

from chronorules.cli import main
from chronorules.config import PipelineConfig
from chronorules.errors import ConfigError

from conftest import DATA_DIR

ARTIFACTS = (
    "rules_sampled.jsonl",
    "rules_generated.jsonl",
    "rules_adapted.jsonl",
    "predictions.jsonl",
    "report.json",
    "report.tsv",
)


def write_config(tmp_path, out_dir, **overrides):
    config = {
        "data": {
            "historical": str(DATA_DIR / "historical.txt"),
            "current": str(DATA_DIR / "current.txt"),
            "future": str(DATA_DIR / "future.txt"),
        },
        "out_dir": str(out_dir),
        "seed": 11,
        "top_k": 6,
        "iterations": 1,
        "walks_per_relation": 15,
        "max_body_len": 2,
        "grounding_cap": 400,
        "backend": {"kind": "scripted"},
        "eval": {"segments": 2, "figures": False},
    }
    config.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return path


def artifact_bytes(out_dir):
    return {name: (Path(out_dir) / name).read_bytes() for name in ARTIFACTS}


class TestConfig:
    def test_defaults_match_published_hyperparameters(self):
        config = PipelineConfig()
        assert config.lam == 0.1
        assert config.theta == 0.01
        assert config.gamma == 0.01
        assert config.alpha == 0.9
        assert config.iterations == 5

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            PipelineConfig.from_dict({"frobnicate": 1})

    def test_override_parsing(self):
        config = PipelineConfig()
        config.apply_overrides(["alpha=0.5", "backend.kind=replay", "data.historical=h.txt"])
        assert config.alpha == 0.5
        assert config.backend.kind == "replay"
        assert config.data.historical == "h.txt"

    def test_bad_override_rejected(self):
        config = PipelineConfig()
        with pytest.raises(ConfigError):
            config.apply_overrides(["nonsense"])
        with pytest.raises(ConfigError):
            config.apply_overrides(["nosuch.key=1"])

    def test_validation_collects_field_errors(self):
        config = PipelineConfig()
        config.alpha = 7
        config.theta = -1
        with pytest.raises(ConfigError) as err:
            config.validate()
        assert "alpha" in str(err.value) and "theta" in str(err.value)

    def test_lambda_alias_round_trips(self):
        config = PipelineConfig.from_dict({"lambda": 0.25})
        assert config.lam == 0.25
        assert config.to_dict()["lambda"] == 0.25


class TestExitCodes:
    def test_config_error_is_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"alpha": 5}')
        assert main(["pipeline", "--config", str(bad)]) == 2

    def test_missing_config_file_is_2(self, tmp_path):
        assert main(["pipeline", "--config", str(tmp_path / "none.json")]) == 2

    def test_missing_dataset_is_5(self, tmp_path):
        config = write_config(tmp_path, tmp_path / "out")
        raw = json.loads(config.read_text())
        raw["data"]["historical"] = str(tmp_path / "missing.txt")
        config.write_text(json.dumps(raw))
        assert main(["ingest", "--config", str(config)]) == 5

    def test_evaluate_without_predictions_is_3(self, tmp_path, capsys):
        config = write_config(tmp_path, tmp_path / "out")
        code = main(["evaluate", "--config", str(config)])
        captured = capsys.readouterr()
        assert code == 3
        assert "reason" in captured.err

    def test_replay_without_transcript_is_3(self, tmp_path):
        config = write_config(tmp_path, tmp_path / "out")
        main(["sample-rules", "--config", str(config)])
        code = main(["generate-rules", "--config", str(config), "--backend", "replay"])
        assert code == 3

    def test_replay_divergence_is_4(self, tmp_path):
        out = tmp_path / "out"
        config = write_config(tmp_path, out)
        assert main(["sample-rules", "--config", str(config)]) == 0
        assert main(["generate-rules", "--config", str(config)]) == 0
        transcript = out / "transcript.generate-rules.jsonl"
        lines = transcript.read_text().splitlines()
        first = json.loads(lines[0])
        first["request"]["user"] = "tampered prompt"
        transcript.write_text("\n".join([json.dumps(first)] + lines[1:]) + "\n")
        code = main(["generate-rules", "--config", str(config), "--backend", "replay"])
        assert code == 4


class TestStageChaining:
    def test_stage_dependency_order(self, tmp_path, capsys):
        config = write_config(tmp_path, tmp_path / "out")
        assert main(["generate-rules", "--config", str(config)]) == 3
        assert "sample-rules" in capsys.readouterr().err

    def test_final_line_is_json_artifacts(self, tmp_path, capsys):
        config = write_config(tmp_path, tmp_path / "out")
        assert main(["ingest", "--config", str(config)]) == 0
        last = capsys.readouterr().out.strip().splitlines()[-1]
        payload = json.loads(last)
        assert payload["stage"] == "ingest"
        assert "kg_stats" in payload["artifacts"]

    def test_manifest_written_per_stage(self, tmp_path):
        out = tmp_path / "out"
        config = write_config(tmp_path, out)
        main(["sample-rules", "--config", str(config)])
        manifest = json.loads((out / "manifest_sample_rules.json").read_text())
        assert manifest["stage"] == "sample-rules"
        assert manifest["config_hash"]
        assert str(out / "rules_sampled.jsonl") in manifest["outputs"]
        assert manifest["wall_time_s"] >= 0

    def test_predictions_wire_format(self, tmp_path):
        out = tmp_path / "out"
        config = write_config(tmp_path, out, eval={"segments": 1, "figures": False, "top_n": 5})
        for command in ("sample-rules", "generate-rules", "adapt-rules", "reason"):
            assert main([command, "--config", str(config)]) == 0
        lines = (out / "predictions.jsonl").read_text().splitlines()
        assert lines
        record = json.loads(lines[0])
        assert set(record) == {"query", "ranked"}
        assert {"subject", "relation", "t", "direction", "truth"} <= set(record["query"])
        assert len(record["ranked"]) <= 5
        if record["ranked"]:
            assert set(record["ranked"][0]) == {"entity", "rule_score", "graph_score", "fused"}
            fused = [c["fused"] for c in record["ranked"]]
            assert fused == sorted(fused, reverse=True)


class TestImportedScorer:
    def test_reason_with_imported_graph_scores(self, tmp_path):
        from chronorules import load_splits
        from chronorules.evaluation import queries_from_quads
        from chronorules.reasoner import export_graph_scores

        split, entities, relations = load_splits(
            DATA_DIR / "historical.txt", DATA_DIR / "current.txt", DATA_DIR / "future.txt"
        )
        relations.finalize_inverses()
        # hand the truth to the scorer: evaluation should then be near-perfect
        table = {
            query.key(): {truth: 1.0}
            for query, truth in queries_from_quads(split.future, relations)
        }
        scores_path = tmp_path / "graph_scores.jsonl"
        export_graph_scores(table, scores_path)

        out = tmp_path / "out"
        config = write_config(
            tmp_path,
            out,
            alpha=0.0,
            scorer={"kind": "import", "path": str(scores_path)},
            rules_stage="sampled",
            rescore_on="historical",
        )
        for command in ("sample-rules", "reason", "evaluate"):
            assert main([command, "--config", str(config)]) == 0, command
        report = json.loads((out / "report.json").read_text())
        assert report["overall"]["mrr"] == 1.0

    def test_missing_score_file_is_3(self, tmp_path):
        config = write_config(
            tmp_path,
            tmp_path / "out",
            scorer={"kind": "import", "path": str(tmp_path / "nothere.jsonl")},
            rules_stage="sampled",
            rescore_on="historical",
        )
        assert main(["sample-rules", "--config", str(config)]) == 0
        assert main(["reason", "--config", str(config)]) == 3


@pytest.mark.slow
class TestEndToEnd:
    def test_pipeline_replay_determinism_and_jobs(self, tmp_path, capsys):
        record_dir = tmp_path / "record"
        config = write_config(tmp_path, record_dir)

        # record with the scripted backend
        assert main(["pipeline", "--config", str(config)]) == 0
        recorded = artifact_bytes(record_dir)
        transcripts = {
            name: (record_dir / name).read_bytes()
            for name in ("transcript.generate-rules.jsonl", "transcript.adapt-rules.jsonl")
        }

        # replay twice into fresh directories
        replay_bytes = []
        for run in ("replay1", "replay2"):
            run_dir = tmp_path / run
            run_dir.mkdir()
            for name, blob in transcripts.items():
                (run_dir / name).write_bytes(blob)
            base = str(run_dir / "transcript.jsonl")
            code = main(
                [
                    "pipeline",
                    "--config",
                    str(config),
                    "--backend",
                    "replay",
                    "--transcript",
                    base,
                    "--out",
                    str(run_dir),
                ]
            )
            assert code == 0
            replay_bytes.append(artifact_bytes(run_dir))

        assert recorded == replay_bytes[0] == replay_bytes[1]

        # --jobs must not change any artifact
        jobs_dir = tmp_path / "jobs8"
        jobs_dir.mkdir()
        for name, blob in transcripts.items():
            (jobs_dir / name).write_bytes(blob)
        code = main(
            [
                "pipeline",
                "--config",
                str(config),
                "--backend",
                "replay",
                "--transcript",
                str(jobs_dir / "transcript.jsonl"),
                "--out",
                str(jobs_dir),
                "--jobs",
                "8",
            ]
        )
        assert code == 0
        assert artifact_bytes(jobs_dir) == recorded

    def test_pipeline_equals_stage_by_stage(self, tmp_path, capsys):
        pipe_dir = tmp_path / "pipe"
        config = write_config(tmp_path, pipe_dir)
        assert main(["pipeline", "--config", str(config)]) == 0

        stage_dir = tmp_path / "stages"
        config2 = write_config(tmp_path, stage_dir)
        for command in ("ingest", "sample-rules", "generate-rules", "adapt-rules", "reason", "evaluate"):
            assert main([command, "--config", str(config2)]) == 0, command

        assert artifact_bytes(pipe_dir) == artifact_bytes(stage_dir)

    def test_report_contents_and_figures(self, tmp_path):
        out = tmp_path / "out"
        config = write_config(
            tmp_path,
            out,
            eval={"segments": 2, "horizon_delta_t": 3, "horizon_k": 2, "figures": True},
        )
        assert main(["pipeline", "--config", str(config)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert 0.0 <= report["overall"]["mrr"] <= 1.0
        assert len(report["segments"]) == 2
        assert len(report["horizon"]) == 2
        tsv = (out / "report.tsv").read_text().splitlines()
        assert tsv[0].startswith("scope\t")
        assert len(tsv) == 1 + 1 + 2 + 2
        figures = list((out / "figures").glob("*.png"))
        assert figures, "figures should be rendered alongside the delimited output"
