import hashlib
import json

import numpy as np
import pytest

from nsexplain.cli import RunManifest, main, parse_config_file
from nsexplain.datasets import read_ground_truth_json


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One generated dataset + trained model + explanations, shared read-only."""
    ws = tmp_path_factory.mktemp("cli-ws")
    data = ws / "data"
    assert main([
        "generate", "--dataset", "tree-cycles", "--seed", "0",
        "--out-dir", str(data),
    ]) == 0
    assert main([
        "train", "--data", str(data / "tree-cycles.graph.json"),
        "--out-model", str(ws / "model.json"),
        "--epochs", "8", "--seed", "1",
    ]) == 0
    gt = read_ground_truth_json(data / "tree-cycles.gt.json")
    nodes = ",".join(str(n) for n in gt.nodes()[:2])
    assert main([
        "explain", "--data", str(data / "tree-cycles.graph.json"),
        "--model", str(ws / "model.json"),
        "--gt", str(data / "tree-cycles.gt.json"),
        "--nodes", nodes, "--objective", "pns-e",
        "--epochs", "10", "--seed", "0", "--alpha-edge", "0.01",
        "--out-dir", str(ws / "expl"),
    ]) == 0
    return ws


class TestGenerate:
    def test_writes_graph_gt_and_manifest(self, workspace):
        data = workspace / "data"
        assert (data / "tree-cycles.graph.json").is_file()
        assert (data / "tree-cycles.gt.json").is_file()
        manifest = json.loads((data / "tree-cycles.manifest.json").read_text())
        assert manifest["command"] == "generate"
        assert manifest["seed"] == 0
        assert len(manifest["artifact_hashes"]) == 2

    def test_manifest_hashes_verify(self, workspace):
        data = workspace / "data"
        manifest = json.loads((data / "tree-cycles.manifest.json").read_text())
        for path, digest in manifest["artifact_hashes"].items():
            assert hashlib.sha256(
                open(path, "rb").read()
            ).hexdigest() == digest

    def test_same_seed_same_bytes(self, tmp_path, workspace):
        assert main([
            "generate", "--dataset", "tree-cycles", "--seed", "0",
            "--out-dir", str(tmp_path),
        ]) == 0
        a = (workspace / "data" / "tree-cycles.graph.json").read_bytes()
        assert (tmp_path / "tree-cycles.graph.json").read_bytes() == a

    def test_unknown_dataset_is_one_line_error(self, tmp_path, capsys):
        assert main([
            "generate", "--dataset", "karate", "--out-dir", str(tmp_path),
        ]) == 1
        err = capsys.readouterr().err
        assert err.count("\n") == 1
        assert "unknown dataset" in err


class TestTrain:
    def test_outputs_and_manifest(self, workspace):
        manifest = json.loads((workspace / "model.manifest.json").read_text())
        assert manifest["command"] == "train"
        assert manifest["config"]["epochs"] == 8
        assert manifest["config"]["seed"] == 1
        assert (workspace / "model.curve.csv").is_file()
        meta = json.loads((workspace / "model.json").read_text())["meta"]
        assert meta["dataset"] == "tree-cycles"
        assert 0.0 <= meta["test_accuracy"] <= 1.0

    def test_config_layering_flag_beats_file_beats_preset(self, workspace, tmp_path):
        cfg = tmp_path / "train.cfg"
        cfg.write_text("epochs = 3  # fast\nseed = 9\n")
        out = tmp_path / "m.json"
        assert main([
            "train", "--data", str(workspace / "data" / "tree-cycles.graph.json"),
            "--preset", "tree-cycles", "--config", str(cfg),
            "--epochs", "2",
            "--out-model", str(out),
        ]) == 0
        manifest = json.loads(out.with_suffix(".manifest.json").read_text())
        # preset said 2000, file said 3, flag wins with 2; file's seed survives
        assert manifest["config"]["epochs"] == 2
        assert manifest["config"]["seed"] == 9
        assert manifest["config"]["learning_rate"] == 1e-3  # from the preset

    def test_unknown_config_key_rejected(self, workspace, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("momentum = 0.9\n")
        assert main([
            "train", "--data", str(workspace / "data" / "tree-cycles.graph.json"),
            "--config", str(cfg), "--out-model", str(tmp_path / "m.json"),
        ]) == 1
        assert "unknown config file key 'momentum'" in capsys.readouterr().err

    def test_missing_data_file_is_clean_failure(self, tmp_path, capsys):
        assert main([
            "train", "--data", str(tmp_path / "nope.graph.json"),
            "--out-model", str(tmp_path / "m.json"),
        ]) == 1
        assert capsys.readouterr().err.startswith("nsexplain train:")


class TestExplain:
    def test_writes_explanation_dot_and_manifest(self, workspace):
        files = sorted((workspace / "expl").glob("node-*.explanation.json"))
        assert len(files) == 2
        assert sorted((workspace / "expl").glob("node-*.dot"))
        manifest = json.loads((workspace / "expl" / "manifest.json").read_text())
        assert manifest["command"] == "explain"
        assert len(manifest["config"]["instances"]) == 2
        assert manifest["config"]["objective"] == "pns-e"
        assert manifest["config"]["k_hops"] == 3

    def test_payload_maps_back_to_original_ids(self, workspace):
        f = sorted((workspace / "expl").glob("node-*.explanation.json"))[0]
        payload = json.loads(f.read_text())
        center = payload["center"]
        assert center in payload["nodes"]
        assert payload["instance_id"] == center
        assert len(payload["edge_mask"]) == len(payload["edges"])

    def test_same_seed_reproduces_bytes(self, workspace, tmp_path):
        gt = read_ground_truth_json(workspace / "data" / "tree-cycles.gt.json")
        node = str(gt.nodes()[0])
        args = [
            "explain", "--data", str(workspace / "data" / "tree-cycles.graph.json"),
            "--model", str(workspace / "model.json"),
            "--nodes", node, "--epochs", "10", "--seed", "0",
            "--alpha-edge", "0.01",
        ]
        assert main(args + ["--out-dir", str(tmp_path / "a")]) == 0
        assert main(args + ["--out-dir", str(tmp_path / "b")]) == 0
        fa = (tmp_path / "a" / f"node-{node}.explanation.json").read_bytes()
        fb = (tmp_path / "b" / f"node-{node}.explanation.json").read_bytes()
        assert fa == fb

    def test_workers_match_serial_output(self, workspace, tmp_path):
        gt = read_ground_truth_json(workspace / "data" / "tree-cycles.gt.json")
        nodes = ",".join(str(n) for n in gt.nodes()[:2])
        args = [
            "explain", "--data", str(workspace / "data" / "tree-cycles.graph.json"),
            "--model", str(workspace / "model.json"),
            "--nodes", nodes, "--epochs", "10", "--seed", "0",
        ]
        assert main(args + ["--out-dir", str(tmp_path / "s")]) == 0
        assert main(args + ["--workers", "2", "--out-dir", str(tmp_path / "p")]) == 0
        for f in (tmp_path / "s").glob("*.explanation.json"):
            assert f.read_bytes() == (tmp_path / "p" / f.name).read_bytes()

    @pytest.mark.parametrize(
        "extra,msg",
        [
            ([], "exactly one"),
            (["--nodes", "1", "--graphs", "0"], "exactly one"),
            (["--all-motif-nodes"], "needs --gt"),
            (["--graphs", "0"], "use --nodes"),
            (["--nodes", "a,b"], "comma-separated ints"),
        ],
    )
    def test_selector_errors(self, workspace, tmp_path, capsys, extra, msg):
        assert main([
            "explain", "--data", str(workspace / "data" / "tree-cycles.graph.json"),
            "--model", str(workspace / "model.json"),
            "--out-dir", str(tmp_path),
        ] + extra) == 1
        assert msg in capsys.readouterr().err

    def test_preset_supplies_extraction_sizes(self, workspace, tmp_path):
        gt = read_ground_truth_json(workspace / "data" / "tree-cycles.gt.json")
        assert main([
            "explain", "--data", str(workspace / "data" / "tree-cycles.graph.json"),
            "--model", str(workspace / "model.json"),
            "--preset", "tree-cycles", "--extract-mode", "top-k",
            "--nodes", str(gt.nodes()[0]), "--epochs", "5",
            "--out-dir", str(tmp_path),
        ]) == 0
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["config"]["k_edges"] == 6
        assert manifest["config"]["alpha_edge"] == 2e-2
        payload = json.loads(
            next(tmp_path.glob("*.explanation.json")).read_text()
        )
        assert len(payload["extracted_edges"]) == 6


class TestEvaluate:
    def test_scores_and_csv(self, workspace, tmp_path, capsys):
        out = tmp_path / "report.csv"
        assert main([
            "evaluate", "--explanations", str(workspace / "expl"),
            "--data", str(workspace / "data" / "tree-cycles.graph.json"),
            "--model", str(workspace / "model.json"),
            "--gt", str(workspace / "data" / "tree-cycles.gt.json"),
            "--out", str(out),
        ]) == 0
        printed = capsys.readouterr().out
        assert "fid_plus_c:" in printed and "topk_accuracy:" in printed
        import csv

        with open(out, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["dataset", "method", "metric", "mean", "half_width_95", "n"]
        metrics = {r[2] for r in rows[1:]}
        assert {"fid_plus_c", "fid_minus_c", "charact_c", "topk_accuracy",
                "roc_auc"} <= metrics
        assert all(r[0] == "tree-cycles" and r[1] == "nsexplain" for r in rows[1:])
        assert all(r[5] == "2" for r in rows[1:])

    def test_reevaluation_is_stable(self, workspace, tmp_path):
        args = [
            "evaluate", "--explanations", str(workspace / "expl"),
            "--data", str(workspace / "data" / "tree-cycles.graph.json"),
            "--model", str(workspace / "model.json"),
            "--gt", str(workspace / "data" / "tree-cycles.gt.json"),
        ]
        assert main(args + ["--out", str(tmp_path / "a.csv")]) == 0
        assert main(args + ["--out", str(tmp_path / "b.csv")]) == 0
        assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()

    def test_without_gt_only_fidelity(self, workspace, tmp_path):
        out = tmp_path / "nofid.csv"
        assert main([
            "evaluate", "--explanations", str(workspace / "expl"),
            "--data", str(workspace / "data" / "tree-cycles.graph.json"),
            "--model", str(workspace / "model.json"),
            "--out", str(out),
        ]) == 0
        import csv

        with open(out, newline="") as fh:
            metrics = {r[2] for r in list(csv.reader(fh))[1:]}
        assert "topk_accuracy" not in metrics and "fid_plus_c" in metrics

    def test_empty_directory_fails_cleanly(self, workspace, tmp_path, capsys):
        (tmp_path / "void").mkdir()
        assert main([
            "evaluate", "--explanations", str(tmp_path / "void"),
            "--data", str(workspace / "data" / "tree-cycles.graph.json"),
            "--model", str(workspace / "model.json"),
            "--out", str(tmp_path / "r.csv"),
        ]) == 1
        assert "no *.explanation.json" in capsys.readouterr().err


class TestExportDot:
    def test_replays_the_explain_time_render(self, workspace, tmp_path):
        src = sorted((workspace / "expl").glob("node-*.explanation.json"))[0]
        original_dot = src.with_suffix("").with_suffix(".dot")  # node-N.dot
        out = tmp_path / "replay.dot"
        assert main([
            "export-dot", "--explanation", str(src), "--out", str(out),
        ]) == 0
        assert out.read_text() == original_dot.read_text()

    def test_missing_file_fails_cleanly(self, tmp_path, capsys):
        assert main([
            "export-dot", "--explanation", str(tmp_path / "ghost.json"),
            "--out", str(tmp_path / "g.dot"),
        ]) == 1
        assert capsys.readouterr().err.startswith("nsexplain export-dot:")


class TestConfigFile:
    def test_parse_coercion_and_comments(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text(
            "# header comment\n"
            "epochs = 20\n"
            "learning_rate = 1e-3  # inline\n"
            "extract_mode = top-k\n"
            "some_flag = true\n"
            "\n"
        )
        parsed = parse_config_file(cfg)
        assert parsed == {
            "epochs": 20,
            "learning_rate": 1e-3,
            "extract_mode": "top-k",
            "some_flag": True,
        }
        assert isinstance(parsed["epochs"], int)

    def test_bad_line_names_location(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("epochs\n")
        from nsexplain.cli import CliError

        with pytest.raises(CliError, match=":1:"):
            parse_config_file(cfg)

    def test_empty_key_rejected(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("= 3\n")
        from nsexplain.cli import CliError

        with pytest.raises(CliError, match="empty key"):
            parse_config_file(cfg)


class TestRunManifest:
    def test_write_hashes_only_existing_outputs(self, tmp_path):
        real = tmp_path / "out.txt"
        real.write_text("payload")
        manifest = RunManifest(
            command="test", config={"a": 1}, seed=3,
            inputs=[tmp_path / "in.txt"],
            outputs=[real, tmp_path / "ghost.txt"],
            wall_clock_s=0.5,
        )
        path = tmp_path / "m.json"
        manifest.write(path)
        data = json.loads(path.read_text())
        assert list(data["artifact_hashes"]) == [str(real)]
        assert data["artifact_hashes"][str(real)] == hashlib.sha256(
            b"payload"
        ).hexdigest()
        assert data["seed"] == 3
