"""HTTP inference service: endpoints, caching, error codes."""

import json
import shutil
import threading
from pathlib import Path

import pytest
import requests

from schagraph.corpus import bundled_data_dir, load_bundled_corpus
from schagraph.model import ModelConfig
from schagraph.service import AnalysisService, make_server
from schagraph.training import TrainConfig, build_dataset, train


@pytest.fixture(scope="module")
def checkpoint():
    ds = build_dataset(load_bundled_corpus(), val_fraction=0.0, seed=0)
    cfg = ModelConfig(variant="base", depth_count=4, hidden_dim=8,
                      conv_layers=1, seed=0)
    return train(ds, cfg, TrainConfig(epochs=2)).checkpoint


@pytest.fixture()
def corpus_copy(tmp_path):
    target = tmp_path / "corpus"
    target.mkdir()
    for f in bundled_data_dir().glob("*.json"):
        shutil.copy(f, target / f.name)
    return target


@pytest.fixture()
def server(checkpoint, corpus_copy):
    service = AnalysisService(checkpoint, corpus_copy)
    httpd = make_server(service, "127.0.0.1", 0)
    port = httpd.server_address[1]
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    yield service, f"http://127.0.0.1:{port}"
    httpd.shutdown()
    httpd.server_close()


class TestEndpoints:
    def test_list_pieces(self, server):
        service, base = server
        resp = requests.get(f"{base}/pieces", timeout=10)
        assert resp.status_code == 200
        pieces = resp.json()
        assert len(pieces) == 6
        entry = next(p for p in pieces if p["id"] == "primi_toni_1")
        assert entry["n"] == 10 and entry["d"] == 4

    def test_piece_detail_with_topo_order(self, server):
        _, base = server
        resp = requests.get(f"{base}/pieces/primi_toni_1", timeout=10)
        assert resp.status_code == 200
        doc = resp.json()
        assert len(doc["piece"]["notes"]) == 10
        assert sorted(doc["topo_order"]) == list(range(10))

    def test_scores_shape(self, server):
        _, base = server
        resp = requests.get(f"{base}/pieces/primi_toni_1/scores", timeout=10)
        assert resp.status_code == 200
        doc = resp.json()
        assert len(doc["scores"]) == 4
        assert len(doc["scores"][0]) == 10
        assert len(doc["voices"]) == 10
        assert doc["c_min"] == 0.5

    def test_unknown_piece_404(self, server):
        _, base = server
        assert requests.get(f"{base}/pieces/zzz", timeout=10).status_code == 404
        assert requests.get(f"{base}/nothing", timeout=10).status_code == 404

    def test_assignment_and_margins(self, server):
        _, base = server
        resp = requests.post(
            f"{base}/pieces/primi_toni_1/assignment",
            json={"c_min": [0.5, 0.5, 0.5, 0.5]},
            timeout=10,
        )
        assert resp.status_code == 200
        doc = resp.json()
        scores = requests.get(f"{base}/pieces/primi_toni_1/scores", timeout=10).json()["scores"]
        for l in range(4):
            for j in range(10):
                assert doc["assignment"][l][j] == (1 if scores[l][j] >= 0.5 else 0)
                assert doc["margins"][l][j] == pytest.approx(scores[l][j] - 0.5)

    def test_malformed_thresholds_400(self, server):
        _, base = server
        url = f"{base}/pieces/primi_toni_1/assignment"
        assert requests.post(url, data=b"{not json", timeout=10).status_code == 400
        assert requests.post(url, json={"c_min": [0.5, 0.5]}, timeout=10).status_code == 400
        assert requests.post(url, json={"wrong": 1}, timeout=10).status_code == 400

    def test_scalar_threshold_broadcasts(self, server):
        _, base = server
        url = f"{base}/pieces/primi_toni_1/assignment"
        one = requests.post(url, json={"c_min": 0.5}, timeout=10).json()
        four = requests.post(url, json={"c_min": [0.5] * 4}, timeout=10).json()
        assert one == four


class TestCaching:
    def test_forward_runs_once_per_piece(self, server):
        service, base = server
        url = f"{base}/pieces/descent_c_major"
        requests.get(f"{url}/scores", timeout=10)
        for threshold in (0.2, 0.5, 0.8):
            requests.post(f"{url}/assignment", json={"c_min": threshold}, timeout=10)
        requests.get(f"{url}/scores", timeout=10)
        assert service.forward_counts["descent_c_major"] == 1

    def test_identical_posts_byte_identical(self, server):
        _, base = server
        url = f"{base}/pieces/primi_toni_1/assignment"
        a = requests.post(url, json={"c_min": 0.5}, timeout=10).content
        b = requests.post(url, json={"c_min": 0.5}, timeout=10).content
        assert a == b

    def test_single_flight_under_concurrency(self, server):
        service, base = server
        url = f"{base}/pieces/chorale_c_major/scores"
        results = []

        def hit():
            results.append(requests.get(url, timeout=30).status_code)

        threads = [threading.Thread(target=hit) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert results == [200] * 8
        assert service.forward_counts["chorale_c_major"] == 1

    def test_409_when_piece_changes_on_disk(self, server, corpus_copy):
        _, base = server
        url = f"{base}/pieces/bass_arpeggio_g_minor"
        assert requests.get(f"{url}/scores", timeout=10).status_code == 200
        # rewrite with one note fewer
        path = corpus_copy / "bass_arpeggio_g_minor.score.json"
        doc = json.loads(path.read_text())
        doc["notes"] = doc["notes"][:-1]
        path.write_text(json.dumps(doc))
        assert requests.get(f"{url}/scores", timeout=10).status_code == 409
        # cache was dropped: the next request recomputes against the new file
        assert requests.get(f"{url}/scores", timeout=10).status_code == 200


class TestCliServiceAgreement:
    def test_assignment_matches_cmd_infer(self, server, corpus_copy, checkpoint, tmp_path, capsys):
        from schagraph.cli import main

        _, base = server
        ckpt_path = tmp_path / "model.schg"
        from schagraph.training import save_checkpoint

        save_checkpoint(checkpoint, ckpt_path)
        rc = main(["infer", str(corpus_copy / "neighbor_f_major.score.json"),
                   "--checkpoint", str(ckpt_path), "--c-min", "0.5"])
        assert rc == 0
        cli_doc = json.loads(capsys.readouterr().out)
        http_doc = requests.post(
            f"{base}/pieces/neighbor_f_major/assignment",
            json={"c_min": 0.5}, timeout=10,
        ).json()
        assert cli_doc["assignment"] == http_doc["assignment"]
