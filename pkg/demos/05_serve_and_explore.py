"""Threshold exploration over HTTP: the analyst's loop, scripted.

Trains briefly, starts the inference service on an ephemeral port, and
drives the same endpoints the browser UI uses: list pieces, fetch cached
scores, and re-binarize them under different per-depth thresholds.
"""

import json
import shutil
import tempfile
import threading
from pathlib import Path

import requests

from schagraph.corpus import bundled_data_dir, load_bundled_corpus
from schagraph.model import ModelConfig
from schagraph.service import AnalysisService, make_server
from schagraph.training import TrainConfig, build_dataset, train

dataset = build_dataset(load_bundled_corpus(), val_fraction=0.0, seed=0)
config = ModelConfig(variant="base", depth_count=4, hidden_dim=16, seed=0)
checkpoint = train(dataset, config, TrainConfig(epochs=30)).checkpoint

corpus_dir = Path(tempfile.mkdtemp()) / "corpus"
shutil.copytree(bundled_data_dir(), corpus_dir)

service = AnalysisService(checkpoint, corpus_dir)
server = make_server(service, "127.0.0.1", 0)
port = server.server_address[1]
threading.Thread(target=server.serve_forever, daemon=True).start()
base = f"http://127.0.0.1:{port}"
print(f"service on {base}")

pieces = requests.get(f"{base}/pieces").json()
print(f"\nGET /pieces -> {len(pieces)} pieces")
for p in pieces:
    print(f"  {p['id']:24s} n={p['n']:2d} d={p['d']}")

pid = "primi_toni_1"
scores = requests.get(f"{base}/pieces/{pid}/scores").json()
print(f"\nGET /pieces/{pid}/scores -> {len(scores['scores'])} depth rows, "
      f"default c_min {scores['c_min']}")

for thresholds in (0.5, [0.4, 0.5, 0.6, 0.8]):
    doc = requests.post(
        f"{base}/pieces/{pid}/assignment", json={"c_min": thresholds}
    ).json()
    label = thresholds if isinstance(thresholds, list) else [thresholds] * 4
    print(f"\nPOST assignment c_min={label}")
    for l, row in enumerate(doc["assignment"]):
        print(f"  depth {l + 1}: {''.join(str(b) for b in row)}")

print(f"\nmodel forward passes for {pid}: {service.forward_counts[pid]} "
      "(threshold moves only re-binarize)")
server.shutdown()
