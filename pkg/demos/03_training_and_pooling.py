"""Training the pooling model on the toy corpus and reading its analyses.

Runs a short overfit of the base variant, then shows how the per-depth
scores binarize into a nested analysis under a chosen threshold.  Expect
roughly a minute of runtime for the 150 epochs.
"""

import numpy as np

from schagraph.corpus import load_bundled_corpus
from schagraph.graph import build_graph
from schagraph.model import ModelConfig, forward_scores
from schagraph.pooling import membership
from schagraph.training import TrainConfig, build_dataset, evaluate, train

pieces = load_bundled_corpus()
dataset = build_dataset(pieces, val_fraction=0.0, seed=0)
config = ModelConfig(variant="base", depth_count=4, seed=1)

result = train(
    dataset,
    config,
    TrainConfig(learning_rate=1e-3, epochs=150, stop_at_accuracy=0.99),
)
for row in result.history[:: max(1, len(result.history) // 8)]:
    print(
        f"epoch {row['epoch']:3d}  loss {row['loss']:8.2f}  "
        f"accuracy {row['val_accuracy']:.3f}  monotonicity {row['val_monotonicity']:.4f}"
    )

metrics = evaluate(dataset.entries, config, result.checkpoint.params)
print(f"\nbest checkpoint: accuracy {metrics.accuracy:.3f}, "
      f"voice accuracy {metrics.voice_accuracy:.3f}")

piece = next(p for p in pieces if p.score.title.startswith("Primi Toni"))
graph = build_graph(piece.score)
forward = forward_scores(graph, config, result.checkpoint.params)
scores = forward.stack.scores

print(f"\n{piece.score.title}: predicted vs annotated filtration (c_min = 0.5)")
bits = membership(scores, 0.5)
for l in range(4):
    predicted = "".join(str(b) for b in bits[l])
    annotated = "".join(str(b) for b in piece.annotation.depths[l])
    marker = "" if predicted == annotated else "  <- differs"
    print(f"  depth {l + 1}: model {predicted}  expert {annotated}{marker}")

# The analyst steers the result: a stricter threshold at the deepest level
# thins the background layer without touching anything else.
strict = membership(scores, [0.5, 0.5, 0.5, 0.9])
print(f"\ndepth 4 at threshold 0.9: {''.join(str(b) for b in strict[3])}")
