"""Acceptance suite: one test per release criterion, one printed line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the criterion
lines.  Every tolerance is pinned here; nothing is deferred.
"""

import json
import math
import shutil
import threading
import time

import numpy as np
import pytest
import requests

from schagraph import autodiff as ad
from schagraph.autodiff import Tape, grad_check
from schagraph.corpus import bundled_data_dir, load_bundled_corpus
from schagraph.eigen import jacobi_eigh
from schagraph.graph import EdgeType, build_graph
from schagraph.layers import (
    TransformerLayerVars,
    dir_rgcn_layer,
    gcn_layer,
    normalize,
    rgcn_layer,
    transformer_encode,
)
from schagraph.model import ModelConfig, forward_pooling_model, init_params
from schagraph.pooling import (
    DepthLayerVars,
    apply_depth_stack,
    depth_step,
    isolate,
    membership,
    monotonicity_loss,
    pooling_loss,
    score_nodes,
)
from schagraph.score import augment_12_keys
from schagraph.service import AnalysisService, make_server
from schagraph.training import (
    TrainConfig,
    ablation_sweep,
    build_dataset,
    evaluate,
    piece_loss,
    save_checkpoint,
    sweep_to_csv,
    train,
)
from tests.test_autodiff import OP_CASES, OP_SHAPES
from tests.test_pooling import random_adjacencies


def report(name: str):
    print(f"\n[PASS] {name}")


def relu_kink_margin(f, inputs) -> float:
    """Smallest |pre-activation| reaching a ReLU in f's forward pass.

    Central differences are invalid when a ReLU input sits within the FD
    step of zero, so fixtures are screened on this margin (a property of
    the fixture, not of the gradient being tested).
    """
    tape = Tape()
    f(*[tape.leaf(x) for x in inputs])
    margin = np.inf
    for node in tape._nodes:
        if node.op == "relu":
            parent = tape._nodes[node.parents[0]].value
            if parent.size:
                margin = min(margin, float(np.abs(parent).min()))
    return margin


def screened_seeds(f, shapes, count=10, scale=1.0, start=0):
    """First `count` seeds whose fixtures keep ReLU inputs off the kink."""
    found = []
    seed = start
    while len(found) < count:
        rng = np.random.default_rng(seed)
        inputs = [rng.standard_normal(shape) * scale for shape in shapes]
        if relu_kink_margin(f, inputs) > 2e-3:
            found.append(inputs)
        seed += 1
        assert seed < start + 200, "could not find enough well-posed fixtures"
    return found


# ---------------------------------------------------------------------------
# 1. Gradient correctness


def _composite_cases():
    cases = {}

    def gcn_case(Z, W):
        tape = Z.tape
        M = normalize(_composite_cases.A)
        return ad.sum(ad.sigmoid(gcn_layer(Z, tape.constant(M), W)))

    cases["gcn"] = (gcn_case, [(5, 4), (4, 3)])

    def rgcn_case(Z, W1, W2):
        tape = Z.tape
        Ms = [tape.constant(normalize(A)) for A in _composite_cases.As]
        return ad.sum(ad.sigmoid(rgcn_layer(Z, Ms, [W1, W2])))

    cases["rgcn"] = (rgcn_case, [(5, 4), (4, 3), (4, 3)])

    def dir_case(Z, Wf1, Wf2, Wb1, Wb2):
        tape = Z.tape
        norms = [normalize(A) for A in _composite_cases.As]
        Ms = [tape.constant(M) for M in norms]
        Mts = [tape.constant(M.T) for M in norms]
        out = dir_rgcn_layer(Z, Ms, Mts, [Wf1, Wf2], [Wb1, Wb2], 0.75)
        return ad.sum(ad.sigmoid(out))

    cases["dir_rgcn"] = (dir_case, [(5, 4), (4, 3), (4, 3), (4, 3), (4, 3)])

    def score_case(Z, Wf1, Wf2, Wb1, Wb2):
        tape = Z.tape
        norms = [normalize(A) for A in _composite_cases.As]
        Ms = [tape.constant(M) for M in norms]
        Mts = [tape.constant(M.T) for M in norms]
        y = score_nodes(Z, Ms, Mts, [Wf1, Wf2], [Wb1, Wb2], 0.75)
        return ad.bce(y, _composite_cases.targets[:1].T)

    cases["score_nodes"] = (score_case, [(5, 4), (4, 1), (4, 1), (4, 1), (4, 1)])

    def transformer_case(x, wq, wk, wv, wo, w1, w2):
        layer = TransformerLayerVars(wq=[wq], wk=[wk], wv=[wv], wo=wo, w1=w1, w2=w2)
        return ad.sum(ad.sigmoid(transformer_encode(x, [layer])))

    cases["transformer_block"] = (
        transformer_case,
        [(5, 4), (4, 4), (4, 4), (4, 4), (4, 4), (4, 6), (6, 4)],
    )
    return cases


def test_gradient_correctness():
    start = time.monotonic()
    for op, case in OP_CASES.items():
        for seed in range(10):
            rng = np.random.default_rng(seed)
            inputs = [rng.standard_normal(shape) for shape in OP_SHAPES[op]]
            if op == "relu":
                inputs = [x + np.sign(x) * 0.2 for x in inputs]
            err = grad_check(case, inputs)
            assert err < 1e-4, f"{op} seed {seed}: {err}"

    for name, (fn, shapes) in _composite_cases().items():
        rng = np.random.default_rng(12345)
        _composite_cases.A = (rng.random((5, 5)) < 0.4).astype(float)
        _composite_cases.As = [
            (rng.random((5, 5)) < 0.4).astype(float) for _ in range(2)
        ]
        _composite_cases.targets = (rng.random((2, 5)) < 0.5).astype(float)
        scale = 0.5 if name == "transformer_block" else 1.0
        for idx, inputs in enumerate(screened_seeds(fn, shapes, scale=scale)):
            err = grad_check(fn, inputs)
            assert err < 1e-4, f"{name} fixture {idx}: {err}"

    # full L_p + L_m objective on a 5-node fixture; seeds are screened so
    # every score sits > 1e-3 from c_min and finite differences are valid
    c_min = 0.5
    accepted = 0
    candidate = 0
    while accepted < 10:
        rng = np.random.default_rng(1000 + candidate)
        candidate += 1
        adjacency = random_adjacencies(rng, 5, 2)
        X = rng.standard_normal((5, 3))
        targets = (rng.random((2, 5)) < 0.5).astype(float)
        inputs = []
        for l in range(2):
            in_dim = 3 if l == 0 else 4
            inputs += [
                rng.standard_normal((in_dim, 4)),
                rng.standard_normal((in_dim, 4)),
                rng.standard_normal((4, 1)),
                rng.standard_normal((4, 1)),
            ]

        def objective(*flat):
            tape = flat[0].tape
            weights = [
                DepthLayerVars(
                    conv=[([flat[4 * l]], [flat[4 * l + 1]])],
                    score=([flat[4 * l + 2]], [flat[4 * l + 3]]),
                )
                for l in range(2)
            ]
            result = apply_depth_stack(
                tape, {0: adjacency[0]}, X, weights, 0.75, c_min
            )
            loss = pooling_loss(result.score_vars, targets)
            return ad.add(loss, monotonicity_loss(result.score_vars, c_min))

        tape = Tape()
        bound = [tape.leaf(x) for x in inputs]
        weights = [
            DepthLayerVars(
                conv=[([bound[4 * l]], [bound[4 * l + 1]])],
                score=([bound[4 * l + 2]], [bound[4 * l + 3]]),
            )
            for l in range(2)
        ]
        probe = apply_depth_stack(tape, {0: adjacency[0]}, X, weights, 0.75, c_min)
        score_margin = min(
            float(np.abs(y.value - c_min).min()) for y in probe.score_vars
        )
        kink_margin = min(
            (float(np.abs(tape._nodes[node.parents[0]].value).min())
             for node in tape._nodes if node.op == "relu"),
            default=np.inf,
        )
        if score_margin < 1e-3 or kink_margin < 2e-3:
            continue
        accepted += 1
        err = grad_check(objective, inputs)
        assert err < 1e-4, f"objective candidate {candidate}: {err}"

    elapsed = time.monotonic() - start
    assert elapsed < 60.0, f"gradient suite took {elapsed:.1f}s"
    report(f"gradient correctness: all ops + composites < 1e-4 ({elapsed:.1f}s)")


# ---------------------------------------------------------------------------
# 2. Isolation semantics


def test_isolation_semantics():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(2, 10))
        adjacency = random_adjacencies(rng, n, 20)
        mask = (rng.random(n) < 0.6).astype(float)
        tape = Tape()
        pooled = isolate(
            adjacency, tape.leaf(np.ones((n, 1))), tape.leaf(rng.random((n, 1))),
            0.5, indicator=mask,
        )
        dropped = np.nonzero(mask == 0.0)[0]
        assert len(pooled.adjacency) == 20
        for A in pooled.adjacency.values():
            assert np.all(A[dropped, :] == 0.0)
            assert np.all(A[:, dropped] == 0.0)

    # frozen-mask perturbation: a masked node's features cannot move any
    # other node's deeper embedding by more than 1e-12
    rng = np.random.default_rng(7)
    n, p, q = 6, 4, 3
    adjacency = random_adjacencies(rng, n, 20)
    X = rng.standard_normal((n, p))
    tape = Tape()
    weights = []
    for l in range(3):
        in_dim = p if l == 0 else q
        weights.append(
            DepthLayerVars(
                conv=[(
                    [tape.leaf(rng.standard_normal((in_dim, q)) * 0.2) for _ in range(20)],
                    [tape.leaf(rng.standard_normal((in_dim, q)) * 0.2) for _ in range(20)],
                )],
                score=(
                    [tape.leaf(rng.standard_normal((q, 1)) * 0.2) for _ in range(20)],
                    [tape.leaf(rng.standard_normal((q, 1)) * 0.2) for _ in range(20)],
                ),
            )
        )
    probe = apply_depth_stack(tape, adjacency, X, weights, 0.75, 0.5)
    first = np.sort(probe.score_vars[0].value[:, 0])
    c_min = float((first[0] + first[1]) / 2)
    masks = [
        (probe.score_vars[0].value[:, 0] >= c_min).astype(float),
        probe.masks[1],
        probe.masks[2],
    ]
    j = int(np.argmin(probe.score_vars[0].value[:, 0]))

    def run(z1):
        current = {k: A * np.outer(masks[0], masks[0]) for k, A in adjacency.items()}
        tape2 = Tape()
        Z = tape2.constant(z1)
        out = []
        for l in (1, 2):
            w = weights[l]
            w2 = DepthLayerVars(
                conv=[([tape2.constant(v.value) for v in c[0]],
                       [tape2.constant(v.value) for v in c[1]]) for c in w.conv],
                score=([tape2.constant(v.value) for v in w.score[0]],
                       [tape2.constant(v.value) for v in w.score[1]]),
            )
            _, Z_conv, pooled = depth_step(
                tape2, current, Z, w2, 0.75, c_min, frozen_mask=masks[l]
            )
            out.append(Z_conv.value)
            current, Z = pooled.adjacency, pooled.z
        return out

    z1 = probe.embeddings[0].value * probe.score_vars[0].value
    base = run(z1)
    z1_perturbed = z1.copy()
    z1_perturbed[j] += 123.0
    moved = run(z1_perturbed)
    others = np.arange(n) != j
    worst = max(np.abs(b[others] - m[others]).max() for b, m in zip(base, moved))
    assert worst <= 1e-12, worst
    report(f"isolation semantics: 50 random masks clean; leak {worst:.1e} <= 1e-12")


# ---------------------------------------------------------------------------
# 3. Loss oracles


def test_loss_oracles():
    tape = Tape()
    ys = [tape.leaf([[0.5], [0.5]]), tape.leaf([[0.5], [0.5]])]
    lp = pooling_loss(ys, np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert abs(lp.value[0, 0] - 4 * math.log(2)) < 1e-12

    tape = Tape()
    ys = [tape.leaf([[v]]) for v in (0.9, 0.3, 0.4, 0.6)]
    lm = monotonicity_loss(ys, 0.5)
    assert lm.value[0, 0] == 1.0
    report("loss oracles: L_p = 4 ln 2 (1e-12); L_m fixture = 1.0 exactly")


# ---------------------------------------------------------------------------
# 4. Eigensolver


def test_eigensolver():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        raw = rng.standard_normal((10, 10))
        S = (raw + raw.T) / 2
        w, U = jacobi_eigh(S)
        residual = np.linalg.norm(S - U @ np.diag(w) @ U.T)
        assert residual < 1e-8 * np.linalg.norm(S)
    w, _ = jacobi_eigh(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert abs(w[0] - 1.0) < 1e-10 and abs(w[1] - 3.0) < 1e-10
    report("eigensolver: 10x10 reconstruction < 1e-8 rel; 2x2 roots exact to 1e-10")


# ---------------------------------------------------------------------------
# 5. Reductions


def test_reductions(subject_piece):
    rng = np.random.default_rng(1)
    A = (rng.random((6, 6)) < 0.4).astype(float)
    A = np.maximum(A, A.T)
    np.fill_diagonal(A, 0)
    M = normalize(A)
    Z = rng.standard_normal((6, 4))
    W = rng.standard_normal((4, 3))
    for alpha in (0.0, 0.25, 0.75, 1.0):
        tape = Tape()
        Zv, Wv = tape.leaf(Z), tape.leaf(W)
        Mv, Mtv = tape.constant(M), tape.constant(M.T)
        directed = dir_rgcn_layer(Zv, [Mv], [Mtv], [Wv], [Wv], alpha)
        relational = rgcn_layer(Zv, [Mv], [Wv])
        plain = gcn_layer(Zv, Mv, Wv)
        assert np.abs(directed.value - relational.value).max() <= 1e-12
        assert np.abs(relational.value - plain.value).max() == 0.0

    graph = build_graph(subject_piece.score)
    base_cfg = ModelConfig(variant="base", depth_count=3, hidden_dim=8, seed=3)
    base_params = init_params(base_cfg)
    for variant, extra in (("sequence", {"transformer_ff": 16}),
                           ("grassmann", {"global_width": 4})):
        cfg = ModelConfig(variant=variant, depth_count=3, hidden_dim=8, seed=3, **extra)
        params = init_params(cfg)
        for name, value in params.items():
            if name.startswith("global/"):
                value[:] = 0.0
            elif "/score/" in name:
                value[:] = 0.0
                value[:8] = base_params[name]
            else:
                value[:] = base_params[name]
        out = forward_pooling_model(graph, cfg, params)
        base_out = forward_pooling_model(graph, base_cfg, base_params)
        assert np.abs(out.stack.scores - base_out.stack.scores).max() <= 1e-12
    report("reductions: dir_rgcn = rgcn = gcn; zeroed-global variants = base (1e-12)")


# ---------------------------------------------------------------------------
# 6. Graph builder fidelity


def test_graph_builder_fidelity(subject_piece, corpus):
    graph = build_graph(subject_piece.score)
    assert sorted(graph.topo_order.tolist()) == list(range(10))  # acyclic
    assert graph.adjacency[EdgeType.INTERVAL_UP_2][0, 8] == 1  # D4 -> E4
    assert graph.adjacency[EdgeType.INTERVAL_UP_2][2, 6] == 1  # F4 -> G4
    assert graph.adjacency[EdgeType.INTERVAL_DOWN_2][2, 8] == 1  # F4 -> E4

    total = sum(p.score.n for p in corpus)
    augmented = sum(
        v.score.n for p in corpus for v in augment_12_keys(p)
    )
    assert augmented == 12 * total
    assert 3807 * 12 == 45684
    report(
        "graph fidelity: forward DAG; cited 2nd-up/2nd-down edges present; "
        f"augmentation x12 ({total} -> {augmented} notes)"
    )


# ---------------------------------------------------------------------------
# 7. Overfit run


def test_overfit_run(corpus):
    config = ModelConfig(variant="base", depth_count=4, seed=1)
    dataset = build_dataset(corpus, val_fraction=0.0, seed=0)
    assert len(dataset.entries) >= 5

    short = TrainConfig(learning_rate=1e-3, epochs=5)
    a = train(dataset, config, short)
    b = train(dataset, config, short)
    assert a.history == b.history  # deterministic per seed

    start = time.monotonic()
    result = train(
        dataset,
        config,
        TrainConfig(
            learning_rate=1e-3,
            epochs=500,
            stop_at_accuracy=0.95,
            stop_at_monotonicity=0.01,
        ),
    )
    elapsed = time.monotonic() - start
    metrics = evaluate(dataset.entries, config, result.checkpoint.params)
    assert metrics.accuracy >= 0.95, metrics
    assert metrics.monotonicity <= 0.01, metrics
    assert result.history[-1]["epoch"] <= 500
    assert elapsed < 300.0, f"overfit took {elapsed:.0f}s"
    report(
        f"overfit: accuracy {metrics.accuracy:.3f} >= 0.95, "
        f"L_m {metrics.monotonicity:.4f} <= 0.01, "
        f"epoch {result.history[-1]['epoch']} <= 500, {elapsed:.0f}s < 300s"
    )
    test_overfit_run.checkpoint = result.checkpoint


# ---------------------------------------------------------------------------
# 8. Ablation harness


def test_ablation_harness(corpus):
    dataset = build_dataset(corpus, val_fraction=0.0, seed=0)
    cfg = ModelConfig(variant="base", depth_count=2, hidden_dim=8,
                      conv_layers=1, seed=0)
    rows = ablation_sweep(
        dataset, cfg, "alpha", [0.0, 0.25, 0.5, 0.75, 1.0],
        copies=1, train_config=TrainConfig(epochs=1),
    )
    csv_text = sweep_to_csv(rows)
    lines = csv_text.strip().splitlines()
    assert lines[0] == "axis,value,copy,epochs,max_val_accuracy,min_monotonicity"
    assert len(lines) == 6
    for line in lines[1:]:
        assert len(line.split(",")) == 6

    # alpha = 1.0: backward weights receive identically zero gradient
    cfg1 = ModelConfig(variant="base", depth_count=2, hidden_dim=8,
                       conv_layers=1, alpha=1.0, seed=0)
    params = init_params(cfg1)
    entry = dataset.entries[0]
    tape = Tape()
    loss, result = piece_loss(entry, cfg1, params, tape)
    tape.backward(loss)
    grads = result.binding.grads()
    checked = 0
    for name, g in grads.items():
        if name.endswith("/bwd") and not name.startswith("voice/"):
            assert np.all(g == 0.0), name
            checked += 1
    assert checked > 0
    report(f"ablation harness: 5-point alpha CSV well-formed; {checked} backward weights have zero grad at alpha=1")


# ---------------------------------------------------------------------------
# 9. CLI/service agreement


def test_cli_service_agreement(tmp_path, corpus, capsys):
    from schagraph.cli import main

    config = ModelConfig(variant="base", depth_count=4, hidden_dim=8,
                         conv_layers=1, seed=0)
    dataset = build_dataset(corpus, val_fraction=0.0, seed=0)
    checkpoint = train(dataset, config, TrainConfig(epochs=2)).checkpoint

    corpus_dir = tmp_path / "corpus"
    corpus_dir.mkdir()
    for f in bundled_data_dir().glob("*.json"):
        shutil.copy(f, corpus_dir / f.name)
    ckpt_path = tmp_path / "model.schg"
    save_checkpoint(checkpoint, ckpt_path)

    service = AnalysisService(checkpoint, corpus_dir)
    httpd = make_server(service, "127.0.0.1", 0)
    port = httpd.server_address[1]
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    try:
        base = f"http://127.0.0.1:{port}"
        cli_scores = None
        for threshold in ("0.5", "0.3,0.5,0.6,0.9"):
            rc = main(["infer", str(corpus_dir / "primi_toni_1.score.json"),
                       "--checkpoint", str(ckpt_path), "--c-min", threshold])
            assert rc == 0
            cli_doc = json.loads(capsys.readouterr().out)
            cli_scores = cli_doc["scores"]["scores"]
            values = [float(v) for v in threshold.split(",")]
            http_doc = requests.post(
                f"{base}/pieces/primi_toni_1/assignment",
                json={"c_min": values if len(values) > 1 else values[0]},
                timeout=10,
            ).json()
            assert cli_doc["assignment"] == http_doc["assignment"]
        # both paths expose bit-identical depth scores
        http_scores = requests.get(
            f"{base}/pieces/primi_toni_1/scores", timeout=10
        ).json()["scores"]
        assert cli_scores == http_scores
        # threshold changes never trigger a new forward pass
        assert service.forward_counts["primi_toni_1"] == 1
    finally:
        httpd.shutdown()
        httpd.server_close()
    report("cli/service agreement: identical bit arrays; forward ran once")
