"""Smoke test for the pyhypee extension module.

Build and install first:
    pip install maturin
    pip install --no-build-isolation -e crates/python
then run:
    python python/smoke_test.py
"""

import math
import os
import tempfile

import pyhypee as h


def check_geometry():
    p = h.exp_map_origin([0.3, -0.4, 1.2], c=0.5)
    assert abs(-p[0] ** 2 + sum(v * v for v in p[1:]) + 1.0 / 0.5) < 1e-9
    back = h.log_map_origin(p[1:], c=0.5)
    assert max(abs(a - b) for a, b in zip(back, [0.3, -0.4, 1.2])) < 1e-12
    r = math.sqrt(0.3**2 + 0.4**2 + 1.2**2)
    assert abs(h.geodesic_distance([0.0] * 3, p[1:], c=0.5) - r) < 1e-12
    wide = h.half_aperture([0.5, 0.0], k=0.1)
    narrow = h.half_aperture([5.0, 0.0], k=0.1)
    assert 0.0 < narrow < wide <= math.pi / 2
    assert abs(h.exterior_angle([1.0, 0.0], [3.0, 0.0])) < 1e-6


def check_tables():
    cost = h.CostModel([13.08e3, 19.41e3, 34.9e3])
    assert h.percent_truncated(cost.saved_fraction(0)) == 62.5
    assert h.percent_truncated(cost.saved_fraction(1)) == 44.3
    assert h.percent_truncated(cost.mixture_saved_fraction([0.301, 0.391, 0.309])) == 36.1
    assert abs(h.curvature_estimate(0.282) - 0.26) / 0.26 < 0.01
    w = [1, 2, 3, 4]
    star = [[0 if i == j else w[i] + w[j] for j in range(4)] for i in range(4)]
    assert h.delta_from_distances(star)["delta_rel"] == 0.0


def check_model():
    features, labels = h.generate_synthetic(seed=1, samples_per_class=30)
    # Samples come grouped by class, so split by parity.
    train_x, train_y = features[::2], labels[::2]
    ref_x, ref_y = features[1::2], labels[1::2]
    model = h.Model(len(features[0]), 12, mode="hyperbolic", hidden_dims=[16, 16, 16], latent_dim=8, seed=1)
    history = model.train(train_x, train_y, epochs=5, lam=0.5, cone_k=1.0)
    assert len(history) == 5 and all(math.isfinite(loss) for loss, _ in history)
    outs = model.forward(ref_x[0])
    assert len(outs) == model.num_exits == 3
    stats = model.calibrate(ref_x, ref_y)
    stats = h.NormStats.from_json(stats.to_json())
    macs = model.exit_macs()
    for x in ref_x[:20]:
        exit_taken, predicted, spent = model.infer(x, "class", stats)
        assert 0 <= exit_taken < 3 and 0 <= predicted < 12
        assert spent == macs[exit_taken]
    assert model.infer(ref_x[0], "fixed", exit=2)[0] == 2
    assert model.infer(ref_x[0], "entropy", thresholds=[0.01, 0.01])[0] == 2

    with tempfile.TemporaryDirectory() as tmp:
        ckpt = os.path.join(tmp, "model.json")
        model.save(ckpt)
        again = h.Model.load(ckpt)
        assert again.forward(ref_x[0])[2]["logits"] == outs[2]["logits"]

        path = os.path.join(tmp, "emb.hyee")
        vecs = [o["space"] for o in outs]
        h.write_embeddings(path, vecs, curvature=1.0, labels=[0, 0, 0], exit_ids=[0, 1, 2])
        back = h.read_embeddings(path)
        assert back["mode"] == "hyperbolic" and back["exit_ids"] == [0, 1, 2]
        assert len(back["vectors"]) == 3

    assignments, trace, _ = h.hyperbolic_kmeans([o["space"] for o in outs] * 3, k=2)
    assert len(assignments) == 9
    assert all(b <= a + 1e-9 for a, b in zip(trace, trace[1:]))


def check_errors():
    for bad in (lambda: h.lift([1.0], -1.0), lambda: h.Model(4, 3, mode="spherical")):
        try:
            bad()
        except ValueError:
            continue
        raise AssertionError("invalid input accepted")
    try:
        h.read_embeddings("/nonexistent/file.hyee")
    except OSError:
        pass
    else:
        raise AssertionError("missing file accepted")


if __name__ == "__main__":
    check_geometry()
    check_tables()
    check_model()
    check_errors()
    print("pyhypee smoke test passed")
