import numpy as np
import pytest

from dmmcnn.network import (DEFAULT_FACE_SPEC, AttributeSpec, BackboneConfig, HeadConfig,
                            NetworkConfig, build_network, load_checkpoint, save_checkpoint)
from dmmcnn.nn import ShapeError
from oracles import max_rel_error, numeric_grad

SPEC = AttributeSpec(("a", "b", "c", "d", "e", "f"),
                     ("objective", "subjective", "objective", "subjective", "subjective",
                      "objective"))


def desk_net(seed=0, grouping=True, channels=(8, 16, 32)):
    return build_network(SPEC, 4, BackboneConfig(channels=channels), HeadConfig.desk(),
                         grouping=grouping, seed=seed)


def test_spec_validation():
    with pytest.raises(ValueError):
        AttributeSpec(("a", "a"), ("objective", "subjective"))
    with pytest.raises(ValueError):
        AttributeSpec(("a",), ("neither",))
    spec = AttributeSpec(("a", "b"), ("objective", "objective"))
    with pytest.raises(ValueError):
        build_network(spec, 2)
    build_network(spec, 2, heads=HeadConfig.desk(), grouping=False)
    assert DEFAULT_FACE_SPEC.J == len(DEFAULT_FACE_SPEC.objective) + len(DEFAULT_FACE_SPEC.subjective)


def test_full_scale_dimensions():
    spec = AttributeSpec(tuple(f"a{i}" for i in range(40)),
                         ("objective",) * 22 + ("subjective",) * 18)
    net = build_network(spec, 72, BackboneConfig(channels=(2048,), kernel=1, padding=0, pool=1))
    obj, subj, marks = net.heads["objective"], net.heads["subjective"], net.heads["landmarks"]
    dims = lambda h: [(l.in_dim, l.out_dim) for l in h.fc_layers]
    assert dims(obj) == [(2048, 1024), (1024, 22)]
    assert subj.spp_dim == 28672
    assert dims(subj) == [(28672, 2048), (2048, 1024), (1024, 18)]
    assert dims(marks) == [(2048, 1024), (1024, 144)]
    scores, lm = net.forward(np.ones((1, 1, 3, 3)))
    assert scores.shape == (1, 40) and lm.shape == (1, 144)


def test_desk_scale_dimensions():
    spec = AttributeSpec(tuple("abcdef"), ("objective",) * 3 + ("subjective",) * 3)
    net = build_network(spec, 4, BackboneConfig(channels=(8,)), HeadConfig.desk())
    assert net.heads["subjective"].spp_dim == 112
    assert net.heads["landmarks"].out_dim == 8
    assert len(net.heads["objective"].fc_layers) == 2
    assert len(net.heads["subjective"].fc_layers) == 3
    assert len(net.heads["landmarks"].fc_layers) == 2


def test_ungrouped_single_branch():
    net = desk_net(grouping=False)
    assert set(net.heads) == {"attributes", "landmarks"}
    head = net.heads["attributes"]
    assert head.levels == 3 and len(head.fc_layers) == 3 and head.out_dim == 6


def test_zero_weights_give_biases():
    net = desk_net()
    for p in net.params():
        p.value[...] = 0.0
    for head in net.heads.values():
        head.fc_layers[-1].bias.value[...] = np.arange(head.out_dim) + 1.0
    scores, marks = net.forward(np.random.default_rng(0).random((2, 1, 16, 16)))
    np.testing.assert_array_equal(marks, np.tile(np.arange(8) + 1.0, (2, 1)))
    expected = np.empty(6)
    for name, cols in (("objective", SPEC.objective), ("subjective", SPEC.subjective)):
        expected[cols] = np.arange(len(cols)) + 1.0
    np.testing.assert_array_equal(scores, np.tile(expected, (2, 1)))


def test_deterministic_per_seed():
    x = np.random.default_rng(1).random((3, 1, 16, 16))
    a, b, c = desk_net(5), desk_net(5), desk_net(6)
    assert np.array_equal(a.forward(x)[0], b.forward(x)[0])
    assert not np.array_equal(a.forward(x)[0], c.forward(x)[0])


def test_attribute_vector_follows_index_map():
    net = desk_net()
    x = np.random.default_rng(2).random((2, 1, 16, 16))
    outs = net.forward_heads(x)
    scores = net.attribute_scores(outs)
    for name, cols in (("objective", SPEC.objective), ("subjective", SPEC.subjective)):
        for pos, j in enumerate(cols):
            np.testing.assert_array_equal(scores[:, j], outs[name][:, pos])


def test_two_input_sizes_same_output_length():
    net = desk_net()
    s1, m1 = net.forward(np.random.default_rng(3).random((1, 1, 16, 16)))
    s2, m2 = net.forward(np.random.default_rng(3).random((1, 1, 24, 20)))
    assert s1.shape == s2.shape and m1.shape == m2.shape


def test_too_small_input_raises():
    with pytest.raises(ShapeError):
        desk_net().forward(np.zeros((1, 1, 4, 4)))


def _probe(net, x, rng):
    u_s = rng.standard_normal((x.shape[0], 6))
    u_m = rng.standard_normal((x.shape[0], 8))

    def f():
        s, m = net.forward(x)
        return float(np.sum(u_s * s) + np.sum(u_m * m))

    return u_s, u_m, f


@pytest.mark.parametrize("seed", [0, 1])
def test_full_network_gradcheck(seed):
    rng = np.random.default_rng(seed)
    net = desk_net(seed, channels=(4, 4))
    x = rng.random((1, 1, 8, 8))
    u_s, u_m, f = _probe(net, x, rng)
    net.zero_grad()
    f()
    dx = net.backward(u_s, u_m)
    errs = [max_rel_error(dx, numeric_grad(f, x))]
    for name, p in net.named_params():
        errs.append(max_rel_error(p.grad, numeric_grad(f, p.value)))
    assert max(errs) < 1e-4


def _backbone_grads(net, x, grads):
    net.zero_grad()
    net.forward_heads(x)
    net.backward_heads(grads)
    return [p.grad.copy() for p in net.backbone.params()]


def test_backbone_gradient_is_sum_of_head_contributions():
    rng = np.random.default_rng(4)
    net = desk_net()
    x = rng.random((3, 1, 16, 16))
    g = {name: rng.standard_normal((3, head.out_dim)) for name, head in net.heads.items()}
    total = _backbone_grads(net, x, g)
    parts = [_backbone_grads(net, x, {name: g[name]}) for name in g]
    for k, t in enumerate(total):
        np.testing.assert_allclose(t, sum(p[k] for p in parts), rtol=1e-10, atol=1e-13)


def test_zero_landmark_grad_matches_attribute_only():
    rng = np.random.default_rng(5)
    net = desk_net()
    x = rng.random((2, 1, 16, 16))
    gs = rng.standard_normal((2, 6))
    net.zero_grad()
    net.forward(x)
    net.backward(gs, np.zeros((2, 8)))
    with_zero = [p.grad.copy() for p in net.params()]
    net.zero_grad()
    net.forward(x, with_landmarks=False)
    net.backward(gs, None)
    without = [p.grad.copy() for p in net.params()]
    for a, b in zip(with_zero, without):
        np.testing.assert_array_equal(a, b)


def test_backward_shape_mismatch():
    net = desk_net()
    net.forward(np.zeros((2, 1, 16, 16)))
    with pytest.raises(ShapeError):
        net.backward_heads({"landmarks": np.zeros((2, 7))})
    with pytest.raises(RuntimeError):
        desk_net().backward(np.zeros((1, 6)))


def test_config_json_roundtrip():
    cfg = desk_net(grouping=False).config
    assert NetworkConfig.from_json(cfg.to_json()) == cfg


@pytest.mark.parametrize("grouping", [True, False])
def test_checkpoint_roundtrip_bit_exact(tmp_path, grouping):
    net = desk_net(3, grouping=grouping)
    tau = np.array([0.1, -0.25, 0.0, 1e-17, 3.5, -2.0])
    save_checkpoint(net, tmp_path / "ckpt", tau)
    loaded, tau2 = load_checkpoint(tmp_path / "ckpt")
    assert loaded.config == net.config
    for (n1, p1), (n2, p2) in zip(net.named_params(), loaded.named_params()):
        assert n1 == n2 and p1.value.tobytes() == p2.value.tobytes()
    assert tau2.tobytes() == tau.tobytes()
    save_checkpoint(loaded, tmp_path / "ckpt2", tau2)
    assert (tmp_path / "ckpt").read_bytes() == (tmp_path / "ckpt2").read_bytes()


def test_checkpoint_without_thresholds_and_bad_magic(tmp_path):
    net = desk_net()
    save_checkpoint(net, tmp_path / "c")
    assert load_checkpoint(tmp_path / "c")[1] is None
    (tmp_path / "bad").write_bytes(b"NOTACKPT" + b"\0" * 16)
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "bad")
