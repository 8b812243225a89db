import numpy as np
import pytest

from socnav.nets import (
    Adam,
    Mlp,
    actor_net,
    critic_net,
    load_checkpoint,
    polyak_update,
    save_checkpoint,
)


def hand_forward(net, x):
    """Independent oracle: explicit matrix arithmetic, no shared code path."""
    h = x
    for w, b, act in zip(net.weights, net.biases, net.activations):
        z = h @ w + b
        if act == "relu":
            h = np.where(z > 0, z, 0.0)
        elif act == "tanh":
            h = np.tanh(z)
        else:
            h = z
    return h


def fd_param_grads(net, x, upstream, h=1e-6):
    """Central finite differences of sum(upstream * f(x)) over all parameters."""
    flat = net.get_flat()
    grads = np.zeros_like(flat)
    for i in range(flat.size):
        bump = flat.copy()
        bump[i] += h
        net.set_flat(bump)
        hi = float(np.sum(upstream * net(x)))
        bump[i] -= 2 * h
        net.set_flat(bump)
        lo = float(np.sum(upstream * net(x)))
        grads[i] = (hi - lo) / (2 * h)
    net.set_flat(flat)
    return grads


def flatten_grads(net, weight_grads, bias_grads):
    parts = []
    for gw, gb in zip(weight_grads, bias_grads):
        parts.append(gw.ravel())
        parts.append(gb.ravel())
    return np.concatenate(parts)


def test_forward_matches_hand_arithmetic():
    rng = np.random.default_rng(0)
    net = Mlp([4, 6, 3], ["relu", "tanh"], rng=rng)
    x = rng.normal(size=(5, 4))
    assert net(x) == pytest.approx(hand_forward(net, x), abs=1e-14)


def test_backward_matches_finite_differences_all_params():
    rng = np.random.default_rng(1)
    for acts in (["relu", "linear"], ["relu", "tanh"], ["tanh", "relu", "linear"]):
        sizes = [5] + [7] * (len(acts) - 1) + [2]
        net = Mlp(sizes, acts, rng=rng)
        x = rng.normal(size=(3, 5))
        upstream = rng.normal(size=(3, 2))
        out, cache = net.forward(x)
        gw, gb, _ = net.backward(cache, upstream)
        analytic = flatten_grads(net, gw, gb)
        numeric = fd_param_grads(net, x, upstream)
        rel = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12)
        assert rel < 1e-7


def test_input_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    net = Mlp([4, 8, 8, 1], ["relu", "relu", "linear"], rng=rng)
    x = rng.normal(size=(1, 4))
    upstream = np.ones((1, 1))
    analytic = net.input_gradient(x, upstream)[0]
    h = 1e-6
    numeric = np.zeros(4)
    for i in range(4):
        dx = np.zeros((1, 4))
        dx[0, i] = h
        numeric[i] = float(net(x + dx)[0, 0] - net(x - dx)[0, 0]) / (2 * h)
    assert analytic == pytest.approx(numeric, abs=1e-8)


def test_gradients_sum_over_batch():
    rng = np.random.default_rng(3)
    net = Mlp([3, 5, 2], ["relu", "linear"], rng=rng)
    x = rng.normal(size=(4, 3))
    upstream = rng.normal(size=(4, 2))
    _, cache = net.forward(x)
    gw_all, gb_all, _ = net.backward(cache, upstream)
    total = flatten_grads(net, gw_all, gb_all)
    acc = np.zeros_like(total)
    for i in range(4):
        _, cache_i = net.forward(x[i : i + 1])
        gw, gb, _ = net.backward(cache_i, upstream[i : i + 1])
        acc += flatten_grads(net, gw, gb)
    assert total == pytest.approx(acc, abs=1e-12)


def test_architectures():
    actor = actor_net(26, 16, hidden=256, rng=np.random.default_rng(0))
    assert actor.sizes == [26, 256, 256, 16]
    assert actor.activations == ["relu", "relu", "tanh"]
    out = actor(np.zeros((2, 26)))
    assert out.shape == (2, 16)
    assert np.all(np.abs(out) < 1.0)

    critic = critic_net(42, hidden=256, rng=np.random.default_rng(1))
    assert critic.sizes == [42, 256, 256, 256, 256, 1]
    assert critic.activations[-1] == "linear"
    # Small-head init keeps a fresh critic's scores near zero.
    q = critic(np.random.default_rng(2).normal(size=(100, 42)))
    assert np.max(np.abs(q)) < 0.01
    assert np.max(np.abs(critic.weights[-1])) <= 1e-3
    assert np.max(np.abs(critic.biases[-1])) <= 1e-3


def test_adam_single_step_hand_value():
    # One step with gradient 1 everywhere moves each parameter by ~lr.
    net = Mlp([1, 1], ["linear"], rng=np.random.default_rng(0))
    before = net.get_flat()
    opt = Adam(net, lr=0.1)
    gw = [np.ones_like(net.weights[0])]
    gb = [np.ones_like(net.biases[0])]
    opt.step(gw, gb)
    after = net.get_flat()
    assert after - before == pytest.approx(np.full(2, -0.1), abs=1e-8)


def test_adam_monotone_direction():
    net = Mlp([1, 1], ["linear"], rng=np.random.default_rng(0))
    opt = Adam(net, lr=0.05)
    w0 = float(net.weights[0][0, 0])
    for _ in range(2):
        opt.step([np.ones_like(net.weights[0])], [np.ones_like(net.biases[0])])
    w2 = float(net.weights[0][0, 0])
    assert w2 < w0


def test_polyak_hand_value():
    target = Mlp([2, 2], ["linear"], rng=np.random.default_rng(0))
    online = Mlp([2, 2], ["linear"], rng=np.random.default_rng(1))
    target.set_flat(np.zeros(target.n_params()))
    online.set_flat(np.ones(online.n_params()))
    polyak_update(target, online, rho=0.005)
    assert target.get_flat() == pytest.approx(np.full(target.n_params(), 0.005))


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    nets = {
        "actor": actor_net(6, 4, hidden=8, rng=rng),
        "critic": critic_net(10, hidden=8, rng=rng),
    }
    path = tmp_path / "ckpt.npz"
    save_checkpoint(path, nets)
    loaded = load_checkpoint(path)
    assert set(loaded) == {"actor", "critic"}
    x = rng.normal(size=(3, 6))
    assert loaded["actor"](x) == pytest.approx(nets["actor"](x), abs=0)
    assert loaded["critic"].sizes == nets["critic"].sizes
    assert loaded["critic"].get_flat() == pytest.approx(nets["critic"].get_flat(), abs=0)


def test_checkpoint_version_guard(tmp_path):
    path = tmp_path / "bad.npz"
    np.savez(path, version=np.array(99))
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_seeded_init_reproducible():
    a = actor_net(5, 2, hidden=4, rng=np.random.default_rng(42))
    b = actor_net(5, 2, hidden=4, rng=np.random.default_rng(42))
    assert a.get_flat() == pytest.approx(b.get_flat(), abs=0)
