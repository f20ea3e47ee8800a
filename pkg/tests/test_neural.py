import numpy as np
import pytest
import scipy.stats
import torch

from arithopt.ct import dadda_tree, wallace_tree
from arithopt.dataset import DatasetSpec, generate_dataset
from arithopt.neural import (
    DivergenceError,
    TrainConfig,
    encode_designs,
    forward_diffuse,
    grad_wrt_input,
    load_checkpoint,
    make_denoiser,
    make_predictor,
    make_schedule,
    save_checkpoint,
    train_diffusion,
    train_predictor,
)
from arithopt.sampling import predict_x0


def test_schedule_invariants():
    for kind in ("cosine", "linear-abar"):
        sched = make_schedule(1000, kind)
        ab = sched.alpha_bar
        assert ab[0] == 1.0
        assert (np.diff(ab) < 0).all()
        assert ab[-1] > 0


def test_cosine_tail_is_small():
    assert make_schedule(1000, "cosine").alpha_bar[-1] < 0.01


def test_schedule_rejects_tiny_horizon():
    with pytest.raises(ValueError):
        make_schedule(1)


def test_forward_diffuse_identity_at_clean_end():
    sched = make_schedule(100)
    x0 = np.ones((2, 3, 3))
    assert np.allclose(forward_diffuse(x0, 0, np.zeros_like(x0), sched), x0)


def test_forward_diffuse_pure_noise_component():
    sched = make_schedule(100)
    eps = np.random.default_rng(0).standard_normal((2, 3, 3))
    xt = forward_diffuse(np.zeros((2, 3, 3)), 40, eps, sched)
    expected = np.sqrt(1 - sched.alpha_bar[40]) * eps
    assert np.allclose(xt, expected)


@pytest.mark.parametrize("t", [1, 137, 500, 999, 1000])
def test_diffuse_reconstruct_round_trip(t):
    sched = make_schedule(1000)
    rng = np.random.default_rng(t)
    x0 = rng.choice([-1.0, 1.0], size=(4, 8, 5))
    eps = rng.standard_normal(x0.shape)
    xt = forward_diffuse(x0, t, eps, sched)
    assert np.abs(predict_x0(xt, eps, t, sched) - x0).max() <= 1e-6


def test_denoiser_preserves_shape():
    for kind, n, shape in (("ct", 8, (2, 8, 16, 5)), ("prefix", 16, (3, 1, 16, 16)), ("ct", 2, (1, 4, 4, 2))):
        net = make_denoiser(kind, n, seed=0)
        x = torch.randn(shape)
        out = net(x, torch.randint(1, 1001, (shape[0],)))
        assert out.shape == x.shape


def test_predictor_outputs_scalar_per_sample():
    net = make_predictor("ct", 8, seed=0)
    assert net(torch.randn(5, 8, 16, 5)).shape == (5,)


def test_untrained_denoiser_baseline_loss_near_one():
    sched = make_schedule(1000)
    net = make_denoiser("ct", 8, seed=3)
    gen = torch.Generator().manual_seed(0)
    x0 = torch.from_numpy(
        np.random.default_rng(0).choice([-1.0, 1.0], size=(64, 8, 16, 5))
    ).float()
    t = torch.randint(1, 1001, (64,), generator=gen)
    eps = torch.randn(x0.shape, generator=gen)
    xt = forward_diffuse(x0, t, eps, sched)
    with torch.no_grad():
        loss = float(((net(xt, t) - eps) ** 2).mean())
    assert 0.95 < loss < 1.05  # zero-init output layer predicts 0 exactly


@pytest.fixture(scope="module")
def small_corpus():
    ds = generate_dataset(
        DatasetSpec(kind="ct", n=4, unlabeled_count=80, labeled_count=40, rng_seed=1)
    )
    designs = [ds.designs[i] for i, _ in ds.labeled]
    ys = np.asarray([label.y for _, label in ds.labeled], dtype=np.float32)
    return ds, designs, ys


def test_diffusion_training_reduces_loss_and_is_deterministic(small_corpus):
    ds, _, _ = small_corpus
    sched = make_schedule(1000)
    data = encode_designs(ds.designs)
    cfg = TrainConfig(epochs=6, seed=42)
    net_a = make_denoiser("ct", 4, seed=11)
    res_a = train_diffusion(net_a, data, sched, cfg)
    net_b = make_denoiser("ct", 4, seed=11)
    res_b = train_diffusion(net_b, data, sched, cfg)
    assert res_a.losses == res_b.losses
    assert res_a.losses[-1] < res_a.losses[0]
    assert all(np.isfinite(res_a.losses))


def test_predictor_constant_labels_fit_to_zero(small_corpus):
    _, designs, _ = small_corpus
    net = make_predictor("ct", 4, seed=7)
    ys = np.full(len(designs), 0.75, dtype=np.float32)
    res = train_predictor(net, encode_designs(designs), ys, TrainConfig(epochs=60, seed=8))
    assert res.val_mse is not None and res.val_mse < 1e-3


def test_predictor_learns_rank_order(small_corpus):
    _, designs, ys = small_corpus
    net = make_predictor("ct", 4, seed=9)
    res = train_predictor(net, encode_designs(designs), ys, TrainConfig(epochs=120, seed=10))
    with torch.no_grad():
        pred = net(torch.from_numpy(encode_designs(designs))).numpy()
    rho = scipy.stats.spearmanr(pred, ys).statistic
    assert rho >= 0.7
    assert res.val_mse is not None


def test_predictor_training_determinism(small_corpus):
    _, designs, ys = small_corpus
    cfg = TrainConfig(epochs=5, seed=21)
    r1 = train_predictor(make_predictor("ct", 4, seed=2), encode_designs(designs), ys, cfg)
    r2 = train_predictor(make_predictor("ct", 4, seed=2), encode_designs(designs), ys, cfg)
    assert r1.losses == r2.losses and r1.val_mse == r2.val_mse


def test_training_rejects_empty_and_nonfinite():
    sched = make_schedule(100)
    with pytest.raises(ValueError):
        train_diffusion(make_denoiser("ct", 4), np.zeros((0, 6, 8, 3), np.float32), sched, TrainConfig())
    with pytest.raises(ValueError):
        train_predictor(
            make_predictor("ct", 4),
            np.zeros((4, 6, 8, 3), np.float32),
            np.array([1.0, np.nan, 1.0, 1.0], np.float32),
            TrainConfig(),
        )


def test_grad_matches_closed_form():
    # quadratic toy: f(x) = sum(3 x^2), grad = 6x
    x = torch.randn(2, 3, 4, 5, dtype=torch.float64)
    g = grad_wrt_input(lambda z: (3 * z * z).sum(), x)
    assert torch.allclose(g, 6 * x)


def _central_difference_check(fn, x, samples=10, h=1e-3, tol=1e-4, seed=0):
    g = grad_wrt_input(fn, x)
    rng = np.random.default_rng(seed)
    for _ in range(samples):
        ix = tuple(int(rng.integers(s)) for s in x.shape)
        xp = x.clone(); xp[ix] += h
        xm = x.clone(); xm[ix] -= h
        fd = (fn(xp) - fn(xm)).item() / (2 * h)
        assert abs(fd - g[ix].item()) <= tol * max(1.0, abs(fd))


def test_predictor_gradient_matches_finite_differences():
    net = make_predictor("ct", 8, seed=13).double()
    x = torch.randn(1, 8, 16, 5, dtype=torch.float64)
    _central_difference_check(lambda z: net(z).sum(), x)


def test_denoiser_gradient_matches_finite_differences():
    net = make_denoiser("ct", 8, seed=14).double()
    tt = torch.full((1,), 321, dtype=torch.long)
    x = torch.randn(1, 8, 16, 5, dtype=torch.float64)
    _central_difference_check(lambda z: net(z, tt).pow(2).sum(), x)


def test_guidance_loss_gradient_matches_finite_differences():
    sched = make_schedule(1000)
    den = make_denoiser("ct", 8, seed=15).double()
    pre = make_predictor("ct", 8, seed=16).double()
    t = 400
    tt = torch.full((1,), t, dtype=torch.long)

    def loss(z):
        eps = den(z, tt)
        x0_hat = predict_x0(z, eps, t, sched)
        return ((pre(x0_hat) - 0.7) ** 2).sum()

    x = torch.randn(1, 8, 16, 5, dtype=torch.float64)
    _central_difference_check(loss, x)


def test_checkpoint_round_trip(tmp_path):
    net = make_denoiser("prefix", 8, seed=20)
    save_checkpoint(tmp_path / "d.pt", net, {"kind": "prefix", "n": 8})
    loaded, meta = load_checkpoint(tmp_path / "d.pt")
    assert meta == {"kind": "prefix", "n": 8}
    x = torch.randn(2, 1, 8, 8)
    t = torch.full((2,), 5, dtype=torch.long)
    with torch.no_grad():
        assert torch.equal(net(x, t), loaded(x, t))


def test_encode_designs_batches():
    batch = encode_designs([wallace_tree(4), dadda_tree(4)])
    assert batch.shape == (2, 6, 8, 3)
    assert batch.dtype == np.float32
