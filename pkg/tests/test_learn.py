import numpy as np
import pytest
from scipy.stats import norm

from oracles import finite_difference_errors, random_orthonormal
from ssfeedback.channel import SiteModel, sample_site
from ssfeedback.errors import DegenerateChannelError, DimensionMismatchError, NumericFailure
from ssfeedback.learn.checkpoint import dumps_model, load_model, loads_model, save_model
from ssfeedback.learn.network import (
    LN_EPS,
    MlpModel,
    TrainableProbing,
    decode,
    encode,
    forward_backward,
    gelu,
    subspace_loss,
)
from ssfeedback.learn.trainer import TrainConfig, draw_noise, export_deployment, train
from ssfeedback.errors import DatasetFormatError, TruncationError
from ssfeedback.probing import Codebook, NoiseModel, normalize_fingerprint, rsrp_fingerprint
from ssfeedback.schemes import Subspace, capture_efficiency


def crand(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def small(seed=0):
    probe = TrainableProbing.random(8, 4, seed=seed)
    model = MlpModel.init(8, 4, 2, depth=2, width=16, seed=seed)
    rng = np.random.default_rng(seed + 100)
    return probe, model, crand(rng, 3, 8)


def tiny_site(count=200):
    site = SiteModel(n_t=8, cluster_centers=(-0.3, 0.1), gain_profile_db=(-100, -104),
                     path_count_range=(1, 2), seed=3)
    return sample_site(site, count, 0)


# -- encoder ---------------------------------------------------------------------


def test_encode_cases(rng):
    probe = TrainableProbing.random(6, 4, seed=1)
    assert abs(encode(probe, probe.b[:, 0], p_ssb=2.0)[0] - 10 * np.log10(2.0)) < 1e-12
    h = crand(rng, 6)
    book = Codebook(probe.b, "learned")
    clean = rsrp_fingerprint(h, book, NoiseModel(enabled=False)).noise_free_db
    assert np.max(np.abs(encode(probe, h) - clean)) < 1e-12
    np.testing.assert_allclose(encode(probe, np.exp(0.7j) * h), encode(probe, h), atol=1e-12)
    with pytest.raises(DegenerateChannelError):
        encode(probe, np.zeros(6))


def test_probing_init_and_renormalize(rng):
    p = TrainableProbing.dft(8, 4)
    assert p.kind == "dft_oversampled"
    p.b *= 3.0
    p.renormalize()
    assert np.max(np.abs(np.linalg.norm(p.b, axis=0) - 1)) < 1e-12
    p.b[:, 0] = 0
    with pytest.raises(NumericFailure):
        p.renormalize()


# -- decoder ----------------------------------------------------------------------


def test_decode_constant_with_zero_output_weights(rng):
    m = MlpModel.init(8, 4, 2, depth=2, width=16, seed=0)
    m.w_out[:] = 0
    m.b_out[:] = np.arange(m.b_out.size)
    a = decode(m, rng.standard_normal(4))
    b = decode(m, rng.standard_normal(4))
    assert np.array_equal(a, b) and a.shape == (8, 2)
    assert a[0, 0] == 0 + 1j * 16  # real block first, then imaginary block


def test_layernorm_statistics(rng):
    m = MlpModel.init(8, 4, 2, depth=3, width=32, seed=1)
    cache = []
    decode(m, rng.standard_normal((5, 4)), _cache=cache)
    for x_in, xhat, inv_std, y in cache[:-1]:
        assert np.max(np.abs(xhat.mean(axis=1))) < 1e-6
        # variance is 1 up to the LN epsilon
        var = xhat.var(axis=1)
        z_var = 1 / inv_std[:, 0] ** 2 - LN_EPS
        np.testing.assert_allclose(var, z_var / (z_var + LN_EPS), atol=1e-6)


def test_gelu_values():
    assert gelu(np.array(0.0)) == 0.0
    assert abs(gelu(np.array(12.0)) - 12.0) < 1e-12
    assert abs(gelu(np.array(-10.0))) < 1e-20
    xs = np.linspace(-5, 5, 41)
    np.testing.assert_allclose(gelu(xs), xs * norm.cdf(xs), rtol=1e-14, atol=1e-300)


def test_decode_checks(rng):
    m = MlpModel.init(8, 4, 2, depth=1, width=8, seed=0)
    with pytest.raises(DimensionMismatchError):
        decode(m, np.zeros(5))
    m.w_out[0, 0] = np.inf
    with pytest.raises(NumericFailure):
        decode(m, np.ones(4))
    with pytest.raises(ValueError):
        MlpModel.init(8, 4, 2, depth=0)


# -- loss ----------------------------------------------------------------------------


def test_subspace_loss_cases(rng):
    h = crand(rng, 8)
    c = np.column_stack([h / np.linalg.norm(h), crand(rng, 8)])
    c = np.linalg.qr(c)[0]
    loss, eta = subspace_loss(c, h, 1e-6)
    assert eta > 0.999 and loss == -eta
    # closed form: aligned orthonormal column shrinks by 1/(1+eps)
    assert abs(eta - 1 / (1 + 1e-6)) < 1e-12
    perp = np.eye(8, dtype=complex)[:, :2]
    h2 = np.r_[0, 0, crand(rng, 6)]
    assert subspace_loss(perp, h2, 1e-6)[1] == 0.0
    u = random_orthonormal(rng, 8, 3)
    assert abs(subspace_loss(u, h, 0.0)[1] - capture_efficiency(Subspace(u), h)) < 1e-12
    with pytest.raises(DegenerateChannelError):
        subspace_loss(u, np.zeros(8), 0.0)


def test_subspace_loss_unitary_invariance(rng):
    c = crand(rng, 10, 3)
    h = crand(rng, 10)
    q, _ = np.linalg.qr(crand(rng, 3, 3))
    assert abs(subspace_loss(c, h, 0.0)[1] - subspace_loss(c @ q, h, 0.0)[1]) < 1e-9


# -- backward -------------------------------------------------------------------------


def test_gradient_check_small_instance():
    probe, model, h = small()
    errs = finite_difference_errors(probe, model, h)
    assert set(errs) >= {"w0", "b0", "gamma0", "beta0", "w1", "gamma1", "w_out", "b_out",
                         "probe_re", "probe_im"}
    assert max(errs.values()) < 1e-4, errs


def test_zero_upstream_gives_zero_gradients():
    probe, model, h = small(1)
    res = forward_backward(probe, model, h, weights=np.zeros(3))
    assert all(not np.any(g) for g in res.grads.values())
    assert not np.any(res.grad_b)


def test_duplicate_sample_doubles_contribution():
    probe, model, h = small(2)
    single = forward_backward(probe, model, h[:1], weights=np.ones(1))
    double = forward_backward(probe, model, np.vstack([h[:1], h[:1]]), weights=np.ones(2))
    for k in single.grads:
        np.testing.assert_allclose(double.grads[k], 2 * single.grads[k], rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(double.grad_b, 2 * single.grad_b, rtol=1e-10, atol=1e-14)


def test_noise_is_constant_for_gradient():
    probe, model, h = small(3)
    nd = np.random.default_rng(0).normal(size=(3, 4))
    a = forward_backward(probe, model, h, noise_db=nd)
    b = forward_backward(probe, model, h)
    assert a.loss != b.loss


# -- training ---------------------------------------------------------------------------


def quick_cfg(**kw):
    base = dict(k=4, q=2, depth=1, width=16, batch_size=16, epochs=3, step_beta=0.05, seed=5)
    base.update(kw)
    return TrainConfig(**base)


def test_zero_step_leaves_parameters():
    ds = tiny_site()
    cfg = quick_cfg(step_beta=0.0)
    from ssfeedback.learn.trainer import init_probing
    from ssfeedback.learn.network import MlpModel as M
    probe0 = init_probing(cfg, 8)
    b0 = probe0.b.copy()
    probe, model, trace = train(ds, cfg, probe=probe0)
    np.testing.assert_allclose(probe.b, b0, atol=1e-15)
    seed = int(np.random.SeedSequence([cfg.seed, 2024]).spawn(3)[0].generate_state(1)[0])
    ref = M.init(8, 4, 2, 1, 16, seed=seed)
    for k, v in ref.params().items():
        assert np.array_equal(model.params()[k], v)
    assert len(trace) == 3


def test_training_is_deterministic():
    ds = tiny_site()
    a = train(ds, quick_cfg())
    b = train(ds, quick_cfg())
    assert a[2].rows() == b[2].rows()
    assert np.array_equal(a[0].b, b[0].b)
    c = train(ds, quick_cfg(seed=6))
    assert c[2].rows() != a[2].rows()


def test_training_keeps_unit_columns_and_improves():
    ds = tiny_site(400)
    probe, model, trace = train(ds, quick_cfg(epochs=15))
    assert np.max(np.abs(np.linalg.norm(probe.b, axis=0) - 1)) < 1e-10
    assert trace.val_eta[-1] > trace.val_eta[0]
    assert len(trace.wall_time) == 15 and trace.epoch == list(range(15))


def test_training_adam_and_fixed_probing():
    ds = tiny_site()
    probe, _, trace = train(ds, quick_cfg(optimizer="adam", step_beta=1e-3))
    assert np.all(np.isfinite(trace.train_eta))
    fixed = TrainableProbing.random(8, 4, seed=9)
    b0 = fixed.b.copy()
    probe, _, _ = train(ds, quick_cfg(train_probing=False), probe=fixed)
    np.testing.assert_allclose(probe.b, b0, atol=1e-15)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_training_divergence_aborts_with_trace():
    ds = tiny_site()
    from ssfeedback.learn.trainer import TrainingDiverged
    with pytest.raises(TrainingDiverged) as info:
        train(ds, quick_cfg(step_beta=1e200, epochs=5))
    assert isinstance(info.value, NumericFailure)
    assert len(info.value.trace) < 5


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(val_fraction=1.0)
    with pytest.raises(ValueError):
        TrainConfig(optimizer="rmsprop")
    with pytest.raises(ValueError):
        train(tiny_site(10), quick_cfg(batch_size=64))


def test_training_noise_honesty():
    rng = np.random.default_rng(0)
    d = draw_noise(rng, NoiseModel(mu_b=0.0, sigma_b=1.0), (10_000, 1))
    assert abs(d.std() - 1.0) < 0.05 and abs(d.mean()) < 0.05
    d2 = draw_noise(rng, NoiseModel(mu_b=2.0, sigma_b=3.0), (10_000,))
    assert abs(d2.std() - 3.0) < 0.15 and abs(d2.mean() - 2.0) < 0.1
    assert draw_noise(rng, NoiseModel(enabled=False), (4, 4)) is None


def test_noise_shifts_decoder_input_exactly():
    probe, model, h = small(4)
    nd = draw_noise(np.random.default_rng(1), NoiseModel(), (3, 4))
    noisy = forward_backward(probe, model, h, noise_db=nd, need_grad=False)
    ref = subspace_loss(decode(model, normalize_fingerprint(encode(probe, h) + nd)), h)[1]
    np.testing.assert_allclose(noisy.eta, ref, atol=1e-12)


# -- deployment ----------------------------------------------------------------------------


def test_export_untrained_totality(rng):
    probe = TrainableProbing.random(8, 4, seed=0)
    model = MlpModel.init(8, 4, 3, depth=2, width=16, seed=0)
    for i in range(100):
        out = export_deployment(probe, model, crand(rng, 8), NoiseModel(), seed=i)
        assert 0 <= out.eta <= 1 + 1e-9
        assert out.overhead_uses == 4 + 2 * 3
        assert out.subspace is not None


def test_export_deterministic_without_noise(rng):
    probe = TrainableProbing.random(8, 4, seed=0)
    model = MlpModel.init(8, 4, 2, depth=2, width=16, seed=0)
    h = crand(rng, 8)
    a = export_deployment(probe, model, h, NoiseModel(enabled=False), seed=1)
    b = export_deployment(probe, model, h, NoiseModel(enabled=False), seed=2)
    assert a.eta == b.eta and np.array_equal(a.w_hat, b.w_hat)


def test_export_flags_reduced_rank(rng):
    probe = TrainableProbing.random(8, 4, seed=0)
    model = MlpModel.init(8, 4, 2, depth=1, width=8, seed=0)
    model.w_out[:] = 0
    model.b_out[:] = 0
    model.b_out[0] = 1.0  # both columns collapse onto e_0 ... second is zero
    out = export_deployment(probe, model, crand(rng, 8), NoiseModel(enabled=False))
    assert "reduced_rank" in out.flags
    assert out.subspace.dim == 1 and out.overhead_uses == 4 + 4


# -- checkpoint -----------------------------------------------------------------------------


def test_checkpoint_roundtrip(tmp_path):
    probe, model, _ = small(7)
    probe.b = probe.b * np.exp(0.3j)
    path = tmp_path / "m.blml"
    save_model(probe, model, path)
    p2, m2 = load_model(path)
    assert np.array_equal(p2.b, probe.b)
    for k, v in model.params().items():
        assert np.array_equal(m2.params()[k], v)
    assert dumps_model(p2, m2) == path.read_bytes()


def test_checkpoint_errors():
    probe, model, _ = small(8)
    raw = dumps_model(probe, model)
    with pytest.raises(DatasetFormatError):
        loads_model(b"BLMLX" + raw[5:])
    with pytest.raises(TruncationError):
        loads_model(raw[:-3])
    with pytest.raises(DatasetFormatError):
        loads_model(raw + b"\0")
    other = TrainableProbing.random(8, 5, seed=0)
    with pytest.raises(DimensionMismatchError):
        dumps_model(other, model)
