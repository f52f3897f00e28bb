import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dprl.genmodel import (
    HEADS,
    T_MIN,
    ChainError,
    NoiseSchedule,
    SamplerConfig,
    ScoreField,
    SingularityError,
    conditional_score,
    convert,
    forward_perturb,
    langevin_step,
    posterior_mean,
    sample,
    score_matching_loss,
)
from dprl.tensornet import Optimizer, ema_update, optimizer_step
from dprl.tensornet import autodiff as ad

from fdcheck import check_param_grad

KINDS = ("cosine", "linear_vp")


class AnalyticField:
    """Stand-in for a ScoreField whose score is a closed-form function of (x, t)."""

    def __init__(self, score_fn, x_dim, schedule):
        self.score_fn = score_fn
        self.x_dim = x_dim
        self.schedule = schedule
        self.head = "score"

    def apply(self, x, condition, t, params=None):
        return self.score_fn(ad.value(x), t)


def gaussian_score(schedule, mean=0.0, var=1.0):
    def fn(x, t):
        a, s = schedule.alpha(t), schedule.sigma(t)
        return -(x - a * mean) / (a * a * var + s * s)
    return fn


def mixture_score(schedule, centers, std):
    centers = np.asarray(centers, dtype=np.float64)

    def fn(x, t):
        a, s = schedule.alpha(t), schedule.sigma(t)
        var = a * a * std**2 + s * s
        diff = x[:, None, :] - a * centers[None]
        logw = -0.5 * np.sum(diff**2, -1) / var
        w = np.exp(logw - logw.max(1, keepdims=True))
        w /= w.sum(1, keepdims=True)
        return -np.einsum("bk,bkd->bd", w, diff) / var
    return fn


# schedules --------------------------------------------------------------------

@pytest.mark.parametrize("kind", KINDS)
def test_schedule_endpoints_and_monotonicity(kind):
    sch = NoiseSchedule(kind)
    t = np.linspace(0, 1, 10_000)
    a, s = sch.alpha(t), sch.sigma(t)
    assert a[0] == pytest.approx(1.0, abs=1e-15) and s[0] == pytest.approx(0.0, abs=1e-7)
    assert np.all(np.diff(a) < 0) and np.all(np.diff(s) > 0)
    np.testing.assert_allclose(a**2 + s**2, 1.0, atol=1e-12)


def test_cosine_terminal_values():
    sch = NoiseSchedule("cosine")
    assert sch.alpha(1.0) <= 1e-3 and sch.sigma(1.0) >= 1 - 1e-3


def test_linear_vp_terminal_alpha():
    # exp(-(0.1 + 9.95)/2) ~ 6.6e-3; the beta range leaves more signal than cosine at t=1
    sch = NoiseSchedule("linear_vp")
    assert sch.alpha(1.0) == pytest.approx(np.exp(-0.5 * (0.1 + 0.5 * 19.9)), rel=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_schedule_derivatives_match_differences(kind):
    sch = NoiseSchedule(kind)
    t = np.linspace(0.05, 0.95, 19)
    h = 1e-6
    np.testing.assert_allclose(sch.alpha_dot(t), (sch.alpha(t + h) - sch.alpha(t - h)) / (2 * h), rtol=1e-6)
    np.testing.assert_allclose(sch.sigma_dot(t), (sch.sigma(t + h) - sch.sigma(t - h)) / (2 * h), rtol=1e-6)


def test_unknown_schedule_rejected():
    with pytest.raises(ValueError):
        NoiseSchedule("quadratic")


# perturbation kernel and conditional score ------------------------------------------

def test_forward_perturb_trivial_cases():
    sch = NoiseSchedule()
    x0 = np.array([[0.3, -0.7]])
    np.testing.assert_allclose(forward_perturb(sch, x0, np.array([0.0]), np.ones((1, 2))), x0, atol=1e-15)
    t = np.array([0.4])
    np.testing.assert_allclose(forward_perturb(sch, x0, t, np.zeros((1, 2))), sch.alpha(t) * x0)
    with pytest.raises(ValueError):
        forward_perturb(sch, x0, np.array([1.2]), np.zeros((1, 2)))


@pytest.mark.parametrize("kind", KINDS)
def test_forward_perturb_moments(kind):
    sch = NoiseSchedule(kind)
    rng = np.random.default_rng(0)
    n, t, x0 = 100_000, 0.35, 0.8
    xt = forward_perturb(sch, np.full((n, 1), x0), np.full(n, t), rng.standard_normal((n, 1)))
    sig = float(sch.sigma(t))
    assert abs(xt.mean() - sch.alpha(t) * x0) < 3 * sig / np.sqrt(n)
    assert xt.var() == pytest.approx(sig**2, rel=0.05)


def test_conditional_score_examples():
    sch = NoiseSchedule()
    t = np.array([0.3])
    x0 = np.array([[0.2]])
    xt = sch.alpha(t)[:, None] * x0
    np.testing.assert_allclose(conditional_score(sch, xt, x0, t), 0.0, atol=1e-15)
    with pytest.raises(SingularityError):
        conditional_score(sch, xt, x0, np.array([0.0]))


def test_conditional_score_by_substitution():
    class Half:
        def alpha(self, t):
            return np.full(np.shape(t), 0.5)

        def sigma(self, t):
            return np.full(np.shape(t), 0.5)

    assert conditional_score(Half(), np.array([1.0]), 1.0, np.array(0.5)) == pytest.approx(-2.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(KINDS))
def test_perturb_then_score_is_minus_noise_over_sigma(seed, kind):
    rng = np.random.default_rng(seed)
    sch = NoiseSchedule(kind)
    t = rng.uniform(T_MIN, 1.0, 4)
    x0 = rng.normal(size=(4, 3))
    eps = rng.normal(size=(4, 3))
    s = conditional_score(sch, forward_perturb(sch, x0, t, eps), x0, t)
    np.testing.assert_allclose(s, -eps / sch.sigma(t)[:, None], rtol=1e-9, atol=1e-9)


# head conversions -------------------------------------------------------------

@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("src", HEADS)
@pytest.mark.parametrize("dst", HEADS)
def test_convert_round_trips(kind, src, dst):
    sch = NoiseSchedule(kind)
    rng = np.random.default_rng(1)
    t = np.round(np.arange(0.1, 1.0, 0.1), 1)
    x_t = rng.normal(size=(len(t), 2))
    out = rng.normal(size=(len(t), 2))
    back = convert(convert(out, src, dst, sch, x_t, t), dst, src, sch, x_t, t)
    np.testing.assert_allclose(back, out, rtol=1e-10, atol=1e-10)


def test_convert_zero_score_and_velocity_two_ways():
    sch = NoiseSchedule()
    rng = np.random.default_rng(2)
    t = rng.uniform(0.1, 0.9, 5)
    x_t = rng.normal(size=(5, 2))
    np.testing.assert_array_equal(convert(np.zeros((5, 2)), "score", "epsilon", sch, x_t, t), 0.0)
    eps = rng.normal(size=(5, 2))
    v = convert(eps, "epsilon", "velocity", sch, x_t, t)
    x0 = posterior_mean(sch, x_t, t, eps)
    direct = sch.alpha_dot(t)[:, None] * x0 + sch.sigma_dot(t)[:, None] * eps
    np.testing.assert_allclose(v, direct, rtol=1e-10, atol=1e-10)
    with pytest.raises(SingularityError):
        convert(eps[:1], "epsilon", "score", sch, x_t[:1], np.array([0.0]))


# posterior mean ---------------------------------------------------------------

def test_posterior_mean_inverts_perturbation():
    sch = NoiseSchedule()
    rng = np.random.default_rng(3)
    t = rng.uniform(0.05, 0.9, 6)
    x0 = rng.normal(size=(6, 2))
    eps = rng.normal(size=(6, 2))
    x_t = forward_perturb(sch, x0, t, eps)
    np.testing.assert_allclose(posterior_mean(sch, x_t, t, eps), x0, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(posterior_mean(sch, x_t, t, 0 * eps), x_t / sch.alpha(t)[:, None])
    with pytest.raises(SingularityError):
        posterior_mean(sch, x_t[:1], np.array([1.0]), eps[:1])


def test_posterior_mean_matches_gaussian_conditioning():
    sch = NoiseSchedule()
    m, v = 0.4, 0.3**2
    t = np.array([0.2, 0.5, 0.8])
    x_t = np.array([[0.1], [-0.5], [1.2]])
    a, s = sch.alpha(t)[:, None], sch.sigma(t)[:, None]
    score = gaussian_score(sch, m, v)(x_t, t[:, None])
    eps_star = -s * score
    expected = m + a * v / (a * a * v + s * s) * (x_t - a * m)
    np.testing.assert_allclose(posterior_mean(sch, x_t, t, eps_star), expected, rtol=1e-10)


# score matching ---------------------------------------------------------------

def test_score_matching_loss_rejects_empty_batch():
    f = ScoreField.create(1, 0, hidden=(4,), embed_dim=4, rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        score_matching_loss(f, (None, np.zeros((0, 1))), NoiseSchedule(), np.random.default_rng(0))


@pytest.mark.parametrize("seed", range(50))
@pytest.mark.parametrize("weighting", ["head", "eps", "none"])
def test_score_matching_gradient_fd(seed, weighting):
    rng = np.random.default_rng(seed)
    f = ScoreField.create(2, 1, hidden=(6, 6), activation="mish", embed_dim=4, head="epsilon", rng=rng)
    batch = (rng.normal(size=(5, 1)), rng.normal(size=(5, 2)))
    sch = NoiseSchedule()
    _, g = score_matching_loss(f, batch, sch, np.random.default_rng(seed), weighting)

    def loss(p):
        return score_matching_loss(f, batch, sch, np.random.default_rng(seed), weighting, params=p)[0]

    assert check_param_grad(loss, g, f.params, rng) < 1e-4


def test_exact_score_gives_zero_mean_gradient():
    """With the output frozen at the true score the regression residual averages out."""
    sch = NoiseSchedule()
    rng = np.random.default_rng(0)
    n = 200_000
    t = rng.uniform(T_MIN, 1 - T_MIN, n)
    x0 = rng.standard_normal((n, 1))
    eps = rng.standard_normal((n, 1))
    x_t = forward_perturb(sch, x0, t, eps)
    true_eps = -sch.sigma(t)[:, None] * gaussian_score(sch)(x_t, t[:, None])
    resid = true_eps - eps
    # gradient of the loss wrt a constant output shift is 2*mean(resid)
    assert abs(2 * resid.mean()) < 5 * 2 * resid.std() / np.sqrt(n)


def test_trained_score_on_standard_normal():
    """Gaussian data keeps its marginal N(0, 1) at every t, so the score is -x."""
    sch = NoiseSchedule()
    rng = np.random.default_rng(0)
    f = ScoreField.create(1, 0, hidden=(64, 64), activation="mish", embed_dim=16, head="epsilon", rng=rng)
    opt = Optimizer("adam", 2e-3)
    avg = f.params.copy()
    for i in range(4000):
        if i == 2000:
            opt.step_size = 5e-4
        _, g = score_matching_loss(f, (None, rng.standard_normal((512, 1))), sch, rng)
        f.net.params = optimizer_step(opt, f.params, g)
        avg = ema_update(avg, f.params, 0.01 if i > 1000 else 1.0)
    x = np.linspace(-2, 2, 41)[:, None]
    for tv in (0.5, 0.8):
        t = np.full(len(x), tv)
        s = convert(f.apply(x, None, t, avg), "epsilon", "score", sch, x, t)
        np.testing.assert_allclose(s, -x, atol=0.05)


# samplers ---------------------------------------------------------------------

def test_sampler_config_validation():
    cfg = SamplerConfig(4)
    assert cfg.time_grid[0] == 1.0 and cfg.time_grid[-1] == 0.0 and len(cfg.time_grid) == 5
    for bad in ({"num_steps": 0}, {"eta": -1.0}, {"mode": "heun"}, {"num_steps": 2, "time_grid": [1.0, 0.7, 0.8]}):
        with pytest.raises(ValueError):
            SamplerConfig(**bad)


@pytest.mark.parametrize("kind", KINDS)
def test_ode_sampler_recovers_standard_normal(kind):
    sch = NoiseSchedule(kind)
    field = AnalyticField(gaussian_score(sch), 2, sch)
    x, traj = sample(field, None, sch, SamplerConfig(100, mode="ode"), np.random.default_rng(0), n=10_000)
    assert np.all(np.abs(x.mean(0)) < 0.05)
    np.testing.assert_allclose(np.cov(x.T), np.eye(2), atol=0.05)
    assert len(traj) == 100 and len(traj.states) == 101


def test_single_step_zero_score_is_affine():
    sch = NoiseSchedule()
    field = AnalyticField(lambda x, t: np.zeros_like(x), 1, sch)
    cfg = SamplerConfig(1, eta=0.0, mode="ode")
    z = np.linspace(-2, 2, 5)[:, None]
    x, _ = sample(field, None, sch, cfg, np.random.default_rng(0), n=5, x_init=z)
    slope = (x[1:] - x[:-1]) / (z[1:] - z[:-1])
    np.testing.assert_allclose(slope, np.full_like(slope, slope[0, 0]), rtol=1e-12)


def test_ode_sampling_is_bitwise_deterministic():
    sch = NoiseSchedule()
    f = ScoreField.create(2, 1, hidden=(8,), embed_dim=4, rng=np.random.default_rng(4))
    cfg = SamplerConfig(10, mode="ode")
    z = np.random.default_rng(5).standard_normal((3, 2))
    cond = np.ones((3, 1))
    a, _ = sample(f, cond, sch, cfg, np.random.default_rng(1), x_init=z)
    b, _ = sample(f, cond, sch, cfg, np.random.default_rng(2), x_init=z)
    assert a.tobytes() == b.tobytes()


@pytest.mark.parametrize("mode", ["sde", "ddpm_ancestral"])
def test_symmetric_mixture_modes_balanced(mode):
    sch = NoiseSchedule()
    field = AnalyticField(mixture_score(sch, [[-1.0], [1.0]], 0.2), 1, sch)
    x, _ = sample(field, None, sch, SamplerConfig(50, eta=1.0, mode=mode), np.random.default_rng(0), n=10_000)
    frac = (x[:, 0] > 0).mean()
    assert 0.4 <= frac <= 0.6


def test_sampler_error_shrinks_with_steps():
    """Moment error of the ODE sampler on a Gaussian target decreases from T=2 to T=50."""
    sch = NoiseSchedule()
    m, v = 0.5, 0.2**2
    field = AnalyticField(gaussian_score(sch, m, v), 1, sch)
    z = np.random.default_rng(0).standard_normal((20_000, 1))
    errs = []
    for steps in (2, 5, 10, 50):
        x, _ = sample(field, None, sch, SamplerConfig(steps, mode="ode"), np.random.default_rng(1), x_init=z)
        errs.append(abs(x.mean() - m) + abs(x.var() - v))
    assert all(e2 <= e1 for e1, e2 in zip(errs, errs[1:]))


def test_guidance_offsets_the_score():
    sch = NoiseSchedule()
    field = AnalyticField(gaussian_score(sch), 1, sch)
    cfg = SamplerConfig(50, mode="sde")
    shift = 1.0
    # N(0,1) tilted by exp(shift * x0) is N(shift, 1); its noisy marginals gain alpha(t) * shift in the score
    x, _ = sample(field, None, sch, cfg, np.random.default_rng(0), n=20_000,
                  guidance=lambda xv, t: np.full_like(xv, shift * sch.alpha(t)))
    assert x.mean() == pytest.approx(shift, abs=0.05)
    assert x.var() == pytest.approx(1.0, rel=0.05)


def test_chain_error_reports_step():
    sch = NoiseSchedule()

    def blowup(x, t):
        return np.full_like(x, np.nan) if t < 0.5 else -x

    field = AnalyticField(blowup, 1, sch)
    with pytest.raises(ChainError) as err:
        sample(field, None, sch, SamplerConfig(4, mode="ode"), np.random.default_rng(0), n=2)
    # grid 1, .75, .5, .25, 0: the first step evaluated below t=0.5 is index 3
    assert err.value.step == 3


def test_final_clip_only():
    sch = NoiseSchedule()
    field = AnalyticField(gaussian_score(sch, 0.0, 4.0), 1, sch)
    x, traj = sample(field, None, sch, SamplerConfig(10, mode="ode"), np.random.default_rng(0), n=500, clip=(-1, 1))
    assert np.all(np.abs(x) <= 1.0)
    assert np.abs(traj.states[-1]).max() > 1.0


# Langevin ---------------------------------------------------------------------

def test_langevin_trivial_cases():
    x = np.array([0.3, -1.0])
    np.testing.assert_array_equal(langevin_step(x, np.zeros(2), 0.1, None, noise=np.zeros(2)), x)
    np.testing.assert_array_equal(langevin_step(x, np.ones(2), 0.0, np.random.default_rng(0)), x)


def test_langevin_stationary_variance():
    rng = np.random.default_rng(0)
    x = np.zeros(20_000)
    for _ in range(2000):
        x = langevin_step(x, -x, 0.01, rng)
    assert x.var() == pytest.approx(1.0, rel=0.1)
