"""
Tests for variational Bayesian networks.
"""
import math
import tempfile

import numpy as np
import pytest
from scipy import stats

from uqsurro.core.models import LayerSpec, TrainConfig
from uqsurro.core.storage import ArtifactStorage
from uqsurro.data.oracles import synth_linear
from uqsurro.exceptions import DomainError, InvalidArchitectureError, InvalidHyperparameterError, ShapeError
from uqsurro.nn.net import predict
from uqsurro.nn.objectives import inverse_softplus, nll_matrix, split_head
from uqsurro.uq.bnn import (
    Bnn,
    PriorSpec,
    VariationalPosterior,
    bnn_predict,
    elbo_loss,
    elbo_loss_and_grad,
    elbo_terms,
    init_bnn,
    kl_gaussians,
    kl_monte_carlo,
    load_bnn,
    sample_weights,
    save_bnn,
    train_bnn,
)


LAYERS = [LayerSpec(3, "tanh"), LayerSpec(2, "linear")]
MIXTURE = PriorSpec(kind="scale_mixture", pi=0.3, sigma1=1.5, sigma2=0.3)


def posterior_of(mu, sigma):
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    return VariationalPosterior(mu=[mu], rho=[np.full(mu.shape, float(inverse_softplus(sigma)))])


def random_bnn(seed, prior=PriorSpec()):
    rng = np.random.default_rng(seed)
    bnn = init_bnn(2, LAYERS, prior, seed)
    for mu, rho, b in zip(bnn.posterior.mu, bnn.posterior.rho, bnn.biases):
        mu[...] = rng.normal(0.0, 0.6, size=mu.shape)
        rho[...] = rng.uniform(-3.0, 0.0, size=rho.shape)
        b[...] = rng.normal(0.0, 0.3, size=b.shape)
    return bnn


def frozen_noise(bnn, seed, samples=2):
    rng = np.random.default_rng(seed)
    return [[rng.standard_normal(m.shape) for m in bnn.posterior.mu] for _ in range(samples)]


def random_batch(seed, rows=4):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(rows, 2)), rng.normal(size=(rows, 1))


def numeric_gradients(bnn, batch, n_batches, eps, step=1e-6):
    grads = []
    for param in bnn.parameters():
        grad = np.zeros_like(param)
        for idx in np.ndindex(param.shape):
            original = param[idx]
            param[idx] = original + step
            plus = elbo_loss(bnn, batch, n_batches, eps=eps)
            param[idx] = original - step
            minus = elbo_loss(bnn, batch, n_batches, eps=eps)
            param[idx] = original
            grad[idx] = (plus - minus) / (2.0 * step)
        grads.append(grad)
    return grads


class TestPriorSpec:
    """Test cases for the weight priors."""

    @pytest.mark.parametrize("prior", [
        PriorSpec(kind="laplace"),
        PriorSpec(sigma=0.0),
        PriorSpec(kind="scale_mixture", pi=1.0),
        PriorSpec(kind="scale_mixture", sigma2=0.0),
    ])
    def test_invalid(self, prior):
        """Test out-of-range priors are rejected."""
        with pytest.raises(InvalidHyperparameterError):
            prior.validate()

    def test_mixture_defaults(self):
        """Test the default mixture scales."""
        prior = PriorSpec(kind="scale_mixture").validate()
        assert prior.pi == 0.5
        assert prior.sigma1 == 1.0
        assert prior.sigma2 == pytest.approx(math.exp(-6))

    def test_gaussian_density(self):
        """Test the Gaussian log density."""
        w = np.array([-1.0, 0.0, 2.5])
        np.testing.assert_allclose(PriorSpec(sigma=2.0).log_density(w), stats.norm.logpdf(w, scale=2.0))

    def test_mixture_density_at_zero(self):
        """Test the mixture density against the weighted component peaks."""
        expected = math.log(0.3 / (math.sqrt(2 * math.pi) * 1.5) + 0.7 / (math.sqrt(2 * math.pi) * 0.3))
        assert MIXTURE.log_density(np.zeros(1))[0] == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("prior", [PriorSpec(sigma=0.7), MIXTURE])
    def test_density_gradient(self, prior):
        """Test the analytic score against central differences."""
        w = np.linspace(-2.0, 2.0, 9)
        step = 1e-6
        numeric = (prior.log_density(w + step) - prior.log_density(w - step)) / (2 * step)
        np.testing.assert_allclose(prior.grad_log_density(w), numeric, rtol=1e-6, atol=1e-8)

    def test_dict_round_trip(self):
        """Test both kinds survive serialization."""
        for prior in (PriorSpec(sigma=0.5), MIXTURE):
            assert PriorSpec.from_dict(prior.to_dict()) == prior


class TestSampleWeights:
    """Test cases for reparameterized weight draws."""

    def test_zero_noise_returns_means(self):
        """Test eps = 0 gives the posterior means exactly."""
        bnn = random_bnn(0)
        weights, _ = sample_weights(bnn, eps=[np.zeros_like(m) for m in bnn.posterior.mu])
        for w, mu in zip(weights, bnn.posterior.mu):
            assert np.array_equal(w, mu)

    def test_draw_statistics(self):
        """Test 100000 draws have the posterior mean and scale."""
        posterior = posterior_of(np.full((1, 100_000), 0.3), 0.2)
        bnn = Bnn(input_dim=1, layers=[LayerSpec(100_000, "linear")], posterior=posterior,
                  biases=[np.zeros(100_000)], prior=PriorSpec())
        weights, _ = sample_weights(bnn, np.random.default_rng(5))

        assert weights[0].mean() == pytest.approx(0.3, abs=4 * 0.2 / math.sqrt(100_000))
        assert weights[0].std() == pytest.approx(0.2, rel=0.01)

    def test_requires_noise_source(self):
        """Test a draw without rng or eps is rejected."""
        with pytest.raises(InvalidHyperparameterError):
            sample_weights(random_bnn(0))

    def test_noise_shape(self):
        """Test mismatched noise raises a shape error."""
        with pytest.raises(ShapeError):
            sample_weights(random_bnn(0), eps=[np.zeros((1, 1)), np.zeros((1, 1))])


class TestKl:
    """Test cases for the KL divergence to the prior."""

    @pytest.mark.parametrize("mu, sigma, expected", [
        (0.0, 1.0, 0.0),
        (1.0, 1.0, 0.5),
        (0.0, 2.0, 0.806853),
    ])
    def test_hand_values(self, mu, sigma, expected):
        """Test single-weight KL against a unit Gaussian prior."""
        kl = kl_gaussians(posterior_of([[mu]], sigma), PriorSpec(sigma=1.0))
        assert kl == pytest.approx(expected, abs=1e-6)

    def test_sums_over_weights(self):
        """Test the KL of a matrix is the sum of its entries' KL."""
        posterior = posterior_of(np.ones((2, 3)), 1.0)
        assert kl_gaussians(posterior, PriorSpec()) == pytest.approx(3.0, rel=1e-12)

    def test_no_closed_form_for_mixture(self):
        """Test the closed form refuses a mixture prior."""
        with pytest.raises(DomainError):
            kl_gaussians(posterior_of([[0.0]], 1.0), MIXTURE)

    @pytest.mark.parametrize("seed", range(20))
    def test_monte_carlo_agrees_with_closed_form(self, seed):
        """Test the sampled estimate is within four standard errors for a random prior scale."""
        rng = np.random.default_rng(seed)
        posterior = VariationalPosterior(mu=[rng.normal(0.0, 0.5, size=(3, 4))],
                                         rho=[inverse_softplus(rng.uniform(0.1, 1.0, size=(3, 4)))])
        prior = PriorSpec(sigma=float(rng.uniform(0.3, 2.0)))
        bnn = Bnn(input_dim=3, layers=[LayerSpec(4, "linear")], posterior=posterior,
                  biases=[np.zeros(4)], prior=prior)
        estimates = np.array([kl_monte_carlo(posterior, prior, sample_weights(bnn, rng)[0])
                              for _ in range(4000)])

        standard_error = estimates.std(ddof=1) / math.sqrt(estimates.size)
        assert abs(estimates.mean() - kl_gaussians(posterior, prior)) < 4 * standard_error

    def test_collapsed_posterior_is_finite(self):
        """Test a tiny posterior scale gives a large but finite KL."""
        kl = kl_gaussians(posterior_of([[0.0]], 1e-8), PriorSpec())
        assert np.isfinite(kl)
        assert kl == pytest.approx(math.log(1e8) - 0.5, rel=1e-6)


class TestElbo:
    """Test cases for the minibatch free energy."""

    @pytest.mark.parametrize("seed", range(10))
    def test_gaussian_prior_gradients(self, seed):
        """Test analytic gradients against central differences with frozen noise."""
        bnn = random_bnn(seed)
        batch, eps = random_batch(seed), frozen_noise(bnn, seed + 100)
        _, analytic, _ = elbo_loss_and_grad(bnn, batch, 3, eps=eps)
        for a, n in zip(analytic, numeric_gradients(bnn, batch, 3, eps)):
            np.testing.assert_allclose(a, n, rtol=1e-5, atol=1e-6)

    @pytest.mark.parametrize("seed", range(10))
    def test_mixture_prior_gradients(self, seed):
        """Test the sampled-KL gradients against central differences."""
        bnn = random_bnn(seed, MIXTURE)
        batch, eps = random_batch(seed), frozen_noise(bnn, seed + 200)
        _, analytic, _ = elbo_loss_and_grad(bnn, batch, 2, eps=eps)
        for a, n in zip(analytic, numeric_gradients(bnn, batch, 2, eps)):
            np.testing.assert_allclose(a, n, rtol=1e-5, atol=1e-6)

    def test_terms_reassemble(self):
        """Test loss = KL / n_batches + mean summed NLL."""
        bnn = random_bnn(3)
        batch, eps = random_batch(3, rows=6), frozen_noise(bnn, 4, samples=3)
        loss, _, terms = elbo_loss_and_grad(bnn, batch, 5, eps=eps)

        nll = np.mean([nll_matrix(predict(bnn.network(sample_weights(bnn, eps=e)[0]), batch[0]),
                                  batch[1]).sum() for e in eps])
        assert terms.kl == pytest.approx(kl_gaussians(bnn.posterior, bnn.prior), rel=1e-12)
        assert terms.nll == pytest.approx(nll, rel=1e-12)
        assert loss == pytest.approx(terms.kl / 5 + terms.nll, rel=1e-10)

    def test_minibatches_add_up_to_full_objective(self):
        """Test the losses of an epoch's minibatches sum to the full-data free energy."""
        bnn = random_bnn(6)
        X, Y = random_batch(6, rows=9)
        eps = frozen_noise(bnn, 7, samples=1)
        full = elbo_loss(bnn, (X, Y), 1, eps=eps)
        parts = sum(elbo_loss(bnn, (X[i:i + 3], Y[i:i + 3]), 3, eps=eps) for i in range(0, 9, 3))
        assert parts == pytest.approx(full, rel=1e-10)

    def test_terms_helper(self):
        """Test elbo_terms reports the undivided KL."""
        bnn = random_bnn(2)
        eps = frozen_noise(bnn, 1)
        assert elbo_terms(bnn, random_batch(2), eps=eps).kl == pytest.approx(
            kl_gaussians(bnn.posterior, bnn.prior), rel=1e-12)

    def test_invalid_arguments(self):
        """Test the batch count and sample count are checked."""
        bnn = random_bnn(0)
        with pytest.raises(InvalidHyperparameterError):
            elbo_loss(bnn, random_batch(0), 0, rng=np.random.default_rng(0))
        with pytest.raises(InvalidHyperparameterError):
            elbo_loss(bnn, random_batch(0), 1, n_mc=0, rng=np.random.default_rng(0))


class TestTrainBnn:
    """Test cases for Bayes by Backprop training."""

    def test_null_update(self):
        """Test a zero learning rate leaves the initial posterior unchanged."""
        data = synth_linear(20)
        layers = [LayerSpec(4, "tanh"), LayerSpec(2, "linear")]
        cfg = TrainConfig(learning_rate=0.0, epochs=3, batch_size=5)
        bnn, log = train_bnn(data, layers, cfg, PriorSpec(), np.random.default_rng(11))

        initial = init_bnn(1, layers, PriorSpec(), int(np.random.default_rng(11).integers(0, 2**31 - 1)))
        for trained, start in zip(bnn.parameters(), initial.parameters()):
            assert np.array_equal(trained, start)
        assert len(log) == 3

    def test_initial_scale(self):
        """Test sigma starts at a twentieth of the initialization scale."""
        bnn = init_bnn(4, [LayerSpec(8, "relu"), LayerSpec(2, "linear")], PriorSpec(), 0)
        np.testing.assert_allclose(bnn.posterior.sigma[0], 0.05 * math.sqrt(2.0 / 4), rtol=1e-10)
        assert all(np.all(b == 0) for b in bnn.biases)

    def test_free_energy_decreases(self):
        """Test training lowers the free energy on noisy linear data."""
        rng = np.random.default_rng(0)
        data = synth_linear(40, noise=0.1, rng=rng)
        cfg = TrainConfig(learning_rate=0.01, epochs=300, batch_size=10)
        _, log = train_bnn(data, [LayerSpec(16, "tanh"), LayerSpec(2, "linear")], cfg,
                           PriorSpec(), rng)

        losses = np.asarray(log.train_loss)
        assert losses[-30:].mean() < losses[:30].mean()

    def test_rejects_odd_head(self):
        """Test the output layer must be a Gaussian head."""
        with pytest.raises(InvalidArchitectureError) as info:
            train_bnn(synth_linear(10), [LayerSpec(1, "linear")], TrainConfig(batch_size=5),
                      PriorSpec(), np.random.default_rng(0))
        assert info.value.exit_code == 2


class TestBnnPredict:
    """Test cases for posterior predictive moments."""

    def test_collapsed_posterior_matches_mean_network(self):
        """Test a near-zero posterior scale reduces to the mean network's head."""
        bnn = random_bnn(4)
        for rho in bnn.posterior.rho:
            rho[...] = inverse_softplus(1e-8)
        x = np.array([0.2, -0.4])
        mean, _, variance = split_head(predict(bnn.mean_network(), x[None, :]))

        dist = bnn_predict(bnn, x, T=50, rng=np.random.default_rng(0))
        np.testing.assert_allclose(dist.mean, mean[0], rtol=1e-6, atol=1e-6)
        np.testing.assert_allclose(dist.variance, variance[0], rtol=1e-6, atol=1e-9)
        assert dist.source == "bnn"
        assert dist.samples.shape == (50, 1)

    def test_deterministic(self):
        """Test the same stream gives the same prediction."""
        bnn = random_bnn(1)
        first = bnn_predict(bnn, np.ones(2), T=20, rng=np.random.default_rng(3))
        second = bnn_predict(bnn, np.ones(2), T=20, rng=np.random.default_rng(3))
        assert np.array_equal(first.samples, second.samples)

    def test_too_few_samples(self):
        """Test T < 2 is rejected."""
        with pytest.raises(InvalidHyperparameterError):
            bnn_predict(random_bnn(0), np.zeros(2), T=1, rng=np.random.default_rng(0))


class TestBnnArtifact:
    """Test cases for BNN persistence."""

    def test_save_and_load(self):
        """Test the posterior, biases and prior survive a round trip."""
        bnn = random_bnn(9, MIXTURE)
        with tempfile.TemporaryDirectory() as temp_dir:
            storage = ArtifactStorage(temp_dir)
            save_bnn(storage, "models/y/bnn.json", bnn)
            loaded = load_bnn(storage, "models/y/bnn.json")

        assert loaded.prior == MIXTURE
        assert [s.to_dict() for s in loaded.layers] == [s.to_dict() for s in bnn.layers]
        for a, b in zip(bnn.parameters(), loaded.parameters()):
            assert np.array_equal(a, b)
