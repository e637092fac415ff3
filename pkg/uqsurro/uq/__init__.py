"""Uncertainty quantification methods: MC dropout, deep ensembles and variational BNNs."""
from .bnn import (
    Bnn, PriorSpec, VariationalPosterior, bnn_predict, elbo_loss, elbo_loss_and_grad, elbo_terms,
    init_bnn, kl_gaussians, load_bnn, sample_weights, save_bnn, train_bnn,
)
from .ensemble import Ensemble, ensemble_predict, load_ensemble, mixture_moments, save_ensemble, train_ensemble
from .mcd import RunningMoments, mcd_predict
from .metrics import coverage, mean_gaussian_nll, mean_std, rmse, summarize

__all__ = [
    'Bnn', 'PriorSpec', 'VariationalPosterior', 'bnn_predict', 'elbo_loss', 'elbo_loss_and_grad',
    'elbo_terms', 'init_bnn', 'kl_gaussians', 'load_bnn', 'sample_weights', 'save_bnn', 'train_bnn',
    'Ensemble', 'ensemble_predict', 'load_ensemble', 'mixture_moments', 'save_ensemble',
    'train_ensemble', 'RunningMoments', 'mcd_predict', 'coverage', 'mean_gaussian_nll', 'mean_std',
    'rmse', 'summarize',
]
