from .net import (
    Mlp, DropoutMask, Gradients, init_mlp, forward, predict, sample_dropout_mask, backward, train,
    save_model, load_model,
)
from .objectives import (
    GaussianHeadOutput, MseObjective, GaussianNllObjective, mse, mcd_loss, gaussian_nll, mnll,
    make_objective,
)
from .optim import Sgd, Adam, make_optimizer

__all__ = [
    'Mlp', 'DropoutMask', 'Gradients', 'init_mlp', 'forward', 'predict', 'sample_dropout_mask',
    'backward', 'train', 'save_model', 'load_model', 'GaussianHeadOutput', 'MseObjective', 'GaussianNllObjective', 'mse',
    'mcd_loss', 'gaussian_nll', 'mnll', 'make_objective', 'Sgd', 'Adam', 'make_optimizer',
]
