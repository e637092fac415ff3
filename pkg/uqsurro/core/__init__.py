from .models import LayerSpec, PredictiveDistribution, CurveBand, TrainConfig, TrainLog
from .storage import ArtifactStorage
from .seeding import SeedStream
from .pca import PcaModel, fit_pca, project, reconstruct, propagate_uncertainty
from .config import RunConfig, load_config

__all__ = [
    'LayerSpec', 'PredictiveDistribution', 'CurveBand', 'TrainConfig', 'TrainLog', 'ArtifactStorage',
    'SeedStream', 'PcaModel', 'fit_pca', 'project', 'reconstruct', 'propagate_uncertainty',
    'RunConfig', 'load_config',
]
