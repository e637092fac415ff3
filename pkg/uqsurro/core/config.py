"""
Run configuration: loading, defaults and per-response overrides.
"""
import copy
import json
import os
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

from ..exceptions import ConfigurationError
from .models import LayerSpec, TrainConfig
from .validators import ConfigValidator


CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")
DEFAULT_OUTPUT_DIR = "runs"


@dataclass(frozen=True)
class DesignSettings:
    samples: int = 200
    iterations: int = 1000
    bc_cases: int = 86
    time_points: int = 100
    noise: float = 0.05


@dataclass(frozen=True)
class DataSettings:
    path: Optional[str] = None
    inputs: Tuple[str, ...] = ()
    outputs: Tuple[str, ...] = ()


@dataclass(frozen=True)
class MethodParams:
    p_drop: Optional[float] = None
    scaling: str = "inverted"
    predict_p_drop: Optional[float] = None
    T: int = 200
    M: int = 5
    prior: Dict = field(default_factory=lambda: {"kind": "gaussian", "sigma": 1.0})
    n_mc: int = 1


@dataclass(frozen=True)
class PcaSettings:
    enabled: bool = False
    threshold: float = 0.99
    n_samples: int = 500
    mode: str = "mc"


@dataclass
class RunConfig:
    """
    Validated run configuration.
    """
    problem: str
    method: str
    architecture: List[LayerSpec]
    training: TrainConfig
    objective: str = "mse"
    name: str = "run"
    seed: int = 0
    output_dir: str = DEFAULT_OUTPUT_DIR
    design: DesignSettings = field(default_factory=DesignSettings)
    data: DataSettings = field(default_factory=DataSettings)
    method_params: MethodParams = field(default_factory=MethodParams)
    pca: PcaSettings = field(default_factory=PcaSettings)
    standardize_inputs: bool = True
    standardize_outputs: bool = True
    overrides: Dict[str, Dict] = field(default_factory=dict)
    workers: int = 1
    raw: Dict = field(default_factory=dict, repr=False)

    def train_config_for(self, response: str) -> TrainConfig:
        """Training configuration with the response's overrides applied."""
        override = self.overrides.get(response, {})
        changes = {key: override[key] for key in ("learning_rate", "epochs", "batch_size") if key in override}
        return replace(self.training, **changes)

    def layers_for(self, response: str) -> List[LayerSpec]:
        """Architecture with the response's hidden-activation override applied."""
        activation = self.overrides.get(response, {}).get("activation")
        if activation is None:
            return list(self.architecture)
        hidden = [LayerSpec(spec.width, activation) for spec in self.architecture[:-1]]
        return hidden + [self.architecture[-1]]

    def to_dict(self) -> dict:
        """Effective configuration, as recorded in run manifests."""
        data = copy.deepcopy(self.raw)
        data["seed"] = self.seed
        data["output_dir"] = self.output_dir
        return data


def shipped_configs() -> List[str]:
    """Names of the configurations bundled with the package."""
    if not os.path.isdir(CONFIG_DIR):
        return []
    return sorted(name[:-5] for name in os.listdir(CONFIG_DIR) if name.endswith(".json"))


def _resolve(source: str) -> str:
    if os.path.isfile(source):
        return source
    shipped = os.path.join(CONFIG_DIR, f"{source}.json")
    if os.path.isfile(shipped):
        return shipped
    raise ConfigurationError(
        f"no such file or shipped configuration (shipped: {', '.join(shipped_configs())})", key="config")


def config_from_dict(raw: dict, seed: Optional[int] = None, output_dir: Optional[str] = None) -> RunConfig:
    """
    Build a RunConfig from a parsed document.

    Args:
        raw: Configuration document
        seed: Master seed overriding the document's
        output_dir: Output directory overriding the document's

    Raises:
        ConfigurationError: Naming the offending key
    """
    ConfigValidator.validate_config(raw)
    if seed is not None:
        ConfigValidator.validate_int(seed, "seed", minimum=0)
    method = raw["method"]
    master_seed = int(seed if seed is not None else raw.get("seed", 0))
    training = dict(raw.get("training", {}), seed=master_seed)
    params = raw.get("method_params", {})
    design = raw.get("design", {})
    data = raw.get("data", {})
    pca = raw.get("pca", {})
    standardize = raw.get("standardize", {})
    return RunConfig(
        problem=raw["problem"],
        method=method,
        architecture=[LayerSpec.from_dict(layer) for layer in raw["architecture"]],
        training=TrainConfig.from_dict(training),
        objective=raw.get("objective", "mse" if method == "mcd" else "nll"),
        name=str(raw.get("name", f"{raw['problem']}_{method}")),
        seed=master_seed,
        output_dir=output_dir or raw.get("output_dir", DEFAULT_OUTPUT_DIR),
        design=DesignSettings(**{k: design[k] for k in design}),
        data=DataSettings(path=data.get("path"), inputs=tuple(data.get("inputs", ())),
                          outputs=tuple(data.get("outputs", ()))),
        method_params=MethodParams(**{k: params[k] for k in params}),
        pca=PcaSettings(**{k: pca[k] for k in pca}),
        standardize_inputs=bool(standardize.get("inputs", True)),
        standardize_outputs=bool(standardize.get("outputs", True)),
        overrides=copy.deepcopy(raw.get("overrides", {})),
        workers=int(raw.get("workers", 1)),
        raw=copy.deepcopy(raw),
    )


def load_config(source: str, seed: Optional[int] = None, output_dir: Optional[str] = None) -> RunConfig:
    """
    Load and validate a run configuration.

    Args:
        source: Path to a JSON file, or the name of a shipped configuration
        seed: Master seed overriding the file's
        output_dir: Output directory overriding the file's

    Returns:
        RunConfig

    Raises:
        ConfigurationError: On an unreadable file or an invalid document
    """
    path = _resolve(source)
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"invalid JSON at line {e.lineno}: {e.msg}", key="config")
    except OSError as e:
        raise ConfigurationError(f"cannot read {path}: {e}", key="config")
    return config_from_dict(raw, seed=seed, output_dir=output_dir)
