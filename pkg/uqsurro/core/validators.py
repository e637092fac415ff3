"""
Validation of run configuration documents.

Every rejection raises ConfigurationError naming the dotted key at fault.
"""
import numbers
from typing import Any, Iterable, List, Optional

from ..exceptions import ConfigurationError
from .models import ACTIVATIONS, OPTIMIZERS, SOURCES


class ConfigValidator:
    """Validates the sections of a run configuration."""

    PROBLEMS = ("synth_fgr", "synth_void", "synth_gap", "csv")
    OBJECTIVES = ("mse", "nll")
    SCALING_MODES = ("inverted", "sqrt_width")
    PRIOR_KINDS = ("gaussian", "scale_mixture")
    PROPAGATION_MODES = ("mc", "closed")

    TOP_LEVEL_KEYS = (
        "name", "problem", "method", "seed", "output_dir", "design", "data", "architecture",
        "objective", "training", "method_params", "pca", "standardize", "overrides", "workers",
    )
    SECTION_KEYS = {
        "design": ("samples", "iterations", "bc_cases", "time_points", "noise"),
        "data": ("path", "inputs", "outputs"),
        "training": ("learning_rate", "epochs", "batch_size", "optimizer", "l2_lambda", "split"),
        "method_params": ("p_drop", "scaling", "predict_p_drop", "T", "M", "prior", "n_mc"),
        "pca": ("enabled", "threshold", "n_samples", "mode"),
        "standardize": ("inputs", "outputs"),
    }
    OVERRIDE_KEYS = ("learning_rate", "activation", "epochs", "batch_size")

    @classmethod
    def require_mapping(cls, value: Any, key: str) -> dict:
        if not isinstance(value, dict):
            raise ConfigurationError("must be an object", key=key)
        return value

    @classmethod
    def check_keys(cls, section: dict, allowed: Iterable[str], prefix: str = "") -> None:
        """Reject keys outside the allowed set."""
        for name in section:
            if name not in allowed:
                raise ConfigurationError("unknown key", key=f"{prefix}{name}")

    @classmethod
    def validate_choice(cls, value: Any, choices: Iterable[str], key: str) -> str:
        choices = tuple(choices)
        if value not in choices:
            raise ConfigurationError(f"must be one of {', '.join(choices)}, got {value!r}", key=key)
        return value

    @classmethod
    def validate_int(cls, value: Any, key: str, minimum: Optional[int] = None) -> int:
        """
        Validate an integer.

        Raises:
            ConfigurationError: On a non-integer (booleans included) or a value below minimum
        """
        if isinstance(value, bool) or not isinstance(value, numbers.Integral):
            raise ConfigurationError(f"must be an integer, got {value!r}", key=key)
        if minimum is not None and value < minimum:
            raise ConfigurationError(f"must be at least {minimum}, got {value}", key=key)
        return int(value)

    @classmethod
    def validate_real(cls, value: Any, key: str, low: Optional[float] = None, high: Optional[float] = None,
                      low_inclusive: bool = True, high_inclusive: bool = True) -> float:
        """
        Validate a real number against optional bounds.

        Raises:
            ConfigurationError: On a non-number or a value outside the bounds
        """
        if isinstance(value, bool) or not isinstance(value, numbers.Real):
            raise ConfigurationError(f"must be a number, got {value!r}", key=key)
        value = float(value)
        if value != value or value in (float("inf"), float("-inf")):
            raise ConfigurationError("must be finite", key=key)
        if low is not None and (value < low or (value == low and not low_inclusive)):
            raise ConfigurationError(f"must be {'>=' if low_inclusive else '>'} {low}, got {value}", key=key)
        if high is not None and (value > high or (value == high and not high_inclusive)):
            raise ConfigurationError(f"must be {'<=' if high_inclusive else '<'} {high}, got {value}", key=key)
        return value

    @classmethod
    def validate_names(cls, value: Any, key: str) -> List[str]:
        if not isinstance(value, list) or not value or not all(isinstance(v, str) and v for v in value):
            raise ConfigurationError("must be a non-empty list of column names", key=key)
        if len(set(value)) != len(value):
            raise ConfigurationError("column names must be unique", key=key)
        return list(value)

    @classmethod
    def validate_split(cls, value: Any, key: str) -> List[float]:
        """
        Validate (train, val, test) fractions.

        Raises:
            ConfigurationError: Unless three fractions in (0, 1) sum to 1
        """
        if not isinstance(value, list) or len(value) != 3:
            raise ConfigurationError("must list three fractions (train, val, test)", key=key)
        fractions = [cls.validate_real(f, f"{key}[{i}]", 0.0, 1.0, False, False) for i, f in enumerate(value)]
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise ConfigurationError(f"fractions must sum to 1, got {sum(fractions)}", key=key)
        return fractions

    @classmethod
    def validate_architecture(cls, value: Any, key: str = "architecture") -> List[dict]:
        """
        Validate a layer list of {width, activation} objects.

        Raises:
            ConfigurationError: On an empty list, bad width or unknown activation
        """
        if not isinstance(value, list) or not value:
            raise ConfigurationError("must be a non-empty list of layers", key=key)
        for index, layer in enumerate(value):
            layer_key = f"{key}[{index}]"
            cls.require_mapping(layer, layer_key)
            cls.check_keys(layer, ("width", "activation"), f"{layer_key}.")
            if "width" not in layer:
                raise ConfigurationError("is required", key=f"{layer_key}.width")
            cls.validate_int(layer["width"], f"{layer_key}.width", minimum=1)
            cls.validate_choice(layer.get("activation", "relu"), ACTIVATIONS, f"{layer_key}.activation")
        return value

    @classmethod
    def validate_prior(cls, value: Any, key: str = "method_params.prior") -> dict:
        cls.require_mapping(value, key)
        cls.check_keys(value, ("kind", "sigma", "pi", "sigma1", "sigma2"), f"{key}.")
        kind = cls.validate_choice(value.get("kind", "gaussian"), cls.PRIOR_KINDS, f"{key}.kind")
        if kind == "gaussian":
            cls.validate_real(value.get("sigma", 1.0), f"{key}.sigma", 0.0, low_inclusive=False)
        else:
            cls.validate_real(value.get("pi", 0.5), f"{key}.pi", 0.0, 1.0, False, False)
            cls.validate_real(value.get("sigma1", 1.0), f"{key}.sigma1", 0.0, low_inclusive=False)
            cls.validate_real(value.get("sigma2", 0.0025), f"{key}.sigma2", 0.0, low_inclusive=False)
        return value

    @classmethod
    def validate_training(cls, value: Any, key: str = "training") -> dict:
        cls.require_mapping(value, key)
        cls.check_keys(value, cls.SECTION_KEYS["training"], f"{key}.")
        if "learning_rate" in value:
            cls.validate_real(value["learning_rate"], f"{key}.learning_rate", 0.0)
        if "epochs" in value:
            cls.validate_int(value["epochs"], f"{key}.epochs", minimum=1)
        if "batch_size" in value:
            cls.validate_int(value["batch_size"], f"{key}.batch_size", minimum=1)
        if "optimizer" in value:
            cls.validate_choice(value["optimizer"], OPTIMIZERS, f"{key}.optimizer")
        if "l2_lambda" in value:
            cls.validate_real(value["l2_lambda"], f"{key}.l2_lambda", 0.0)
        if "split" in value:
            cls.validate_split(value["split"], f"{key}.split")
        return value

    @classmethod
    def validate_overrides(cls, value: Any, key: str = "overrides") -> dict:
        cls.require_mapping(value, key)
        for response, override in value.items():
            override_key = f"{key}.{response}"
            cls.require_mapping(override, override_key)
            cls.check_keys(override, cls.OVERRIDE_KEYS, f"{override_key}.")
            if "learning_rate" in override:
                cls.validate_real(override["learning_rate"], f"{override_key}.learning_rate", 0.0)
            if "activation" in override:
                cls.validate_choice(override["activation"], ACTIVATIONS, f"{override_key}.activation")
            if "epochs" in override:
                cls.validate_int(override["epochs"], f"{override_key}.epochs", minimum=1)
            if "batch_size" in override:
                cls.validate_int(override["batch_size"], f"{override_key}.batch_size", minimum=1)
        return value

    @classmethod
    def validate_config(cls, raw: Any) -> dict:
        """
        Validate a whole configuration document.

        Args:
            raw: Parsed JSON document

        Returns:
            The document, unchanged

        Raises:
            ConfigurationError: Naming the first offending key
        """
        cls.require_mapping(raw, "config")
        cls.check_keys(raw, cls.TOP_LEVEL_KEYS)
        for required in ("problem", "method", "architecture"):
            if required not in raw:
                raise ConfigurationError("is required", key=required)
        problem = cls.validate_choice(raw["problem"], cls.PROBLEMS, "problem")
        method = cls.validate_choice(raw["method"], SOURCES, "method")
        if "seed" in raw:
            cls.validate_int(raw["seed"], "seed", minimum=0)
        if "output_dir" in raw and not isinstance(raw["output_dir"], str):
            raise ConfigurationError("must be a path string", key="output_dir")
        if "workers" in raw:
            cls.validate_int(raw["workers"], "workers", minimum=1)

        for section in ("design", "data", "method_params", "pca", "standardize"):
            if section in raw:
                cls.require_mapping(raw[section], section)
                cls.check_keys(raw[section], cls.SECTION_KEYS[section], f"{section}.")

        design = raw.get("design", {})
        for name in ("samples", "iterations", "bc_cases", "time_points"):
            if name in design:
                cls.validate_int(design[name], f"design.{name}", minimum=2 if name == "time_points" else 1)
        if "noise" in design:
            cls.validate_real(design["noise"], "design.noise", 0.0)

        if problem == "csv":
            data = raw.get("data")
            if not isinstance(data, dict) or "path" not in data:
                raise ConfigurationError("is required for csv problems", key="data.path")
            if not isinstance(data["path"], str) or not data["path"]:
                raise ConfigurationError("must be a path string", key="data.path")
            cls.validate_names(data.get("inputs"), "data.inputs")
            cls.validate_names(data.get("outputs"), "data.outputs")

        cls.validate_architecture(raw["architecture"])
        objective = cls.validate_choice(raw.get("objective", "mse" if method == "mcd" else "nll"),
                                        cls.OBJECTIVES, "objective")
        expected = "mse" if method == "mcd" else "nll"
        if objective != expected:
            raise ConfigurationError(f"method {method} trains with the {expected} objective", key="objective")
        out_width = raw["architecture"][-1]["width"]
        if method == "mcd" and out_width != 1:
            raise ConfigurationError("an mcd network predicts one response per model (width 1)",
                                     key=f"architecture[{len(raw['architecture']) - 1}].width")
        if method != "mcd" and out_width != 2:
            raise ConfigurationError("a Gaussian head has width 2 (mean, raw variance)",
                                     key=f"architecture[{len(raw['architecture']) - 1}].width")
        if method == "mcd" and len(raw["architecture"]) < 2:
            raise ConfigurationError("mcd needs at least one hidden layer to drop", key="architecture")

        if "training" in raw:
            cls.validate_training(raw["training"])

        params = raw.get("method_params", {})
        if method == "mcd":
            if "p_drop" not in params:
                raise ConfigurationError("is required for mcd", key="method_params.p_drop")
            cls.validate_real(params["p_drop"], "method_params.p_drop", 0.0, 1.0, False, False)
            if params.get("predict_p_drop") is not None:
                cls.validate_real(params["predict_p_drop"], "method_params.predict_p_drop", 0.0, 1.0, False, False)
            cls.validate_choice(params.get("scaling", "inverted"), cls.SCALING_MODES, "method_params.scaling")
        if method == "de":
            if "M" not in params:
                raise ConfigurationError("is required for de", key="method_params.M")
            cls.validate_int(params["M"], "method_params.M", minimum=2)
        if method == "bnn":
            if "prior" not in params:
                raise ConfigurationError("is required for bnn", key="method_params.prior")
            cls.validate_prior(params["prior"])
            if "n_mc" in params:
                cls.validate_int(params["n_mc"], "method_params.n_mc", minimum=1)
        if "T" in params:
            cls.validate_int(params["T"], "method_params.T", minimum=2)

        pca = raw.get("pca", {})
        if "enabled" in pca and not isinstance(pca["enabled"], bool):
            raise ConfigurationError("must be true or false", key="pca.enabled")
        if "threshold" in pca:
            cls.validate_real(pca["threshold"], "pca.threshold", 0.0, 1.0, low_inclusive=False)
        if "n_samples" in pca:
            cls.validate_int(pca["n_samples"], "pca.n_samples", minimum=2)
        if "mode" in pca:
            cls.validate_choice(pca["mode"], cls.PROPAGATION_MODES, "pca.mode")
        if pca.get("enabled") and problem in ("synth_void", "synth_gap"):
            raise ConfigurationError(f"problem {problem} has no curve-valued outputs", key="pca.enabled")
        if pca.get("enabled") and problem == "csv" and len(raw["data"]["outputs"]) < 2:
            raise ConfigurationError("PCA needs curve-valued outputs (at least 2 columns)", key="pca.enabled")

        for name, flag in raw.get("standardize", {}).items():
            if not isinstance(flag, bool):
                raise ConfigurationError("must be true or false", key=f"standardize.{name}")

        if "overrides" in raw:
            cls.validate_overrides(raw["overrides"])
        return raw
