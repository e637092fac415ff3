"""
Synthetic oracle problems with closed-form responses.

Fission gas release (FGR) curves
--------------------------------
With normalized inputs

    u1 = (temperature - 1) / 0.05      u2 = (grainradius - 1) / 0.6
    u3, u4, u5 = log10 of igdiffcoeff, resolutionp, gbdiffcoeff

the release curve in percent is

    A = 12 exp(0.6 u1 - 0.25 u2 + 0.3 (u3 - u4))
    B = 8 exp(0.3 u1 - 0.2 u2 + 0.6 u5)
    fgr(t) = clip(A g(t) + B h(t), 0, 100)

where g is a logistic growth centred at 35 h (scale 10 h) and h a sharp
logistic burst at 50 h (scale 0.8 h). Every curve lies in the span of g and
h, so the centred curve matrix has rank two. Scaling igdiffcoeff and
resolutionp by the same factor leaves the curve unchanged.

Void fractions
--------------
Four axial elevations at heated-length fractions (0.18, 0.46, 0.74, 1.0).
With pressure P (MPa), flow (t/h), power (MW) and inlet subcooling (kJ/kg),
the flow quality at elevation k is

    x_k = (1000 power frac_k / (flow / 3.6) - subcooling phi) / (2000 - 60 P)

and the void fraction in percent is

    alpha_k = 100 x / (x + S (1 - x) r),   x = clip(x_k, 0, 1),  r = 0.007 P

where phi = 1 - 0.3 m12/(1 + m12) + 0.05 m08/(1 + m08) and the slip is
S = 1 + 1.5 / (1 + 0.5 (m28 + m29)) + 0.1 m22/(1 + m22) (m = multipliers
P1008..P1029). The lowest elevation stays at exactly 0 wherever the fluid is
still subcooled; quality grows with elevation so outputs are ordered.
"""
from typing import Optional, Tuple

import numpy as np
from scipy.special import expit

from ..exceptions import InvalidHyperparameterError
from .dataset import Dataset, InputParameter, InputSchema


ORACLE_VERSION = "1"

FGR_SCHEMA = InputSchema((
    InputParameter("temperature_scalef", 0.95, 1.05, "normal", nominal=1.0),
    InputParameter("grainradius_scalef", 0.4, 1.6, "normal", nominal=1.0),
    InputParameter("igdiffcoeff_scalef", 0.1, 10.0, "loguniform", nominal=1.0),
    InputParameter("resolutionp_scalef", 0.1, 10.0, "loguniform", nominal=1.0),
    InputParameter("gbdiffcoeff_scalef", 0.1, 10.0, "loguniform", nominal=1.0),
))

VOID_BC_SCHEMA = InputSchema((
    InputParameter("pressure", 3.9, 8.7),
    InputParameter("flow_rate", 10.0, 70.0),
    InputParameter("power", 0.6, 7.3),
    InputParameter("inlet_subcooling", 10.0, 60.0),
))

VOID_MULTIPLIER_SCHEMA = InputSchema(tuple(
    InputParameter(name, 0.0, 5.0, nominal=1.0)
    for name in ("P1008", "P1012", "P1022", "P1028", "P1029")
))

VOID_SCHEMA = InputSchema(VOID_BC_SCHEMA.parameters + VOID_MULTIPLIER_SCHEMA.parameters)

VOID_OUTPUTS = ("VoidF1", "VoidF2", "VoidF3", "VoidF4")
VOID_ELEVATIONS = np.array([0.18, 0.46, 0.74, 1.0])

GAP_SUPPORT = ((-1.0, -0.5), (0.5, 1.0))
GAP_INTERVAL = (-0.3, 0.3)

_BURST_TIME = 50.0
_BURST_POINTS = 20


def fgr_time_grid(p: int = 100) -> np.ndarray:
    """
    Time points (hours) over 0-100 h with extra points clustered around the burst.

    Args:
        p: Total number of points

    Returns:
        Sorted p-vector
    """
    if int(p) < 2:
        raise InvalidHyperparameterError("A time grid needs at least 2 points", name="time_points")
    p = int(p)
    if p <= 2 * _BURST_POINTS:
        return np.linspace(0.0, 100.0, p)
    uniform = np.linspace(0.0, 100.0, p - _BURST_POINTS)
    burst = np.linspace(_BURST_TIME - 3.0, _BURST_TIME + 3.0, _BURST_POINTS)
    return np.sort(np.concatenate([uniform, burst]))


def fgr_output_names(p: int) -> Tuple[str, ...]:
    return tuple(f"fgr_{i:03d}" for i in range(int(p)))


def synth_fgr(design: np.ndarray, time_grid: np.ndarray) -> np.ndarray:
    """
    Fission gas release curves for a design of the five FGR scale factors.

    Args:
        design: (n, 5) matrix in FGR_SCHEMA column order
        time_grid: p time points in hours

    Returns:
        (n, p) release curves in percent

    Raises:
        DomainError: If an input lies outside its bounds
    """
    X = FGR_SCHEMA.check_bounds(design)
    t = np.asarray(time_grid, dtype=float)
    u1 = (X[:, 0] - 1.0) / 0.05
    u2 = (X[:, 1] - 1.0) / 0.6
    u3, u4, u5 = np.log10(X[:, 2]), np.log10(X[:, 3]), np.log10(X[:, 4])
    growth_amp = 12.0 * np.exp(0.6 * u1 - 0.25 * u2 + 0.3 * (u3 - u4))
    burst_amp = 8.0 * np.exp(0.3 * u1 - 0.2 * u2 + 0.6 * u5)
    growth = expit((t - 35.0) / 10.0)
    burst = expit((t - _BURST_TIME) / 0.8)
    curves = np.outer(growth_amp, growth) + np.outer(burst_amp, burst)
    return np.clip(curves, 0.0, 100.0)


def synth_voidfraction(design: np.ndarray) -> np.ndarray:
    """
    Void fractions at four elevations.

    Args:
        design: (n, 9) matrix in VOID_SCHEMA column order

    Returns:
        (n, 4) void fractions in percent, lowest elevation first

    Raises:
        DomainError: If an input lies outside its bounds
    """
    X = VOID_SCHEMA.check_bounds(design)
    pressure, flow, power, subcooling = X[:, 0], X[:, 1], X[:, 2], X[:, 3]
    m08, m12, m22, m28, m29 = (X[:, j] for j in range(4, 9))

    latent_heat = 2000.0 - 60.0 * pressure
    heat_split = 1.0 - 0.3 * m12 / (1.0 + m12) + 0.05 * m08 / (1.0 + m08)
    slip = 1.0 + 1.5 / (1.0 + 0.5 * (m28 + m29)) + 0.1 * m22 / (1.0 + m22)
    density_ratio = 0.007 * pressure

    enthalpy_gain = 1000.0 * power[:, None] * VOID_ELEVATIONS[None, :] / (flow[:, None] / 3.6)
    quality = (enthalpy_gain - (subcooling * heat_split)[:, None]) / latent_heat[:, None]
    x = np.clip(quality, 0.0, 1.0)
    denominator = x + (slip * density_ratio)[:, None] * (1.0 - x)
    return 100.0 * x / denominator


def synth_gap(n: int, rng: np.random.Generator, noise: float = 0.05) -> Dataset:
    """
    One-dimensional regression with a hole in the training support.

    Inputs are drawn uniformly from [-1, -0.5] and [0.5, 1] (half each) and
    y = sin(3x) + noise; the interval (-0.3, 0.3) is never sampled.
    """
    if int(n) < 2:
        raise InvalidHyperparameterError("The gap problem needs at least 2 samples", name="samples")
    left = int(n) // 2
    x = np.concatenate([
        rng.uniform(*GAP_SUPPORT[0], size=left),
        rng.uniform(*GAP_SUPPORT[1], size=int(n) - left),
    ])
    y = np.sin(3.0 * x) + noise * rng.standard_normal(x.shape[0])
    return Dataset(inputs=x[:, None], outputs=y[:, None], input_names=["x"], output_names=["y"],
                   bounds={"x": (-1.0, 1.0)})


def gap_grid(points: int = 50) -> Tuple[np.ndarray, np.ndarray]:
    """Evaluation inputs (support, gap) for the gap problem, each of shape (points, 1)."""
    support = np.concatenate([np.linspace(*GAP_SUPPORT[0], points // 2),
                              np.linspace(*GAP_SUPPORT[1], points - points // 2)])
    gap = np.linspace(GAP_INTERVAL[0], GAP_INTERVAL[1], points + 2)[1:-1]
    return support[:, None], gap[:, None]


def synth_linear(n: int, noise: float = 0.0, rng: Optional[np.random.Generator] = None) -> Dataset:
    """y = 2x on an evenly spaced grid over [-1, 1], with optional Gaussian noise."""
    x = np.linspace(-1.0, 1.0, int(n))
    y = 2.0 * x
    if noise > 0:
        if rng is None:
            raise InvalidHyperparameterError("A random stream is required for noisy data", name="noise")
        y = y + noise * rng.standard_normal(x.shape[0])
    return Dataset(inputs=x[:, None], outputs=y[:, None], input_names=["x"], output_names=["y"],
                   bounds={"x": (-1.0, 1.0)})
