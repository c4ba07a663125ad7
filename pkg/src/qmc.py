"""
Randomisiertes Quasi-Monte-Carlo.

Punktfolge: Sobol' ohne Scrambling (scipy, Joe-Kuo-Richtungszahlen, 30 Bit)
plus digitaler Shift je Replikat (XOR mit einem 30-Bit-Vektor aus
``SeedSequence(seed).spawn(replicates)``). Fehlerbalken kommen aus der
Streuung der Replikat-Mittelwerte.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import norm
from scipy.stats.qmc import Sobol

from src import config

LOGGER = logging.getLogger("qmc")

MAX_DIMENSION = 21
SOBOL_BITS = 30
MIN_SAMPLES = 1024
LOWER_CLAMP = 2.0**-64
UPPER_CLAMP = 1.0 - 2.0**-53
DETUNING_PROPOSALS = ("balanced", "resonance")

Integrand = Callable[[np.ndarray], np.ndarray]


class QmcConfigError(ValueError):
    pass


class NonFiniteIntegrandError(ValueError):
    def __init__(self, point: np.ndarray, value: float):
        self.point = np.array(point, dtype=float)
        self.value = value
        super().__init__(f"Integrand nicht endlich ({value!r}) am Punkt {self.point.tolist()}")


@dataclass(frozen=True)
class QmcConfig:
    samples_per_replicate: int = 65536
    replicates: int = 8
    seed: int = 7
    dimension: int = 12
    detuning_proposal: str = "balanced"
    chunk_size: int = 32768

    def __post_init__(self):
        if self.samples_per_replicate < MIN_SAMPLES:
            raise QmcConfigError(f"samples_per_replicate muss >= {MIN_SAMPLES} sein")
        if self.replicates < 2:
            raise QmcConfigError("replicates muss >= 2 sein")
        if not 0 <= self.seed < 2**64:
            raise QmcConfigError("seed muss eine 64-Bit-Zahl >= 0 sein")
        if not 1 <= self.dimension <= MAX_DIMENSION:
            raise QmcConfigError(f"dimension muss in [1, {MAX_DIMENSION}] liegen")
        if self.detuning_proposal not in DETUNING_PROPOSALS:
            raise QmcConfigError(
                f"detuning_proposal muss einer von {', '.join(DETUNING_PROPOSALS)} sein"
            )
        if self.chunk_size < 1:
            raise QmcConfigError("chunk_size muss >= 1 sein")

    @classmethod
    def from_settings(cls, **overrides) -> "QmcConfig":
        """Defaults aus configuration.txt/.env, einzelne Felder überschreibbar."""
        values = {
            "samples_per_replicate": config.SAMPLES,
            "replicates": config.REPLICATES,
            "seed": config.SEED,
            "detuning_proposal": config.DETUNING_PROPOSAL,
            "chunk_size": config.CHUNK_SIZE,
        }
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**values)


@dataclass(frozen=True)
class Estimate:
    value: float
    std_error: float
    replicate_values: tuple[float, ...]
    effective_sample_fraction: float = 1.0


def derive_seed(seed: int, stream: int) -> int:
    """Unabhängiger 64-Bit-Seed für einen zweiten Integral-Strom."""
    return int(np.random.SeedSequence([seed, stream]).generate_state(1, np.uint64)[0])


def replicate_shifts(seed: int, replicates: int, dimension: int) -> list[np.ndarray]:
    shifts = []
    for child in np.random.SeedSequence(seed).spawn(replicates):
        rng = np.random.default_rng(child)
        shifts.append(rng.integers(0, 2**SOBOL_BITS, size=dimension, dtype=np.uint64))
    return shifts


def _to_integers(points: np.ndarray) -> np.ndarray:
    return np.rint(points * 2.0**SOBOL_BITS).astype(np.uint64)


def _apply_shift(integers: np.ndarray, shift: np.ndarray | None) -> np.ndarray:
    if shift is not None:
        integers = integers ^ np.asarray(shift, dtype=np.uint64)
    return integers.astype(np.float64) * 2.0**-SOBOL_BITS


def ld_point(index: int, dimension: int, shift: np.ndarray | None = None) -> np.ndarray:
    """Punkt ``index`` der Sobol'-Folge, optional digital verschoben."""
    if not 1 <= dimension <= MAX_DIMENSION:
        raise QmcConfigError(f"dimension muss in [1, {MAX_DIMENSION}] liegen")
    if index < 0:
        raise QmcConfigError("index muss >= 0 sein")
    sampler = Sobol(d=dimension, scramble=False, bits=SOBOL_BITS)
    if index:
        sampler.fast_forward(index)
    return _apply_shift(_to_integers(sampler.random(1)), shift)[0]


def ld_points(count: int, dimension: int, shift: np.ndarray | None = None) -> np.ndarray:
    """Die ersten ``count`` Punkte der Folge, Form (count, dimension)."""
    if not 1 <= dimension <= MAX_DIMENSION:
        raise QmcConfigError(f"dimension muss in [1, {MAX_DIMENSION}] liegen")
    sampler = Sobol(d=dimension, scramble=False, bits=SOBOL_BITS)
    return _apply_shift(_to_integers(sampler.random(count)), shift)


def clamp_unit(x):
    return np.clip(x, LOWER_CLAMP, UPPER_CLAMP)


def to_gaussian(x, mean=0.0, sigma=1.0):
    """Inverse Normalverteilung; x wird auf [2⁻⁶⁴, 1−2⁻⁵³] begrenzt."""
    if np.any(np.asarray(sigma) <= 0):
        raise ValueError("sigma muss > 0 sein")
    return mean + sigma * norm.ppf(clamp_unit(x))


def to_cauchy(x, center=0.0, width=1.0):
    if np.any(np.asarray(width) <= 0):
        raise ValueError("width muss > 0 sein")
    return center + width * np.tan(math.pi * (clamp_unit(x) - 0.5))


def cauchy_density(value, center=0.0, width=1.0):
    return width / (math.pi * ((value - center) ** 2 + width**2))


def _integrate_replicate(f: Integrand, qmc: QmcConfig, shift: np.ndarray) -> tuple[float, float]:
    sampler = Sobol(d=qmc.dimension, scramble=False, bits=SOBOL_BITS)
    total = 0.0
    abs_total = 0.0
    square_total = 0.0
    remaining = qmc.samples_per_replicate
    while remaining:
        count = min(qmc.chunk_size, remaining)
        x = clamp_unit(_apply_shift(_to_integers(sampler.random(count)), shift))
        values = np.asarray(f(x), dtype=float).reshape(count)
        finite = np.isfinite(values)
        if not finite.all():
            bad = int(np.argmin(finite))
            raise NonFiniteIntegrandError(x[bad], float(values[bad]))
        total += float(values.sum())
        abs_total += float(np.abs(values).sum())
        square_total += float(np.square(values).sum())
        remaining -= count

    n = qmc.samples_per_replicate
    ess_fraction = abs_total**2 / (n * square_total) if square_total > 0 else 0.0
    return total / n, ess_fraction


def integrate(f: Integrand, qmc: QmcConfig, *, n_jobs: int = 1) -> Estimate:
    """Mittelwert von f über [0,1)^dimension.

    f bekommt Blöcke der Form (n, dimension) und liefert n reelle Werte.
    Replikate laufen parallel (Threads), die Reduktion erfolgt in
    Replikat-Reihenfolge.
    """
    shifts = replicate_shifts(qmc.seed, qmc.replicates, qmc.dimension)
    results = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_integrate_replicate)(f, qmc, shift) for shift in shifts
    )
    means = np.array([mean for mean, _ in results])
    value = float(np.mean(means))
    std_error = float(np.std(means, ddof=1) / math.sqrt(qmc.replicates))
    ess = float(np.mean([fraction for _, fraction in results]))
    LOGGER.debug(
        "Integral d=%s N=%s R=%s: %.6g ± %.2g (ESS %.3f)",
        qmc.dimension, qmc.samples_per_replicate, qmc.replicates, value, std_error, ess,
    )
    return Estimate(
        value=value,
        std_error=std_error,
        replicate_values=tuple(float(mean) for mean in means),
        effective_sample_fraction=ess,
    )
