"""
Verschränkung zwischen Atom und Photon im Impulsraum.

- ``purity``: p_a = I₄/I₂² per randomisiertem QMC mit Importance Sampling
  (Richtungen gleichverteilt auf der Kugel, Atomimpulse aus der Gauß-
  Einhüllenden, Verstimmungen aus der Lorentz-Resonanz).
- analytische Schätzer für die Schmidt-Zahl, Schwellen, Regime-Einteilung.
- ``purity_oracle``: unabhängige Gitter-Rechnung (SVD bzw. Vierfachsumme).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable

import numpy as np
from joblib import Parallel, delayed
from numpy.polynomial.legendre import leggauss
from scipy.special import erf

from src import kernel, qmc
from src.kernel import AtomCoord, PhotonCoord
from src.qmc import Estimate, QmcConfig
from src.spectra import (
    CONSTANTS,
    ModelParams,
    SpectralLine,
    doppler_temperature,
    recoil_temperature,
)

LOGGER = logging.getLogger("entangle")

LOW_PRECISION_RATIO = 0.25
SPHERE_AREA = 4.0 * math.pi
LORENTZ_HALF_WIDTH = 0.5
MIXED_REGIME_MAX_D = 0.5
FWHM_FACTOR = math.sqrt(8.0 * math.log(2.0))
NORM_STREAM = 2
REFERENCE_CUTOFF = 20.0

AmplitudeFn = Callable[[AtomCoord, PhotonCoord, ModelParams], np.ndarray]


class RegimeLabel(str, Enum):
    RECOIL = "Recoil"
    PLATEAU = "Plateau"
    DOPPLER = "Doppler"
    MIXED = "Mixed"


@dataclass(frozen=True)
class Regime:
    label: RegimeLabel
    recoil_threshold_u: float
    doppler_threshold_u: float


@dataclass(frozen=True)
class PurityResult:
    purity: float
    std_error: float
    schmidt_rank: float
    norm_estimate: Estimate
    quad_estimate: Estimate
    norm_deviation: float | None = None
    warnings: tuple[str, ...] = ()


class GridTooLargeError(MemoryError):
    def __init__(self, required: int, limit: int):
        self.required = required
        self.limit = limit
        super().__init__(f"Oracle-Gitter braucht {required} Zellen, erlaubt sind {limit}")


# --- Importance Sampling ---------------------------------------------------


def _sphere(x_cos: np.ndarray, x_phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return 2.0 * x_cos - 1.0, np.mod(2.0 * math.pi * x_phi, 2.0 * math.pi)


def _gaussian_log_density(offset: np.ndarray, u: float) -> np.ndarray:
    return -np.sum(offset**2, axis=-1) / (2.0 * u) - 1.5 * math.log(2.0 * math.pi * u)


def _sample_detuning(x, resonance, partner, proposal: str):
    """Verstimmung und ihre Dichte.

    ``resonance``: Cauchy um die eigene Resonanz. ``balanced``: Gleichgewichts-
    Mischung der beiden Cauchy-Gesetze der Amplituden, die sich das Photon
    teilen; hält das Gewicht beschränkt.
    """
    if proposal == "resonance":
        delta = qmc.to_cauchy(x, resonance, LORENTZ_HALF_WIDTH)
        return delta, qmc.cauchy_density(delta, resonance, LORENTZ_HALF_WIDTH)
    first = x < 0.5
    stretched = np.where(first, 2.0 * x, 2.0 * x - 1.0)
    delta = qmc.to_cauchy(stretched, np.where(first, resonance, partner), LORENTZ_HALF_WIDTH)
    density = 0.5 * (
        qmc.cauchy_density(delta, resonance, LORENTZ_HALF_WIDTH)
        + qmc.cauchy_density(delta, partner, LORENTZ_HALF_WIDTH)
    )
    return delta, density


def quad_integrand(params: ModelParams, proposal: str, amplitude: AmplitudeFn = kernel.amplitude):
    """12-dim Integrand von I₄ auf dem Einheitswürfel.

    Spalten: (cos θ, φ), (cos θ', φ'), Q, Q', δ, δ'.
    """
    root_u = math.sqrt(params.u)

    def integrand(x: np.ndarray) -> np.ndarray:
        cos1, phi1 = _sphere(x[:, 0], x[:, 1])
        cos2, phi2 = _sphere(x[:, 2], x[:, 3])
        k1 = kernel.photon_direction(cos1, phi1)
        k2 = kernel.photon_direction(cos2, phi2)
        center = -0.5 * (k1 + k2)
        offset = qmc.to_gaussian(x[:, 4:7], 0.0, root_u)
        offset_p = qmc.to_gaussian(x[:, 7:10], 0.0, root_u)
        q = center + offset
        q_p = center + offset_p
        log_density = _gaussian_log_density(offset, params.u) + _gaussian_log_density(
            offset_p, params.u
        )

        delta, density = _sample_detuning(
            x[:, 10],
            kernel.resonance_center(q, k1, params),
            kernel.resonance_center(q_p, k1, params),
            proposal,
        )
        delta_p, density_p = _sample_detuning(
            x[:, 11],
            kernel.resonance_center(q_p, k2, params),
            kernel.resonance_center(q, k2, params),
            proposal,
        )

        atom, atom_p = AtomCoord(q), AtomCoord(q_p)
        photon = PhotonCoord(delta, cos1, phi1)
        photon_p = PhotonCoord(delta_p, cos2, phi2)
        product = (
            amplitude(atom, photon, params)
            * np.conj(amplitude(atom, photon_p, params))
            * amplitude(atom_p, photon_p, params)
            * np.conj(amplitude(atom_p, photon, params))
        )
        weight = SPHERE_AREA**2 * np.exp(-log_density) / (density * density_p)
        return np.real(product) * weight

    return integrand


def norm_integrand(params: ModelParams, amplitude: AmplitudeFn = kernel.amplitude):
    """6-dim Integrand von I₂: (cos θ, φ), Q, δ."""
    root_u = math.sqrt(params.u)

    def integrand(x: np.ndarray) -> np.ndarray:
        cos1, phi1 = _sphere(x[:, 0], x[:, 1])
        k1 = kernel.photon_direction(cos1, phi1)
        offset = qmc.to_gaussian(x[:, 2:5], 0.0, root_u)
        q = offset - k1
        resonance = kernel.resonance_center(q, k1, params)
        delta = qmc.to_cauchy(x[:, 5], resonance, LORENTZ_HALF_WIDTH)
        density = qmc.cauchy_density(delta, resonance, LORENTZ_HALF_WIDTH)
        value = amplitude(AtomCoord(q), PhotonCoord(delta, cos1, phi1), params)
        weight = SPHERE_AREA * np.exp(-_gaussian_log_density(offset, params.u)) / density
        return np.abs(value) ** 2 * weight

    return integrand


def analytic_norm(params: ModelParams) -> float:
    """I₂ bei epsilon = 0: (2πu)^{3/2} · 2π · 8π/3."""
    return (2.0 * math.pi * params.u) ** 1.5 * 2.0 * math.pi * 8.0 * math.pi / 3.0


def _overlap_kernel(c: np.ndarray, sigma2: float, nodes: int) -> np.ndarray:
    """E[1/((1 − i x)(1 + i x'))] für Doppler-Verschiebungen x = D·κ̂, x' = D·κ̂'.

    D ~ N(0, sigma2·1), c = κ̂·κ̂'. Mit a = (t+s)/2, b = t − s bleibt ein
    eindimensionales Integral über a; das b-Integral ist eine Fehlerfunktion.
    """
    a, w = _legendre(nodes, 0.5 * REFERENCE_CUTOFF, 0.5 * REFERENCE_CUTOFF)
    c = np.asarray(c, dtype=float)[:, None]
    x = 2.0 * a * np.sqrt(0.25 * sigma2 * (1.0 + c))
    safe = np.where(x > 1e-8, x, 1.0)
    ratio = np.where(x > 1e-8, math.sqrt(math.pi) * erf(safe) / (2.0 * safe), 1.0)
    integrand = 4.0 * a * ratio * np.exp(-2.0 * a - sigma2 * (1.0 - c) * a**2)
    return integrand @ w


def reduced_purity(
    params: ModelParams,
    *,
    polar_nodes: int = 48,
    azimuth_nodes: int = 96,
    overlap_nodes: int = 512,
    kernel_points: int = 2001,
) -> float:
    """Purity bei epsilon = 0 als Richtungsmittel.

    Die Q-Integrale sind Gaußsch, die δ-Integrale Lorentz-Überlappungen; übrig
    bleibt E[exp(−(1−c)/(2u)) · F(c, u/(2d²))] über zwei Richtungen mit
    Gewicht sin²θ. Referenz für ``purity`` und ``purity_oracle``.
    """
    if params.epsilon != 0.0:
        raise ValueError("reduced_purity gilt nur für epsilon = 0")
    cos_theta, cos_w = _legendre(polar_nodes, 0.0, 1.0)
    cos_w = cos_w * (1.0 - cos_theta**2) / (4.0 / 3.0)
    sin_theta = np.sqrt(1.0 - cos_theta**2)
    phi = 2.0 * math.pi * (np.arange(azimuth_nodes) + 0.5) / azimuth_nodes

    c = (
        cos_theta[:, None, None] * cos_theta[None, :, None]
        + sin_theta[:, None, None] * sin_theta[None, :, None] * np.cos(phi)[None, None, :]
    )
    c = np.clip(c, -1.0, 1.0)
    grid = np.linspace(-1.0, 1.0, kernel_points)
    overlap = np.interp(c, grid, _overlap_kernel(grid, params.u / (2.0 * params.d**2), overlap_nodes))
    recoil = np.exp(-(1.0 - c) / (2.0 * params.u))
    weights = cos_w[:, None, None] * cos_w[None, :, None] / azimuth_nodes
    return float(np.sum(weights * recoil * overlap))


def purity(
    params: ModelParams,
    config: QmcConfig,
    *,
    amplitude: AmplitudeFn = kernel.amplitude,
    n_jobs: int = 1,
) -> PurityResult:
    quad_config = replace(config, dimension=12)
    norm_config = replace(config, dimension=6, seed=qmc.derive_seed(config.seed, NORM_STREAM))
    quad_estimate, norm_estimate = Parallel(n_jobs=1 if n_jobs == 1 else 2, prefer="threads")(
        [
            delayed(qmc.integrate)(
                quad_integrand(params, config.detuning_proposal, amplitude), quad_config, n_jobs=n_jobs
            ),
            delayed(qmc.integrate)(norm_integrand(params, amplitude), norm_config, n_jobs=n_jobs),
        ]
    )

    warnings: list[str] = []
    value = quad_estimate.value / norm_estimate.value**2
    relative = math.sqrt(
        (quad_estimate.std_error / quad_estimate.value) ** 2
        + 4.0 * (norm_estimate.std_error / norm_estimate.value) ** 2
    ) if quad_estimate.value != 0 else math.inf
    std_error = abs(value) * relative if math.isfinite(relative) else math.inf

    if value > 0:
        rank = schmidt_rank(value)
        if std_error / value > LOW_PRECISION_RATIO:
            warnings.append(f"geringe Präzision: std_error/purity = {std_error / value:.2f}")
    else:
        rank = math.inf
        warnings.append(f"nicht-positive Purity-Schätzung {value:.3g}")
    for message in warnings:
        LOGGER.warning("u=%.4g d=%.4g: %s", params.u, params.d, message)

    norm_deviation = None
    if params.epsilon == 0.0 and amplitude is kernel.amplitude:
        norm_deviation = norm_estimate.value / analytic_norm(params) - 1.0

    return PurityResult(
        purity=value,
        std_error=std_error,
        schmidt_rank=rank,
        norm_estimate=norm_estimate,
        quad_estimate=quad_estimate,
        norm_deviation=norm_deviation,
        warnings=tuple(warnings),
    )


# --- Schmidt-Zahl, Schätzer, Schwellen --------------------------------------


def schmidt_rank(purity_value: float) -> float:
    """K = 1/p_a; statistische Überschreitung p_a > 1 wird hier auf 1 gekappt."""
    if purity_value <= 0:
        raise ValueError(f"purity muss > 0 sein (erhalten: {purity_value!r})")
    return 1.0 / min(purity_value, 1.0)


def recoil_rank_estimate(u: float) -> float:
    """K ≈ 2 T_R/T_u, mindestens 1."""
    if u <= 0:
        raise ValueError("u muss > 0 sein")
    return max(1.0, 2.0 / u)


def doppler_rank_estimate(u: float, d: float) -> float:
    """K ≈ √(2 ln 2)·√u/d; 1 sobald die Doppler-FWHM unter Γ liegt."""
    if u <= 0 or d <= 0:
        raise ValueError("u und d müssen > 0 sein")
    if FWHM_FACTOR * effective_linewidth_ratio(u, d) < 1.0:
        return 1.0
    return math.sqrt(2.0 * math.log(2.0)) * math.sqrt(u) / d


def recoil_threshold(line: SpectralLine) -> float:
    """T_u = T_R (in K)."""
    return recoil_temperature(line)


def doppler_threshold(line: SpectralLine) -> float:
    """Doppler-Verschränkungstemperatur T_DE = 4 (T_D/T_R) T_D (in K)."""
    t_doppler = doppler_temperature(line)
    return 4.0 * t_doppler / recoil_temperature(line) * t_doppler


def natural_linewidth(line: SpectralLine) -> float:
    """Γ = 2 k_B T_D/ħ in rad/s."""
    return 2.0 * CONSTANTS.boltzmann * doppler_temperature(line) / CONSTANTS.hbar


def effective_linewidth(t_u: float, line: SpectralLine) -> float:
    """Γ_e = √(k_B T_u/(m c²))·ω₀ = k_B √(T_u T_R)/ħ in rad/s."""
    if t_u < 0:
        raise ValueError("t_u muss >= 0 sein")
    return CONSTANTS.boltzmann * math.sqrt(t_u * recoil_temperature(line)) / CONSTANTS.hbar


def effective_linewidth_ratio(u: float, d: float) -> float:
    """Γ_e/Γ = √u/(2d)."""
    return math.sqrt(u) / (2.0 * d)


def doppler_shift(q_parallel: float, line: SpectralLine) -> float:
    """ω⁰ − ω₀ = (ω₀/(m c))·q_∥ in rad/s; braucht Wellenlänge und Masse."""
    return line.angular_frequency / (line.mass_kg * CONSTANTS.light_speed) * q_parallel


def doppler_shift_ratio(q_parallel: float, d: float) -> float:
    """Dopplerverschiebung in Einheiten von Γ, Q_∥ dimensionslos (ħω₀/c)."""
    return q_parallel / (2.0 * d)


def classify(params: ModelParams) -> Regime:
    """Grenzen geschlossen: u = 1 → Recoil, u = 4d² → Doppler."""
    doppler_u = 4.0 * params.d**2
    if params.d <= MIXED_REGIME_MAX_D:
        label = RegimeLabel.MIXED
    elif params.u <= 1.0:
        label = RegimeLabel.RECOIL
    elif params.u >= doppler_u:
        label = RegimeLabel.DOPPLER
    else:
        label = RegimeLabel.PLATEAU
    return Regime(label=label, recoil_threshold_u=1.0, doppler_threshold_u=doppler_u)


# --- Gitter-Orakel ----------------------------------------------------------


@dataclass(frozen=True)
class OracleGrid:
    """Knotenzahlen je Achse; Ausdehnungen optional (sonst aus u, d)."""

    atom_nodes: int = 10
    detuning_nodes: int = 6
    polar_nodes: int = 12
    azimuth_nodes: int = 16
    atom_half_width: float | None = None
    detuning_half_width: float | None = None
    max_cells: int = 2048 * 2048

    @property
    def atom_size(self) -> int:
        return self.atom_nodes**3

    @property
    def photon_size(self) -> int:
        return self.detuning_nodes * self.polar_nodes * self.azimuth_nodes


def oracle_extents(params: ModelParams) -> tuple[float, float]:
    """Halbbreiten: Q ±(1 + 5√u) um 0, δ ±max(10, 10·√u/(2d)) um 1/(4d)."""
    root_u = math.sqrt(params.u)
    return max(5.0 * root_u, 1.0 + 5.0 * root_u), max(10.0, 10.0 * root_u / (2.0 * params.d))


def _legendre(nodes: int, center: float, half_width: float) -> tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(nodes)
    return center + half_width * x, half_width * w


def oracle_matrix(
    params: ModelParams,
    grid: OracleGrid,
    amplitude: AmplitudeFn = kernel.amplitude,
) -> np.ndarray:
    """M[Atom, Photon] = √w_Atom · A · √w_Photon auf dem Tensorgitter."""
    required = grid.atom_size * grid.photon_size
    if required > grid.max_cells:
        raise GridTooLargeError(required, grid.max_cells)

    atom_half, detuning_half = oracle_extents(params)
    atom_half = grid.atom_half_width or atom_half
    detuning_half = grid.detuning_half_width or detuning_half

    axis, axis_w = _legendre(grid.atom_nodes, 0.0, atom_half)
    qx, qy, qz = np.meshgrid(axis, axis, axis, indexing="ij")
    q = np.stack((qx.ravel(), qy.ravel(), qz.ravel()), axis=-1)
    atom_w = np.einsum("i,j,k->ijk", axis_w, axis_w, axis_w).ravel()

    delta, delta_w = _legendre(grid.detuning_nodes, 1.0 / (4.0 * params.d), detuning_half)
    cos_theta, cos_w = _legendre(grid.polar_nodes, 0.0, 1.0)
    phi = 2.0 * math.pi * (np.arange(grid.azimuth_nodes) + 0.5) / grid.azimuth_nodes
    phi_w = np.full(grid.azimuth_nodes, 2.0 * math.pi / grid.azimuth_nodes)
    dd, cc, pp = np.meshgrid(delta, cos_theta, phi, indexing="ij")
    photon = PhotonCoord(dd.ravel(), cc.ravel(), pp.ravel())
    photon_w = np.einsum("i,j,k->ijk", delta_w, cos_w, phi_w).ravel()

    matrix = np.empty((grid.atom_size, grid.photon_size), dtype=complex)
    block = max(1, 262144 // grid.photon_size)
    for start in range(0, grid.atom_size, block):
        rows = slice(start, start + block)
        atoms = AtomCoord(q[rows, None, :])
        matrix[rows] = amplitude(atoms, photon, params)
    return np.sqrt(atom_w)[:, None] * matrix * np.sqrt(photon_w)[None, :]


def svd_purity(matrix: np.ndarray) -> float:
    """Σσ⁴/(Σσ²)² aus den Singulärwerten."""
    singular = np.linalg.svd(matrix, compute_uv=False)
    squares = singular**2
    return float(np.sum(squares**2) / np.sum(squares) ** 2)


def quadruple_sum_purity(matrix: np.ndarray) -> float:
    """Direkte Riemann-Vierfachsumme Σ M M* M M* / (Σ|M|²)²."""
    quad = np.einsum("ap,aq,bq,bp->", matrix, matrix.conj(), matrix, matrix.conj(), optimize="greedy")
    norm = np.vdot(matrix, matrix).real
    return float(quad.real / norm**2)


def purity_oracle(
    params: ModelParams,
    grid: OracleGrid = OracleGrid(),
    *,
    method: str = "svd",
    amplitude: AmplitudeFn = kernel.amplitude,
) -> float:
    matrix = oracle_matrix(params, grid, amplitude)
    if method == "svd":
        return svd_purity(matrix)
    if method == "quadruple":
        return quadruple_sum_purity(matrix)
    raise ValueError(f"Unbekannte Methode '{method}' (svd|quadruple)")
