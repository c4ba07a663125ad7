"""
Punktweise Auswertung von Wellenpaket und asymptotischer Emissionsamplitude.

Dimensionslose Variablen: Atomimpuls Q in Einheiten von ħω₀/c, Photonen-
Verstimmung δ = (ω_k − ω₀)/Γ, Richtung über (cos θ, φ). Alle Funktionen sind
numpy-vektorisiert: Felder der Koordinaten dürfen Skalare oder Arrays sein,
AtomCoord.q hat dann Form (..., 3).

Der konstante Vorfaktor der Amplitude fällt weg, er kürzt sich in der Purity
(Verhältnis I₄/I₂²).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from src.spectra import ModelParams

# Bei epsilon > 0: Amplitude nur im optischen Band |εδ| <= 1/2.
EPSILON_BAND = 0.5

# Amplituden sind komplexe numpy-Werte (Skalar oder Array).
Amplitude = complex


@dataclass(frozen=True)
class PhotonCoord:
    delta: float | np.ndarray
    cos_theta: float | np.ndarray
    phi: float | np.ndarray

    def __post_init__(self):
        cos_theta = np.asarray(self.cos_theta)
        phi = np.asarray(self.phi)
        if np.any(np.abs(cos_theta) > 1.0):
            raise ValueError("cos_theta muss in [-1, 1] liegen")
        if np.any(phi < 0.0) or np.any(phi >= 2.0 * math.pi):
            raise ValueError("phi muss in [0, 2π) liegen")

    @property
    def sin_theta(self) -> np.ndarray:
        return np.sqrt(np.clip(1.0 - np.square(self.cos_theta), 0.0, None))

    @property
    def direction(self) -> np.ndarray:
        return photon_direction(self.cos_theta, self.phi)


@dataclass(frozen=True)
class AtomCoord:
    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.shape[-1:] != (3,):
            raise ValueError(f"q braucht 3 Komponenten, Form {q.shape}")
        if not np.all(np.isfinite(q)):
            raise ValueError("q muss endlich sein")
        object.__setattr__(self, "q", q)


def photon_direction(cos_theta, phi) -> np.ndarray:
    cos_theta = np.asarray(cos_theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    sin_theta = np.sqrt(np.clip(1.0 - cos_theta**2, 0.0, None))
    return np.stack((sin_theta * np.cos(phi), sin_theta * np.sin(phi), cos_theta), axis=-1)


def wavepacket(p, delta_p: float):
    """φ(p) = (πΔp²)^(-3/4) exp(-|p|²/(2Δp²)), beliebige Impulseinheit."""
    if delta_p <= 0:
        raise ValueError(f"delta_p muss > 0 sein (erhalten: {delta_p!r})")
    p = np.asarray(p, dtype=float)
    norm = (math.pi * delta_p**2) ** -0.75
    return norm * np.exp(-np.sum(p**2, axis=-1) / (2.0 * delta_p**2))


def _wavenumber_scale(photon: PhotonCoord, params: ModelParams):
    """|k|/(ω₀/c) = 1 + εδ; 1 bei epsilon = 0."""
    if params.epsilon == 0.0:
        return 1.0
    return 1.0 + params.epsilon * np.asarray(photon.delta, dtype=float)


def resonance_center(q, direction, params: ModelParams):
    """Verstimmung, bei der der Realteil des Nenners verschwindet (ε = 0)."""
    parallel = np.sum(np.asarray(q) * np.asarray(direction), axis=-1)
    return parallel / (2.0 * params.d) + 1.0 / (4.0 * params.d)


def denominator(atom: AtomCoord, photon: PhotonCoord, params: ModelParams):
    """δ − (Q·κ)/(2d) − |κ|²/(4d) + i/2 mit κ = (1+εδ)κ̂."""
    scale = _wavenumber_scale(photon, params)
    parallel = np.sum(atom.q * photon.direction, axis=-1)
    real = (
        np.asarray(photon.delta, dtype=float)
        - scale * parallel / (2.0 * params.d)
        - scale**2 / (4.0 * params.d)
    )
    return real + 0.5j


def amplitude(atom: AtomCoord, photon: PhotonCoord, params: ModelParams):
    """sin θ · exp(−|Q + κ|²/(4u)) / Nenner.

    Für epsilon > 0 kommen √(1+εδ) (√ω_k) und die halbe Photonen-Jacobi-
    Determinante (1+εδ) hinzu; außerhalb des optischen Bandes ist A = 0.
    """
    scale = _wavenumber_scale(photon, params)
    shifted = atom.q + np.asarray(scale)[..., None] * photon.direction
    envelope = np.exp(-np.sum(shifted**2, axis=-1) / (4.0 * params.u))
    value = photon.sin_theta * envelope / denominator(atom, photon, params)
    if params.epsilon == 0.0:
        return value
    inside = np.abs(scale - 1.0) <= EPSILON_BAND
    safe_scale = np.where(inside, scale, 1.0)
    return np.where(inside, value * safe_scale**1.5, 0.0)
