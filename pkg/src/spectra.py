"""
Spektrallinien-Katalog, Naturkonstanten und die drei charakteristischen
Temperaturen (Unschärfe-, Rückstoß- und Dopplertemperatur).

Die Purity-Rechnung hängt nur von zwei dimensionslosen Verhältnissen ab:
u = T_u/T_R und d = T_D/T_R (plus optional ε = Γ/ω₀). SI-Einheiten gibt es
nur an der Ein-/Ausgabegrenze; ``reduce`` übersetzt eine Linie + T_u in
``ModelParams``.

Temperaturen der Bibliotheks-API sind Kelvin, der Katalog speichert µK.
"""

from __future__ import annotations

import io
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable

from scipy import constants as sc

from src import config

LOGGER = logging.getLogger("spectra")

MICROKELVIN = 1e-6
CONSISTENCY_TOLERANCE = 0.05
MAX_EPSILON = 1e-3

REQUIRED_KEYS = ("name", "transition", "t_recoil_uK", "t_doppler_uK")
OPTIONAL_KEYS = ("wavelength_nm", "linewidth_2pi_MHz", "mass_amu")


class SpectralLineError(ValueError):
    pass


class MissingLineDataError(SpectralLineError):
    pass


class UnknownLineError(LookupError):
    def __init__(self, name: str, available: Iterable[str]):
        self.name = name
        self.available = list(available)
        super().__init__(
            f"Unbekannte Spektrallinie '{name}'. Verfügbar: {', '.join(self.available) or '-'}"
        )


class CatalogParseError(ValueError):
    pass


class ModelParamsError(ValueError):
    pass


@dataclass(frozen=True)
class PhysicalConstants:
    """SI values, CODATA 2018 as shipped with ``scipy.constants``."""

    hbar: float = sc.hbar
    boltzmann: float = sc.k
    light_speed: float = sc.c
    amu: float = sc.physical_constants["atomic mass constant"][0]


CONSTANTS = PhysicalConstants()


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


@dataclass(frozen=True)
class SpectralLine:
    """Eine Zeile der Linientabelle.

    ``t_recoil``/``t_doppler`` in µK, ``wavelength`` in nm, ``linewidth`` als
    Γ/2π in MHz, ``mass`` in atomaren Masseneinheiten.
    """

    name: str
    transition: str
    t_recoil: float
    t_doppler: float
    wavelength: float | None = None
    linewidth: float | None = None
    mass: float | None = None

    def __post_init__(self):
        if not self.name:
            raise SpectralLineError("Spektrallinie ohne Namen")
        for label in ("t_recoil", "t_doppler"):
            value = getattr(self, label)
            if not _is_number(value) or not math.isfinite(value) or value <= 0:
                raise SpectralLineError(f"{self.name}: {label} muss > 0 sein (erhalten: {value!r})")
        for label in ("wavelength", "linewidth", "mass"):
            value = getattr(self, label)
            if value is None:
                continue
            if not _is_number(value) or not math.isfinite(value) or value <= 0:
                raise SpectralLineError(f"{self.name}: {label} muss > 0 sein (erhalten: {value!r})")
        if self.has_si_fields:
            for label, stored, derived in (
                ("T_R", self.t_recoil, _derived_recoil_uK(self)),
                ("T_D", self.t_doppler, _derived_doppler_uK(self)),
            ):
                deviation = abs(derived / stored - 1.0)
                if deviation >= CONSISTENCY_TOLERANCE:
                    raise SpectralLineError(
                        f"{self.name}: {label} aus SI-Daten ({derived:.4g} µK) weicht "
                        f"{deviation:.1%} vom Tabellenwert ({stored:.4g} µK) ab"
                    )

    @property
    def has_si_fields(self) -> bool:
        return None not in (self.wavelength, self.linewidth, self.mass)

    @property
    def angular_frequency(self) -> float:
        """ω₀ in rad/s."""
        if self.wavelength is None:
            raise MissingLineDataError(f"{self.name}: keine Wellenlänge hinterlegt")
        return 2.0 * math.pi * CONSTANTS.light_speed / (self.wavelength * 1e-9)

    @property
    def gamma(self) -> float:
        """Γ in rad/s."""
        if self.linewidth is None:
            raise MissingLineDataError(f"{self.name}: keine Linienbreite hinterlegt")
        return 2.0 * math.pi * self.linewidth * 1e6

    @property
    def mass_kg(self) -> float:
        if self.mass is None:
            raise MissingLineDataError(f"{self.name}: keine Masse hinterlegt")
        return self.mass * CONSTANTS.amu


def _derived_recoil_uK(line: SpectralLine) -> float:
    photon_momentum = CONSTANTS.hbar * line.angular_frequency / CONSTANTS.light_speed
    return photon_momentum**2 / (line.mass_kg * CONSTANTS.boltzmann) / MICROKELVIN


def _derived_doppler_uK(line: SpectralLine) -> float:
    return CONSTANTS.hbar * line.gamma / (2.0 * CONSTANTS.boltzmann) / MICROKELVIN


@dataclass(frozen=True)
class ModelParams:
    """u = T_u/T_R, d = T_D/T_R, epsilon = Γ/ω₀."""

    u: float
    d: float
    epsilon: float = 0.0

    def __post_init__(self):
        for label in ("u", "d"):
            value = getattr(self, label)
            if not _is_number(value) or not math.isfinite(value) or value <= 0:
                raise ModelParamsError(f"{label} muss endlich und > 0 sein (erhalten: {value!r})")
        if not _is_number(self.epsilon) or not 0.0 <= self.epsilon <= MAX_EPSILON:
            raise ModelParamsError(
                f"epsilon muss in [0, {MAX_EPSILON:g}] liegen (erhalten: {self.epsilon!r})"
            )


def uncertainty_temperature(delta_p: float, mass: float) -> float:
    """k_B T_u = Δp²/(2m). Impuls in kg·m/s, Masse in kg, Ergebnis in K."""
    if delta_p <= 0 or mass <= 0:
        raise ValueError(f"delta_p und mass müssen > 0 sein (erhalten: {delta_p!r}, {mass!r})")
    return delta_p**2 / (2.0 * mass * CONSTANTS.boltzmann)


def recoil_temperature(line: SpectralLine, *, derive: bool = False) -> float:
    """T_R in K.

    Standard ist der gespeicherte Katalogwert, auch wenn SI-Felder vorhanden
    sind; ``derive=True`` rechnet ħ²ω₀²/(m c² k_B) aus den SI-Feldern.
    """
    if derive:
        if line.wavelength is None or line.mass is None:
            raise MissingLineDataError(f"{line.name}: T_R braucht Wellenlänge und Masse")
        return _derived_recoil_uK(line) * MICROKELVIN
    return line.t_recoil * MICROKELVIN


def doppler_temperature(line: SpectralLine, *, derive: bool = False) -> float:
    """T_D in K.

    Standard ist der gespeicherte Katalogwert, auch wenn SI-Felder vorhanden
    sind; ``derive=True`` rechnet ħΓ/(2k_B) aus den SI-Feldern.
    """
    if derive:
        if line.linewidth is None:
            raise MissingLineDataError(f"{line.name}: T_D braucht die Linienbreite")
        return _derived_doppler_uK(line) * MICROKELVIN
    return line.t_doppler * MICROKELVIN


def epsilon_ratio(line: SpectralLine) -> float:
    """Γ/ω₀, 0 falls die Linie keine SI-Daten hat."""
    if line.wavelength is None or line.linewidth is None:
        return 0.0
    return line.gamma / line.angular_frequency


def reduce(line: SpectralLine, t_u: float, *, with_epsilon: bool = True) -> ModelParams:
    if t_u <= 0:
        raise ValueError(f"t_u muss > 0 sein (erhalten: {t_u!r})")
    t_recoil = recoil_temperature(line)
    return ModelParams(
        u=t_u / t_recoil,
        d=doppler_temperature(line) / t_recoil,
        epsilon=epsilon_ratio(line) if with_epsilon else 0.0,
    )


def _record_to_line(index: int, record) -> SpectralLine:
    if not isinstance(record, dict):
        raise CatalogParseError(f"Eintrag #{index}: Objekt erwartet, erhalten {type(record).__name__}")
    label = record.get("name", "?")
    unknown = sorted(set(record) - set(REQUIRED_KEYS) - set(OPTIONAL_KEYS))
    if unknown:
        raise CatalogParseError(f"Eintrag #{index} ({label}): unbekannte Felder {', '.join(unknown)}")
    missing = [key for key in REQUIRED_KEYS if key not in record]
    if missing:
        raise CatalogParseError(f"Eintrag #{index} ({label}): fehlende Felder {', '.join(missing)}")
    for key in ("name", "transition"):
        if not isinstance(record[key], str):
            raise CatalogParseError(f"Eintrag #{index} ({label}): '{key}' muss Text sein")
    for key in ("t_recoil_uK", "t_doppler_uK", *OPTIONAL_KEYS):
        if key in record and record[key] is not None and not _is_number(record[key]):
            raise CatalogParseError(f"Eintrag #{index} ({label}): '{key}' muss eine Zahl sein")
    try:
        return SpectralLine(
            name=record["name"],
            transition=record["transition"],
            t_recoil=record["t_recoil_uK"],
            t_doppler=record["t_doppler_uK"],
            wavelength=record.get("wavelength_nm"),
            linewidth=record.get("linewidth_2pi_MHz"),
            mass=record.get("mass_amu"),
        )
    except SpectralLineError as exc:
        raise CatalogParseError(f"Eintrag #{index} ({label}): {exc}") from exc


def load_catalog(source: BinaryIO | bytes) -> list[SpectralLine]:
    raw = source if isinstance(source, (bytes, bytearray)) else source.read()
    try:
        document = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CatalogParseError(f"Katalog ist kein gültiges JSON: {exc}") from exc
    if not isinstance(document, list):
        raise CatalogParseError("Katalog muss ein JSON-Array sein")

    lines = [_record_to_line(index, record) for index, record in enumerate(document)]
    names = [line.name for line in lines]
    duplicates = sorted({name for name in names if names.count(name) > 1})
    if duplicates:
        raise CatalogParseError(f"Doppelte Linien im Katalog: {', '.join(duplicates)}")
    return lines


def dump_catalog(lines: Iterable[SpectralLine]) -> bytes:
    records = []
    for line in lines:
        record = {
            "name": line.name,
            "transition": line.transition,
            "t_recoil_uK": line.t_recoil,
            "t_doppler_uK": line.t_doppler,
        }
        for key, value in zip(OPTIONAL_KEYS, (line.wavelength, line.linewidth, line.mass)):
            if value is not None:
                record[key] = value
        records.append(record)
    return json.dumps(records, ensure_ascii=False, indent=2).encode("utf-8")


def read_catalog(path: str | Path | None = None) -> list[SpectralLine]:
    """Katalog von Platte; ohne Pfad EMISSION_CATALOG_PATH bzw. eingebaut."""
    target = Path(path or config.CATALOG_PATH or config.BUILTIN_CATALOG_PATH)
    with open(target, "rb") as fh:
        lines = load_catalog(fh)
    LOGGER.debug("Katalog %s geladen (%s Linien)", target, len(lines))
    return lines


def default_catalog() -> list[SpectralLine]:
    return load_catalog(io.BytesIO(config.BUILTIN_CATALOG_PATH.read_bytes()))


def find_line(catalog: Iterable[SpectralLine], name: str) -> SpectralLine:
    catalog = list(catalog)
    for line in catalog:
        if line.name == name:
            return line
    raise UnknownLineError(name, [line.name for line in catalog])
