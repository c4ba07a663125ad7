"""
Sweeps über T_u je Spektrallinie und Phasendiagramm-Gitter über (u, d).

Jeder Punkt wird unabhängig gerechnet (joblib, Prozesse), die Zeilen werden
in Achsen-Reihenfolge geschrieben. Fertige Punkte landen als JSON im
Cache-Ordner ``<out>.cache/`` und werden mit ``resume`` wiederverwendet.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from src import entangle
from src.qmc import QmcConfig
from src.spectra import (
    MICROKELVIN,
    ModelParams,
    SpectralLine,
    doppler_temperature,
    recoil_temperature,
    reduce,
)

LOGGER = logging.getLogger("sweep")

CSV_COLUMNS = [
    "line",
    "t_u_uK",
    "u",
    "d",
    "axis_value",
    "purity",
    "std_error",
    "schmidt_rank",
    "recoil_estimate",
    "doppler_estimate",
    "regime",
    "warnings",
]
PHASE_COLUMNS = [
    "u",
    "d",
    "regime",
    "recoil_estimate",
    "doppler_estimate",
    "recoil_threshold_u",
    "doppler_threshold_u",
]
NUMERIC_PHASE_COLUMNS = PHASE_COLUMNS + ["purity", "std_error", "schmidt_rank", "warnings"]

# Achsen: T_u/T_D, T_u/T_R, T_u·T_R/(4 T_D²)
AXES = ("tu_over_td", "tu_over_tr", "tu_scaled")
DEFAULT_U_MIN = 1e-2
DEFAULT_DOPPLER_SPAN = 10.0


class SweepSpecError(ValueError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    """Temperaturen in µK."""

    line: str
    t_u_min: float
    t_u_max: float
    points: int = 25
    spacing: str = "log"
    qmc: QmcConfig = field(default_factory=QmcConfig)
    axis: str = "tu_over_td"
    with_epsilon: bool = False

    def __post_init__(self):
        if not 0 < self.t_u_min < self.t_u_max:
            raise SweepSpecError("Es muss 0 < t_u_min < t_u_max gelten")
        if self.points < 2:
            raise SweepSpecError("points muss >= 2 sein")
        if self.spacing != "log":
            raise SweepSpecError("Nur logarithmische Abstände werden unterstützt")
        if self.axis not in AXES:
            raise SweepSpecError(f"axis muss einer von {', '.join(AXES)} sein")

    def grid(self) -> np.ndarray:
        return np.geomspace(self.t_u_min, self.t_u_max, self.points)


@dataclass(frozen=True)
class SweepRow:
    line: str
    t_u_uK: float
    u: float
    d: float
    axis_value: float
    purity: float
    std_error: float
    schmidt_rank: float
    recoil_estimate: float
    doppler_estimate: float
    regime: str
    warnings: str = ""


def default_range_uK(line: SpectralLine) -> tuple[float, float]:
    """u ∈ [10⁻², 10·4d²], umgerechnet in µK."""
    d = line.t_doppler / line.t_recoil
    return DEFAULT_U_MIN * line.t_recoil, DEFAULT_DOPPLER_SPAN * 4.0 * d**2 * line.t_recoil


def axis_value(axis: str, t_u_uK: float, line: SpectralLine) -> float:
    if axis == "tu_over_td":
        return t_u_uK / line.t_doppler
    if axis == "tu_over_tr":
        return t_u_uK / line.t_recoil
    if axis == "tu_scaled":
        return t_u_uK * line.t_recoil / (4.0 * line.t_doppler**2)
    raise SweepSpecError(f"Unbekannte Achse '{axis}'")


def cache_key(payload: Dict[str, Any]) -> str:
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False, default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def cache_dir_for(out_path: Path) -> Path:
    return out_path.with_name(out_path.name + ".cache")


def _load_cache(path: Path) -> Dict[str, Any] | None:
    if not path.exists():
        return None
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except Exception:
        payload = None
    if not _is_point_payload(payload):
        LOGGER.warning("Cache-Datei %s unlesbar – wird neu gerechnet.", path)
        return None
    return payload


def _is_point_payload(payload: Any) -> bool:
    if not isinstance(payload, dict):
        return False
    numbers = (payload.get("purity"), payload.get("std_error"))
    if not all(isinstance(value, (int, float)) and not isinstance(value, bool) for value in numbers):
        return False
    warnings = payload.get("warnings")
    return isinstance(warnings, list) and all(isinstance(item, str) for item in warnings)


def _save_cache(path: Path, payload: Dict[str, Any]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(payload, ensure_ascii=False, indent=2), encoding="utf-8")
    tmp.replace(path)


def _compute_point(
    params: ModelParams,
    qmc_config: QmcConfig,
    cache_path: Path | None,
    resume: bool,
    n_jobs: int,
) -> Dict[str, Any]:
    if cache_path is not None and resume:
        cached = _load_cache(cache_path)
        if cached is not None:
            LOGGER.info("Cache-Treffer u=%.4g d=%.4g", params.u, params.d)
            return cached

    LOGGER.info("Rechne Purity u=%.4g d=%.4g …", params.u, params.d)
    result = entangle.purity(params, qmc_config, n_jobs=n_jobs)
    payload = {
        "purity": result.purity,
        "std_error": result.std_error,
        "warnings": list(result.warnings),
    }
    if cache_path is not None:
        _save_cache(cache_path, payload)
    return payload


def _rank_from_purity(value: float) -> float:
    return entangle.schmidt_rank(value) if value > 0 else math.inf


def build_row(line: SpectralLine, t_u_uK: float, axis: str, params: ModelParams, point: Dict[str, Any]) -> SweepRow:
    return SweepRow(
        line=line.name,
        t_u_uK=float(t_u_uK),
        u=params.u,
        d=params.d,
        axis_value=axis_value(axis, t_u_uK, line),
        purity=point["purity"],
        std_error=point["std_error"],
        schmidt_rank=_rank_from_purity(point["purity"]),
        recoil_estimate=entangle.recoil_rank_estimate(params.u),
        doppler_estimate=entangle.doppler_rank_estimate(params.u, params.d),
        regime=entangle.classify(params).label.value,
        warnings="; ".join(point["warnings"]),
    )


def compute_row(
    line: SpectralLine,
    t_u_uK: float,
    qmc_config: QmcConfig,
    *,
    axis: str = "tu_over_td",
    with_epsilon: bool = False,
    n_jobs: int = 1,
) -> SweepRow:
    params = reduce(line, t_u_uK * MICROKELVIN, with_epsilon=with_epsilon)
    point = _compute_point(params, qmc_config, None, False, n_jobs)
    return build_row(line, t_u_uK, axis, params, point)


def point_cache_payload(line: SpectralLine, t_u_uK: float, qmc_config: QmcConfig, with_epsilon: bool) -> Dict[str, Any]:
    return {
        "line": asdict(line),
        "t_u_uK": float(t_u_uK),
        "qmc": asdict(qmc_config),
        "with_epsilon": with_epsilon,
    }


def rows_to_frame(rows: List[SweepRow], columns: List[str] = CSV_COLUMNS) -> pd.DataFrame:
    return pd.DataFrame([asdict(row) for row in rows], columns=columns)


def run_sweep(
    spec: SweepSpec,
    line: SpectralLine,
    out_path: Path,
    *,
    jobs: int = 1,
    resume: bool = False,
) -> Path:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    cache_dir = cache_dir_for(out_path)
    grid = spec.grid()
    params_list = [reduce(line, t * MICROKELVIN, with_epsilon=spec.with_epsilon) for t in grid]
    cache_paths = [
        cache_dir / f"{cache_key(point_cache_payload(line, t, spec.qmc, spec.with_epsilon))}.json"
        for t in grid
    ]

    LOGGER.info(
        "Starte Sweep %s: %s Punkte, T_u %.4g…%.4g µK, Jobs=%s",
        line.name, spec.points, spec.t_u_min, spec.t_u_max, jobs,
    )
    points = Parallel(n_jobs=jobs)(
        delayed(_compute_point)(params, spec.qmc, path, resume, 1)
        for params, path in zip(params_list, cache_paths)
    )
    rows = [
        build_row(line, t, spec.axis, params, point)
        for t, params, point in zip(grid, params_list, points)
    ]
    rows_to_frame(rows).to_csv(out_path, index=False)
    LOGGER.info("Sweep gespeichert unter: %s", out_path)
    return out_path


def phase_diagram_rows(
    u_values: np.ndarray,
    d_values: np.ndarray,
    *,
    numeric: bool = False,
    qmc_config: QmcConfig | None = None,
    cache_dir: Path | None = None,
    jobs: int = 1,
    resume: bool = False,
) -> pd.DataFrame:
    cells = [ModelParams(u=float(u), d=float(d)) for d in d_values for u in u_values]
    records = []
    for params in cells:
        regime = entangle.classify(params)
        records.append({
            "u": params.u,
            "d": params.d,
            "regime": regime.label.value,
            "recoil_estimate": entangle.recoil_rank_estimate(params.u),
            "doppler_estimate": entangle.doppler_rank_estimate(params.u, params.d),
            "recoil_threshold_u": regime.recoil_threshold_u,
            "doppler_threshold_u": regime.doppler_threshold_u,
        })
    if not numeric:
        return pd.DataFrame(records, columns=PHASE_COLUMNS)

    qmc_config = qmc_config or QmcConfig()
    cache_paths = [
        cache_dir / f"{cache_key({'params': asdict(params), 'qmc': asdict(qmc_config)})}.json"
        if cache_dir is not None else None
        for params in cells
    ]
    points = Parallel(n_jobs=jobs)(
        delayed(_compute_point)(params, qmc_config, path, resume, 1)
        for params, path in zip(cells, cache_paths)
    )
    for record, point in zip(records, points):
        record["purity"] = point["purity"]
        record["std_error"] = point["std_error"]
        record["schmidt_rank"] = _rank_from_purity(point["purity"])
        record["warnings"] = "; ".join(point["warnings"])
    return pd.DataFrame(records, columns=NUMERIC_PHASE_COLUMNS)


def run_phase_diagram(
    u_range: tuple[float, float],
    d_range: tuple[float, float],
    u_points: int,
    d_points: int,
    out_path: Path,
    *,
    numeric: bool = False,
    qmc_config: QmcConfig | None = None,
    jobs: int = 1,
    resume: bool = False,
) -> Path:
    for label, (low, high), count in (("u", u_range, u_points), ("d", d_range, d_points)):
        if not 0 < low <= high or count < 1:
            raise SweepSpecError(f"Ungültiger Bereich für {label}: {low}…{high} ({count} Punkte)")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    frame = phase_diagram_rows(
        np.geomspace(u_range[0], u_range[1], u_points),
        np.geomspace(d_range[0], d_range[1], d_points),
        numeric=numeric,
        qmc_config=qmc_config,
        cache_dir=cache_dir_for(out_path),
        jobs=jobs,
        resume=resume,
    )
    frame.to_csv(out_path, index=False)
    LOGGER.info("Phasendiagramm (%s Zellen) gespeichert unter: %s", len(frame), out_path)
    return out_path


def estimate_table(line: SpectralLine, t_u_uK: float) -> pd.DataFrame:
    """Gesammelte Schwellen und Schätzer für eine Linie und T_u."""
    params = reduce(line, t_u_uK * MICROKELVIN, with_epsilon=False)
    record = {
        "line": line.name,
        "t_u_uK": float(t_u_uK),
        "T_R_uK": recoil_temperature(line) / MICROKELVIN,
        "T_D_uK": doppler_temperature(line) / MICROKELVIN,
        "T_DE_uK": entangle.doppler_threshold(line) / MICROKELVIN,
        "u": params.u,
        "d": params.d,
        "gamma_e_over_gamma": entangle.effective_linewidth_ratio(params.u, params.d),
        "K_recoil": entangle.recoil_rank_estimate(params.u),
        "K_doppler": entangle.doppler_rank_estimate(params.u, params.d),
        "regime": entangle.classify(params).label.value,
    }
    return pd.DataFrame([record])


def lines_table(catalog: List[SpectralLine]) -> pd.DataFrame:
    records = []
    for line in catalog:
        record = {
            "name": line.name,
            "transition": line.transition,
            "T_R_uK": line.t_recoil,
            "T_D_uK": line.t_doppler,
            "d": line.t_doppler / line.t_recoil,
            "T_DE_uK": entangle.doppler_threshold(line) / MICROKELVIN,
            "T_R_derived_uK": None,
            "T_D_derived_uK": None,
            "T_R_deviation": None,
            "T_D_deviation": None,
        }
        if line.has_si_fields:
            t_r = recoil_temperature(line, derive=True) / MICROKELVIN
            t_d = doppler_temperature(line, derive=True) / MICROKELVIN
            record["T_R_derived_uK"] = t_r
            record["T_D_derived_uK"] = t_d
            record["T_R_deviation"] = t_r / line.t_recoil - 1.0
            record["T_D_deviation"] = t_d / line.t_doppler - 1.0
        records.append(record)
    return pd.DataFrame(records)
