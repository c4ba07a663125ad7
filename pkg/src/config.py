import logging
import os
from dotenv import load_dotenv
from pathlib import Path

# --- .env für Basisdaten (Katalog, Log-Level etc.) ---
# Runtime-Env soll Vorrang haben (z.B. EMISSION_JOBS=8 auf dem Rechenknoten).
load_dotenv(override=False)

LOGGER = logging.getLogger("config")

# --- Zusätzliche Optionen aus configuration.txt ---
CONFIG_PATH = Path(__file__).parent / "configuration.txt"
BUILTIN_CATALOG_PATH = Path(__file__).parent / "spectral_lines.json"

# Standardwerte
CONFIG = {
    "samples": "65536",          # Punkte pro Replikat
    "replicates": "8",
    "seed": "7",
    "jobs": "1",                 # parallele Sweep-Punkte
    "export_dir": "exports",
    "sweep_points": "25",
    "chunk_size": "32768",       # Punkte pro numpy-Block
    "detuning_proposal": "balanced",
}


def parse_config_line(line: str):
    """Hilfsfunktion: 'key=value' Zeilen parsen"""
    if "=" not in line:
        return None, None
    key, value = line.strip().split("=", 1)
    return key.strip().lower(), value.strip()


def _parse_int_setting(raw_value: str | None, fallback: int) -> int:
    """Int-Parser, der deutsche Tausender-/Dezimaltrennzeichen toleriert."""
    if raw_value is None:
        return fallback
    normalized = raw_value.strip().replace(".", "").replace(",", "").replace(" ", "")
    if not normalized or normalized in {"+", "-"}:
        return fallback
    try:
        return int(normalized)
    except ValueError:
        LOGGER.warning("Kann %r nicht als Integer lesen – verwende %s.", raw_value, fallback)
        return fallback


def load_configuration(path: Path = CONFIG_PATH) -> dict[str, str]:
    values = dict(CONFIG)
    if not path.exists():
        return values
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, value = parse_config_line(line)
            if key and value:
                values[key] = value
    return values


# --- configuration.txt einlesen ---
CONFIG = load_configuration()

# --- Globale Variablen ---
SAMPLES = _parse_int_setting(CONFIG.get("samples"), 65536)
REPLICATES = _parse_int_setting(CONFIG.get("replicates"), 8)
SEED = _parse_int_setting(CONFIG.get("seed"), 7)
JOBS = _parse_int_setting(os.getenv("EMISSION_JOBS", CONFIG.get("jobs")), 1)
SWEEP_POINTS = _parse_int_setting(CONFIG.get("sweep_points"), 25)
CHUNK_SIZE = _parse_int_setting(CONFIG.get("chunk_size"), 32768)
DETUNING_PROPOSAL = CONFIG.get("detuning_proposal", "balanced").strip().lower()
EXPORT_DIR = os.getenv("EMISSION_EXPORT_DIR", CONFIG.get("export_dir", "exports"))
LOG_LEVEL = os.getenv("EMISSION_LOG_LEVEL", "INFO").upper()

# Leer = eingebauter Katalog (Tabelle der sechs Spektrallinien)
CATALOG_PATH = os.getenv("EMISSION_CATALOG_PATH", "").strip() or None


def describe() -> str:
    return (
        f"Aktive Konfiguration: "
        f"Samples={SAMPLES}, Replikate={REPLICATES}, Seed={SEED}, Jobs={JOBS}, "
        f"Chunk={CHUNK_SIZE}, Proposal={DETUNING_PROPOSAL}, Export={EXPORT_DIR}, "
        f"Katalog={CATALOG_PATH or BUILTIN_CATALOG_PATH.name}"
    )
