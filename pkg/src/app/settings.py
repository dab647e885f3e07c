from __future__ import annotations
from pathlib import Path
from typing import Any, Mapping
import json

from app.errors import ConfigError

# --- Mitgelieferte Defaults (liegen im Paket, nicht im Code) ---
_DEFAULTS_FILE = Path(__file__).resolve().parent / "resources" / "defaults.json"

_TRUE = {"1", "true", "yes", "on", "y", "t"}
_FALSE = {"0", "false", "no", "off", "n", "f"}


def _read_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text("utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"Konfigurationsdatei nicht gefunden: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: kein gültiges JSON ({e})") from None


def load_defaults() -> dict:
    """Frische Kopie der Paket-Defaults."""
    return _read_json(_DEFAULTS_FILE)


# ---------------------- Bool-Helper ----------------------

def _parse_bool(value: Any, key: str) -> bool:
    """Schalter aus JSON oder Flags: true/false, 0/1 und die üblichen Schreibweisen."""
    if isinstance(value, bool):
        return value
    if isinstance(value, int) and value in (0, 1):
        return bool(value)
    if isinstance(value, str):
        val = value.strip().lower()
        if val in _TRUE:
            return True
        if val in _FALSE:
            return False
    raise ConfigError(f"{key}: Wahrheitswert erwartet, erhalten {value!r}")


# ---------------------- Merge ----------------------

def _coerce_like(template: Any, value: Any, key: str) -> Any:
    """Bringt einen Override auf den Typ des Default-Werts."""
    if template is None or value is None:
        return value
    if isinstance(template, bool):
        return _parse_bool(value, key)
    if isinstance(template, int) and not isinstance(template, bool):
        try:
            return int(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: Ganzzahl erwartet, erhalten {value!r}") from None
    if isinstance(template, float):
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: Zahl erwartet, erhalten {value!r}") from None
    if isinstance(template, list):
        if not isinstance(value, list):
            raise ConfigError(f"{key}: Liste erwartet, erhalten {value!r}")
        if template:
            return [_coerce_like(template[0], v, key) for v in value]
        return list(value)
    return value


def _merge(base: dict, update: Mapping, prefix: str = "") -> dict:
    for key, val in update.items():
        path = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"Unbekannter Konfigurationsschlüssel: {path}")
        if isinstance(base[key], dict):
            if not isinstance(val, Mapping):
                raise ConfigError(f"{path}: Abschnitt erwartet, erhalten {val!r}")
            _merge(base[key], val, prefix=f"{path}.")
        else:
            base[key] = _coerce_like(base[key], val, path)
    return base


def load_config(path: Path | None = None, overrides: Mapping | None = None) -> dict:
    """
    Defaults <- JSON-Datei <- Flag-Overrides.
    Unbekannte Schlüssel werden abgelehnt, damit Tippfehler nicht still verpuffen.
    """
    cfg = load_defaults()
    if path is not None:
        user = _read_json(Path(path))
        user.pop("schema_version", None)
        _merge(cfg, user)
    if overrides:
        _merge(cfg, overrides)
    _validate(cfg)
    return cfg


def _validate(cfg: dict) -> None:
    for name, section in cfg.items():
        if not isinstance(section, dict):
            continue
        trials = section.get("trials")
        if trials is not None and trials < 1:
            raise ConfigError(f"{name}.trials muss >= 1 sein")
        for key, val in section.items():
            if isinstance(val, list) and not val:
                raise ConfigError(f"{name}.{key}: Sweep-Liste darf nicht leer sein")
    if cfg["run"]["format"] not in ("json", "csv"):
        raise ConfigError("run.format muss 'json' oder 'csv' sein")
    if cfg["run"]["threads"] < 1:
        raise ConfigError("run.threads muss >= 1 sein")


# ---------------------- Simulation-Abschnitt ----------------------

_active_simulation: dict | None = None


def simulation_settings() -> dict:
    """Aktiver `simulation`-Abschnitt; Services lesen Schwellwerte nur hierüber."""
    global _active_simulation
    if _active_simulation is None:
        _active_simulation = load_defaults()["simulation"]
    return _active_simulation


def apply_simulation_settings(section: Mapping) -> None:
    """Übernimmt einen (bereits gemergten) `simulation`-Abschnitt für diesen Prozess."""
    global _active_simulation
    merged = _merge(load_defaults()["simulation"], section, prefix="simulation.")
    _active_simulation = merged


def setting(key: str) -> Any:
    try:
        return simulation_settings()[key]
    except KeyError:
        raise ConfigError(f"Unbekannte Simulationseinstellung: {key}") from None
