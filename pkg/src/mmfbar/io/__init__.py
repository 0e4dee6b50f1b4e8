"""File formats: Touchstone, JSON configuration and CSV/JSON results."""
from .config import (
    ConfigError,
    dumps_fit_config,
    dumps_mbvd_params,
    dumps_stack_config,
    load_fit_config,
    load_mbvd_params,
    load_stack_config,
)
from .export import bode_to_csv, modes_to_json, spectrum_from_csv, spectrum_to_csv, sweep_to_csv
from .touchstone import (
    OptionLine,
    TouchstoneDocument,
    TouchstoneError,
    parse_touchstone,
    write_touchstone,
)

__all__ = [
    "ConfigError",
    "OptionLine",
    "TouchstoneDocument",
    "TouchstoneError",
    "bode_to_csv",
    "dumps_fit_config",
    "dumps_mbvd_params",
    "dumps_stack_config",
    "load_fit_config",
    "load_mbvd_params",
    "load_stack_config",
    "modes_to_json",
    "parse_touchstone",
    "spectrum_from_csv",
    "spectrum_to_csv",
    "sweep_to_csv",
    "write_touchstone",
]
