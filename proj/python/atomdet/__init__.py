"""Python front end for the atomdet C++ core.

Configs are plain dicts with the same keys as the JSON config files; missing
keys keep the preset's values.
"""

import json

from . import _core
from ._core import (
    InvalidArgument,
    ModelError,
    error_rate_floor,
    fisher_weight,
    fn_rate_fit,
    pixel_pdf,
    power_law_fit,
    psf,
)

__all__ = [
    "InvalidArgument",
    "ModelError",
    "benchmark",
    "bound_sweep",
    "detect",
    "error_rate_floor",
    "fisher_weight",
    "fn_rate_fit",
    "pixel_pdf",
    "power_law_fit",
    "preset_config",
    "psf",
    "simulate",
]


def _dump(config):
    return "" if config is None else json.dumps(config)


def preset_config(preset="desk"):
    return json.loads(_core.preset_config(preset))


def bound_sweep(gammas, scenarios=(), config=None, preset="desk"):
    return _core.bound_sweep(list(gammas), list(scenarios), _dump(config), preset)


def simulate(config=None, preset="desk"):
    """Returns (frames [N, H, W] uint16, truth [N, sites] bool, exposures list)."""
    return _core.simulate(_dump(config), preset)


def detect(frame, exposure, algo, params="", config=None, preset="desk"):
    if isinstance(params, dict):
        params = ",".join(f"{k}={v}" for k, v in params.items())
    return _core.detect(frame, exposure, algo, params, _dump(config), preset)


def benchmark(config=None, preset="desk", out="", detectors=()):
    """Returns (metrics rows, bound rows, {detector: fitted e-/s slope})."""
    return _core.benchmark(_dump(config), preset, str(out), list(detectors))
