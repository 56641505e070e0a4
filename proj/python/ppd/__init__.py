"""Predictive display for vehicle teleoperation: depth codec, delay model,
motion forecast, depth-image projection and the closed-loop simulator."""

import json as _json

from ._core import (
    DecodeError,
    GevParams,
    InvalidInput,
    bandwidth,
    decode_depth,
    decode_map,
    encode_depth,
    encode_map,
    fit_gev,
    gev_cdf,
    gev_pdf,
    gev_quantile,
    gev_sample,
    hold_and_apply,
    integrate,
    project_frame,
    quantization_step,
    render_track,
    tracks,
    watchdog_trips,
)

__version__ = "0.1.0"


def run_experiment(config_text: str = "", **overrides) -> dict:
    """Runs a closed-loop experiment and returns the report as a dict.

    `config_text` uses the key = value format of configs/*.cfg; keyword
    overrides are appended as extra lines, e.g. run_experiment(track="r5_120").
    """
    lines = [config_text] + [f"{k} = {v}" for k, v in overrides.items()]
    return _json.loads(_core.run_experiment_json("\n".join(lines)))


from . import _core  # noqa: E402
