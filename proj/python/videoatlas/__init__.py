"""Python access to the videoatlas core."""

import json

from ._core import (
    ConfigError,
    Error,
    MediaError,
    TransportError,
    __version__,
    captioner_tokens,
    cell_interval,
    depth_resolution,
    max_depth,
    parse_srt,
    sub_second_depth,
    template_text,
)
from ._core import run_config as _run_config

__all__ = [
    "ConfigError",
    "Error",
    "MediaError",
    "TransportError",
    "__version__",
    "captioner_tokens",
    "cell_interval",
    "depth_resolution",
    "max_depth",
    "parse_srt",
    "run",
    "sub_second_depth",
    "template_text",
]


def run(config, base_dir=""):
    """Run one episode. `config` is a run-config dict; returns the report dict."""
    return json.loads(_run_config(json.dumps(config), str(base_dir)))
