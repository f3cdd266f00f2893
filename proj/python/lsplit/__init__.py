# SPDX-FileCopyrightText: 2026 The lsplit Authors
# SPDX-License-Identifier: Apache-2.0
"""Triadic split computing for generative models.

Thin wrappers over the compiled ``_lsplit`` module. ``generate`` and
``benchmark`` run against an in-process cloud node.
"""

import base64
import csv
import io
import json

from ._lsplit import benchmark_csv as _benchmark_csv
from ._lsplit import generate_json as _generate_json
from ._lsplit import (
    LsplitError,
    analytic_llm_traffic,
    decode_frame,
    deliver,
    dequantize,
    detect_plaintext_leak,
    encode_bytes_frame,
    encode_tensor_frame,
    float_to_half,
    frame_values,
    half_to_float,
    plan_partition,
    psnr,
    quantize,
    report_columns,
    ssim,
)

__all__ = [
    "LsplitError",
    "analytic_llm_traffic",
    "benchmark",
    "decode_frame",
    "deliver",
    "dequantize",
    "detect_plaintext_leak",
    "encode_bytes_frame",
    "encode_tensor_frame",
    "float_to_half",
    "frame_values",
    "generate",
    "half_to_float",
    "plan_partition",
    "psnr",
    "quantize",
    "report_columns",
    "ssim",
]


def _settings_text(settings):
    if settings is None:
        return ""
    if isinstance(settings, str):
        return settings
    return "\n".join(f"{k} = {v}" for k, v in settings.items())


def generate(settings=None, **request):
    """Run one generation. Keyword arguments follow the POST /generate body.

    ``settings`` is either the text of a settings file or a dict of its keys.
    The result is the decoded JSON outcome; for LDM runs ``image_ppm`` holds
    the PPM bytes.
    """
    out = json.loads(_generate_json(json.dumps(request), _settings_text(settings)))
    image = out.get("image")
    if image:
        out["image_ppm"] = base64.b64decode(image["ppm_base64"])
    return out


def benchmark(settings=None):
    """Benchmark rows as a list of dicts keyed by report_columns()."""
    text = _benchmark_csv(_settings_text(settings))
    return list(csv.DictReader(io.StringIO(text)))
