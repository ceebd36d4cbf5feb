# SPDX-License-Identifier: MIT OR Apache-2.0
"""Query-key score probes for logical reasoning.

Thin layer over the compiled ``_qkprobe`` extension; functions that return
JSON from the extension are decoded here.
"""

import json

from ._qkprobe import (  # noqa: F401
    Captures,
    Dataset,
    Model,
    __version__,
    apply_rule,
    decide,
    decide_logits,
    emit_report,
    entails,
    parse_formula,
    qk_score,
    report_markdown,
    rule_tags,
)
from . import _qkprobe


def calibrate(captures, dataset, variant="pre", pool_size=10):
    """Calibration report as a dict; ``best_head`` is ``{"layer", "head"}``."""
    return json.loads(_qkprobe.calibrate(captures, dataset, variant, pool_size))


def run_experiment(config):
    """Runs a config (dict or JSON text) and returns the report dict."""
    text = config if isinstance(config, str) else json.dumps(config)
    return json.loads(_qkprobe.run_experiment(text))


def run_in_memory(model, datasets, heads=None, template="default", variant="pre"):
    return json.loads(_qkprobe.run_in_memory(model, list(datasets), heads, template, variant))


def samples(dataset, part="all"):
    return json.loads(dataset.samples_json(part))
