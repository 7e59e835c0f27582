# src/pipeline/data_validation.py

"""
Structural validation of scenario documents.

A scenario is a JSON document. This module checks it against the JSON
schema below and reports the first violation with its dotted field path
and, when it can be located, the line of the offending key in the source
text. Value-level invariants (positive capacitances, f_carrier > f_out and
so on) are checked afterwards by the pydantic scenario models and the core
records.
"""

import json
import re
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

from jsonschema import Draft7Validator
from jsonschema.exceptions import ValidationError, best_match

from src.utils.exceptions import ArtifactIOError, ScenarioValidationError
from src.utils.logging import get_logger

logger = get_logger(__name__)

SCHEMA_VERSION = 1

_NUMBER_OR_LIST = {
    "oneOf": [
        {"type": "number"},
        {"type": "array", "items": {"type": "number"}, "minItems": 1},
    ]
}

_DEVICES = {
    "type": "object",
    "properties": {
        "r_ds_on": {"type": "number"},
        "v_d": {"type": "number"},
        "kind": {"enum": ["fet", "igbt"]},
        "v_ce_sat": {"type": "number"},
    },
    "required": ["r_ds_on", "v_d"],
    "additionalProperties": False,
}

_LINK = {
    "type": "object",
    "properties": {
        "r_loop": {"type": "number"},
        "l_loop": {"type": "number"},
        "n_loop_diodes": {"type": "integer"},
        "v_d_loop": {"type": ["number", "null"]},
    },
    "required": ["r_loop", "l_loop"],
    "additionalProperties": False,
}

_DEVICE_PATH = {
    "type": "object",
    "properties": {
        "mode": {
            "enum": [
                "SeriesMinus",
                "SeriesPlus",
                "ParallelMinus",
                "ParallelPlus",
                "BypassMinus",
                "BypassPlus",
            ]
        },
        "favorable": {"type": "boolean"},
        "kind": {"enum": ["envelope", "devices"]},
        "n_transistors": {"type": "integer"},
        "n_diodes": {"type": "integer"},
    },
    "required": ["mode", "favorable", "kind"],
    "additionalProperties": False,
}

SCENARIO_SCHEMA: Dict[str, Any] = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string", "minLength": 1},
        "converter": {
            "type": "object",
            "properties": {
                "n_modules": {"type": "integer"},
                "capacitance": _NUMBER_OR_LIST,
                "v_init": _NUMBER_OR_LIST,
                "devices": _DEVICES,
                "link": _LINK,
                "links": {"type": "array", "items": _LINK},
                "supply": {
                    "type": "object",
                    "properties": {
                        "index": {"type": "integer"},
                        "voltage": {"type": "number"},
                        "mode": {"enum": ["clamp", "resistive", "none"]},
                        "r_src": {"type": ["number", "null"]},
                    },
                    "required": ["index", "voltage"],
                    "additionalProperties": False,
                },
                "r_load": {"type": ["number", "null"]},
                "f_out": {"type": "number"},
                "modulation_index": {"type": "number"},
                "f_carrier": {"type": "number"},
                "device_paths": {"type": "array", "items": _DEVICE_PATH},
            },
            "required": [
                "n_modules",
                "capacitance",
                "v_init",
                "devices",
                "supply",
                "f_out",
                "modulation_index",
                "f_carrier",
            ],
            "additionalProperties": False,
        },
        "modulator": {
            "type": "object",
            "properties": {
                "carrier_phases": {"type": "array", "items": {"type": "number"}},
                "latch_scope": {"enum": ["link", "string"]},
            },
            "additionalProperties": False,
        },
        "simulation": {
            "type": "object",
            "properties": {
                "periods": {"type": "integer"},
                "oversample": {"type": ["integer", "null"]},
                "load_coupled": {"type": "boolean"},
                "e_sw": {"type": "number"},
                "transitions_per_change": {"type": "integer"},
                "sample_every": {"type": "integer"},
                "settle_tol": {"type": "number"},
                "steady_periods": {"type": "integer"},
                "max_voltage": {"type": ["number", "null"]},
                "substeps_per_tchar": {"type": "integer"},
            },
            "additionalProperties": False,
        },
        "sweep": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["inductance", "distance", "switching_rate", "parameter"]},
                "parameter": {"type": "string"},
                "values": {"type": "array", "items": {"type": "number"}},
                "start": {"type": "number"},
                "stop": {"type": "number"},
                "points": {"type": "integer"},
                "scale": {"enum": ["linear", "log"]},
                "oracle": {"type": "boolean"},
                "loop": {
                    "type": "object",
                    "properties": {
                        "c": {"type": "number"},
                        "r": {"type": "number"},
                        "v_d": {"type": "number"},
                        "delta_v0": {"type": "number"},
                        "v2_0": {"type": "number"},
                    },
                    "required": ["c", "r", "v_d", "delta_v0"],
                    "additionalProperties": False,
                },
                "calibration": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "properties": {
                            "f_carrier": {"type": "number"},
                            "efficiency": {"type": "number"},
                        },
                        "required": ["f_carrier", "efficiency"],
                        "additionalProperties": False,
                    },
                },
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        "outputs": {
            "type": "array",
            "items": {"enum": ["waveforms", "profile", "spectrum", "losses", "modes", "periods"]},
            "uniqueItems": True,
        },
    },
    "required": ["schema_version", "name"],
    "additionalProperties": False,
}

_VALIDATOR = Draft7Validator(SCENARIO_SCHEMA)


def dotted_path(path: Sequence[Union[str, int]]) -> str:
    """Renders ("converter", "links", 2, "r_loop") as converter.links[2].r_loop."""
    out = ""
    for part in path:
        if isinstance(part, int):
            out += f"[{part}]"
        else:
            out += f".{part}" if out else str(part)
    return out


def locate_line(text: str, path: Sequence[Union[str, int]]) -> Optional[int]:
    """
    Best-effort line number of the key at ``path`` in the JSON ``text``.

    Keys are searched in order, each one after the previous match, so nested
    keys resolve inside their parent. Array indices are not resolved.
    """
    if not text:
        return None
    position = 0
    found = False
    for part in path:
        if isinstance(part, int):
            continue
        match = re.compile(r'"%s"\s*:' % re.escape(part)).search(text, position)
        if match is None:
            break
        position = match.start()
        found = True
    if not found:
        return None
    return text.count("\n", 0, position) + 1


def _to_error(error: ValidationError, text: str) -> ScenarioValidationError:
    path = list(error.absolute_path)
    if error.validator == "required" and isinstance(error.instance, dict):
        missing = re.findall(r"'([^']+)' is a required property", error.message)
        field = dotted_path(path + missing[:1])
        return ScenarioValidationError(error.message, field=field, line=locate_line(text, path) if path else None)
    if error.validator == "additionalProperties":
        extra = re.findall(r"'([^']+)'", error.message)
        return ScenarioValidationError(
            error.message, field=dotted_path(path + extra[:1]), line=locate_line(text, path + extra[:1])
        )
    return ScenarioValidationError(error.message, field=dotted_path(path), line=locate_line(text, path))


def validate_scenario_document(document: Any, text: str = "") -> None:
    """
    Validates a parsed scenario document against SCENARIO_SCHEMA.

    Raises:
        ScenarioValidationError: For the most relevant schema violation.
    """
    error = best_match(_VALIDATOR.iter_errors(document))
    if error is not None:
        exc = _to_error(error, text)
        logger.error("scenario_schema_violation", field=exc.field, line=exc.line, detail=error.message)
        raise exc


def parse_scenario_text(text: str) -> Dict[str, Any]:
    """Parses and schema-checks scenario text."""
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioValidationError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
    validate_scenario_document(document, text)
    return document


def load_scenario_document(path: Union[str, Path]) -> Tuple[Dict[str, Any], str]:
    """
    Reads, parses and schema-checks a scenario file.

    Returns:
        Tuple[Dict[str, Any], str]: The document and its source text.

    Raises:
        ArtifactIOError: If the file cannot be read.
        ScenarioValidationError: If the document is not valid.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ArtifactIOError(f"cannot read scenario {path}: {exc}") from exc
    document = parse_scenario_text(text)
    logger.info("scenario_loaded", path=str(path), name=document.get("name"))
    return document, text
