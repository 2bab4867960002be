"""JSON schemas, input parsing and output writers."""
from __future__ import annotations

import csv
import io
import json
import re
from datetime import datetime, timezone
from typing import Any, Optional

import jsonschema

from . import __version__
from .errors import InputParseError
from .report import jsonable

_NUM = {"type": "number"}
_PROB_MATRIX = {
    "type": "array", "minItems": 1,
    "items": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}},
}
_POS = {"type": "number", "exclusiveMinimum": 0}

PARALLEL_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "ParallelChannelSet",
    "type": "object",
    "required": ["channels"],
    "properties": {
        "channels": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object",
                "required": ["receivers", "eavesdropper"],
                "properties": {
                    "receivers": {"type": "array", "minItems": 1, "items": _PROB_MATRIX},
                    "eavesdropper": _PROB_MATRIX,
                    "order": {"type": "array", "items": {"anyOf": [{"type": "integer", "minimum": 0},
                                                                    {"const": "e"}]}},
                },
                "additionalProperties": False,
            },
        },
        "aux": {
            "type": "object",
            "required": ["sizes", "modes"],
            "properties": {
                "sizes": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "modes": {"type": "array", "items": {"enum": ["identity", "general"]}},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

GAUSSIAN_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "GaussianParallelSpec",
    "type": "object",
    "required": ["sigma2", "sigma2_e"],
    "properties": {
        "sigma2": {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": _POS}},
        "sigma2_e": {"type": "array", "minItems": 1, "items": _POS},
        "P": {"type": "number", "minimum": 0},
    },
    "additionalProperties": False,
}

FADING_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "FadingSpec",
    "type": "object",
    "properties": {
        "K": {"type": "integer", "minimum": 1},
        "P": {"type": "number", "minimum": 0},
        "mu": {"type": "array", "items": _POS},
        "mu_e": _POS,
        "colluders": {"type": "integer", "minimum": 1},
        "method": {"enum": ["quadrature", "monte_carlo"]},
        "trials": {"type": "integer", "minimum": 1},
        "seed": {"type": ["integer", "null"], "minimum": 0},
    },
    "additionalProperties": False,
}

WIRETAP_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "WiretapCodeSpec",
    "type": "object",
    "required": ["channels"],
    "properties": {
        "n": {"type": "integer", "minimum": 1},
        "rate": {"type": "number", "minimum": 0},
        "channels": {
            "type": "array", "minItems": 1, "maxItems": 2,
            "items": {
                "type": "object",
                "required": ["receivers", "eavesdropper", "input_law"],
                "properties": {
                    "receivers": {"type": "array", "minItems": 1, "items": _PROB_MATRIX},
                    "eavesdropper": _PROB_MATRIX,
                    "input_law": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}},
                },
                "additionalProperties": False,
            },
        },
        "bin_rates": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "bin_sizes": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "eps_f": _NUM,
        "seed": {"type": "integer", "minimum": 0},
        "sampling": {"enum": ["iid", "typical"]},
        "epsilon": _POS,
    },
    "additionalProperties": False,
}

REPORT_SCHEMA = {
    "type": "object",
    "required": ["value", "units", "bound_kind", "argmax", "solver_diag", "metadata"],
    "properties": {
        "value": {"type": "number", "minimum": 0},
        "units": {"enum": ["nats", "bits"]},
        "bound_kind": {"enum": ["upper", "lower", "exact"]},
        "argmax": {"type": "object"},
        "solver_diag": {"type": "object"},
        "metadata": {"type": "object"},
    },
    "additionalProperties": False,
}

OUTPUT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "RunOutput",
    "type": "object",
    "required": ["tool", "version", "config", "results"],
    "properties": {
        "tool": {"const": "secbroadcast"},
        "version": {"type": "string"},
        "config": {"type": "object"},
        "timestamp": {"type": "string"},
        "results": {"type": "object", "additionalProperties": REPORT_SCHEMA},
        "extra": {"type": "object"},
    },
    "additionalProperties": False,
}


def _locate(text: str, path) -> Optional[int]:
    """Best-effort line number of the last object key on ``path``."""
    keys = [p for p in path if isinstance(p, str)]
    if not keys:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(keys[-1]), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def parse_json(text: str, schema: dict, source: str = "<input>") -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputParseError(f"{source}: invalid JSON: {exc.msg}", line=exc.lineno) from None
    errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        field = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise InputParseError(f"{source}: field {field}: {err.message}", field=field,
                              line=_locate(text, list(err.absolute_path)))
    return doc


def load_json(path: str, schema: dict) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputParseError(f"cannot read {path}: {exc.strerror}") from None
    return parse_json(text, schema, path)


def timestamp() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


def render_json(config: dict, results: dict, units: str, extra: Optional[dict] = None,
                with_timestamp: bool = True) -> str:
    doc: dict[str, Any] = {"tool": "secbroadcast", "version": __version__, "config": jsonable(config)}
    if with_timestamp:
        doc["timestamp"] = timestamp()
    doc["results"] = {k: r.to_dict(units) for k, r in results.items()}
    if extra:
        doc["extra"] = jsonable(extra)
    jsonschema.validate(doc, OUTPUT_SCHEMA)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return str(x)
    try:
        return f"{float(x):.10g}"
    except (TypeError, ValueError):
        return str(x)


def render_csv(config: dict, header: list, rows: list, with_timestamp: bool = True) -> str:
    buf = io.StringIO()
    buf.write(f"# tool=secbroadcast version={__version__}\n")
    buf.write("# config=" + json.dumps(jsonable(config), sort_keys=True) + "\n")
    if with_timestamp:
        buf.write(f"# timestamp={timestamp()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def read_csv(text: str) -> tuple:
    """Parse CSV written by ``render_csv``; returns (header, rows of str)."""
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]
