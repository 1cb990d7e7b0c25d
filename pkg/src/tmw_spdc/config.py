"""Run configurations: JSON schema, figure presets and object builders.

Lengths in a configuration are in meters; the builders convert them to the
internal units (um for widths, gaps and wavelengths, mm for device lengths).
"""

from __future__ import annotations

import copy
import hashlib
import json
import math

import jsonschema

from .errors import ConfigError
from .material import DiffusionGeometry, MaterialParams, resolve_polarization

POL_TOKENS = ["TE", "TM", "o", "e", "ordinary", "extraordinary"]

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_POS_OR_NULL = {"anyOf": [_POS, {"type": "null"}]}
_POL = {"type": "string", "enum": POL_TOKENS}
_MODE = {"type": "integer", "enum": [0, 1]}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_PHOTON = _obj({"wavelength_m": _POS, "pol": _POL}, ["wavelength_m", "pol"])

SCHEMA = _obj({
    "preset": {"type": "string"},
    "material": _obj({
        "temperature_C": _NUM,
        "film_thickness_m": _POS,
        "diffusion_length_m": _POS,
        "xi_wavelength_m": _POS_OR_NULL,
        "d31_over_d33": _POS,
    }),
    "source": _obj({
        "pump_wavelength_m": _POS,
        "pump_mode": _MODE,
        "pump_pol": _POL,
        "signal_wavelength_m": _POS_OR_NULL,
        "width_m": _POS,
        "length_m": _POS,
        "order": {"type": "integer", "minimum": 1},
        "processes": {"type": "array", "minItems": 1, "maxItems": 2,
                      "items": _obj({"signal_pol": _POL, "idler_pol": _POL},
                                    ["signal_pol", "idler_pol"])},
        "poling": _obj({
            "kind": {"enum": ["design", "uniform", "linear-chirp", "design-chirp"]},
            "period_m": _POS,
            "period_start_m": _POS,
            "period_end_m": _POS,
            "margin_m": {"type": "number", "minimum": 0},
        }, ["kind"]),
        "quoted": _obj({"period_m": _POS, "period_start_m": _POS, "period_end_m": _POS}),
    }),
    "spectrum": _obj({
        "points": {"type": "integer", "minimum": 65},
        "half_span_rad_per_fs": _POS_OR_NULL,
    }),
    "modes": _obj({
        "width_start_m": _POS,
        "width_stop_m": _POS,
        "width_step_m": _POS,
        "curves": {"type": "array", "minItems": 1, "items": _PHOTON},
        "annotate_widths_m": {"type": "array", "items": _POS},
    }),
    "couplers": _obj({
        "w2_m": _POS,
        "L2_m": {"type": "number", "minimum": 0},
        "L3_m": {"type": "number", "minimum": 0},
        "b1_m": _POS,
        "b2_m": _POS,
        "Lt_m": {"type": "number", "minimum": 0},
        "sbend_length_m": _POS,
        "sbend_offset_m": {"type": "number", "minimum": 0},
        "points": {"type": "integer", "minimum": 2},
    }),
    "grating": _obj({
        "model": {"enum": ["ideal-splitter", "holograms"]},
        "delta_n": _POS,
        "targets": {"type": "array", "items": _obj({"pol": _POL, "mode": _MODE}, ["pol", "mode"])},
        "quoted_periods_m": {"type": "array", "items": _POS},
        "points": {"type": "integer", "minimum": 16},
        "span_m": _POS,
    }),
    "hom": _obj({
        "filters": {"anyOf": [
            {"type": "null"},
            {"type": "array", "minItems": 2, "maxItems": 2,
             "items": _obj({"center_m": _POS, "fwhm_m": _POS}, ["center_m", "fwhm_m"])},
        ]},
        "points": {"type": "integer", "minimum": 3},
        "span_fs": _POS_OR_NULL,
        "arms": {"anyOf": [
            {"type": "null"},
            _obj({"arm_m": {"type": "number", "minimum": 0},
                  "even_m": {"type": "number", "minimum": 0},
                  "odd_m": {"type": "number", "minimum": 0}}, ["even_m"]),
        ]},
    }),
    "circuit": _obj({
        "kind": {"enum": ["I", "II", "III"]},
        "ideal": {"type": "boolean"},
    }),
})

DEFAULTS = {
    "material": {
        "temperature_C": 80.0,
        "film_thickness_m": 1e-7,
        "diffusion_length_m": 3e-6,
        "xi_wavelength_m": 8.12e-7,
        "d31_over_d33": 0.16,
    },
    "spectrum": {"points": 4097, "half_span_rad_per_fs": None},
    "modes": {"width_start_m": 2e-6, "width_stop_m": 6e-6, "width_step_m": 1e-7,
              "annotate_widths_m": []},
    "couplers": {"Lt_m": 1.5e-3, "sbend_length_m": 1e-2, "sbend_offset_m": 1.27e-4, "points": 401},
    "grating": {"model": "ideal-splitter", "delta_n": 5e-4, "targets": [], "points": 4001,
                "span_m": 2e-9},
    "hom": {"filters": None, "points": 2001, "span_fs": None, "arms": None},
}

# Figure presets. Values are the caption parameters; "quoted" blocks are
# reported next to computed designs and never used as inputs.
_PRESET_JSON = {
    "fig2": """{
  "source": {"pump_wavelength_m": 4.06e-7, "pump_mode": 1, "pump_pol": "TM",
             "signal_wavelength_m": null, "width_m": 4.0e-6, "length_m": 2.0e-2, "order": 1,
             "processes": [{"signal_pol": "TM", "idler_pol": "TM"}],
             "poling": {"kind": "design"}, "quoted": {"period_m": 2.644e-6}},
  "modes": {"curves": [{"wavelength_m": 8.12e-7, "pol": "TM"}],
            "annotate_widths_m": [4.0e-6, 2.2e-6]},
  "couplers": {"w2_m": 2.2e-6, "L2_m": 8.5e-4, "L3_m": 2.1e-2, "b1_m": 5.0e-6, "b2_m": 5.0e-6},
  "hom": {"filters": [{"center_m": 8.12e-7, "fwhm_m": 1.0e-8},
                      {"center_m": 8.12e-7, "fwhm_m": 1.0e-8}]},
  "circuit": {"kind": "I", "ideal": false}
}""",
    "fig4": """{
  "source": {"pump_wavelength_m": 4.06e-7, "pump_mode": 1, "pump_pol": "TM",
             "signal_wavelength_m": 7.8e-7, "width_m": 4.2e-6, "length_m": 2.0e-3, "order": 1,
             "processes": [{"signal_pol": "TM", "idler_pol": "TM"}],
             "poling": {"kind": "design"}, "quoted": {"period_m": 2.588e-6}},
  "modes": {"curves": [{"wavelength_m": 7.8e-7, "pol": "TM"},
                       {"wavelength_m": 8.467e-7, "pol": "TM"}],
            "annotate_widths_m": [4.2e-6, 2.4e-6]},
  "couplers": {"w2_m": 2.4e-6, "L2_m": 1.8e-4, "L3_m": 1.1e-2, "b1_m": 4.0e-6, "b2_m": 4.0e-6},
  "hom": {"filters": [{"center_m": 7.8e-7, "fwhm_m": 1.0e-8},
                      {"center_m": 8.467e-7, "fwhm_m": 1.0e-8}]},
  "circuit": {"kind": "I", "ideal": false}
}""",
    "fig5": """{
  "source": {"pump_wavelength_m": 4.06e-7, "pump_mode": 1, "pump_pol": "TE",
             "signal_wavelength_m": 7.8e-7, "width_m": 4.4e-6, "length_m": 1.0e-3, "order": 1,
             "processes": [{"signal_pol": "TE", "idler_pol": "TM"}],
             "poling": {"kind": "design"}, "quoted": {"period_m": 1.869e-6}},
  "modes": {"curves": [{"wavelength_m": 7.8e-7, "pol": "TE"},
                       {"wavelength_m": 8.467e-7, "pol": "TM"}],
            "annotate_widths_m": [4.4e-6, 2.4e-6]},
  "couplers": {"w2_m": 2.4e-6, "L2_m": 1.95e-3, "L3_m": 1.1e-2, "b1_m": 4.0e-6, "b2_m": 4.0e-6},
  "hom": {"filters": [{"center_m": 7.8e-7, "fwhm_m": 1.0e-8},
                      {"center_m": 8.467e-7, "fwhm_m": 1.0e-8}]},
  "circuit": {"kind": "I", "ideal": false}
}""",
    "fig7": """{
  "source": {"pump_wavelength_m": 4.06e-7, "pump_mode": 1, "pump_pol": "TM",
             "signal_wavelength_m": 7.8e-7, "width_m": 4.2e-6, "length_m": 2.0e-3, "order": 1,
             "processes": [{"signal_pol": "TM", "idler_pol": "TM"}],
             "poling": {"kind": "design"}, "quoted": {"period_m": 2.588e-6}},
  "grating": {"targets": [{"pol": "TM", "mode": 0}, {"pol": "TM", "mode": 1}],
              "quoted_periods_m": [8.38e-8, 8.37e-8]},
  "couplers": {"L2_m": 4.1e-3, "L3_m": 8.25e-3, "b1_m": 4.0e-6, "b2_m": 4.0e-6},
  "circuit": {"kind": "II", "ideal": false}
}""",
    "fig8": """{
  "source": {"pump_wavelength_m": 4.06e-7, "pump_mode": 1, "pump_pol": "TE",
             "signal_wavelength_m": 7.8e-7, "width_m": 4.4e-6, "length_m": 2.0e-2, "order": 1,
             "processes": [{"signal_pol": "TE", "idler_pol": "TM"},
                           {"signal_pol": "TM", "idler_pol": "TE"}],
             "poling": {"kind": "design-chirp", "margin_m": 5.0e-9},
             "quoted": {"period_start_m": 1.84e-6, "period_end_m": 1.87e-6}},
  "grating": {"targets": [{"pol": "TM", "mode": 0}, {"pol": "TM", "mode": 1},
                          {"pol": "TE", "mode": 0}, {"pol": "TE", "mode": 1}],
              "quoted_periods_m": [8.37e-8, 8.38e-8, 8.08e-8, 8.09e-8]},
  "couplers": {"L2_m": 4.6e-3, "L3_m": 3.8e-3, "b1_m": 4.0e-6, "b2_m": 3.5e-6},
  "circuit": {"kind": "II", "ideal": false}
}""",
    "fig9": """{
  "source": {"pump_wavelength_m": 4.06e-7, "pump_mode": 1, "pump_pol": "TE",
             "signal_wavelength_m": 7.8e-7, "width_m": 4.4e-6, "length_m": 2.0e-3, "order": 1,
             "processes": [{"signal_pol": "TM", "idler_pol": "TE"}],
             "poling": {"kind": "design"}},
  "couplers": {"w2_m": 2.4e-6, "L2_m": 1.95e-3, "L3_m": 1.1e-2, "b1_m": 4.0e-6, "b2_m": 4.0e-6},
  "circuit": {"kind": "III", "ideal": true}
}""",
}

PRESETS = tuple(_PRESET_JSON)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid configuration at {where}: {exc.message}") from None


def preset(name: str) -> dict:
    if name not in _PRESET_JSON:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    cfg = json.loads(_PRESET_JSON[name])
    cfg["preset"] = name
    return cfg


def resolve(preset_name: str | None = None, user: dict | None = None) -> dict:
    """Defaults, then the preset, then the user fragment; validated before and after merging."""
    if user is not None:
        if not isinstance(user, dict):
            raise ConfigError("configuration must be a JSON object")
        validate(user)
    cfg = copy.deepcopy(DEFAULTS)
    if preset_name is not None:
        cfg = _merge(cfg, preset(preset_name))
    if user:
        cfg = _merge(cfg, user)
    validate(cfg)
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def section(cfg: dict, name: str) -> dict:
    if name not in cfg:
        raise ConfigError(f"configuration is missing section {name!r}")
    return cfg[name]


def field_of(sec: dict, name: str, where: str):
    if name not in sec or sec[name] is None:
        raise ConfigError(f"configuration is missing field {where}.{name}")
    return sec[name]


# Builders ------------------------------------------------------------------------

def um(x_m: float) -> float:
    return round(x_m * 1e6, 12)


def mm(x_m: float) -> float:
    return round(x_m * 1e3, 12)


def material(cfg: dict) -> MaterialParams:
    return MaterialParams(temperature=float(cfg["material"]["temperature_C"]))


def geometry(cfg: dict, width_m: float | None = None) -> DiffusionGeometry:
    m = cfg["material"]
    xi = m["xi_wavelength_m"]
    w = width_m if width_m is not None else field_of(section(cfg, "source"), "width_m", "source")
    return DiffusionGeometry(um(m["film_thickness_m"]), um(m["diffusion_length_m"]), um(w),
                             None if xi is None else um(xi))


def photons(cfg: dict) -> list[tuple[str, float, str]]:
    """(role, wavelength um, pol) of the signal and idler of every process, without repeats."""
    src = section(cfg, "source")
    lp = um(field_of(src, "pump_wavelength_m", "source"))
    ls = src.get("signal_wavelength_m")
    ls = 2 * lp if ls is None else um(ls)
    li = 1.0 / (1.0 / lp - 1.0 / ls)
    li = round(li, 12)
    out = []
    for p in field_of(src, "processes", "source"):
        for role, lam, pol in (("signal", ls, p["signal_pol"]), ("idler", li, p["idler_pol"])):
            item = (role, lam, resolve_polarization(pol))
            if not any(abs(o[1] - lam) < 1e-9 and o[2] == item[2] for o in out):
                out.append(item)
    return out


def degenerate(cfg: dict) -> bool:
    src = cfg["source"]
    ls = src.get("signal_wavelength_m")
    return ls is None or math.isclose(ls, 2 * src["pump_wavelength_m"], rel_tol=1e-12)
