"""TOML scenario files.

Layout::

    [surface]      family = "perturbed_sphere", c = 0.15
    [observable]   kind = "cos2s" (plus kind-specific parameters)
    [band]         E2, E4, F3, F1, eps = "h^0.5" or a number
    [numerics]     h_list, grid_n, tolerances, lattice_margin, a_margin, seed, mc_samples
    [output]       dir
    [dampedwave]   damping = "cos2s" (plus parameters), box = [re_lo, re_hi, im_lo, im_hi], grid_n

Unknown sections or keys are rejected.  ``dump_config`` writes a file that
``parse_config`` maps back to an equal :class:`ScenarioConfig`.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Any

import tomli
import tomli_w

from .errors import ConfigError
from .harness import ScenarioConfig

_BAND_KEYS = ("E2", "E4", "F3", "F1")
_NUMERIC_KEYS = (
    "grid_n",
    "quad_tol",
    "ode_tol",
    "backward_error_multiple",
    "max_iterations",
    "deflation_tol",
    "lattice_margin",
    "a_margin",
    "seed",
    "mc_samples",
)
_INT_KEYS = {"grid_n", "max_iterations", "seed", "mc_samples", "dw_grid_n"}
_SECTIONS = ("surface", "observable", "band", "numerics", "output", "dampedwave")
_EPS_RE = re.compile(r"^\s*h\s*(\^|\*\*)\s*([0-9.eE+-]+)\s*$")


def parse_eps(value: Any) -> tuple[float | None, float | None]:
    """``"h^0.5"`` gives (exponent 0.5, None); a number gives (None, eps)."""
    if isinstance(value, bool):
        raise ConfigError(f"bad eps value {value!r}")
    if isinstance(value, (int, float)):
        return None, float(value)
    if isinstance(value, str):
        m = _EPS_RE.match(value)
        if m:
            return float(m.group(2)), None
        try:
            return None, float(value)
        except ValueError:
            pass
    raise ConfigError(f"eps must be a number or a string like 'h^0.5', got {value!r}")


def _number(section: str, key: str, value: Any, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"[{section}] {key} must be a number, got {value!r}")
    if integer:
        if float(value) != int(value):
            raise ConfigError(f"[{section}] {key} must be an integer, got {value!r}")
        return int(value)
    return float(value)


def config_from_dict(doc: dict) -> ScenarioConfig:
    unknown = set(doc) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(sorted(unknown))}")
    kw: dict[str, Any] = {}

    surf = dict(doc.get("surface", {}))
    if surf:
        kw["surface"] = str(surf.pop("family", "sphere"))
        kw["surface_params"] = surf

    obs = dict(doc.get("observable", {}))
    if obs:
        kw["observable"] = str(obs.pop("kind", "cos2s"))
        kw["observable_params"] = obs

    band = dict(doc.get("band", {}))
    for key in _BAND_KEYS:
        if key in band:
            kw[key] = _number("band", key, band.pop(key))
    if "eps" in band:
        kw["eps_exponent"], kw["eps"] = parse_eps(band.pop("eps"))
    if band:
        raise ConfigError(f"unknown [band] keys: {', '.join(sorted(band))}")

    num = dict(doc.get("numerics", {}))
    if "h_list" in num or "h" in num:
        hs = num.pop("h_list", None)
        if hs is None:
            hs = num.pop("h")
        elif "h" in num:
            raise ConfigError("[numerics] give h or h_list, not both")
        hs = hs if isinstance(hs, list) else [hs]
        kw["h_list"] = tuple(_number("numerics", "h_list", h) for h in hs)
    for key in _NUMERIC_KEYS:
        if key in num:
            kw[key] = _number("numerics", key, num.pop(key), key in _INT_KEYS)
    if num:
        raise ConfigError(f"unknown [numerics] keys: {', '.join(sorted(num))}")

    out = dict(doc.get("output", {}))
    if "dir" in out:
        kw["output_dir"] = str(out.pop("dir"))
    if out:
        raise ConfigError(f"unknown [output] keys: {', '.join(sorted(out))}")

    dw = dict(doc.get("dampedwave", {}))
    if dw:
        if "box" in dw:
            box = dw.pop("box")
            if not isinstance(box, list) or len(box) != 4:
                raise ConfigError("[dampedwave] box must be [re_lo, re_hi, im_lo, im_hi]")
            kw["dw_box"] = tuple(_number("dampedwave", "box", x) for x in box)
        if "grid_n" in dw:
            kw["dw_grid_n"] = _number("dampedwave", "grid_n", dw.pop("grid_n"), True)
        kw["damping"] = str(dw.pop("damping", "cos2s"))
        kw["damping_params"] = dw

    return ScenarioConfig(**kw)


def parse_config(text: str) -> ScenarioConfig:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return config_from_dict(doc)


def load_config(path: str | Path) -> ScenarioConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {p}: {exc.strerror or exc}") from exc
    return parse_config(text)


def config_to_dict(cfg: ScenarioConfig) -> dict:
    band: dict[str, Any] = {k: getattr(cfg, k) for k in _BAND_KEYS}
    band["eps"] = f"h^{cfg.eps_exponent!r}" if cfg.eps_exponent is not None else float(cfg.eps)
    numerics: dict[str, Any] = {"h_list": list(cfg.h_list)}
    numerics.update({k: getattr(cfg, k) for k in _NUMERIC_KEYS})
    return {
        "surface": {"family": cfg.surface, **cfg.surface_params},
        "observable": {"kind": cfg.observable, **cfg.observable_params},
        "band": band,
        "numerics": numerics,
        "output": {"dir": cfg.output_dir},
        "dampedwave": {
            "damping": cfg.damping,
            **cfg.damping_params,
            "box": list(cfg.dw_box),
            "grid_n": cfg.dw_grid_n,
        },
    }


def dump_config(cfg: ScenarioConfig) -> str:
    return tomli_w.dumps(config_to_dict(cfg))
