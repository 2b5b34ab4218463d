"""Problem-file parsing: INI-style sections describing one run.

Sections: [uncertainty], one or more [alpha.<name>], [initial], [grid],
[scheme], [run].  Numbers are decimal, vectors/matrices bracketed Python
literals, atom lists are [[location, mass], ...].  Every value is validated
at parse time and errors carry their section and key.
"""

from __future__ import annotations

import ast
import configparser
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .generator import TestFunction, cosine, gaussian_bump, quadratic
from .grids import Field, Grid
from .hjb import SchemeConfig
from .levy import (Atoms, CoefficientField, LevyTriplet, StableLike,
                   TruncationSpec, UncertaintySet, ValidationError)

__all__ = ["ProblemError", "ProblemSpec", "parse_problem", "to_text", "MODES"]

MODES = ("solve", "simulate", "dp", "verify-max-ineq", "verify-dynkin",
         "oracle-compare", "symbol-report")

_FORMS = ("constant", "affine-drift", "sde")
_FAMILIES = ("quadratic", "neg-quadratic", "cosine", "gaussian-bump", "tabulated")

_KEYS = {
    "uncertainty": {"cutoff"},
    "alpha": {"form", "b", "q", "atoms", "stable_index", "stable_scale",
              "stable_tempering", "slope", "sigma0", "sigma1"},
    "initial": {"family", "center", "width", "freq", "phase", "sign", "values"},
    "grid": {"dim", "half_width", "points"},
    "scheme": {"final_time", "dt", "eps", "extension", "cfl_safety",
               "panels_per_decade"},
    "run": {"mode", "seed", "delta", "n_paths", "eps", "chunk", "horizon",
            "x0", "radii", "times", "ball_radius", "alpha", "gh_nodes",
            "rate_delta_cap"},
}


class ProblemError(ValueError):
    def __init__(self, section: str, key: str | None, message: str):
        self.section = section
        self.key = key
        where = f"[{section}]" + (f" {key}" if key else "")
        super().__init__(f"{where}: {message}")


@dataclass
class ProblemSpec:
    uncertainty: UncertaintySet
    initial: TestFunction | Field
    grid: Grid
    scheme: SchemeConfig
    mode: str
    run: dict
    canonical: dict = dc_field(default_factory=dict, repr=False)


# ---------------------------------------------------------------------------
# low-level value handling


def _literal(section: str, key: str, raw: str):
    raw = raw.strip()
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        return raw


def _number(section: str, key: str, v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ProblemError(section, key, f"expected a number, got {v!r}")
    if not math.isfinite(float(v)):
        raise ProblemError(section, key, "value must be finite")
    return float(v)


def _integer(section: str, key: str, v) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ProblemError(section, key, f"expected an integer, got {v!r}")
    return v


def _vector(section: str, key: str, v, dim: int) -> list[float]:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        vec = [float(v)] * (1 if dim == 1 else dim)
        if dim != len(vec):
            raise ProblemError(section, key, f"expected {dim} entries")
        return vec
    if isinstance(v, (list, tuple)):
        out = [_number(section, key, e) for e in v]
        if len(out) != dim:
            raise ProblemError(section, key, f"expected {dim} entries, got {len(out)}")
        return out
    raise ProblemError(section, key, f"expected a number or vector, got {v!r}")


def _matrix(section: str, key: str, v, dim: int) -> list[list[float]]:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return [[float(v) if i == j else 0.0 for j in range(dim)] for i in range(dim)]
    if isinstance(v, (list, tuple)) and v and isinstance(v[0], (list, tuple)):
        rows = [[_number(section, key, e) for e in row] for row in v]
        if len(rows) != dim or any(len(r) != dim for r in rows):
            raise ProblemError(section, key, f"expected a {dim}x{dim} matrix")
        return rows
    raise ProblemError(section, key, f"expected a scalar or nested list, got {v!r}")


def _string(section: str, key: str, v, allowed: tuple | None = None) -> str:
    if not isinstance(v, str):
        raise ProblemError(section, key, f"expected a name, got {v!r}")
    if allowed is not None and v not in allowed:
        raise ProblemError(section, key,
                           f"unknown value {v!r}; expected one of {', '.join(allowed)}")
    return v


def _atoms(section: str, key: str, v, dim: int) -> list[list]:
    if not isinstance(v, (list, tuple)):
        raise ProblemError(section, key, "expected a list of [location, mass] pairs")
    out = []
    for i, entry in enumerate(v, start=1):
        if not isinstance(entry, (list, tuple)) or len(entry) != 2:
            raise ProblemError(section, key, f"entry {i}: expected [location, mass]")
        loc_raw, mass_raw = entry
        loc = _vector(section, key, loc_raw, dim)
        mass = _number(section, key, mass_raw)
        if mass <= 0:
            raise ProblemError(section, key, f"entry {i}: mass must be positive, got {mass}")
        if all(c == 0.0 for c in loc):
            raise ProblemError(section, key, f"entry {i}: atom location must be nonzero")
        out.append([loc[0] if dim == 1 else loc, mass])
    return out


# ---------------------------------------------------------------------------
# section builders


def _section_dicts(text: str) -> dict:
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                   comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ProblemError("file", None, f"malformed problem file: {exc}") from exc
    out = {}
    for section in cp.sections():
        base = "alpha" if section.startswith("alpha.") else section
        if base not in _KEYS:
            raise ProblemError(section, None, "unknown section")
        if base == "alpha" and not section[len("alpha."):]:
            raise ProblemError(section, None, "member name must be nonempty")
        allowed = _KEYS[base]
        parsed = {}
        for key, raw in cp[section].items():
            if key not in allowed:
                raise ProblemError(section, key, "unknown key")
            parsed[key] = _literal(section, key, raw)
        out[section] = parsed
    return out


def _build_member(name: str, sec: dict, dim: int, trunc: TruncationSpec,
                  canonical: dict) -> CoefficientField:
    section = f"alpha.{name}"
    form = _string(section, "form", sec.get("form", "constant"), _FORMS)
    b = _vector(section, "b", sec.get("b", 0.0), dim)
    q = _matrix(section, "q", sec.get("q", 0.0), dim)
    canon = {"form": form, "b": b, "q": q}

    has_atoms = "atoms" in sec
    has_stable = any(k in sec for k in ("stable_index", "stable_scale", "stable_tempering"))
    if has_atoms and has_stable:
        raise ProblemError(section, "atoms", "choose a single jump family per member")
    nu = None
    if has_atoms:
        pairs = _atoms(section, "atoms", sec["atoms"], dim)
        canon["atoms"] = pairs
        nu = Atoms.of(*[(p[0], p[1]) for p in pairs], dim=dim)
    elif has_stable:
        if dim != 1:
            raise ProblemError(section, "stable_index", "radial jump family is one-dimensional here")
        index = _number(section, "stable_index", sec.get("stable_index", 1.5))
        scale = _number(section, "stable_scale", sec.get("stable_scale", 1.0))
        tempering = _number(section, "stable_tempering", sec.get("stable_tempering", 0.0))
        if not (0 < index < 2):
            raise ProblemError(section, "stable_index", f"index must lie in (0, 2), got {index}")
        if scale <= 0:
            raise ProblemError(section, "stable_scale", "scale must be positive")
        if tempering < 0:
            raise ProblemError(section, "stable_tempering", "tempering must be nonnegative")
        canon.update({"stable_index": index, "stable_scale": scale,
                      "stable_tempering": tempering})
        nu = StableLike.symmetric(index, scale, tempering)

    try:
        base = LevyTriplet(np.array(b), np.array(q), nu, trunc)
    except ValidationError as exc:
        raise ProblemError(section, None, str(exc)) from exc

    if form == "constant":
        fld = CoefficientField.constant_field(name, base)
    elif form == "affine-drift":
        slope = _matrix(section, "slope", sec.get("slope", 0.0), dim)
        canon["slope"] = slope
        fld = CoefficientField.affine_drift(name, base, np.array(slope))
    else:
        sigma0 = _matrix(section, "sigma0", sec.get("sigma0", 1.0), dim)
        sigma1 = _number(section, "sigma1", sec.get("sigma1", 0.0))
        if dim != 1 and sigma1 != 0.0:
            raise ProblemError(section, "sigma1", "state-dependent scale is one-dimensional here")
        canon.update({"sigma0": sigma0, "sigma1": sigma1})
        s0 = np.array(sigma0)

        def sigma_fn(x, s0=s0, s1=sigma1):
            return s0 + s1 * float(np.atleast_1d(x)[0]) * np.eye(s0.shape[0])

        fld = CoefficientField.sde_field(name, base, sigma_fn, trunc, dim=dim)
    canonical[section] = canon
    return fld


def _build_initial(sec: dict, grid: Grid, canonical: dict) -> TestFunction | Field:
    section = "initial"
    family = _string(section, "family", sec.get("family", "quadratic"), _FAMILIES)
    canon = {"family": family}
    dim = grid.dim
    if family in ("quadratic", "neg-quadratic"):
        center = _vector(section, "center", sec.get("center", 0.0), dim)
        sign = _number(section, "sign", sec.get("sign", 1.0))
        if family == "neg-quadratic":
            sign = -abs(sign)
        if sign == 0:
            raise ProblemError(section, "sign", "sign must be nonzero")
        canon.update({"center": center, "sign": sign})
        canonical[section] = canon
        radius = 1.5 * grid.half_width + float(np.linalg.norm(center))
        return quadratic(np.array(center), dim=dim, box_radius=radius,
                         sign=math.copysign(1.0, sign))
    if family == "cosine":
        freq = _vector(section, "freq", sec.get("freq", 1.0), dim)
        phase = _number(section, "phase", sec.get("phase", 0.0))
        canon.update({"freq": freq, "phase": phase})
        canonical[section] = canon
        return cosine(np.array(freq) if dim > 1 else freq[0], dim=dim, phase=phase)
    if family == "gaussian-bump":
        center = _vector(section, "center", sec.get("center", 0.0), dim)
        width = _number(section, "width", sec.get("width", 1.0))
        if width <= 0:
            raise ProblemError(section, "width", "width must be positive")
        canon.update({"center": center, "width": width})
        canonical[section] = canon
        return gaussian_bump(np.array(center) if dim > 1 else center[0],
                             width=width, dim=dim)
    # tabulated
    values = sec.get("values")
    if not isinstance(values, (list, tuple)) or not values:
        raise ProblemError(section, "values", "tabulated data needs a value list")
    vals = [_number(section, "values", v) for v in values]
    expected = grid.points ** grid.dim
    if len(vals) != expected:
        raise ProblemError(section, "values",
                           f"expected {expected} values for this grid, got {len(vals)}")
    canon["values"] = vals
    canonical[section] = canon
    arr = np.array(vals).reshape(grid.shape)
    return Field(grid, arr)


def parse_problem(text: str) -> ProblemSpec:
    """Parse one problem file; every value validated, errors carry locations."""
    sections = _section_dicts(text)
    canonical: dict = {}

    unc = sections.get("uncertainty", {})
    cutoff = _number("uncertainty", "cutoff", unc.get("cutoff", 1.0))
    if cutoff <= 0:
        raise ProblemError("uncertainty", "cutoff", "cutoff must be positive")
    canonical["uncertainty"] = {"cutoff": cutoff}
    trunc = TruncationSpec(cutoff)

    gsec = sections.get("grid", {})
    dim = _integer("grid", "dim", gsec.get("dim", 1))
    half_width = _number("grid", "half_width", gsec.get("half_width", 6.0))
    points = _integer("grid", "points", gsec.get("points", 241))
    try:
        grid = Grid(dim, half_width, points)
    except Exception as exc:
        raise ProblemError("grid", None, str(exc)) from exc
    canonical["grid"] = {"dim": dim, "half_width": half_width, "points": points}

    names = sorted(s[len("alpha."):] for s in sections if s.startswith("alpha."))
    if not names:
        raise ProblemError("file", None, "need at least one [alpha.<name>] section")
    fields = [_build_member(n, sections[f"alpha.{n}"], dim, trunc, canonical)
              for n in names]
    try:
        us = UncertaintySet(tuple(fields), trunc)
    except ValidationError as exc:
        raise ProblemError("uncertainty", None, str(exc)) from exc

    ssec = sections.get("scheme", {})
    final_time = _number("scheme", "final_time", ssec.get("final_time", 1.0))
    dt = ssec.get("dt")
    eps = ssec.get("eps")
    extension = _string("scheme", "extension",
                        ssec.get("extension", "constant-boundary"),
                        ("constant-boundary", "initial-condition"))
    cfl_safety = _number("scheme", "cfl_safety", ssec.get("cfl_safety", 0.9))
    panels = _integer("scheme", "panels_per_decade", ssec.get("panels_per_decade", 48))
    try:
        scheme = SchemeConfig(final_time=final_time,
                              dt=None if dt is None else _number("scheme", "dt", dt),
                              eps=None if eps is None else _number("scheme", "eps", eps),
                              extension=extension, cfl_safety=cfl_safety,
                              panels_per_decade=panels)
    except Exception as exc:
        raise ProblemError("scheme", None, str(exc)) from exc
    canonical["scheme"] = {"final_time": final_time, "extension": extension,
                           "cfl_safety": cfl_safety, "panels_per_decade": panels}
    if dt is not None:
        canonical["scheme"]["dt"] = _number("scheme", "dt", dt)
    if eps is not None:
        canonical["scheme"]["eps"] = _number("scheme", "eps", eps)

    initial = _build_initial(sections.get("initial", {}), grid, canonical)

    rsec = sections.get("run", {})
    mode = _string("run", "mode", rsec.get("mode", "solve"), MODES)
    run = {
        "mode": mode,
        "seed": _integer("run", "seed", rsec.get("seed", 0)),
        "delta": _number("run", "delta", rsec.get("delta", 1e-3)),
        "n_paths": _integer("run", "n_paths", rsec.get("n_paths", 10_000)),
        "eps": _number("run", "eps", rsec.get("eps", 1e-3)),
        "chunk": _integer("run", "chunk", rsec.get("chunk", 4096)),
        "horizon": _number("run", "horizon", rsec.get("horizon", final_time)),
        "x0": _vector("run", "x0", rsec.get("x0", 0.0), dim),
        "radii": [_number("run", "radii", v) for v in rsec.get("radii", [0.5, 1.0, 2.0])],
        "times": [_number("run", "times", v) for v in rsec.get("times", [0.01, 0.1])],
        "ball_radius": _number("run", "ball_radius", rsec.get("ball_radius", 3.0)),
        "gh_nodes": _integer("run", "gh_nodes", rsec.get("gh_nodes", 9)),
        "rate_delta_cap": _number("run", "rate_delta_cap", rsec.get("rate_delta_cap", 1e4)),
    }
    if run["seed"] < 0 or run["seed"] >= 1 << 64:
        raise ProblemError("run", "seed", "seed must fit in 64 bits")
    if any(r <= 0 for r in run["radii"]):
        raise ProblemError("run", "radii", "radii must be positive")
    if any(t <= 0 for t in run["times"]):
        raise ProblemError("run", "times", "times must be positive")
    alpha = rsec.get("alpha")
    if alpha is not None:
        run["alpha"] = _string("run", "alpha", alpha, tuple(us.labels))
    canonical["run"] = dict(run)
    # derived flag (not rendered): whether the file pinned the radii itself
    run["radii_user"] = "radii" in rsec

    return ProblemSpec(uncertainty=us, initial=initial, grid=grid, scheme=scheme,
                       mode=mode, run=run, canonical=canonical)


# ---------------------------------------------------------------------------
# rendering (round-trip support)


def _render(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, int):
        return str(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_render(e) for e in v) + "]"
    return str(v)


def to_text(spec: ProblemSpec) -> str:
    """Render a parsed spec; re-parsing yields the same canonical content."""
    order = (["uncertainty"]
             + sorted(s for s in spec.canonical if s.startswith("alpha."))
             + ["initial", "grid", "scheme", "run"])
    lines = []
    for section in order:
        body = spec.canonical.get(section)
        if body is None:
            continue
        lines.append(f"[{section}]")
        for key, value in body.items():
            lines.append(f"{key} = {_render(value)}")
        lines.append("")
    return "\n".join(lines)
