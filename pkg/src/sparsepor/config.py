"""Flat ``key = value`` run configuration with dotted keys.

A file may group keys under ``[section]`` headers, in which case the
section name is prefixed (``[dgp]`` then ``k = 8`` means ``dgp.k = 8``).
Unknown keys are rejected. Overrides passed as ``key=value`` strings win
over file values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .core import InvalidInputError


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text: str) -> int:
    value = float(text)
    if value != int(value):
        raise ValueError(f"not an integer: {text!r}")
    return int(value)


def _opt_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


def _opt_int(text: str) -> int | None:
    return None if text.strip().lower() in ("", "none", "auto") else _int(text)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(_int(t) for t in text.replace(";", ",").split(",") if t.strip())


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        value = text.strip().lower()
        if value not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return value
    return parse


def _str(text: str) -> str:
    return text.strip()


# key -> (parser, default)
SCHEMA: dict[str, tuple[Callable[[str], object], object]] = {
    "dgp.kind": (_choice("single", "vector"), "single"),
    "dgp.design": (_choice("standard", "hard_dense", "hard_sparse"), "standard"),
    "dgp.k": (_int, 8),
    "dgp.n": (_int, 1000),
    "dgp.d": (_int, 1),
    "dgp.target": (_choice("sparse", "l1", "zero"), "sparse"),
    "dgp.s": (float, 2.0),
    "dgp.amplitude": (float, 1.0),
    "dgp.psi0": (float, 0.0),
    "dgp.psi": (_floats, ()),
    "dgp.target_seed": (_int, 0),
    "dgp.propensity": (_choice("uniform", "near"), "uniform"),
    "dgp.c": (float, 1.0),
    "dgp.C": (float, 1.0),
    "dgp.noise": (_choice("gaussian", "bernoulli"), "gaussian"),
    "dgp.sigma": (float, 1.0),
    "dgp.confounding": (float, 0.0),
    "dgp.covariates": (_choice("uniform", "gaussian"), "uniform"),
    "dgp.split_ratio": (float, 0.5),
    "dgp.epsilon": (_opt_float, None),
    "nuisance.mode": (_choice("oracle", "empirical", "corrupted"), "empirical"),
    "nuisance.delta": (float, 0.0),
    "nuisance.eps": (float, 0.0),
    "nuisance.floor": (_opt_float, None),
    "nuisance.fallback": (float, 0.0),
    "estimator.method": (_choice("lasso", "best_subset", "soft_threshold", "hard_threshold",
                                 "trivial_zero", "plugin_mean"), "lasso"),
    "estimator.budget": (float, 1.0),
    "estimator.budget_rule": (_choice("fixed", "oracle"), "fixed"),
    "estimator.solver_tol": (float, 1e-10),
    "estimator.max_iters": (_opt_int, None),
    "estimator.subset_mode": (_choice("exact_diagonal", "exhaustive", "greedy"),
                              "exact_diagonal"),
    "estimator.psi0": (_str, "known"),
    "experiment.n": (_ints, ()),
    "experiment.k": (_ints, ()),
    "experiment.s": (_floats, ()),
    "experiment.replications": (_int, 1),
    "experiment.base_seed": (_opt_int, None),
    "data.path": (_str, ""),
    "cv.candidates": (_floats, ()),
    "cv.folds": (_int, 5),
}


@dataclass(frozen=True)
class RunConfig:
    """Parsed configuration values keyed by dotted name."""

    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    def explicit(self, key: str) -> bool:
        return key in self.values.get("__explicit__", ())


def parse_lines(lines, source: str = "<config>") -> dict[str, str]:
    raw: dict[str, str] = {}
    section = ""
    for num, line in enumerate(lines, 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if text.startswith("[") and text.endswith("]"):
            section = text[1:-1].strip()
            continue
        if "=" not in text:
            raise InvalidInputError(f"{source}:{num}: expected 'key = value'")
        key, value = (t.strip() for t in text.split("=", 1))
        if section and "." not in key:
            key = f"{section}.{key}"
        raw[key] = value
    return raw


def load_config(path: str | None, overrides=()) -> RunConfig:
    """Merge defaults, file values and ``key=value`` overrides, then parse and validate."""
    raw: dict[str, str] = {}
    if path:
        try:
            with open(path) as fh:
                raw.update(parse_lines(fh, path))
        except OSError as exc:
            raise InvalidInputError(f"cannot read config {path}: {exc}") from exc
    for item in overrides or ():
        if "=" not in item:
            raise InvalidInputError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = (t.strip() for t in item.split("=", 1))
        raw[key] = value
    unknown = sorted(set(raw) - set(SCHEMA))
    if unknown:
        raise InvalidInputError(f"unknown config keys: {', '.join(unknown)}")
    values = {key: default for key, (_, default) in SCHEMA.items()}
    for key, text in raw.items():
        parser = SCHEMA[key][0]
        try:
            values[key] = parser(text)
        except ValueError as exc:
            raise InvalidInputError(f"bad value for {key}: {exc}") from exc
    for key, value in values.items():
        if isinstance(value, float) and not math.isfinite(value) and key != "dgp.s":
            raise InvalidInputError(f"{key} must be finite")
    values["__explicit__"] = frozenset(raw)
    return RunConfig(values)
