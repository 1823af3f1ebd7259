"""Run configuration: JSON schema, validation with pointer paths, fingerprints."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Any

from .errors import ConfigError
from .grid import GridDomain
from .medium import AprioriData, OpticalMedium

APRIORI_KEYS = {
    "n": ("n", int),
    "p": ("p", float),
    "lambda": ("lam", float),
    "E": ("E", float),
    "calE": ("cal_e", float),
    "k": ("k", float),
    "r0": ("r0", float),
    "L": ("L", float),
    "diam": ("diam", float),
    "alpha": ("alpha", float),
}

def _require(mapping: Any, key: str, pointer: str):
    if not isinstance(mapping, dict):
        raise ConfigError(pointer.rsplit("/", 1)[0] or "/", "expected an object")
    if key not in mapping:
        raise ConfigError(pointer, "required field is missing")
    return mapping[key]


def _number(value: Any, pointer: str, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(pointer, f"expected a number, got {value!r}")
    if kind is int and int(value) != value:
        raise ConfigError(pointer, f"expected an integer, got {value!r}")
    return kind(value)


@dataclass
class RunConfig:
    """Validated run configuration with a content fingerprint.

    Explicit configs must be complete: the grid and every a-priori constant
    are required (no silent defaulting), the medium section is optional and
    defaults to the homogeneous unit medium.
    """

    raw: dict
    seed: int
    threads: int

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("/", "top-level config must be an object")
        seed = _number(data.get("seed", 0), "/seed", int)
        threads = _number(data.get("threads", 1), "/threads", int)
        if threads < 1:
            raise ConfigError("/threads", "must be >= 1")
        # validate eagerly so malformed configs fail before any work starts
        cfg = cls(raw=data, seed=seed, threads=threads)
        cfg.apriori()
        cfg.grid()
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError("/", f"invalid JSON: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def default(cls) -> "RunConfig":
        from importlib import resources

        with resources.files("otlab.data").joinpath("default_config.json").open() as fh:
            return cls.from_dict(json.load(fh))

    def fingerprint(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def apriori(self, **overrides) -> AprioriData:
        section = _require(self.raw, "apriori", "/apriori")
        kwargs = {}
        for json_key, (attr, kind) in APRIORI_KEYS.items():
            value = _require(section, json_key, f"/apriori/{json_key}")
            kwargs[attr] = _number(value, f"/apriori/{json_key}", kind)
        kwargs.update(overrides)
        try:
            return AprioriData(**kwargs)
        except ValueError as exc:
            raise ConfigError("/apriori", str(exc)) from exc

    def grid(self, m_per_axis: int | None = None) -> GridDomain:
        section = _require(self.raw, "grid", "/grid")
        extent = _number(_require(section, "extent", "/grid/extent"), "/grid/extent")
        m = m_per_axis or _number(
            _require(section, "m_per_axis", "/grid/m_per_axis"), "/grid/m_per_axis", int
        )
        try:
            return GridDomain(extent=extent, m_per_axis=m)
        except ValueError as exc:
            raise ConfigError("/grid", str(exc)) from exc

    def medium(self, grid: GridDomain, apriori: AprioriData | None = None) -> OpticalMedium:
        section = self.raw.get("medium", {"mu_a": "1", "mu_s": "1"})
        apriori = apriori or self.apriori()
        try:
            return OpticalMedium.from_expressions(
                grid,
                apriori,
                mu_a=section.get("mu_a", "1"),
                mu_s=section.get("mu_s", "1"),
                B=section.get("B"),
                supp_B_interior=bool(section.get("supp_B_interior", True)),
            )
        except Exception as exc:
            raise ConfigError("/medium", str(exc)) from exc

    def experiment(self, name: str) -> dict:
        section = self.raw.get("experiments", {})
        if name not in section:
            raise ConfigError(f"/experiments/{name}", "required field is missing")
        return section[name]
