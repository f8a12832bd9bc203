"""Experiment configuration: YAML in, validated pydantic models out.

Validation errors are reported with the file line and column of the
offending key, found by walking the composed YAML node tree along the
pydantic error location.
"""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class AutonomousModel(_Strict):
    kind: Literal["autonomous"]
    dim: int = Field(64, ge=1)
    chi: Optional[list[float]] = None
    time_step: float = Field(2 * math.pi, gt=0)

    @model_validator(mode="after")
    def _chi_len(self):
        if self.chi is not None and len(self.chi) != self.dim:
            raise ValueError(f"chi has {len(self.chi)} entries but dim is {self.dim}")
        return self


class RankOneKickedModel(_Strict):
    kind: Literal["rank_one_kicked"]
    dim: int = Field(256, ge=2)
    kappa: float
    phi_scale: float = Field(5.0, gt=0)
    chi: Optional[list[float]] = None

    @model_validator(mode="after")
    def _chi_len(self):
        if self.chi is not None and len(self.chi) != self.dim:
            raise ValueError(f"chi has {len(self.chi)} entries but dim is {self.dim}")
        return self


class LinearPotential(_Strict):
    kind: Literal["linear"]
    k: int
    theta: float = 0.0

    @field_validator("k")
    @classmethod
    def _nonzero(cls, v):
        if v == 0:
            raise ValueError("k must be nonzero")
        return v


class CosinePotential(_Strict):
    kind: Literal["cosine"]
    K: float = 1.0


class FourierPotentialModel(_Strict):
    kind: Literal["fourier"]
    coeffs: dict[int, tuple[float, float]]


Potential = Annotated[Union[LinearPotential, CosinePotential, FourierPotentialModel],
                      Field(discriminator="kind")]


class RotorModel(_Strict):
    kind: Literal["rotor"]
    half_width: Union[int, Literal["auto"]] = 512
    omega: float = 1.0
    f_exponent: int = Field(1, ge=1)
    potential: Potential = LinearPotential(kind="linear", k=1)
    grid_size: Optional[int] = None

    @field_validator("half_width")
    @classmethod
    def _hw(cls, v):
        if isinstance(v, int) and v < 1:
            raise ValueError("half_width must be positive")
        return v


class RandomUnitaryModel(_Strict):
    kind: Literal["random_unitary"]
    dim: int = Field(32, ge=1)
    seed: Optional[int] = None


Model = Annotated[Union[AutonomousModel, RankOneKickedModel, RotorModel, RandomUnitaryModel],
                  Field(discriminator="kind")]


class ProbeConfig(_Strict):
    q: float = Field(1.0, gt=0)
    # spectrum: chi_j^q; momentum: |j|^{2q}; index: |j|^q
    convention: Optional[Literal["spectrum", "momentum", "index"]] = None


class InitialState(_Strict):
    kind: Literal["basis", "random", "phi"] = "basis"
    label: Optional[int] = None


class Tolerances(_Strict):
    identity: float = Field(1e-6, gt=0)
    oracle: float = Field(1e-8, gt=0)
    tail_eps: float = Field(1e-12, gt=0)
    leak_tol: float = Field(1e-10, gt=0)
    band_tol: float = Field(1e-12, gt=0)
    shift: float = Field(1e-12, gt=0)


class GeometricGrid(_Strict):
    start: float = Field(gt=0)
    stop: float = Field(gt=0)
    num: int = Field(ge=1)


class CertificateConfig(_Strict):
    K: float = Field(gt=0)
    alpha: float = Field(gt=0)
    delta: float = Field(gt=0)
    gamma: float = Field(0.0, ge=0)
    intervals: list[tuple[float, float]] = [(0.0, 2 * math.pi)]
    samples: int = Field(33, ge=2)

    @field_validator("intervals")
    @classmethod
    def _inside(cls, v):
        for a, b in v:
            if not 0 <= a <= b <= 2 * math.pi:
                raise ValueError(f"interval ({a}, {b}) not inside [0, 2pi]")
        return v


class ShiftConfig(_Strict):
    N: list[int] = [1, 2, 3]
    omega: list[float] = [0.0, 0.3, 0.777]
    theta: list[float] = [0.0, 1.1]
    half_width: int = Field(64, ge=4)


class ExponentsConfig(_Strict):
    series_csv: Optional[str] = None
    sequence: Optional[Literal["ones", "linear", "square", "cube", "sparse_squares"]] = None


class Fixture(_Strict):
    name: str
    oracle: Literal["autonomous", "residue", "kicked_ho", "kicked_green", "rotor_Ij", "shift"]
    model: Model
    probe: ProbeConfig = ProbeConfig()
    initial_state: InitialState = InitialState()
    T_grid: list[float] = [1.0, 5.0]
    tol: float = Field(1e-8, gt=0)

    @field_validator("T_grid")
    @classmethod
    def _grid(cls, v):
        return _check_grid(v)


def _check_grid(v):
    if not v:
        raise ValueError("T_grid must not be empty")
    if any(not t > 0 for t in v):
        raise ValueError("T_grid values must be positive")
    if any(b <= a for a, b in zip(v, v[1:])):
        raise ValueError("T_grid must be strictly increasing")
    return v


class ExperimentConfig(_Strict):
    model: Model
    probe: ProbeConfig = ProbeConfig()
    initial_state: InitialState = InitialState()
    T_grid: Union[list[float], GeometricGrid]
    n_e: int = Field(1024, ge=16)
    tolerances: Tolerances = Tolerances()
    output: str = "out"
    seed: int = 0
    threads: int = Field(1, ge=1)
    fixtures: list[Fixture] = []
    certificate: Optional[CertificateConfig] = None
    shift: ShiftConfig = ShiftConfig()
    exponents: ExponentsConfig = ExponentsConfig()

    @field_validator("T_grid")
    @classmethod
    def _grid(cls, v):
        if isinstance(v, GeometricGrid):
            if v.stop < v.start or (v.num > 1 and v.stop == v.start):
                raise ValueError("geometric grid needs start < stop")
            return v
        return _check_grid(v)

    @property
    def T_values(self) -> list:
        g = self.T_grid
        if isinstance(g, GeometricGrid):
            if g.num == 1:
                return [g.start]
            r = (g.stop / g.start) ** (1.0 / (g.num - 1))
            return [g.start * r ** i for i in range(g.num - 1)] + [g.stop]
        return list(g)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        """Copy with CLI flags applied; ``None`` means not given."""
        data = self.model_dump(mode="json")
        if kw.get("n_e") is not None:
            data["n_e"] = kw["n_e"]
        if kw.get("tol") is not None:
            data["tolerances"]["identity"] = kw["tol"]
            data["tolerances"]["oracle"] = kw["tol"]
        if kw.get("seed") is not None:
            data["seed"] = kw["seed"]
        if kw.get("threads") is not None:
            data["threads"] = kw["threads"]
        if kw.get("out") is not None:
            data["output"] = str(kw["out"])
        try:
            return type(self).model_validate(data)
        except ValidationError as e:
            raise ConfigError(_format_errors(e, None, "<command line>")) from None

    def digest(self) -> str:
        """Hash of the physics content; output location and thread count excluded."""
        data = self.model_dump(mode="json", exclude={"output", "threads"})
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _node_at(node, loc):
    """Deepest YAML node reached by following ``loc``; returns (node, key_node)."""
    key_node = None
    for part in loc:
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                if k.value == str(part):
                    key_node, node = k, v
                    break
            # unmatched parts are discriminator tags like 'rotor'; skip them
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int):
            if part >= len(node.value):
                break
            node = node.value[part]
            key_node = None
    return node, key_node


def _format_errors(err: ValidationError, root, source: str) -> str:
    lines = []
    for e in err.errors():
        loc = e["loc"]
        where = source
        if root is not None:
            node, key = _node_at(root, loc)
            # scalars: point at the value itself; containers: at their key
            mark = (node if isinstance(node, yaml.ScalarNode) or key is None else key).start_mark
            where = f"{source}:{mark.line + 1}:{mark.column + 1}"
        path = ".".join(str(p) for p in loc) or "<root>"
        msg = e["msg"].removeprefix("Value error, ")
        lines.append(f"{where}: {path}: {msg}")
    return "\n".join(lines)


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        raise ConfigError(f"{where}: malformed YAML: {getattr(e, 'problem', e)}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}:1:1: config must be a mapping")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_format_errors(e, root, source)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from None
    return parse_config(text, str(path))
