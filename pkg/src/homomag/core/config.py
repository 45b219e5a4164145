"""Plain-text run configuration: `key = value` lines validated by pydantic models."""

import hashlib
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, Field, ValidationError, field_validator

from .cellsolve import CELL_TOL
from .errors import ConfigValidationError, MissingArtifact, ParseError
from .harness import SweepConfig
from .llg import SimulationConfig
from .material import FAMILIES, MaterialModel

FAMILY_KEYS = ("a", "K", "M_s") + tuple(f"a_{i}{j}" for i in range(1, 4) for j in range(i, 4))
MATERIAL_KEYS = ("dimension", "u", "alpha", "mu0", "h_a") + FAMILY_KEYS
NUMERICS_KEYS = ("N_cell", "cell_tol")
SIMULATION_KEYS = ("eps", "N", "tau", "T", "output_every", "cg_tol", "cg_maxiter_factor",
                   "energy_check", "energy_bound_constant")
SWEEP_KEYS = ("eps_list", "h_ratio", "N_hom", "profile", "zeeman_term", "spot_check", "m0_grid", "workers")
KNOWN_KEYS = MATERIAL_KEYS + NUMERICS_KEYS + SIMULATION_KEYS + SWEEP_KEYS

INT_KEYS = {"dimension", "N_cell", "N", "output_every", "cg_maxiter_factor", "h_ratio", "N_hom", "workers"}
FLOAT_KEYS = {"alpha", "mu0", "cell_tol", "eps", "tau", "T", "cg_tol", "energy_bound_constant"}
VECTOR_KEYS = {"u", "h_a"}
BOOL_KEYS = {"spot_check"}
BOOL_WORDS = {"true": True, "yes": True, "on": True, "1": True,
              "false": False, "no": False, "off": False, "0": False}


class NumericsConfig(BaseModel):
    """Cell-problem resolution and tolerance."""

    N_cell: int = Field(default=64, description="Cell grid resolution per axis (power of two >= 8)")
    cell_tol: float = Field(default=CELL_TOL, description="Relative residual target of cell solves")

    @field_validator('N_cell')
    @classmethod
    def validate_N_cell(cls, v):
        if v < 8 or v & (v - 1):
            raise ValueError("N_cell is a power of two >= 8")
        return v

    @field_validator('cell_tol')
    @classmethod
    def validate_cell_tol(cls, v):
        if not 0.0 < v < 1.0:
            raise ValueError("0 < cell_tol < 1")
        return v


class RunConfig(BaseModel):
    """Everything one invocation needs, with the source line of every given key."""

    material: MaterialModel = Field(default_factory=MaterialModel)
    numerics: NumericsConfig = Field(default_factory=NumericsConfig)
    simulation: SimulationConfig = Field(default_factory=SimulationConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    lines: Dict[str, int] = Field(default_factory=dict, exclude=True)

    def canonical_dict(self) -> Dict[str, Any]:
        """Validated values with defaults filled; coefficient families in their config form."""
        material = self.material.model_dump(mode="json", exclude={"a_min", "a_max", "a_entries", "a", "K", "M_s"})
        material["a"] = self.material.a.describe()
        material["K"] = self.material.K.describe()
        material["M_s"] = self.material.M_s.describe()
        for key in sorted(self.material.a_entries):
            material[f"a_{key}"] = self.material.a_entries[key].describe()
        return {
            "material": material,
            "numerics": self.numerics.model_dump(mode="json"),
            "simulation": self.simulation.model_dump(mode="json"),
            "sweep": self.sweep.model_dump(mode="json"),
        }

    def canonical_json(self) -> str:
        data = self.canonical_dict()
        # results do not depend on the worker count
        data["sweep"].pop("workers", None)
        return json.dumps(data, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form (worker count excluded)."""
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


def _number(text: str, line: int, key: str) -> float:
    """Finite float, fraction a/b or power 2^k."""
    text = text.strip()
    try:
        if "/" in text:
            num, den = text.split("/", 1)
            value = float(num) / float(den)
        elif "^" in text:
            base, exp = text.split("^", 1)
            value = float(base) ** float(exp)
        else:
            value = float(text)
    except (ValueError, ZeroDivisionError, OverflowError):
        raise ParseError(f"'{text}' is not a number", line=line, key=key)
    if isinstance(value, complex) or not math.isfinite(value):
        raise ParseError(f"'{text}' is not a finite number", line=line, key=key)
    return value


def _integer(text: str, line: int, key: str) -> int:
    value = _number(text, line, key)
    if value != int(value):
        raise ParseError(f"'{text}' is not an integer", line=line, key=key)
    return int(value)


def _number_list(text: str, line: int, key: str) -> List[float]:
    parts = [p for p in text.replace(",", " ").split() if p]
    if not parts:
        raise ParseError("empty list", line=line, key=key)
    return [_number(p, line, key) for p in parts]


def parse_family(text: str, line: int = 0, key: str = "a") -> Dict[str, Any]:
    """Inline coefficient family, e.g. ``single-harmonic mean=2 amp=1 k=1 phase=0``.

    A bare number is a constant.

    Raises:
        ParseError: If the family or a parameter is malformed
    """
    tokens = text.split()
    if not tokens:
        raise ParseError("missing coefficient family", line=line, key=key)
    head, rest = tokens[0], tokens[1:]
    if head not in FAMILIES:
        if len(tokens) == 1:
            return {"family": "constant", "value": _number(head, line, key)}
        raise ParseError(f"unknown family '{head}' (one of {list(FAMILIES)})", line=line, key=key)
    out: Dict[str, Any] = {"family": head}
    for token in rest:
        if "=" not in token:
            if head == "constant" and "value" not in out:
                out["value"] = _number(token, line, key)
                continue
            raise ParseError(f"expected name=value, got '{token}'", line=line, key=key)
        name, value = token.split("=", 1)
        if name in out:
            raise ParseError(f"parameter '{name}' given twice", line=line, key=key)
        if name in ("value", "mean", "low", "contrast", "sharpness"):
            out[name] = _number(value, line, key)
        elif name in ("amp", "phase"):
            out[name] = _number_list(value, line, key)
        elif name == "k":
            vectors = [v for v in value.split(";") if v]
            out["k"] = [[_integer(c, line, key) for c in v.split(",")] for v in vectors]
        elif name == "fn":
            out["fn"] = value
        else:
            raise ParseError(f"unknown family parameter '{name}'", line=line, key=key)
    return out


def _convert(key: str, text: str, line: int) -> Any:
    if key in FAMILY_KEYS:
        return parse_family(text, line, key)
    if key in INT_KEYS:
        return _integer(text, line, key)
    if key in FLOAT_KEYS:
        return _number(text, line, key)
    if key in VECTOR_KEYS:
        return _number_list(text, line, key)
    if key == "eps_list":
        return _number_list(text, line, key)
    if key in BOOL_KEYS:
        word = text.strip().lower()
        if word not in BOOL_WORDS:
            raise ParseError(f"'{text}' is not a boolean", line=line, key=key)
        return BOOL_WORDS[word]
    return text.strip()


def tokenize(text: str) -> Tuple[Dict[str, Any], Dict[str, int]]:
    """Split config text into converted values and the line of each key.

    Raises:
        ParseError: On malformed lines, unknown keys or duplicated keys
    """
    values: Dict[str, Any] = {}
    lines: Dict[str, int] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ParseError(f"expected 'key = value', got '{content}'", line=number)
        key, value = (part.strip() for part in content.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ParseError(f"unknown key '{key}'", line=number, key=key)
        if key in values:
            raise ParseError(f"duplicate key '{key}' (first given on line {lines[key]})", line=number, key=key)
        if not value:
            raise ParseError("missing value", line=number, key=key)
        values[key] = _convert(key, value, number)
        lines[key] = number
    return values, lines


def _config_key(section: str, loc: Tuple[Any, ...]) -> Optional[str]:
    if not loc:
        return None
    head = str(loc[0])
    if section == "material" and head == "a_entries" and len(loc) > 1:
        return f"a_{loc[1]}"
    return head


def _validation_error(e: ValidationError, section: str, lines: Dict[str, int]) -> ConfigValidationError:
    err = e.errors()[0]
    message = str(err.get("msg", "invalid value"))
    if message.startswith("Value error, "):
        message = message[len("Value error, "):]
    key = _config_key(section, tuple(err.get("loc", ())))
    if key is None and message:
        # model-level checks name their key first
        key = message.split()[0].rstrip(":")
        key = key if key in lines else None
    line = lines.get(key) if key else None
    where = f"{key}: " if key else ""
    return ConfigValidationError(f"{where}{message}", constraint=message, line=line)


def _build(cls, section: str, data: Dict[str, Any], lines: Dict[str, int]):
    try:
        return cls(**data)
    except ValidationError as e:
        raise _validation_error(e, section, lines) from e


def build_config(values: Dict[str, Any], lines: Optional[Dict[str, int]] = None) -> RunConfig:
    """Validate tokenized values into a RunConfig.

    Raises:
        ConfigValidationError: Naming the violated constraint and the line of the offending key
    """
    lines = lines or {}
    material: Dict[str, Any] = {}
    entries: Dict[str, Any] = {}
    for key in MATERIAL_KEYS:
        if key not in values:
            continue
        if key.startswith("a_"):
            entries[key[2:]] = values[key]
        else:
            material[key] = values[key]
    if entries:
        material["a_entries"] = entries

    def pick(keys):
        return {k: values[k] for k in keys if k in values}

    return RunConfig(
        material=_build(MaterialModel, "material", material, lines),
        numerics=_build(NumericsConfig, "numerics", pick(NUMERICS_KEYS), lines),
        simulation=_build(SimulationConfig, "simulation", pick(SIMULATION_KEYS), lines),
        sweep=_build(SweepConfig, "sweep", pick(SWEEP_KEYS), lines),
        lines=lines,
    )


def parse_config_text(text: str) -> RunConfig:
    values, lines = tokenize(text)
    return build_config(values, lines)


def parse_config(path: Union[str, Path]) -> RunConfig:
    """Read, tokenize and validate a config file.

    Raises:
        MissingArtifact: If the file does not exist
        ParseError: On malformed input
        ConfigValidationError: On constraint violations
    """
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(f"config file not found: {path}")
    return parse_config_text(path.read_text())


def render_config(config: RunConfig) -> str:
    """Echo a config in its own `key = value` syntax (defaults filled)."""
    data = config.canonical_dict()
    out = []
    for section in ("material", "numerics", "simulation", "sweep"):
        out.append(f"# {section}")
        for key, value in data[section].items():
            if value is None:
                continue
            if isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, list):
                text = ",".join(repr(v) for v in value)
            else:
                text = str(value)
            out.append(f"{key} = {text}")
    return "\n".join(out) + "\n"
