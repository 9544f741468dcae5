import hashlib
import json
import math
from typing import Any, Dict, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from app.config import settings
from app.errors import ConstantRangeError, DefinitionError, ParseError

# --------------------------------------------------
# PROBLEM DEFINITION
# --------------------------------------------------

class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class Primitive(Strict):
    kind: str
    params: Dict[str, float] = Field(default_factory=dict)


class FieldDef(Strict):
    offset: Primitive
    nonlinearity: Primitive


class Components(Strict):
    g: FieldDef
    f: FieldDef
    k: Primitive
    u: Primitive
    T: Primitive
    Q: Primitive


class Constants(Strict):
    # (A1)
    a: Primitive
    b: float
    a1: Primitive
    b1: float
    # (A2)
    gamma1: Primitive
    rho1: float
    phi: Primitive
    m: float
    gamma2: Primitive
    rho2: float
    psi: Primitive
    M: float
    # (A3): strict constant of the separate-contraction witness
    kappa: Optional[float] = None
    # (A5)
    alpha: Primitive
    beta: float
    gamma_mod: Primitive
    lambda_: float = Field(alias="lambda")
    h: Primitive
    # (A6): declared exact value, estimated numerically when absent
    kernel_norm: Optional[float] = None


class Numerics(Strict):
    t_max: float = Field(default_factory=lambda: settings.T_MAX, gt=0)
    cells: int = Field(default_factory=lambda: settings.CELLS, ge=2)
    grid: Literal["geometric", "uniform"] = Field(default_factory=lambda: settings.GRID)
    grid_scale: float = Field(default_factory=lambda: settings.GRID_SCALE, gt=0)


class ProblemDefinition(Strict):
    version: Literal[1] = 1
    name: str
    description: str = ""
    components: Components
    constants: Constants
    numerics: Numerics = Field(default_factory=Numerics)


# (name, assumption label, constraint text, strictly positive?)
_RANGES = (
    ("b", "(A1)", "|g(t,x)| <= a(t) + b|x| needs b >= 0", False),
    ("b1", "(A1)", "|f(t,x)| <= a1(t) + b1|x| needs b1 >= 0", False),
    ("rho1", "(A2)", "|(Tx)(t)| <= gamma1(t) + rho1|x(phi(t))| needs rho1 >= 0", False),
    ("rho2", "(A2)", "|(Qx)(t)| <= gamma2(t) + rho2|x(psi(t))| needs rho2 >= 0", False),
    ("m", "(A2)", "phi'(t) >= m needs m > 0", True),
    ("M", "(A2)", "psi'(t) >= M needs M > 0", True),
    ("beta", "(A5)", "|u(t,s,x)| <= alpha(s) + beta|x| needs beta >= 0", False),
    ("lambda_", "(A5)", "modulus h(d)[gamma(s) + lambda|x|] needs lambda >= 0", False),
)


def check_ranges(definition: ProblemDefinition) -> None:
    """Raise ConstantRangeError for the first constant outside its (A.) range."""
    constants = definition.constants
    for name, label, constraint, strict in _RANGES:
        value = getattr(constants, name)
        ok = math.isfinite(value) and (value > 0 if strict else value >= 0)
        if not ok:
            raise ConstantRangeError(name.rstrip("_"), value, label, constraint)
    norm = constants.kernel_norm
    if norm is not None and not (math.isfinite(norm) and norm >= 0):
        raise ConstantRangeError("kernel_norm", norm, "(A6)", "||K|| must be a finite nonnegative number")
    kappa = constants.kappa
    if kappa is not None and not 0.0 < kappa < 1.0:
        raise ConstantRangeError("kappa", kappa, "(A3)", "strict contraction constant must lie in (0, 1)")


def parse_definition(text: str) -> ProblemDefinition:
    if not text.strip():
        raise ParseError("Problem definition is empty", line=1, column=1)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as je:
        raise ParseError(f"Invalid JSON: {je.msg}", line=je.lineno, column=je.colno)
    if not isinstance(raw, dict):
        raise ParseError("Problem definition must be a JSON object", line=1, column=1)
    try:
        definition = ProblemDefinition.model_validate(raw)
    except ValidationError as ve:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in ve.errors()
        )
        raise DefinitionError(f"{ve.error_count()} problem(s) in definition: {problems}")
    check_ranges(definition)
    return definition


def emit_definition(definition: ProblemDefinition) -> str:
    return json.dumps(definition.model_dump(mode="json", by_alias=True), indent=2, sort_keys=True) + "\n"


# --------------------------------------------------
# SOLVE CONFIG
# --------------------------------------------------

class SolveConfig(Strict):
    scheme: Literal["picard", "split"] = "picard"
    tol: float = Field(1e-6, gt=0)
    max_iters: int = Field(200, ge=1)
    damping: float = Field(1.0, gt=0, le=1)
    inner_tol: float = Field(1e-10, gt=0)
    inner_max_iters: int = Field(200, ge=1)
    project_to_ball: Optional[float] = Field(None, gt=0)
    max_halvings: int = Field(6, ge=0)
    refinement_check: bool = True


# --------------------------------------------------
# REPORTS
# --------------------------------------------------

def canonical_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(payload: Any) -> str:
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


class Provenance(Strict):
    tool_version: str
    seed: Optional[int] = None
    config_hash: str
    elapsed_s: float = 0.0


class Report(Strict):
    kind: Literal["certificate", "solve", "measure"]
    payload: Dict[str, Any]
    provenance: Provenance

    def to_json(self) -> str:
        return canonical_json(self.model_dump(mode="json"))

    @classmethod
    def from_json(cls, text: str) -> "Report":
        return cls.model_validate_json(text)
