"""Problem files: validated JSON describing one run."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError, field_validator, model_validator

from .expr import ExpressionError, compile_expr
from .hammerstein import THEOREMS, KernelSpec, NonlinearitySpec, PreconditionError, _order_check
from .philap import PhiProblem, PhiSpec

Pair = tuple[float, float]


class SpecError(ValueError):
    """Every problem found while loading a problem file."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _compile(source: str, variables: tuple[str, ...]) -> str:
    try:
        compile_expr(source, variables)
    except ExpressionError as exc:
        raise ValueError(str(exc)) from None
    return source


class KernelModel(_Strict):
    kind: Literal["dirichlet", "mixed", "custom"]
    J: Pair = (0.25, 0.75)
    c: float = 0.25
    expr: Optional[str] = Field(default=None, description="G(t, s) for custom kernels")
    majorant: Optional[str] = Field(default=None, description="Phi(s) for custom kernels")

    @model_validator(mode="after")
    def _custom(self):
        if self.kind == "custom":
            if not self.expr or not self.majorant:
                raise ValueError("custom kernels need both 'expr' and 'majorant'")
            _compile(self.expr, ("t", "s"))
            _compile(self.majorant, ("s",))
        self.build()
        return self

    def build(self) -> KernelSpec:
        fn = compile_expr(self.expr, ("t", "s")) if self.kind == "custom" else None
        maj = compile_expr(self.majorant, ("s",)) if self.majorant else None
        return KernelSpec(self.kind, tuple(self.J), self.c, fn, maj)


class HammersteinOptions(_Strict):
    grid: int = Field(257, ge=7)
    constants_grid: int = Field(2049, ge=65)
    box_grid: int = Field(64, ge=8)
    tol: float = Field(1e-9, gt=0)
    max_iter: int = Field(500, ge=1)
    acceleration: Literal["anderson", "picard"] = "anderson"
    init: Optional[Pair] = None


class ScalarCheck(_Strict):
    component: Literal[1, 2]
    sup_bounds: Pair


class HammersteinProblem(_Strict):
    kind: Literal["hammerstein"]
    name: str = ""
    theorem: Literal[THEOREMS]
    kernels: tuple[KernelModel, KernelModel]
    nonlinearities: tuple[str, str] = Field(description="f_j(t, x, y) with x, y the two components")
    r: Pair
    R: Pair
    A: Pair
    B: Pair
    scalar: list[ScalarCheck] = []
    reference_constants: dict[str, float] = Field(default_factory=dict,
                                                  description="printed values to compare against")
    options: HammersteinOptions = HammersteinOptions()

    @field_validator("nonlinearities")
    @classmethod
    def _exprs(cls, v):
        return tuple(_compile(s, ("t", "x", "y")) for s in v)

    @model_validator(mode="after")
    def _ordering(self):
        c = [k.c for k in self.kernels]
        if self.kernels[0].J != self.kernels[1].J:
            raise ValueError("both kernels must share the interval J")
        for j in (0, 1):
            try:
                _order_check(self.theorem, j, self.r, self.R, c)
            except PreconditionError as exc:
                raise ValueError(f"ordering {exc}") from None
        return self

    def build(self):
        kernels = [k.build() for k in self.kernels]
        nls = []
        for j, src in enumerate(self.nonlinearities):
            nls.append(NonlinearitySpec(j, compile_expr(src, ("t", "x", "y")), src))
        return kernels, nls


class PhiModel(_Strict):
    kind: Literal["p-laplacian", "minkowski"]
    p: Optional[float] = None

    @model_validator(mode="after")
    def _p(self):
        if self.kind == "p-laplacian" and (self.p is None or self.p <= 1):
            raise ValueError("p-laplacian needs p > 1")
        if self.kind == "minkowski" and self.p is not None:
            raise ValueError("minkowski takes no p")
        return self

    def build(self) -> PhiSpec:
        return PhiSpec(self.kind, self.p)


class PhilapOptions(_Strict):
    grid: int = Field(513, ge=3)
    box_grid: int = Field(64, ge=8)
    tol: float = Field(1e-10, gt=0)
    max_iter: int = Field(5000, ge=1)
    samples: int = Field(200, ge=1)
    richardson: tuple[int, int, int] = (129, 257, 513)
    acceleration: Literal["anderson", "picard"] = "picard"


class PhilapProblem(_Strict):
    kind: Literal["philap"]
    name: str = ""
    phis: tuple[PhiModel, PhiModel]
    nonlinearities: tuple[str, str] = Field(description="f_j(x, y); parameter names may appear")
    parameters: dict[str, float] = Field(default_factory=dict)
    nondecreasing: bool = False
    r: Optional[Pair] = None
    R: Optional[Pair] = None
    options: PhilapOptions = PhilapOptions()

    @model_validator(mode="after")
    def _check(self):
        names = ("x", "y", *sorted(self.parameters))
        for s in self.nonlinearities:
            _compile(s, names)
        if (self.r is None) != (self.R is None):
            raise ValueError("give both r and R or neither")
        if self.r is not None:
            for j in (0, 1):
                if not 2 * self.r[j] < self.R[j]:
                    raise ValueError(f"ordering component {j + 1}: need 2r < R, got r={self.r[j]:g}, R={self.R[j]:g}")
        return self

    def build(self, n: Optional[int] = None) -> PhiProblem:
        names = sorted(self.parameters)
        vals = [self.parameters[k] for k in names]
        fs = []
        for s in self.nonlinearities:
            e = compile_expr(s, ("x", "y", *names))
            fs.append(lambda x, y, e=e: e(x, y, *vals))
        return PhiProblem(tuple(p.build() for p in self.phis), tuple(fs), n or self.options.grid,
                          self.nondecreasing, tuple(self.nonlinearities))


class PlanarProblem(_Strict):
    kind: Literal["planar-example"]
    name: str = ""
    eps: float = Field(0.1, gt=0)
    n_radii: int = Field(20, ge=1)
    n_angles: int = Field(33, ge=2)
    n_directions: int = Field(257, ge=8)
    seed: int = 0


ProblemSpec = Annotated[Union[HammersteinProblem, PhilapProblem, PlanarProblem], Field(discriminator="kind")]
_ADAPTER = TypeAdapter(ProblemSpec)


def json_schema() -> dict:
    return _ADAPTER.json_schema()


def _format(err: dict) -> str:
    loc = ".".join(str(p) for p in err["loc"])
    return f"{loc or '<root>'}: {err['msg']}"


def parse_spec(text: str, source: str = "<string>"):
    """Validate problem-file text; raises ``SpecError`` listing every problem."""
    if not text.strip():
        raise SpecError([f"{source}: parse error at line 1, column 1: empty file"])
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError([f"{source}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"]) from None
    try:
        return _ADAPTER.validate_python(data)
    except ValidationError as exc:
        raise SpecError([f"{source}: {_format(e)}" for e in exc.errors()]) from None


def bundled(name: str) -> Path:
    """Path of a problem file shipped with the package (``.json`` optional)."""
    fname = name if name.endswith(".json") else name + ".json"
    return Path(str(resources.files("coexist") / "data" / fname))


def bundled_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("coexist").joinpath("data").iterdir()
                  if p.name.endswith(".json"))


def load_spec(path: Union[str, Path]):
    """Read a problem file; bare names fall back to the bundled examples."""
    p = Path(path)
    if not p.exists():
        alt = bundled(str(path))
        if alt.exists():
            p = alt
        else:
            raise SpecError([f"{path}: no such file (bundled: {', '.join(bundled_names())})"])
    try:
        text = p.read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise SpecError([f"{p}: not UTF-8 ({exc.reason} at byte {exc.start})"]) from None
    return parse_spec(text, str(p))
