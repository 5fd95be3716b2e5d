"""Scene files: a small YAML dialect describing charts, bundles and requested checks.

Example::

    name: flat_line_nadel
    description: Nadel period of (C, d, C, d + i θ dx, id) on the circle
    seed: 0
    chart:
      grid: [64]
    bundles:
      E: {rank: 1}
      F:
        rank: 1
        connection:
          - [[0], [0], 0.3j]        # (coordinate subset, Fourier index, coefficient)
    computations:
      - op: nadel_class
        E: E
        F: F
        expect: {dx1: -0.047746482927568600}

A coefficient is a number, a string such as ``"0.1-0.2j"``, a pair
``[re, im]`` or a matrix of those; a scalar multiplies the identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import yaml

from .connections import Connection
from .errors import CWBenchError
from .forms import TorusChart, random_trig_poly


class ParseError(CWBenchError):
    """Malformed scene file; carries the 1-based line and column of the problem."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None, path: str | None = None):
        self.message, self.line, self.column, self.path = message, line, column, path
        where = ""
        if line is not None:
            where = f"{path or '<scene>'}:{line}:{column}: "
        super().__init__(where + message)


# ---------------------------------------------------------------------------
# YAML with source positions
# ---------------------------------------------------------------------------


class MarkedDict(dict):
    marks: Dict[str, Tuple[int, int]]
    start: Tuple[int, int]


class MarkedList(list):
    marks: List[Tuple[int, int]]
    start: Tuple[int, int]


def _pos(node) -> Tuple[int, int]:
    return node.start_mark.line + 1, node.start_mark.column + 1


class _Loader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    out = MarkedDict()
    out.marks = {}
    out.start = _pos(node)
    for knode, vnode in node.value:
        key = loader.construct_object(knode, deep=True)
        if key in out:
            raise ParseError(f"duplicate key {key!r}", *_pos(knode))
        out[key] = loader.construct_object(vnode, deep=True)
        out.marks[key] = _pos(vnode)
    return out


def _construct_sequence(loader, node):
    out = MarkedList(loader.construct_object(v, deep=True) for v in node.value)
    out.marks = [_pos(v) for v in node.value]
    out.start = _pos(node)
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)
_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_SEQUENCE_TAG, _construct_sequence)


def load_yaml(text: str, path: str | None = None):
    try:
        return yaml.load(text, Loader=_Loader)
    except ParseError as e:
        e.path = path
        raise ParseError(e.message, e.line, e.column, path) from None
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark or e.context_mark
        line, col = (mark.line + 1, mark.column + 1) if mark is not None else (None, None)
        raise ParseError(str(e.problem or e.context or "invalid YAML"), line, col, path) from None


# ---------------------------------------------------------------------------
# Scenario model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Term:
    subset: Tuple[int, ...]
    mode: Tuple[int, ...]
    coefficient: np.ndarray  # (r, r)


@dataclass(frozen=True)
class BundleSpec:
    name: str
    rank: int
    connection: Tuple[Term, ...] = ()
    metric: Tuple[Term, ...] = ()
    random: Optional[Dict[str, float]] = None


@dataclass(frozen=True)
class Computation:
    op: str
    label: str
    params: Dict[str, Any]
    position: Tuple[int, int]


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    seed: int
    grid: Tuple[int, ...]
    fiber_dim: int
    fiber_grid: int
    bundles: Dict[str, BundleSpec]
    computations: Tuple[Computation, ...]
    tolerances: Dict[str, float]
    path: Optional[str] = None

    @property
    def fibered(self) -> bool:
        return self.fiber_dim > 0

    def base_chart(self, grid_scale: int = 1) -> TorusChart:
        return TorusChart(tuple(n * grid_scale for n in self.grid))

    def chart(self, grid_scale: int = 1) -> TorusChart:
        """Chart of the total space (base followed by fiber coordinates)."""
        return TorusChart(tuple(n * grid_scale for n in self.grid) + (self.fiber_grid * grid_scale,) * self.fiber_dim)


_TOP_KEYS = {"name", "description", "seed", "chart", "fibration", "bundles", "computations", "tolerances"}


def _fail(msg: str, container, key, path):
    pos = None
    if isinstance(container, MarkedDict):
        pos = container.marks.get(key, container.start)
    elif isinstance(container, MarkedList):
        pos = container.marks[key] if isinstance(key, int) and key < len(container.marks) else container.start
    line, col = pos if pos else (None, None)
    raise ParseError(msg, line, col, path)


def _complex(v, container, key, path) -> complex:
    try:
        if isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(x, (int, float)) for x in v):
            return complex(float(v[0]), float(v[1]))
        if isinstance(v, bool):
            raise TypeError
        if isinstance(v, str):
            return complex(v.replace(" ", "").replace("i", "j"))
        return complex(v)
    except (TypeError, ValueError):
        _fail(f"cannot read {v!r} as a complex number", container, key, path)


def _coefficient(v, rank: int, container, key, path) -> np.ndarray:
    if isinstance(v, list) and v and isinstance(v[0], list) and not (
        len(v) == 2 and all(isinstance(x, (int, float)) for x in v)
    ):
        if len(v) != rank or any(not isinstance(row, list) or len(row) != rank for row in v):
            _fail(f"coefficient matrix must be {rank}x{rank}", container, key, path)
        return np.array([[_complex(x, row, j, path) for j, x in enumerate(row)] for row in v], dtype=complex)
    return _complex(v, container, key, path) * np.eye(rank, dtype=complex)


def _terms(raw, rank: int, dim: int, degree: int, container, key, path) -> Tuple[Term, ...]:
    if raw is None:
        return ()
    if not isinstance(raw, list):
        _fail("expected a list of [subset, mode, coefficient] triples", container, key, path)
    out = []
    for i, t in enumerate(raw):
        if not isinstance(t, list) or len(t) != 3:
            _fail("each term is a triple [subset, mode, coefficient]", raw, i, path)
        subset, mode, coef = t
        if not isinstance(subset, list) or any(not isinstance(a, int) or not 0 <= a < dim for a in subset):
            _fail(f"subset must list coordinate indices in 0..{dim - 1}", t, 0, path)
        if len(subset) != degree:
            _fail(f"subset must have exactly {degree} coordinate(s)", t, 0, path)
        if not isinstance(mode, list) or len(mode) > dim or any(not isinstance(k, int) for k in mode):
            _fail(f"mode must be a list of at most {dim} integers", t, 1, path)
        out.append(Term(tuple(subset), tuple(mode) + (0,) * (dim - len(mode)), _coefficient(coef, rank, t, 2, path)))
    return tuple(out)


def parse_scenario(text: str, path: str | None = None) -> Scenario:
    doc = load_yaml(text, path)
    if not isinstance(doc, MarkedDict):
        raise ParseError("scene file must be a mapping", 1, 1, path)
    for k in doc:
        if k not in _TOP_KEYS:
            _fail(f"unknown top-level key {k!r}", doc, k, path)
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        _fail("missing scenario name", doc, "name", path)
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        _fail("seed must be a non-negative integer", doc, "seed", path)
    if ("chart" in doc) == ("fibration" in doc):
        _fail("give exactly one of 'chart' or 'fibration'", doc, "name", path)
    if "chart" in doc:
        ch = doc["chart"]
        grid = ch.get("grid") if isinstance(ch, dict) else None
        if not isinstance(grid, list) or not 1 <= len(grid) <= 4 or any(not isinstance(n, int) or n < 4 for n in grid):
            _fail("chart.grid must list 1 to 4 grid sizes >= 4", doc, "chart", path)
        fiber_dim, fiber_grid = 0, 0
    else:
        fb = doc["fibration"]
        if not isinstance(fb, dict):
            _fail("fibration must be a mapping", doc, "fibration", path)
        grid = fb.get("base_grid")
        fiber_dim = fb.get("fiber_dim")
        fiber_grid = fb.get("fiber_grid", 16)
        if not isinstance(grid, list) or len(grid) not in (1, 2) or any(not isinstance(n, int) or n < 4 for n in grid):
            _fail("fibration.base_grid must list 1 or 2 grid sizes >= 4", fb, "base_grid", path)
        if fiber_dim not in (1, 2):
            _fail("fibration.fiber_dim must be 1 or 2", fb, "fiber_dim", path)
        if not isinstance(fiber_grid, int) or fiber_grid < 4:
            _fail("fibration.fiber_grid must be an integer >= 4", fb, "fiber_grid", path)
    dim = len(grid) + fiber_dim
    bundles: Dict[str, BundleSpec] = {}
    raw_b = doc.get("bundles", MarkedDict())
    if not isinstance(raw_b, dict):
        _fail("bundles must be a mapping", doc, "bundles", path)
    for bname, spec in raw_b.items():
        if not isinstance(spec, dict):
            _fail(f"bundle {bname!r} must be a mapping", raw_b, bname, path)
        for k in spec:
            if k not in ("rank", "connection", "metric", "random"):
                _fail(f"unknown bundle key {k!r}", spec, k, path)
        rank = spec.get("rank", 1)
        if not isinstance(rank, int) or not 1 <= rank <= 4:
            _fail("rank must be an integer in 1..4", spec, "rank", path)
        conn = _terms(spec.get("connection"), rank, dim, 1, spec, "connection", path)
        metric = _terms(spec.get("metric"), rank, dim, 0, spec, "metric", path)
        rnd = spec.get("random")
        if rnd is not None:
            if not isinstance(rnd, dict) or any(k not in ("band", "amplitude") for k in rnd):
                _fail("random must be a mapping with 'band' and/or 'amplitude'", spec, "random", path)
            rnd = {"band": int(rnd.get("band", 1)), "amplitude": float(rnd.get("amplitude", 0.3))}
        bundles[str(bname)] = BundleSpec(str(bname), rank, conn, metric, rnd)
    comps = []
    raw_c = doc.get("computations")
    if not isinstance(raw_c, list) or not raw_c:
        _fail("computations must be a non-empty list", doc, "computations", path)
    from .report import OPERATIONS  # late import: the registry lives next to the runners

    labels = set()
    for i, c in enumerate(raw_c):
        if not isinstance(c, dict) or "op" not in c:
            _fail("each computation needs an 'op'", raw_c, i, path)
        op = c["op"]
        if op not in OPERATIONS:
            _fail(f"unknown operation {op!r}", c, "op", path)
        label = str(c.get("label", f"{op}_{i + 1}"))
        if label in labels:
            _fail(f"duplicate computation label {label!r}", c, "label", path)
        labels.add(label)
        params = {k: v for k, v in c.items() if k not in ("op", "label")}
        spec = OPERATIONS[op]
        for k in params:
            if k not in spec.params:
                _fail(f"operation {op!r} does not take {k!r}", c, k, path)
        for k in spec.bundle_params:
            if k in params and params[k] not in bundles:
                _fail(f"unknown bundle {params[k]!r}", c, k, path)
        for k in spec.required:
            if k not in params:
                _fail(f"operation {op!r} needs {k!r}", c, "op", path)
        if spec.needs_fibration and not fiber_dim:
            _fail(f"operation {op!r} needs a fibration", c, "op", path)
        comps.append(Computation(op, label, params, raw_c.marks[i]))
    tol = doc.get("tolerances", {})
    if not isinstance(tol, dict) or any(not isinstance(v, (int, float)) or v <= 0 for v in tol.values()):
        _fail("tolerances must map check names to positive numbers", doc, "tolerances", path)
    return Scenario(
        name,
        str(doc.get("description", "")),
        seed,
        tuple(grid),
        fiber_dim,
        fiber_grid,
        bundles,
        tuple(comps),
        {str(k): float(v) for k, v in tol.items()},
        path,
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ParseError(f"cannot read scene file: {e.strerror}", path=str(path)) from None
    return parse_scenario(text, str(path))


# ---------------------------------------------------------------------------
# Building connections
# ---------------------------------------------------------------------------


def _field(chart: TorusChart, terms, rank: int) -> Dict[Tuple[int, ...], np.ndarray]:
    X = chart.mesh()
    out: Dict[Tuple[int, ...], np.ndarray] = {}
    for t in terms:
        phase = np.exp(1j * sum(k * x for k, x in zip(t.mode, X)))
        val = phase[..., None, None] * t.coefficient
        out[t.subset] = out.get(t.subset, 0) + val
    return out


def build_connection(spec: BundleSpec, chart: TorusChart, rng: np.random.Generator) -> Connection:
    """Connection (with metric if given) of a bundle spec on ``chart``."""
    r = spec.rank
    comps = {S[0]: A for S, A in _field(chart, spec.connection, r).items()}
    if spec.random is not None:
        for i in range(chart.dim):
            extra = random_trig_poly(chart, rng, spec.random["band"], (r, r), spec.random["amplitude"])
            comps[i] = comps.get(i, 0) + extra
    metric = None
    if spec.metric:
        metric = np.broadcast_to(np.eye(r, dtype=complex), chart.shape + (r, r)).copy()
        for A in _field(chart, spec.metric, r).values():
            metric = metric + A
    if not comps:
        return Connection.trivial(chart, r, metric)
    return Connection.from_arrays(chart, comps, rank=r, metric=metric)
