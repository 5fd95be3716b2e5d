"""Runners for scene-file computations and the line-oriented report format."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .connections import Connection, chern_character, flatness_residual
from .errors import CWBenchError
from .forms import FormClass, closedness_residual, periods, subset_label
from .transgression import (
    ConnectionPath,
    chern_simons,
    conjugation_transgression,
    nadel_class,
    nadel_flat_closed_form,
    transgression_residual,
)

DEFAULT_TOLERANCES = {
    "flat": 1e-8,
    "transgression": 1e-8,
    "cocycle": 1e-8,
    "expect": 1e-10,
    "closed_form": 1e-8,
    "imaginary": 1e-8,
    "star_intertwining": 1e-10,
    "star_lift": 1e-10,
    "gauss_manin_flat": 1e-8,
}


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


@dataclass
class Check:
    name: str
    value: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value)) and self.value < self.tol


@dataclass
class Result:
    label: str
    op: str
    inputs: List[Tuple[str, Any]] = field(default_factory=list)
    values: List[Tuple[str, Any]] = field(default_factory=list)
    checks: List[Check] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    error: Optional[str] = None
    seconds: float = 0.0

    def passed(self, strict: bool = False) -> bool:
        if self.error is not None:
            return False
        if strict and self.warnings:
            return False
        return all(c.passed for c in self.checks)


@dataclass
class Report:
    scenario: str
    seed: int
    grid_scale: int
    results: List[Result]
    strict: bool = False

    @property
    def passed(self) -> bool:
        return all(r.passed(self.strict) for r in self.results)


def format_number(v) -> str:
    """Floats with 17 significant digits; complex numbers as ``re+imi``."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (complex, np.complexfloating)):
        z = complex(v)
        return f"{_f(z.real)}{'+' if not str(_f(z.imag)).startswith('-') else ''}{_f(z.imag)}i"
    if isinstance(v, (float, np.floating)):
        return _f(float(v))
    return str(v)


def _f(x: float) -> str:
    x = 0.0 if x == 0 else x  # no negative zero in reports
    return f"{x:.16e}"


def render(report: Report, timing: bool = False) -> str:
    lines = [
        f"scenario = {report.scenario}",
        f"seed = {report.seed}",
        f"grid_scale = {report.grid_scale}",
        f"status = {'pass' if report.passed else 'fail'}",
    ]
    for r in report.results:
        lines.append("")
        lines.append(f"[{r.label}]")
        lines.append(f"op = {r.op}")
        for k, v in r.inputs:
            lines.append(f"input.{k} = {format_number(v)}")
        for k, v in r.values:
            lines.append(f"{k} = {format_number(v)}")
        for c in r.checks:
            lines.append(f"check.{c.name} = {format_number(c.value)}")
            lines.append(f"check.{c.name}.tol = {format_number(c.tol)}")
            lines.append(f"check.{c.name}.result = {'pass' if c.passed else 'fail'}")
        for i, w in enumerate(r.warnings):
            lines.append(f"warning.{i + 1} = {w}")
        if r.error is not None:
            lines.append(f"error = {r.error}")
        lines.append(f"result = {'pass' if r.passed(report.strict) else 'fail'}")
        if timing:
            lines.append(f"wall_time = {r.seconds:.3f}")
    lines.append("")
    lines.append("== summary ==")
    rows = [("computation", "check", "value", "tol", "result")]
    for r in report.results:
        if r.error is not None:
            rows.append((r.label, "error", "-", "-", "fail"))
        for c in r.checks:
            rows.append((r.label, c.name, f"{c.value:.3e}", f"{c.tol:.0e}", "pass" if c.passed else "fail"))
        for w in r.warnings:
            rows.append((r.label, "warning", "-", "-", "fail" if report.strict else "warn"))
    widths = [max(len(row[i]) for row in rows) for i in range(5)]
    for row in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    n_checks = sum(len(r.checks) for r in report.results)
    n_fail = sum(1 for r in report.results for c in r.checks if not c.passed) + sum(
        1 for r in report.results if r.error is not None
    )
    n_warn = sum(len(r.warnings) for r in report.results)
    lines.append(f"{n_checks} checks, {n_fail} failed, {n_warn} warnings: {'PASS' if report.passed else 'FAIL'}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OpSpec:
    runner: Callable
    params: Tuple[str, ...]
    bundle_params: Tuple[str, ...] = ()
    required: Tuple[str, ...] = ()
    needs_fibration: bool = False
    description: str = ""


class Context:
    """Everything a runner needs: connections, tolerances, RNG and grid scale."""

    def __init__(self, scenario, seed: int, grid_scale: int, index: int):
        from .scenario import build_connection

        self.scenario = scenario
        self.seed = seed
        self.grid_scale = grid_scale
        self.chart = scenario.chart(grid_scale)
        self.rng = np.random.default_rng([seed, index])
        self._conns: Dict[str, Connection] = {}
        self._build = build_connection

    def connection(self, name: str) -> Connection:
        if name not in self._conns:
            spec = self.scenario.bundles[name]
            # each bundle draws from its own stream so results do not depend on use order
            names = sorted(self.scenario.bundles)
            rng = np.random.default_rng([self.seed, 1000 + names.index(name)])
            self._conns[name] = self._build(spec, self.chart, rng)
        return self._conns[name]

    def tol(self, check: str) -> float:
        for key in (check, check.split(".")[0]):
            if key in self.scenario.tolerances:
                return self.scenario.tolerances[key]
        return DEFAULT_TOLERANCES[check.split(".")[0]]

    def check(self, res: Result, name: str, value: float):
        res.checks.append(Check(name, float(value), self.tol(name)))


def _class_values(res: Result, prefix: str, cls: FormClass):
    for S in cls.keys():
        v = np.asarray(cls.periods[S])
        if v.shape == (1, 1):
            res.values.append((f"{prefix}.{subset_label(S)}", complex(v[0, 0])))
        else:
            for (i, j), z in np.ndenumerate(v):
                res.values.append((f"{prefix}.{subset_label(S)}[{i},{j}]", complex(z)))


def run_chern_character(ctx: Context, res: Result, p):
    c = ctx.connection(p["bundle"])
    form = chern_character(c)
    _class_values(res, "period", periods(form))
    if p.get("check_closed", True):
        ctx.check(res, "closed_form", closedness_residual(form))


def run_flatness(ctx: Context, res: Result, p):
    ctx.check(res, "flat", flatness_residual(ctx.connection(p["bundle"])))


def _random_connection(ctx: Context, rank: int, band: int, amp: float) -> Connection:
    from .forms import random_trig_poly

    ch = ctx.chart
    return Connection.from_arrays(ch, {i: random_trig_poly(ch, ctx.rng, band, (rank, rank), amp) for i in range(ch.dim)}, rank=rank)


def run_transgression_identity(ctx: Context, res: Result, p):
    pairs = []
    if "E0" in p:
        pairs.append((ctx.connection(p["E0"]), ctx.connection(p["E1"])))
    for _ in range(int(p.get("random_pairs", 0))):
        r = int(p.get("rank", 2))
        pairs.append((_random_connection(ctx, r, 1, 0.3), _random_connection(ctx, r, 1, 0.3)))
    if not pairs:
        raise CWBenchError("transgression_identity needs E0/E1 or random_pairs")
    worst = max(transgression_residual(ConnectionPath.linear(a, b)) for a, b in pairs)
    res.values.append(("pairs", len(pairs)))
    ctx.check(res, "transgression", worst)


def run_cocycle(ctx: Context, res: Result, p):
    c0, c1, c2 = (ctx.connection(p[k]) for k in ("E0", "E1", "E2"))
    total = chern_simons(c0, c1) + chern_simons(c1, c2) - chern_simons(c0, c2)
    ctx.check(res, "cocycle", periods(total).max_abs())


def _isomorphism(ctx: Context, p, rank: int) -> np.ndarray:
    from .scenario import _field

    ch = ctx.chart
    f = p.get("f", "identity")
    eye = np.broadcast_to(np.eye(rank, dtype=complex), ch.shape + (rank, rank)).copy()
    if f == "identity":
        return eye
    from .scenario import Term

    terms = [Term((), tuple(t[1]) + (0,) * (ch.dim - len(t[1])), np.asarray(t[2], dtype=complex) * (np.eye(rank) if np.ndim(t[2]) == 0 else 1)) for t in f]
    out = np.zeros(ch.shape + (rank, rank), dtype=complex)
    for A in _field(ch, terms, rank).values():
        out = out + A
    return out


@dataclass
class _Gen:
    E: Connection
    F: Connection
    f: np.ndarray
    sign: int = 1


def run_nadel_class(ctx: Context, res: Result, p):
    E, F = ctx.connection(p["E"]), ctx.connection(p["F"])
    f = _isomorphism(ctx, p, E.rank)
    cls = nadel_class(_Gen(E, F, f))
    _class_values(res, "period", cls)
    for label, want in (p.get("expect") or {}).items():
        from .scenario import _complex

        target = _complex(want, p["expect"], label, ctx.scenario.path)
        S = _label_subset(label)
        ctx.check(res, f"expect.{label}", abs(cls.get(S) - target))
    if p.get("f", "identity") == "identity":
        omega = F.coeff - E.coeff
        closed = periods(nadel_flat_closed_form(omega))
        ctx.check(res, "closed_form", (closed - cls).max_abs())


def _label_subset(label: str) -> Tuple[int, ...]:
    if label in ("1", ""):
        return ()
    parts = label.split("^")
    try:
        return tuple(int(s[2:]) - 1 for s in parts)
    except ValueError:
        raise CWBenchError(f"bad period label {label!r} (expected e.g. dx1 or dx1^dx2)") from None


def run_conjugation_class(ctx: Context, res: Result, p):
    c = ctx.connection(p["bundle"])
    if c.metric is None:
        c = c.with_metric(c.metric_or_identity())
    form = conjugation_transgression(c)
    cls = periods(form)
    _class_values(res, "period", cls)
    ctx.check(res, "imaginary", cls.max_real())
    if closedness_residual(form) > 1e-8:
        res.warnings.append("transgression form is not closed; periods are constant modes")


def _fibration(ctx: Context):
    from .families.vertical import TorusFibration

    sc = ctx.scenario
    return TorusFibration(sc.base_chart(ctx.grid_scale), sc.fiber_dim, sc.fiber_grid * ctx.grid_scale)


def run_fibral_identities(ctx: Context, res: Result, p):
    from .families.vertical import build_vertical_complex, star_intertwining_residual, star_lift_residual

    fib = _fibration(ctx)
    vc = build_vertical_complex(fib, ctx.connection(p["bundle"]), int(p.get("K", 4)))
    sections = ctx.rng.standard_normal((fib.nbase, vc.N, 2)) + 1j * ctx.rng.standard_normal((fib.nbase, vc.N, 2))
    res.values.append(("truncated_dim", vc.N))
    ctx.check(res, "star_intertwining", star_intertwining_residual(vc))
    ctx.check(res, "star_lift", star_lift_residual(vc, sections))


def run_direct_image_flat(ctx: Context, res: Result, p):
    from .families.kernels import direct_image_flat

    fib = _fibration(ctx)
    di = direct_image_flat(fib, ctx.connection(p["bundle"]), int(p.get("K", 4)))
    hp, hm = di.dims
    res.values.append(("rank.plus", hp))
    res.values.append(("rank.minus", hm))
    worst = 0.0
    for c, sign in di.as_list():
        worst = max(worst, flatness_residual(c))
        tag = "plus" if sign > 0 else "minus"
        _class_values(res, f"chern.{tag}", periods(chern_character(c)))
    ctx.check(res, "gauss_manin_flat", worst)


OPERATIONS: Dict[str, OpSpec] = {
    "chern_character": OpSpec(run_chern_character, ("bundle", "check_closed"), ("bundle",), ("bundle",), description="periods of ch(∇)"),
    "flatness": OpSpec(run_flatness, ("bundle",), ("bundle",), ("bundle",), description="curvature sup-norm"),
    "transgression_identity": OpSpec(
        run_transgression_identity, ("E0", "E1", "random_pairs", "rank"), ("E0", "E1"), description="d ch̃ = ch₁ − ch₀"
    ),
    "cocycle": OpSpec(run_cocycle, ("E0", "E1", "E2"), ("E0", "E1", "E2"), ("E0", "E1", "E2"), description="ch̃ cocycle in cohomology"),
    "nadel_class": OpSpec(run_nadel_class, ("E", "F", "f", "expect"), ("E", "F"), ("E", "F"), description="class of ch̃(∇_E, f*∇_F)"),
    "conjugation_class": OpSpec(run_conjugation_class, ("bundle",), ("bundle",), ("bundle",), description="class of ch̃(∇*, ∇)"),
    "fibral_identities": OpSpec(
        run_fibral_identities, ("bundle", "K"), ("bundle",), ("bundle",), True, "Hodge-star intertwining on the truncated complex"
    ),
    "direct_image_flat": OpSpec(
        run_direct_image_flat, ("bundle", "K"), ("bundle",), ("bundle",), True, "fibral cohomology with Gauss–Manin connections"
    ),
}


def _inputs(p) -> List[Tuple[str, Any]]:
    out = []
    for k in sorted(p):
        v = p[k]
        if isinstance(v, (str, int, float)) and not isinstance(v, bool):
            out.append((k, v))
    return out


def run(scenario, seed: int | None = None, grid_scale: int = 1, strict: bool = False) -> Report:
    """Run every computation of a scenario; module errors become failed results."""
    seed = scenario.seed if seed is None else seed
    results = []
    for i, comp in enumerate(scenario.computations):
        ctx = Context(scenario, seed, grid_scale, i)
        res = Result(comp.label, comp.op, _inputs(comp.params))
        t0 = time.perf_counter()
        try:
            OPERATIONS[comp.op].runner(ctx, res, comp.params)
        except CWBenchError as e:
            line, col = comp.position
            res.error = f"{type(e).__name__} in computation at line {line}, column {col}: {e}"
        res.seconds = time.perf_counter() - t0
        results.append(res)
    return Report(scenario.name, seed, grid_scale, results, strict)
