"""
Parametric boundary charts.

A BoundaryChart is the curve phi(t) describing the boundary of the domain.
Builtin charts are built from jet expressions so value, tangent and second
derivative all come from a single formula.

Key functions:
- eval_chart(chart, t, order)      - phi(t), optionally with phi'(t)
- project_to_boundary(chart, x)    - nearest point on the curve (Newton + golden section)
- make_builtin_chart(name)         - "circle" or "three_leaf"
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from . import jets
from .errors import ChartError, ProjectionError

logger = logging.getLogger(__name__)

PROJECTION_MAX_NEWTON = 50
PROJECTION_MAX_GOLDEN = 200
SCAN_SAMPLES = 2048
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ChartSegment:
    param_range: Tuple[float, float]
    eval: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    second_derivative: Optional[Callable[[np.ndarray], np.ndarray]] = None


@dataclass(frozen=True)
class BoundaryChart:
    name: str
    segments: List[ChartSegment]
    closed: bool
    period: float
    _scan: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def start(self) -> float:
        return self.segments[0].param_range[0]

    @property
    def end(self) -> float:
        return self.segments[-1].param_range[1]

    def reduce(self, t):
        """Reduce parameters modulo the period (closed) or validate the range (open)."""
        t = np.asarray(t, dtype=float)
        if self.closed:
            return self.start + np.mod(t - self.start, self.period)
        if np.any(t < self.start - 1e-14) or np.any(t > self.end + 1e-14):
            raise ChartError(f"parameter outside [{self.start}, {self.end}] for open chart '{self.name}'")
        return np.clip(t, self.start, self.end)

    def _pieces(self, t):
        """Index of the segment owning each (already reduced) parameter."""
        edges = np.array([s.param_range[1] for s in self.segments[:-1]])
        return np.searchsorted(edges, t, side="right")

    def _dispatch(self, t, attr):
        t = self.reduce(t)
        scalar = t.ndim == 0
        tt = np.atleast_1d(t)
        out = np.empty(tt.shape + (2,))
        idx = self._pieces(tt)
        for i, seg in enumerate(self.segments):
            mask = idx == i
            if np.any(mask):
                fn = getattr(seg, attr)
                if fn is None:
                    raise ChartError(f"chart '{self.name}' has no {attr}")
                out[mask] = fn(tt[mask])
        return out[0] if scalar else out

    def point(self, t):
        return self._dispatch(t, "eval")

    def tangent(self, t):
        return self._dispatch(t, "derivative")

    def curvature_vector(self, t):
        return self._dispatch(t, "second_derivative")

    def samples(self):
        """Dense (t, phi(t)) table used to seed projections without a hint."""
        if "t" not in self._scan:
            t = np.linspace(self.start, self.end, SCAN_SAMPLES, endpoint=not self.closed)
            self._scan["t"] = t
            self._scan["x"] = self.point(t)
        return self._scan["t"], self._scan["x"]

    def param_of_sample(self, x) -> float:
        t, pts = self.samples()
        d = np.sum((pts - np.asarray(x, dtype=float)) ** 2, axis=1)
        return float(t[np.argmin(d)])

    def unwrap(self, t0: float, t1: float) -> float:
        """Representative of t1 closest to t0, so [t0, t1] is the short arc."""
        if not self.closed:
            return t1
        d = (t1 - t0 + 0.5 * self.period) % self.period - 0.5 * self.period
        return t0 + d


@dataclass(frozen=True)
class ChartPoint:
    t: float
    x: np.ndarray


def eval_chart(chart: BoundaryChart, t, order: int = 0):
    """phi(t), or (phi(t), phi'(t)) when order == 1."""
    if order not in (0, 1):
        raise ChartError(f"chart evaluation order must be 0 or 1, got {order}")
    if order == 0:
        return chart.point(t)
    return chart.point(t), chart.tangent(t)


def _gradient_residual(chart, t, x):
    p, dp = chart.point(t), chart.tangent(t)
    return float(np.dot(p - x, dp)), float(np.dot(dp, dp))


def _newton(chart, x, t):
    """Newton on g(t) = (phi(t) - x) . phi'(t). Returns (t, converged)."""
    for _ in range(PROJECTION_MAX_NEWTON):
        p, dp, ddp = chart.point(t), chart.tangent(t), chart.curvature_vector(t)
        g = float(np.dot(p - x, dp))
        dd = float(np.dot(dp, dp))
        if abs(g) <= 1e-12 * dd:
            return t, True
        dg = dd + float(np.dot(p - x, ddp))
        if dg <= 0.0:
            return t, False
        step = g / dg
        if abs(step) > 0.25 * chart.period:
            return t, False
        t = t - step
        if not chart.closed:
            t = float(np.clip(t, chart.start, chart.end))
    g, dd = _gradient_residual(chart, t, x)
    return t, abs(g) <= 1e-12 * dd


def _golden(chart, x, a, b):
    """Golden-section minimisation of |phi(t) - x|^2 on [a, b]."""
    def f(t):
        return float(np.sum((chart.point(t) - x) ** 2))

    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(PROJECTION_MAX_GOLDEN):
        if abs(b - a) < 1e-14:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def project_to_boundary(chart: BoundaryChart, x, hint: Optional[float] = None) -> ChartPoint:
    """Parameter of the point of the chart nearest to x.

    Newton on the normal equation from `hint` (or from the nearest dense
    sample); golden section on a bracketing window when Newton stalls.
    """
    x = np.asarray(x, dtype=float)
    t0 = chart.param_of_sample(x) if hint is None else float(hint)
    if chart.closed:
        t0 = float(chart.reduce(t0))

    t, ok = _newton(chart, x, t0)
    if not ok:
        width = 4.0 * chart.period / SCAN_SAMPLES if hint is None else 0.1 * chart.period
        logger.warning(f"Newton projection stalled near t={t0:.6f} on '{chart.name}', falling back to golden section")
        lo, hi = t0 - width, t0 + width
        if not chart.closed:
            lo, hi = max(lo, chart.start), min(hi, chart.end)
        t = _golden(chart, x, lo, hi)
        t, ok = _newton(chart, x, t)
    if chart.closed:
        t = float(chart.reduce(t))
    best = ChartPoint(t, chart.point(t))
    if not ok:
        g, dd = _gradient_residual(chart, t, x)
        raise ProjectionError(
            f"projection onto '{chart.name}' did not converge (residual {abs(g):.3e})",
            best=best, residual=abs(g),
        )
    return best


# ============================================================================
# BUILTIN CHARTS
# ============================================================================

def chart_from_expression(name: str, expr, period: float = 2.0 * math.pi) -> BoundaryChart:
    """Closed chart on [0, period) from a jet expression t -> (x(t), y(t))."""

    def _eval_jets(t):
        tj = jets.Jet.variable(t, 0, 1)
        return expr(tj)

    def _value(t):
        x, y = _eval_jets(t)
        return np.stack([x.val, y.val], axis=-1)

    def _first(t):
        x, y = _eval_jets(t)
        return np.stack([x.grad[0], y.grad[0]], axis=-1)

    def _second(t):
        x, y = _eval_jets(t)
        return np.stack([x.hess[0, 0], y.hess[0, 0]], axis=-1)

    seg = ChartSegment((0.0, period), _value, _first, _second)
    return BoundaryChart(name, [seg], closed=True, period=period)


def _circle(t):
    return jets.cos(t), jets.sin(t)


def _three_leaf(t):
    c3 = jets.cos(3 * t)
    x = (1.0 + 0.4 * c3) * jets.cos(t)
    y = (1.0 + (0.4 + 0.22 * jets.sin(t)) * c3) * jets.sin(t)
    return x, y


BUILTIN_CHARTS = {
    "circle": _circle,
    "three_leaf": _three_leaf,
}


def make_builtin_chart(name: str) -> BoundaryChart:
    if name not in BUILTIN_CHARTS:
        raise ChartError(f"unknown chart name '{name}' (known: {', '.join(sorted(BUILTIN_CHARTS))})")
    return chart_from_expression(name, BUILTIN_CHARTS[name])
