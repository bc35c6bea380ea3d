"""Fourth-order central difference stencils on a uniform periodic grid.

Weights are held as exact rationals and folded with the grid spacing
into a single float multiplier per tap when an expression is built, so
a discretized derivative costs one multiplication and one shifted read
per tap plus the adds that join them.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from . import expr as ex
from .errors import ExprError, UnsupportedDerivativeError

#: (shift, weight) taps of the 4th order first derivative, zero tap omitted.
FIRST_DERIVATIVE_WEIGHTS: tuple[tuple[int, Fraction], ...] = (
    (-2, Fraction(1, 12)),
    (-1, Fraction(-2, 3)),
    (1, Fraction(2, 3)),
    (2, Fraction(-1, 12)),
)

#: (shift, weight) taps of the 4th order second derivative.
SECOND_DERIVATIVE_WEIGHTS: tuple[tuple[int, Fraction], ...] = (
    (-2, Fraction(-1, 12)),
    (-1, Fraction(4, 3)),
    (0, Fraction(-5, 2)),
    (1, Fraction(4, 3)),
    (2, Fraction(-1, 12)),
)


@dataclass(frozen=True)
class StencilCoeffs:
    """Tap table for one derivative order, exact until scaled by h."""

    derivative_order: int
    taps: tuple[tuple[int, Fraction], ...]

    def scaled(self, h: float) -> tuple[tuple[int, float], ...]:
        """Fold h into the weights, one float multiplier per tap."""
        if h <= 0:
            raise ExprError(f"grid spacing must be positive, got {h}")
        scale = h if self.derivative_order == 1 else h * h
        return tuple((shift, float(w) / scale) for shift, w in self.taps)

    @property
    def width(self) -> int:
        return max(abs(s) for s, _ in self.taps)


def first_derivative_stencil() -> StencilCoeffs:
    return StencilCoeffs(1, FIRST_DERIVATIVE_WEIGHTS)


def second_derivative_stencil() -> StencilCoeffs:
    return StencilCoeffs(2, SECOND_DERIVATIVE_WEIGHTS)


def _axis_offset(axis: int, shift: int) -> ex.Offset:
    off = [0, 0, 0]
    off[axis] = shift
    return tuple(off)  # type: ignore[return-value]


def apply_stencil(
    stencil: StencilCoeffs, operand: ex.Expr, axis: int, h: float
) -> ex.Expr:
    """Expand one stencil application into shifted reads of ``operand``.

    The operand must already be free of Derivative nodes. Taps are laid
    down in ascending shift order.
    """
    if axis not in (0, 1, 2):
        raise ExprError(f"axis out of range: {axis}")
    terms = [
        ex.mul(ex.const(w), ex.shift(operand, _axis_offset(axis, s)))
        for s, w in stencil.scaled(h)
    ]
    return ex.add(*terms)


def discretize(expr: ex.Expr, h: float) -> ex.Expr:
    """Replace every Derivative node with its central difference expansion.

    One axis uses the first derivative stencil, a repeated axis the
    second derivative stencil, and two distinct axes nest first
    differences with the trailing axis applied first. A Derivative
    operand that is itself a Derivative is expanded before the outer
    stencil is applied, so explicitly sequenced repeated differences
    stay sequenced.
    """
    if isinstance(expr, (ex.Constant, ex.RationalConstant)):
        return expr
    if isinstance(expr, (ex.SolutionRef, ex.WorkRef, ex.LocalRef)):
        return expr
    if isinstance(expr, ex.Neg):
        return ex.neg(discretize(expr.child, h))
    if isinstance(expr, ex.Add):
        return ex.add(*(discretize(c, h) for c in expr.children))
    if isinstance(expr, ex.Mul):
        return ex.mul(*(discretize(c, h) for c in expr.children))
    if isinstance(expr, ex.Div):
        return ex.div(discretize(expr.numerator, h), discretize(expr.denominator, h))
    if isinstance(expr, ex.IntPow):
        return ex.intpow(discretize(expr.base, h), expr.exponent)
    if isinstance(expr, ex.Derivative):
        operand = discretize(expr.operand, h)
        axes = expr.axes
        if len(axes) == 1:
            return apply_stencil(first_derivative_stencil(), operand, axes[0], h)
        if axes[0] == axes[1]:
            return apply_stencil(second_derivative_stencil(), operand, axes[0], h)
        inner = apply_stencil(first_derivative_stencil(), operand, axes[1], h)
        return apply_stencil(first_derivative_stencil(), inner, axes[0], h)
    raise UnsupportedDerivativeError(f"cannot discretize {expr!r}")
