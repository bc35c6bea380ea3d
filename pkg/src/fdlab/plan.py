"""Lowering of an EquationSet into executable kernel plans.

A plan fixes, for every distinct derivative, whether its value lives in
a global work array, in a per-point local, or is re-expanded inline at
each textual use. That single decision is what separates the six
variants; the primitive phase and the residual arithmetic around the
derivatives are identical everywhere.

Operation counting normalization: ``ops_per_point`` sums the arithmetic
of every statement expression plus one operation per scalar local
assignment (a register move). Stores to global arrays are not counted
as operations; they appear in the read/write traffic counters instead.
Under this normalization the variant ordering of operation counts is
strict and reproducible.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from enum import Enum

from . import expr as ex
from . import stencils
from .equations import EquationSet, PRIMITIVE_ARRAYS
from .errors import PlanError

VELOCITY_ARRAYS = ("u0", "u1", "u2")

RESIDUAL_TARGETS = ("rho", "rhou0", "rhou1", "rhou2", "rhoE")


class StoragePolicy(Enum):
    """The six derivative-storage strategies."""

    BL = "bl"
    RS = "rs"
    SS = "ss"
    RA = "ra"
    SN = "sn"
    SN2 = "sn2"


@dataclass(frozen=True)
class Statement:
    """One assignment: kind is 'local', 'array', or 'residual'."""

    kind: str
    target: str
    expr: ex.Expr


@dataclass(frozen=True)
class PlanCounters:
    extra_arrays: int
    locals: int
    ops_per_point: int
    global_reads_per_point: int
    global_writes_per_point: int


@dataclass(frozen=True)
class KernelPlan:
    policy: StoragePolicy
    h: float
    primitive_phase: tuple[Statement, ...]
    work_phase: tuple[Statement, ...]
    point_phase: tuple[Statement, ...]
    counters: PlanCounters

    def work_array_names(self) -> tuple[str, ...]:
        return tuple(s.target for s in self.work_phase)

    def offset_read_arrays(self, phase: str) -> set[str]:
        """Work arrays read at a nonzero offset by the given phase.

        These are the arrays whose halos must be current before (or
        while, for the work phase itself) that phase runs.
        """
        work = set(self.work_array_names())
        stmts = self.work_phase if phase == "work" else self.point_phase
        found: set[str] = set()
        for s in stmts:
            for kind, name, off in ex.references(s.expr):
                if kind == "arr" and name in work and off != (0, 0, 0):
                    found.add(name)
        return found


def _coerce_policy(policy) -> StoragePolicy:
    if isinstance(policy, StoragePolicy):
        return policy
    try:
        return StoragePolicy(str(policy).lower())
    except ValueError:
        raise PlanError(f"unknown storage policy {policy!r}") from None


def _storage_assignment(eqset: EquationSet, policy: StoragePolicy):
    """Map each census derivative node to ('array'|'local', name) or None."""
    storage: dict[ex.Derivative, tuple[str, str]] = {}
    for entry in eqset.derivatives:
        if policy is StoragePolicy.BL:
            storage[entry.node] = ("array", entry.name)
        elif policy in (StoragePolicy.RS, StoragePolicy.SS):
            if entry.is_velocity_gradient:
                storage[entry.node] = ("array", entry.name)
            elif policy is StoragePolicy.SS:
                storage[entry.node] = ("local", entry.name)
        elif policy in (StoragePolicy.SN, StoragePolicy.SN2):
            storage[entry.node] = ("local", entry.name)
        # RA stores nothing
    return storage


def _expand_derivative(node: ex.Derivative, storage, h: float) -> ex.Expr:
    """Discretize one derivative, chaining through stored inner values.

    The inner member of a mixed or sequenced pair is read from its work
    array when the policy stores it as one (a plain stencil over that
    array). Locals cannot be read at neighbor points, so a local or
    unstored inner is re-expanded in place.
    """
    first = stencils.first_derivative_stencil()
    axes = node.axes
    if len(axes) == 2:
        if axes[0] == axes[1]:
            return stencils.apply_stencil(
                stencils.second_derivative_stencil(), node.operand, axes[0], h
            )
        inner = ex.Derivative(node.operand, (axes[1],))
        return stencils.apply_stencil(
            first, _resolve_operand(inner, storage, h), axes[0], h
        )
    operand = node.operand
    if isinstance(operand, ex.Derivative):
        operand = _resolve_operand(operand, storage, h)
    return stencils.apply_stencil(first, operand, axes[0], h)


def _resolve_operand(inner: ex.Derivative, storage, h: float) -> ex.Expr:
    slot = storage.get(inner)
    if slot and slot[0] == "array":
        return ex.array(slot[1])
    return _expand_derivative(inner, storage, h)


def _lower(node: ex.Expr, storage, h: float) -> ex.Expr:
    if isinstance(node, ex.Derivative):
        slot = storage.get(node)
        if slot:
            kind, name = slot
            return ex.array(name) if kind == "array" else ex.local(name)
        return _expand_derivative(node, storage, h)
    if isinstance(node, ex.Neg):
        return ex.neg(_lower(node.child, storage, h))
    if isinstance(node, ex.Add):
        return ex.add(*(_lower(c, storage, h) for c in node.children))
    if isinstance(node, ex.Mul):
        return ex.mul(*(_lower(c, storage, h) for c in node.children))
    if isinstance(node, ex.Div):
        return ex.div(
            _lower(node.numerator, storage, h), _lower(node.denominator, storage, h)
        )
    if isinstance(node, ex.IntPow):
        return ex.intpow(_lower(node.base, storage, h), node.exponent)
    return node


def _velocity_group(entry) -> int:
    """Lowest velocity-component index in the operand; 3 when none."""

    def indices(node) -> set[int]:
        out: set[int] = set()
        for sub in ex.walk(node):
            if isinstance(sub, ex.WorkRef) and sub.array in VELOCITY_ARRAYS:
                out.add(int(sub.array[1]))
            elif isinstance(sub, ex.SolutionRef) and 1 <= sub.component <= 3:
                out.add(sub.component - 1)
        return out

    found = indices(entry.node.operand)
    return min(found) if found else 3


def _validate(plan_stmts, work_names: set[str]) -> None:
    assigned: set[str] = set()
    for s in plan_stmts:
        for kind, name, off in ex.references(s.expr):
            if kind == "loc" and name not in assigned:
                raise PlanError(
                    f"local {name!r} read before assignment in per-point phase"
                )
            if kind == "arr" and name not in work_names and name not in PRIMITIVE_ARRAYS:
                raise PlanError(f"array {name!r} read but never written")
        if s.kind == "local":
            assigned.add(s.target)


def _count_plan(primitive, work, point) -> PlanCounters:
    ops = 0
    reads = 0
    writes = 0
    for stmt in (*primitive, *work, *point):
        ops += ex.count_ops(stmt.expr).total()
        if stmt.kind == "local":
            ops += 1
        else:
            writes += 1
        for kind, _, _ in ex.references(stmt.expr):
            if kind in ("sol", "arr"):
                reads += 1
    return PlanCounters(
        extra_arrays=len(work),
        locals=sum(1 for s in point if s.kind == "local"),
        ops_per_point=ops,
        global_reads_per_point=reads,
        global_writes_per_point=writes,
    )


def build_plan(eqset: EquationSet, policy, h: float) -> KernelPlan:
    """Lower the equation set under one storage policy at spacing h."""
    policy = _coerce_policy(policy)
    if h <= 0:
        raise PlanError(f"grid spacing must be positive, got {h}")
    if len(eqset.derivatives) != 63:
        raise PlanError(
            f"expected a census of 63 derivatives, got {len(eqset.derivatives)}"
        )
    if sum(d.is_velocity_gradient for d in eqset.derivatives) != 9:
        raise PlanError("expected 9 velocity-gradient members in the census")

    storage = _storage_assignment(eqset, policy)

    primitive = tuple(
        Statement("local" if d.store == "local" else "array", d.target, d.expr)
        for d in eqset.primitives
    )

    work = tuple(
        Statement("array", entry.name, _expand_derivative(entry.node, storage, h))
        for entry in eqset.derivatives
        if storage.get(entry.node, ("", ""))[0] == "array"
    )

    local_entries = [
        entry
        for entry in eqset.derivatives
        if storage.get(entry.node, ("", ""))[0] == "local"
    ]
    if policy is StoragePolicy.SN2:
        local_entries.sort(key=_velocity_group)

    point = [
        Statement("local", entry.name, _expand_derivative(entry.node, storage, h))
        for entry in local_entries
    ]
    point += [
        Statement("residual", RESIDUAL_TARGETS[c], _lower(eqset.residuals[c], storage, h))
        for c in range(5)
    ]
    point = tuple(point)

    _validate(point, {s.target for s in work})

    return KernelPlan(
        policy=policy,
        h=h,
        primitive_phase=primitive,
        work_phase=work,
        point_phase=point,
        counters=_count_plan(primitive, work, point),
    )


@dataclass(frozen=True)
class TimestepCounters:
    extra_arrays: int
    locals: int
    ops_per_point: int
    ops_per_timestep: int
    global_reads_per_point: int
    global_writes_per_point: int


def plan_counters(plan: KernelPlan, n: int) -> TimestepCounters:
    """Per-point counters scaled to one three-stage timestep on an n^3 grid."""
    c = plan.counters
    return TimestepCounters(
        extra_arrays=c.extra_arrays,
        locals=c.locals,
        ops_per_point=c.ops_per_point,
        ops_per_timestep=c.ops_per_point * n**3 * 3,
        global_reads_per_point=c.global_reads_per_point,
        global_writes_per_point=c.global_writes_per_point,
    )


def dump_plan(plan: KernelPlan) -> str:
    """Deterministic JSON document describing the plan."""
    doc = {
        "policy": plan.policy.value,
        "h": plan.h,
        "counters": asdict(plan.counters),
        "phases": {
            "primitive": [_stmt_doc(s) for s in plan.primitive_phase],
            "work": [_stmt_doc(s) for s in plan.work_phase],
            "point": [_stmt_doc(s) for s in plan.point_phase],
        },
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _stmt_doc(s: Statement) -> dict:
    return {"kind": s.kind, "target": s.target, "expr": ex.to_prefix(s.expr)}


def parse_dump(text: str) -> dict:
    """Parse a dump_plan document back into its dictionary form."""
    return json.loads(text)
