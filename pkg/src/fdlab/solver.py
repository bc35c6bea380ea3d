"""Vortex initialization, low-storage RK3 stepping, and the run driver.

The time integrator is the classic two-register three-stage scheme: an
accumulator S per field carries scaled residual history, so only one
extra register is needed besides the solution. A saved copy of the
solution is still taken at the start of every step for diagnostics.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .equations import FlowParams, build_equations
from .errors import StateError
from .executor import execute_plan
from .expr import COMPONENT_NAMES
from .grid import FieldStore, Grid, write_snapshot
from .plan import KernelPlan, build_plan
from .power import (
    EnergyIntegrator,
    IterationRecord,
    NullSource,
    PowerSource,
    monitor_sample,
    summarize,
)

RK_A = (0.0, -5.0 / 9.0, -153.0 / 128.0)
RK_B = (1.0 / 3.0, 15.0 / 16.0, 8.0 / 15.0)


@dataclass(frozen=True)
class RKScheme:
    """Two-register low-storage Runge-Kutta coefficients."""

    a: tuple[float, float, float] = RK_A
    b: tuple[float, float, float] = RK_B

    def __post_init__(self) -> None:
        if len(self.a) != 3 or len(self.b) != 3:
            raise ValueError("scheme needs exactly 3 stages")
        if self.a[0] != 0.0:
            raise ValueError("first stage must start a fresh accumulator")

    @property
    def stages(self) -> int:
        return 3

    def advance_scalar(self, y: float, rhs, dt: float) -> float:
        """One step of dy/dt = rhs(y); the array update in rk3_step
        follows exactly this recurrence."""
        s = 0.0
        for a_k, b_k in zip(self.a, self.b):
            s = a_k * s + rhs(y)
            y = y + b_k * dt * s
        return y


@dataclass(frozen=True)
class RunConfig:
    """One benchmark run: grid, step count, variant, timestep rule."""

    n: int = 64
    steps: int = 500
    policy: str = "bl"
    params: FlowParams = field(default_factory=FlowParams)
    dt: float | None = None
    cfl: float | None = 0.4
    repeats: int = 5
    monitor: bool = True
    out_dir: str | None = None
    snapshot_every: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        policy = self.policy.value if hasattr(self.policy, "value") else self.policy
        object.__setattr__(self, "policy", str(policy).lower())
        if self.steps < 0:
            raise ValueError(f"steps must be non-negative, got {self.steps}")
        if self.repeats < 1:
            raise ValueError(f"repeats must be positive, got {self.repeats}")
        if self.dt is not None and self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.dt is None:
            if self.cfl is None:
                raise ValueError("need either dt or cfl")
            if self.cfl <= 0:
                raise ValueError(f"cfl must be positive, got {self.cfl}")
        if self.snapshot_every < 0:
            raise ValueError("snapshot interval must be non-negative")
        if self.workers < 1:
            raise ValueError("workers must be positive")


def init_tgv(grid: Grid, params: FlowParams) -> FieldStore:
    """Taylor-Green vortex initial state on [0, 2pi)^3.

    Velocities are the standard single-mode vortex, pressure carries the
    matching O(1) acoustic-scaled offset, temperature is uniform 1, and
    density follows from the equation of state so rho is 1 + O(M^2).
    """
    x = grid.coordinates()
    x0, x1, x2 = np.meshgrid(x, x, x, indexing="ij")
    u0 = np.sin(x0) * np.cos(x1) * np.cos(x2)
    u1 = -np.cos(x0) * np.sin(x1) * np.cos(x2)
    p = params.inv_gamma_mach_sq + (1.0 / 16.0) * (
        np.cos(2.0 * x0) + np.cos(2.0 * x1)
    ) * (2.0 + np.cos(2.0 * x2))
    rho = params.gamma_mach_sq * p  # T = 1 uniformly
    store = FieldStore(grid)
    store.set_interior("rho", rho)
    store.set_interior("rhou0", rho * u0)
    store.set_interior("rhou1", rho * u1)
    store.set_interior("rhou2", 0.0)
    store.set_interior(
        "rhoE", p / (params.gamma - 1.0) + 0.5 * rho * (u0**2 + u1**2)
    )
    store.exchange_solution()
    return store


def compute_timestep(store: FieldStore, params: FlowParams, cfl: float) -> float:
    """Acoustic CFL limit from the current state: the fastest signal is
    |u| plus the sound speed sqrt(T)/M."""
    rho = store.interior("rho")
    velocity_sq = np.zeros(store.grid.shape)
    for i in range(3):
        velocity_sq += (store.interior(f"rhou{i}") / rho) ** 2
    kinetic = 0.5 * rho * velocity_sq
    pressure = (params.gamma - 1.0) * (store.interior("rhoE") - kinetic)
    sound = np.sqrt(params.gamma * pressure / rho)
    signal = float(np.max(np.sqrt(velocity_sq) + sound))
    return cfl * store.grid.h / signal


def _check_thermo(store: FieldStore, step) -> None:
    rho = store.interior("rho")
    bad = ~(rho > 0)
    if bad.any():
        point = tuple(int(v) for v in np.argwhere(bad)[0])
        raise StateError(
            f"non-positive density at interior point {point}"
            + (f" (step {step})" if step is not None else "")
        )
    kinetic = np.zeros(store.grid.shape)
    for i in range(3):
        kinetic += store.interior(f"rhou{i}") ** 2
    internal = store.interior("rhoE") - 0.5 * kinetic / rho
    bad = ~(internal > 0)
    if bad.any():
        point = tuple(int(v) for v in np.argwhere(bad)[0])
        raise StateError(
            f"non-positive internal energy at interior point {point}"
            + (f" (step {step})" if step is not None else "")
        )


def allocate_accumulators(grid: Grid) -> dict[str, np.ndarray]:
    return {name: np.zeros(grid.shape, order="F") for name in COMPONENT_NAMES}


def rk3_step(
    store: FieldStore,
    plan: KernelPlan,
    scheme: RKScheme,
    dt: float,
    accumulators: dict[str, np.ndarray] | None = None,
    workers: int = 1,
    step: int | None = None,
) -> FieldStore:
    """Advance the solution by one timestep in place."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    grid = store.grid
    if accumulators is None:
        accumulators = allocate_accumulators(grid)
    store.save_solution()
    for a_k, b_k in zip(scheme.a, scheme.b):
        residuals = execute_plan(plan, store, grid, workers=workers, step=step)
        for name in COMPONENT_NAMES:
            acc = accumulators[name]
            if a_k == 0.0:
                np.copyto(acc, residuals[name])
            else:
                np.multiply(acc, a_k, out=acc)
                np.add(acc, residuals[name], out=acc)
            solution = store.interior(name)
            np.add(solution, (b_k * dt) * acc, out=solution)
            store.mark_dirty(name)
        store.exchange_solution()
        _check_thermo(store, step)
    return store


@dataclass
class RunResult:
    config: RunConfig
    grid: Grid
    plan: KernelPlan
    store: FieldStore
    dt: float
    records: list[IterationRecord]
    summary: dict[str, float]
    steps_completed: int


def run(
    config: RunConfig,
    source: PowerSource | None = None,
    record_sink=None,
) -> RunResult:
    """Initialize, advance `steps` timesteps, and monitor each boundary.

    The monitor samples once before the loop and once at the end of every
    iteration. Each record goes to `record_sink` as soon as it exists, so
    a failing run still leaves the completed iterations on disk when the
    sink writes through.
    """
    grid = Grid(config.n)
    plan = build_plan(build_equations(config.params), config.policy, grid.h)
    store = init_tgv(grid, config.params)
    dt = config.dt if config.dt is not None else compute_timestep(
        store, config.params, config.cfl
    )
    scheme = RKScheme()
    accumulators = allocate_accumulators(grid)
    if source is None:
        source = NullSource()
    integrator = EnergyIntegrator()
    records: list[IterationRecord] = []
    t_origin: list[float] = []

    def take(iteration: int) -> None:
        if not config.monitor:
            return
        sample = monitor_sample(source)
        if not t_origin:
            t_origin.append(sample.t)
        record = IterationRecord(
            iteration=iteration,
            t=sample.t - t_origin[0],
            power=sample.power,
            cumulative_energy=integrator.update(sample),
        )
        records.append(record)
        if record_sink is not None:
            record_sink(record)

    wall_start = time.perf_counter()
    take(0)
    completed = 0
    for step in range(1, config.steps + 1):
        rk3_step(
            store,
            plan,
            scheme,
            dt,
            accumulators=accumulators,
            workers=config.workers,
            step=step,
        )
        completed = step
        take(step)
        if (
            config.snapshot_every
            and config.out_dir
            and step % config.snapshot_every == 0
        ):
            write_snapshot(
                f"{config.out_dir}/snapshot_{config.policy}_step{step:06d}.bin",
                store,
                COMPONENT_NAMES,
                step,
            )
    wall = time.perf_counter() - wall_start

    if len(records) >= 2:
        summary = summarize(records)
    else:
        summary = {"runtime_s": wall}
    return RunResult(
        config=config,
        grid=grid,
        plan=plan,
        store=store,
        dt=dt,
        records=records,
        summary=summary,
        steps_completed=completed,
    )
