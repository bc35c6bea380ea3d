"""Time integration: the RK3 scheme, vortex setup, and the run driver."""

import math

import numpy as np
import pytest

from fdlab import solver as sv
from fdlab.equations import FlowParams, build_equations
from fdlab.expr import COMPONENT_NAMES
from fdlab.errors import NumericalBlowupError, StateError
from fdlab.grid import FieldStore, Grid, grid_sum, integral_diagnostics, read_snapshot
from fdlab.plan import StoragePolicy, build_plan
from fdlab.power import MockSource
from fdlab.solver import (
    RK_A,
    RK_B,
    RKScheme,
    RunConfig,
    compute_timestep,
    init_tgv,
    rk3_step,
    run,
)

PARAMS = FlowParams()


def _uniform_store(grid, values=(1.0, 0.3, -0.2, 0.1, 2.5)):
    store = FieldStore(grid)
    for name, value in zip(COMPONENT_NAMES, values):
        store.set_interior(name, value)
    store.exchange_solution()
    return store


def _solution_bytes(store):
    return tuple(store.interior(name).tobytes() for name in COMPONENT_NAMES)


@pytest.fixture(scope="module")
def store32():
    return init_tgv(Grid(32), PARAMS)


@pytest.fixture(scope="module")
def eqs():
    return build_equations(PARAMS)


class TestRKScheme:
    def test_default_coefficients(self):
        scheme = RKScheme()
        assert scheme.a == RK_A
        assert scheme.b == RK_B
        assert scheme.stages == 3

    def test_validation(self):
        with pytest.raises(ValueError, match="3 stages"):
            RKScheme(a=(0.0, 1.0), b=(0.5, 0.5))
        with pytest.raises(ValueError, match="first stage"):
            RKScheme(a=(1.0, 0.0, 0.0), b=RK_B)

    def test_one_step_exponential_decay(self):
        scheme = RKScheme()
        y = scheme.advance_scalar(1.0, lambda v: -v, 0.1)
        assert abs(y - 0.9048333333333333) < 1e-15

    def test_third_order_convergence(self):
        scheme = RKScheme()

        def integrate(dt):
            y = 1.0
            for _ in range(round(1.0 / dt)):
                y = scheme.advance_scalar(y, lambda v: -v, dt)
            return y

        exact = math.exp(-1.0)
        coarse = abs(integrate(0.1) - exact)
        fine = abs(integrate(0.05) - exact)
        order = math.log2(coarse / fine)
        assert 2.9 < order < 3.1


class TestRunConfig:
    def test_defaults(self):
        config = RunConfig()
        assert config.n == 64
        assert config.steps == 500
        assert config.policy == "bl"
        assert config.cfl == 0.4
        assert config.repeats == 5

    def test_policy_is_normalized(self):
        assert RunConfig(policy="SN2").policy == "sn2"

        class Enumish:
            value = "RS"

        assert RunConfig(policy=Enumish()).policy == "rs"

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"steps": -1},
            {"repeats": 0},
            {"dt": -0.1},
            {"dt": None, "cfl": None},
            {"cfl": -1.0},
            {"snapshot_every": -1},
            {"workers": 0},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            RunConfig(**kwargs)


class TestInitTGV:
    def test_third_velocity_component_is_exactly_zero(self, store32):
        assert np.abs(store32.interior("rhou2")).max() == 0.0

    def test_pressure_at_origin(self, store32):
        rho = store32.interior("rho")[0, 0, 0]
        # recover p from the conserved state at the stagnation corner
        rhoE = store32.interior("rhoE")[0, 0, 0]
        momentum_sq = sum(
            store32.interior(f"rhou{i}")[0, 0, 0] ** 2 for i in range(3)
        )
        p = (PARAMS.gamma - 1.0) * (rhoE - 0.5 * momentum_sq / rho)
        assert abs(p - 71.80357142857143) < 1e-9

    def test_kinetic_energy(self, store32):
        ke = integral_diagnostics(store32)["kinetic_energy"]
        assert abs(ke - 0.125) < 1e-9

    def test_peak_velocity_on_axis(self, store32):
        i = 8  # x0 = pi/2 on the 32-point grid
        u0 = store32.interior("rhou0")[i, 0, 0] / store32.interior("rho")[i, 0, 0]
        assert u0 == 1.0

    def test_velocity_field_is_discretely_divergence_free(self, store32):
        assert integral_diagnostics(store32)["max_divergence"] < 1e-12

    def test_halos_already_exchanged(self, store32):
        assert not any(store32.is_dirty(name) for name in COMPONENT_NAMES)

    def test_density_positive(self, store32):
        assert store32.interior("rho").min() > 0.0


class TestComputeTimestep:
    def test_acoustic_limit_at_initial_state(self):
        store = init_tgv(Grid(32), PARAMS)
        dt = compute_timestep(store, PARAMS, 0.4)
        # peak signal speed is |u| = 1 plus sound speed 1/M = 10
        assert abs(dt - 0.4 * store.grid.h / 11.0) < 1e-15
        assert abs(dt - 0.007139983303613166) < 1e-12

    def test_scales_with_cfl(self):
        store = init_tgv(Grid(16), PARAMS)
        assert compute_timestep(store, PARAMS, 0.8) == pytest.approx(
            2.0 * compute_timestep(store, PARAMS, 0.4), rel=1e-15
        )


class TestRK3Step:
    def test_zero_residual_leaves_solution_bit_identical(self, eqs, monkeypatch):
        grid = Grid(8)
        store = _uniform_store(grid)
        plan = build_plan(eqs, "bl", grid.h)
        before = _solution_bytes(store)

        def zero_residuals(plan, store, grid, workers=1, step=None):
            return {
                name: np.zeros(grid.shape, order="F")
                for name in COMPONENT_NAMES
            }

        monkeypatch.setattr(sv, "execute_plan", zero_residuals)
        rk3_step(store, plan, RKScheme(), dt=0.01)
        assert _solution_bytes(store) == before

    def test_uniform_state_barely_drifts(self, eqs):
        # a constant state is an exact steady solution; the stencil sums
        # round to ~1e-16 per tap, so a few steps move nothing visible
        grid = Grid(8)
        store = _uniform_store(grid)
        plan = build_plan(eqs, "sn", grid.h)
        reference = {
            name: store.interior(name).copy() for name in COMPONENT_NAMES
        }
        for step in range(1, 4):
            rk3_step(store, plan, RKScheme(), dt=1e-3, step=step)
        for name, initial in reference.items():
            scale = max(np.abs(initial).max(), 1.0)
            drift = np.abs(store.interior(name) - initial).max()
            assert drift <= 1e-13 * scale, name

    def test_rejects_non_positive_dt(self, eqs):
        grid = Grid(8)
        plan = build_plan(eqs, "bl", grid.h)
        with pytest.raises(ValueError, match="dt"):
            rk3_step(_uniform_store(grid), plan, RKScheme(), dt=0.0)

    def test_deterministic_across_reruns(self, eqs):
        grid = Grid(16)
        plan = build_plan(eqs, "rs", grid.h)
        dt = 0.005
        outcomes = []
        for _ in range(2):
            store = init_tgv(grid, PARAMS)
            for step in range(1, 6):
                rk3_step(store, plan, RKScheme(), dt=dt, step=step)
            outcomes.append(_solution_bytes(store))
        assert outcomes[0] == outcomes[1]

    def test_mass_and_momentum_conserved(self, eqs):
        grid = Grid(16)
        store = init_tgv(grid, PARAMS)
        plan = build_plan(eqs, "bl", grid.h)
        dt = compute_timestep(store, PARAMS, 0.4)
        initial = {
            name: grid_sum(store.interior(name))
            for name in ("rho", "rhou0", "rhou1", "rhou2")
        }
        for step in range(1, 21):
            rk3_step(store, plan, RKScheme(), dt=dt, step=step)
        mass_scale = abs(initial["rho"])
        for name, start in initial.items():
            drift = abs(grid_sum(store.interior(name)) - start)
            assert drift <= 1e-9 * mass_scale, name

    def test_variants_agree_after_steps(self, eqs):
        grid = Grid(16)
        dt = 0.005
        stores = {}
        for variant in (p.value for p in StoragePolicy):
            store = init_tgv(grid, PARAMS)
            plan = build_plan(eqs, variant, grid.h)
            for step in range(1, 4):
                rk3_step(store, plan, RKScheme(), dt=dt, step=step)
            stores[variant] = store
        baseline = stores["bl"]
        scale = max(
            np.abs(baseline.interior(name)).max() for name in COMPONENT_NAMES
        )
        for variant, store in stores.items():
            for name in COMPONENT_NAMES:
                deviation = np.abs(
                    store.interior(name) - baseline.interior(name)
                ).max()
                assert deviation <= 1e-10 * scale, (variant, name)


class TestRun:
    def test_zero_steps_records_once_and_leaves_state_alone(self):
        result = run(RunConfig(n=16, steps=0, policy="bl"))
        assert result.steps_completed == 0
        assert len(result.records) == 1
        assert result.records[0].iteration == 0
        assert "runtime_s" in result.summary
        fresh = init_tgv(Grid(16), PARAMS)
        assert _solution_bytes(result.store) == _solution_bytes(fresh)

    def test_null_source_run(self):
        result = run(RunConfig(n=16, steps=3, policy="sn"))
        assert result.steps_completed == 3
        assert [r.iteration for r in result.records] == [0, 1, 2, 3]
        assert all(r.power is None for r in result.records)
        assert all(r.cumulative_energy is None for r in result.records)
        assert result.summary["runtime_s"] > 0.0
        assert "total_energy_j" not in result.summary

    def test_mock_power_source_yields_energy_summary(self):
        result = run(
            RunConfig(n=16, steps=3, policy="bl"),
            source=MockSource(lambda t: 100.0),
        )
        summary = result.summary
        assert summary["mean_power_w"] == pytest.approx(100.0)
        assert summary["total_energy_j"] == pytest.approx(
            100.0 * summary["runtime_s"], rel=1e-9
        )
        assert summary["energy_per_iteration_j"] == pytest.approx(
            summary["total_energy_j"] / 3.0
        )

    def test_records_stream_to_sink(self):
        sink = []
        result = run(RunConfig(n=16, steps=2, policy="bl"), record_sink=sink.append)
        assert sink == result.records

    def test_failed_run_still_flushed_completed_records(self):
        sink = []
        config = RunConfig(n=16, steps=50, policy="bl", dt=10.0)
        with pytest.raises((StateError, NumericalBlowupError)):
            run(config, record_sink=sink.append)
        assert len(sink) >= 1
        assert sink[0].iteration == 0

    def test_snapshots_written_at_interval(self, tmp_path):
        config = RunConfig(
            n=16, steps=4, policy="bl", snapshot_every=2, out_dir=str(tmp_path)
        )
        result = run(config)
        paths = sorted(tmp_path.glob("snapshot_bl_step*.bin"))
        assert [p.name for p in paths] == [
            "snapshot_bl_step000002.bin",
            "snapshot_bl_step000004.bin",
        ]
        n, step, fields = read_snapshot(paths[-1])
        assert (n, step) == (16, 4)
        assert set(fields) == set(COMPONENT_NAMES)
        np.testing.assert_array_equal(fields["rho"], result.store.interior("rho"))

    def test_monitor_disabled(self):
        result = run(RunConfig(n=16, steps=2, policy="bl", monitor=False))
        assert result.records == []
        assert set(result.summary) == {"runtime_s"}

    def test_worker_count_does_not_change_results(self):
        single = run(RunConfig(n=16, steps=2, policy="sn", workers=1))
        threaded = run(RunConfig(n=16, steps=2, policy="sn", workers=2))
        assert _solution_bytes(single.store) == _solution_bytes(threaded.store)

    def test_explicit_dt_is_used(self):
        result = run(RunConfig(n=16, steps=0, policy="bl", dt=0.003))
        assert result.dt == 0.003


class TestKineticEnergyDecay:
    def test_monotone_decay_on_production_grid(self):
        grid = Grid(64)
        store = init_tgv(grid, PARAMS)
        plan = build_plan(build_equations(PARAMS), "bl", grid.h)
        dt = compute_timestep(store, PARAMS, 0.4)
        energies = [integral_diagnostics(store)["kinetic_energy"]]
        for step in range(1, 101):
            rk3_step(store, plan, RKScheme(), dt=dt, step=step)
            energies.append(integral_diagnostics(store)["kinetic_energy"])
        slack = 1e-12 * energies[0]
        drops = [b <= a + slack for a, b in zip(energies, energies[1:])]
        assert all(drops), f"first rise at step {drops.index(False) + 1}"
