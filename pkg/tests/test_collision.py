import math

import numpy as np
import pytest

from conftest import random_cpt_channel, random_hermitian, random_state
from qcollide.channels import (
    DensityMatrix,
    identity_channel,
    lossy_bosonic_channel,
    replacer_channel,
)
from qcollide.collision import (
    CollisionConfig,
    CouplingSpec,
    HamiltonianSchedule,
    check_assumption,
    collision_unitary,
    evolve_column_step,
    evolve_row,
    frame_propagator,
    interaction_frame_couplings,
    simulate,
)
from qcollide.ops import Operator, expm_hermitian, kron, partial_trace, pauli, projector

SX, SY, SZ = pauli("x"), pauli("y"), pauli("z")
GROUND = DensityMatrix.ground(2)


def qubit_config(n_collisions=10, g=1.0, dt=0.1, channel=None, couplings=None, m_carriers=1, **kw):
    if couplings is None:
        couplings = CouplingSpec.uniform([[SX]] * m_carriers, [SX])
    return CollisionConfig(
        carrier_dims=(2,) * m_carriers,
        env_dim=2,
        g=g,
        dt=dt,
        n_collisions=n_collisions,
        eta=GROUND,
        channel=channel or identity_channel(2),
        couplings=couplings,
        **kw,
    )


class TestCouplingSpec:
    def test_rejects_non_hermitian(self):
        bad = Operator((2,), np.array([[0, 1], [0, 0]]))
        with pytest.raises(ValueError, match="Hermitian"):
            CouplingSpec.uniform([[bad]], [SX])

    def test_rejects_zero_operator(self):
        zero = Operator((2,), np.zeros((2, 2)))
        with pytest.raises(ValueError, match="zero"):
            CouplingSpec.uniform([[SX]], [zero])

    def test_rejects_count_mismatch(self):
        with pytest.raises(ValueError, match="counts"):
            CouplingSpec(system_ops=((SX, SY),), env_ops=((SX,),))


class TestCollisionUnitary:
    def test_zero_coupling_gives_identity(self):
        cfg = qubit_config(g=0.0)
        u = collision_unitary(cfg, 1, 1)
        assert np.allclose(u.entries, np.eye(4))

    def test_sx_sx_half_pi(self):
        # (sx x sx)^2 = I, so exp(-i u sx x sx) = cos(u) - i sin(u) sx x sx
        cfg = qubit_config(g=1.0, dt=np.pi / 2)
        u = collision_unitary(cfg, 1, 1)
        want = -1j * kron(SX, SX).entries
        assert np.allclose(u.entries, want, atol=1e-14)

    def test_random_two_term_unitarity(self, rng):
        spec = CouplingSpec.uniform(
            [[random_hermitian(rng, (2,)), random_hermitian(rng, (2,))]],
            [random_hermitian(rng, (2,)), random_hermitian(rng, (2,))],
        )
        cfg = qubit_config(couplings=spec, g=1.3, dt=0.7)
        u = collision_unitary(cfg, 1, 1)
        assert np.max(np.abs(u.entries @ u.entries.conj().T - np.eye(4))) <= 1e-12


class TestCheckAssumption:
    def test_sx_ground_identity_channel(self):
        report = check_assumption(qubit_config(), m_max=6)
        assert report.passed and report.max_violation == 0.0

    def test_sz_fails_with_value_one(self):
        spec = CouplingSpec.uniform([[SZ]], [SZ])
        report = check_assumption(qubit_config(couplings=spec), m_max=3)
        assert not report.passed
        assert abs(report.max_violation - 1.0) < 1e-14

    def test_sx_with_damping(self):
        cfg = qubit_config(channel=lossy_bosonic_channel(2, 0.25))
        report = check_assumption(cfg, m_max=8)
        # oracle: direct traces along the orbit
        sigma = GROUND.entries
        for _ in range(9):
            assert abs(np.trace(SX.entries @ sigma)) <= 1e-14
            sigma = sum(
                k.entries @ sigma @ k.entries.conj().T for k in cfg.channel.kraus
            )
        assert report.passed

    def test_report_dict(self):
        d = check_assumption(qubit_config(), m_max=2).to_dict()
        assert d["passed"] and len(d["entries"]) == 3


class TestColumnStep:
    def test_zero_coupling_returns_input(self, rng):
        cfg = qubit_config(g=0.0, channel=random_cpt_channel(rng, 2))
        rho = random_state(rng, (2,))
        joint = DensityMatrix.from_matrix(np.kron(rho.entries, GROUND.entries), (2, 2))
        out = evolve_column_step(joint, cfg)
        assert np.max(np.abs(out.entries - rho.entries)) <= 1e-12

    def test_single_collision_dephasing(self):
        cfg = qubit_config(g=0.9, dt=0.4)
        joint = DensityMatrix.from_matrix(np.kron(GROUND.entries, GROUND.entries), (2, 2))
        out = evolve_column_step(joint, cfg)
        # oracle: explicit 4x4 conjugation + partial trace
        u = expm_hermitian(kron(SX, SX), cfg.g * cfg.dt).entries
        conj = u @ np.kron(GROUND.entries, GROUND.entries) @ u.conj().T
        want = partial_trace(Operator((2, 2), conj), keep=[0]).entries
        assert np.allclose(out.entries, want, atol=1e-14)
        gdt = cfg.g * cfg.dt
        assert np.allclose(out.entries, np.diag([np.cos(gdt) ** 2, np.sin(gdt) ** 2]))

    def test_output_is_valid_state(self, rng):
        for _ in range(5):
            spec = CouplingSpec.uniform(
                [[random_hermitian(rng, (2,))], [random_hermitian(rng, (2,))]],
                [random_hermitian(rng, (2,))],
            )
            cfg = qubit_config(couplings=spec, m_carriers=2, channel=random_cpt_channel(rng, 2))
            rho = random_state(rng, (2, 2))
            joint = DensityMatrix.from_matrix(np.kron(rho.entries, GROUND.entries), (2, 2, 2))
            out = evolve_column_step(joint, cfg)
            assert abs(out.op.trace() - 1.0) <= 1e-10
            assert np.linalg.eigvalsh(out.entries)[0] >= -1e-9

    def test_rejects_wrong_dims(self):
        cfg = qubit_config()
        joint = DensityMatrix.maximally_mixed((2, 2, 2))
        with pytest.raises(ValueError, match="dims"):
            evolve_column_step(joint, cfg)


class TestSimulate:
    def test_zero_collisions_single_sample(self, rng):
        cfg = qubit_config(n_collisions=0)
        rho = random_state(rng, (2,))
        traj = simulate(cfg, rho)
        assert len(traj) == 1
        assert np.allclose(traj.final_state().entries, rho.entries)

    def test_dephasing_against_closed_form(self):
        gamma, t = 1.0, 0.5
        n = 100
        dt = t / n
        cfg = qubit_config(n_collisions=n, g=math.sqrt(gamma / dt), dt=dt)
        traj = simulate(cfg, GROUND, observables=[projector(2, 0)], observable_names=["p0"])
        got = traj.expectations("p0")[-1].real
        want = (1 + math.exp(-2 * gamma * t)) / 2
        assert abs(got - want) < 1e-2

    def test_replacer_keeps_carriers_product(self, rng):
        eta = GROUND
        spec = CouplingSpec.uniform([[SX], [SY]], [SX])
        cfg = CollisionConfig(
            carrier_dims=(2, 2),
            env_dim=2,
            g=1.2,
            dt=0.15,
            n_collisions=20,
            eta=eta,
            channel=replacer_channel(eta),
            couplings=spec,
        )
        rho1 = random_state(rng, (2,))
        rho2 = random_state(rng, (2,))
        rho0 = DensityMatrix.from_matrix(np.kron(rho1.entries, rho2.entries), (2, 2))
        traj = simulate(cfg, rho0)
        final = traj.final_state()
        red1 = partial_trace(final.op, keep=[0]).entries
        red2 = partial_trace(final.op, keep=[1]).entries
        assert np.max(np.abs(final.entries - np.kron(red1, red2))) <= 1e-10

    def test_replacer_matches_independent_runs(self, rng):
        # with the environment reset after every collision the carriers evolve independently
        eta = GROUND
        chan = replacer_channel(eta)
        spec2 = CouplingSpec.uniform([[SX], [SY]], [SX])
        cfg2 = CollisionConfig(
            carrier_dims=(2, 2), env_dim=2, g=0.8, dt=0.2, n_collisions=15,
            eta=eta, channel=chan, couplings=spec2,
        )
        rho1 = random_state(rng, (2,))
        rho2 = random_state(rng, (2,))
        rho0 = DensityMatrix.from_matrix(np.kron(rho1.entries, rho2.entries), (2, 2))
        joint_final = simulate(cfg2, rho0).final_state()

        def single(op, rho):
            spec1 = CouplingSpec.uniform([[op]], [SX])
            cfg1 = CollisionConfig(
                carrier_dims=(2,), env_dim=2, g=0.8, dt=0.2, n_collisions=15,
                eta=eta, channel=chan, couplings=spec1,
            )
            return simulate(cfg1, rho).final_state().entries

        want = np.kron(single(SX, rho1), single(SY, rho2))
        assert np.max(np.abs(joint_final.entries - want)) <= 1e-10

    def test_trace_and_positivity_along_run(self, rng):
        spec = CouplingSpec.uniform([[SX], [SX]], [SX])
        cfg = qubit_config(couplings=spec, m_carriers=2, n_collisions=40,
                           channel=lossy_bosonic_channel(2, 0.5))
        traj = simulate(cfg, random_state(rng, (2, 2)))
        assert np.max(np.abs(traj.traces - 1.0)) <= 1e-10
        assert traj.min_eigenvalues.min() >= -1e-9

    def test_carrier_one_never_sees_later_carriers(self, rng):
        # discrete semicausality: the reduced state of carrier 1 is the same
        # whether carrier 2 exists, and whatever carrier 2's coupling is
        chan = lossy_bosonic_channel(2, 0.3)
        rho1 = random_state(rng, (2,))
        rho2 = random_state(rng, (2,))
        rho0 = DensityMatrix.from_matrix(np.kron(rho1.entries, rho2.entries), (2, 2))

        def reduced_first(second_op):
            spec = CouplingSpec.uniform([[SX], [second_op]], [SX])
            cfg = qubit_config(couplings=spec, m_carriers=2, n_collisions=12, channel=chan)
            final = simulate(cfg, rho0).final_state()
            return partial_trace(final.op, keep=[0]).entries

        alone = simulate(
            qubit_config(n_collisions=12, channel=chan), rho1
        ).final_state().entries
        for op in (SY, SZ, 0.5 * SX):
            assert np.max(np.abs(reduced_first(op) - alone)) <= 1e-11

    def test_recording_stride(self):
        cfg = qubit_config(n_collisions=10)
        traj = simulate(cfg, GROUND, record_stride=4)
        assert list(traj.steps) == [0, 4, 8, 10]
        assert np.allclose(traj.times, [0.0, 0.4, 0.8, 1.0])


class TestRowPath:
    def test_single_site_matches_column(self, rng):
        spec = CouplingSpec.uniform([[SX], [SY]], [SX])
        cfg = qubit_config(couplings=spec, m_carriers=2, n_collisions=1,
                           channel=lossy_bosonic_channel(2, 0.5))
        rho0 = random_state(rng, (2, 2))
        row = evolve_row(cfg, rho0, 1)
        joint = DensityMatrix.from_matrix(np.kron(rho0.entries, GROUND.entries), (2, 2, 2))
        col = evolve_column_step(joint, cfg)
        assert np.max(np.abs(row.entries - col.entries)) <= 1e-12

    def test_two_sites_matches_column(self, rng):
        spec = CouplingSpec.uniform([[SX], [SY]], [SX])
        cfg = qubit_config(couplings=spec, m_carriers=2, n_collisions=2,
                           channel=lossy_bosonic_channel(2, 0.25), g=1.1, dt=0.3)
        rho0 = random_state(rng, (2, 2))
        row = evolve_row(cfg, rho0, 2)
        col = simulate(cfg, rho0).final_state()
        assert np.max(np.abs(row.entries - col.entries)) <= 1e-11

    def test_zero_coupling_returns_input(self, rng):
        cfg = qubit_config(g=0.0, n_collisions=2)
        rho0 = random_state(rng, (2,))
        row = evolve_row(cfg, rho0, 2)
        assert np.max(np.abs(row.entries - rho0.entries)) <= 1e-12

    def test_equivalence_randomized(self, rng):
        # random couplings, channels, carriers and sites within the size guard
        for m_carriers, n_sites, env_dim in ((1, 3, 2), (2, 2, 2), (3, 1, 3), (2, 2, 3)):
            spec = CouplingSpec.uniform(
                [[random_hermitian(rng, (2,))] for _ in range(m_carriers)],
                [random_hermitian(rng, (env_dim,))],
            )
            cfg = CollisionConfig(
                carrier_dims=(2,) * m_carriers,
                env_dim=env_dim,
                g=0.9,
                dt=0.25,
                n_collisions=n_sites,
                eta=DensityMatrix.ground(env_dim),
                channel=random_cpt_channel(rng, env_dim),
                couplings=spec,
            )
            rho0 = random_state(rng, (2,) * m_carriers)
            row = evolve_row(cfg, rho0, n_sites)
            col = simulate(cfg, rho0).final_state()
            assert np.max(np.abs(row.entries - col.entries)) <= 1e-11

    def test_size_guard(self):
        cfg = qubit_config(m_carriers=2, n_collisions=8)
        with pytest.raises(ValueError, match="256"):
            evolve_row(cfg, DensityMatrix.maximally_mixed((2, 2)), 8)


class TestInteractionFrame:
    def test_zero_hamiltonian_leaves_couplings(self):
        zero_sched = HamiltonianSchedule.constant(Operator((2,), np.zeros((2, 2))))
        cfg = qubit_config(n_collisions=4, local_hamiltonians=(zero_sched,))
        bar = interaction_frame_couplings(cfg)
        for n in range(1, 5):
            assert np.allclose(bar.a_ops(1, n)[0].entries, SX.entries)

    def test_constant_sz_rotation(self):
        omega = 1.3
        sched = HamiltonianSchedule.constant(Operator((2,), omega / 2 * SZ.entries))
        cfg = qubit_config(n_collisions=5, dt=0.2, local_hamiltonians=(sched,))
        bar = interaction_frame_couplings(cfg)
        for n in range(1, 6):
            tau = cfg.tau(n)
            got = bar.a_ops(1, n)[0].entries
            want = math.cos(omega * tau) * SX.entries - math.sin(omega * tau) * SY.entries
            # oracle: explicit conjugation by the 2x2 exponential
            v = expm_hermitian(Operator((2,), omega / 2 * SZ.entries), tau).entries
            assert np.allclose(got, v.conj().T @ SX.entries @ v, atol=1e-12)
            assert np.allclose(got, want, atol=1e-12)

    def test_rotated_couplings_stay_hermitian(self, rng):
        h = random_hermitian(rng, (2,))
        a = random_hermitian(rng, (2,))
        spec = CouplingSpec.uniform([[a]], [SX])
        cfg = qubit_config(couplings=spec, n_collisions=6,
                           local_hamiltonians=(HamiltonianSchedule.constant(h),))
        bar = interaction_frame_couplings(cfg)
        for n in range(1, 7):
            assert bar.a_ops(1, n)[0].is_hermitian(1e-12)

    def test_missing_schedule_rejected(self):
        cfg = qubit_config()
        with pytest.raises(ValueError, match="schedule"):
            interaction_frame_couplings(cfg)

    def test_lab_frame_matches_rotated_run(self, rng):
        # map the lab-frame trajectory into the rotating frame and compare
        # with the run driven by the frame-transformed couplings
        omega = 0.9
        scheds = (
            HamiltonianSchedule.constant(Operator((2,), omega / 2 * SZ.entries)),
            HamiltonianSchedule.constant(Operator((2,), -omega / 3 * SZ.entries)),
        )
        spec = CouplingSpec.uniform([[SX], [SX]], [SX])
        cfg_lab = CollisionConfig(
            carrier_dims=(2, 2), env_dim=2, g=1.0, dt=0.1, n_collisions=8,
            eta=GROUND, channel=lossy_bosonic_channel(2, 0.5), couplings=spec,
            local_hamiltonians=scheds,
        )
        bar_spec = interaction_frame_couplings(cfg_lab)
        cfg_rot = CollisionConfig(
            carrier_dims=(2, 2), env_dim=2, g=1.0, dt=0.1, n_collisions=8,
            eta=GROUND, channel=lossy_bosonic_channel(2, 0.5), couplings=bar_spec,
        )
        rho0 = random_state(rng, (2, 2))
        lab = simulate(cfg_lab, rho0)
        rot = simulate(cfg_rot, rho0)
        for i, n in enumerate(lab.steps):
            v = frame_propagator(cfg_lab, int(n))
            mapped = v.conj().T @ lab.states[i].entries @ v
            assert np.max(np.abs(mapped - rot.states[i].entries)) <= 1e-10

    def test_piecewise_schedule_propagator(self):
        h1 = Operator((2,), 0.7 * SZ.entries)
        h2 = Operator((2,), 0.3 * SX.entries)
        sched = HamiltonianSchedule((0.0, 1.0), (h1, h2))
        u = sched.propagator(0.5, 1.5)
        want = expm_hermitian(h2, 0.5).entries @ expm_hermitian(h1, 0.5).entries
        assert np.allclose(u, want, atol=1e-14)

    def test_converges_to_time_dependent_generator(self):
        # frame-rotated couplings give a collision-indexed model whose
        # weak-coupling limit is a time-dependent generator; integrate it as
        # a piecewise-constant schedule on the same collision grid
        from dataclasses import replace

        from qcollide.generators import full_generator
        from qcollide.integrator import integrate, trace_distance

        omega, gamma, t_end = 1.1, 1.0, 0.6
        spec = CouplingSpec.uniform([[SX], [SX]], [SX])
        chan = lossy_bosonic_channel(2, 0.25)
        sched = HamiltonianSchedule.constant(Operator((2,), omega / 2 * SZ.entries))
        rho0 = DensityMatrix.from_ket(np.array([1, 0, 0, 1]) / np.sqrt(2), (2, 2))

        def distance_at(n):
            dt = t_end / n
            cfg_lab = CollisionConfig(
                carrier_dims=(2, 2), env_dim=2, g=math.sqrt(gamma / dt), dt=dt,
                n_collisions=n, eta=GROUND, channel=chan, couplings=spec,
                local_hamiltonians=(sched, sched),
            )
            rotated = replace(
                cfg_lab, couplings=interaction_frame_couplings(cfg_lab), local_hamiltonians=None
            )
            coll = simulate(rotated, rho0, record_stride=n)
            schedule = [
                (
                    (k - 1) * dt,
                    full_generator(rotated.couplings, GROUND, chan, gamma, (2, 2),
                                   collision_index=k).total,
                )
                for k in range(1, n + 1)
            ]
            me = integrate(schedule, rho0, t_end, dt / 4)
            return trace_distance(coll.final_state(), me.final_state())

        d40, d80 = distance_at(40), distance_at(80)
        assert d80 < d40 < 5e-3


class TestTrajectoryExport(object):
    def test_csv_schema(self, tmp_path):
        cfg = qubit_config(n_collisions=3)
        traj = simulate(cfg, GROUND, observables=[projector(2, 0)], observable_names=["p0"])
        path = tmp_path / "traj.csv"
        traj.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "step,t,p0_re,p0_im,trace,min_eigenvalue"
        assert len(lines) == 5

    def test_json_includes_states_on_request(self, tmp_path):
        import json

        cfg = qubit_config(n_collisions=2)
        traj = simulate(cfg, GROUND)
        path = tmp_path / "traj.json"
        traj.to_json(path, include_states=True)
        data = json.loads(path.read_text())
        assert len(data["samples"]) == 3
        assert "state" in data["samples"][0]
