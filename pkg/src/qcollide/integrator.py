"""Fixed-step 4th-order integration of d rho/dt = G(rho).

Deterministic classical RK4 on the vectorized state, no adaptivity: clean
convergence-order measurements matter more than efficiency at these sizes.
Hermiticity is re-symmetrized every step; positivity is monitored but never
enforced, so a broken generator shows up instead of being masked.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .channels import DensityMatrix
from .ops import Operator, Superoperator, hermitize, unvec, vec
from .trajectory import Trajectory, build_trajectory

ABORT_TOL = 1e-6
SAMPLE_ATOL = 1e-8

GeneratorLike = Superoperator | Sequence[tuple[float, Superoperator]]


def _generator_lookup(generator: GeneratorLike):
    """Return (matrix_at(t), description).  Schedules are piecewise constant,
    keyed by segment start times; dt should subdivide the segment grid."""
    if isinstance(generator, Superoperator):
        mat = generator.matrix
        return (lambda t: mat), {"kind": "static"}
    segments = sorted(((float(t), g) for t, g in generator), key=lambda p: p[0])
    if not segments:
        raise ValueError("empty generator schedule")
    if segments[0][0] > 0.0:
        raise ValueError("generator schedule must start at t = 0")
    starts = [t for t, _ in segments]
    mats = [g.matrix for _, g in segments]

    def lookup(t: float) -> np.ndarray:
        idx = np.searchsorted(starts, t, side="right") - 1
        return mats[max(idx, 0)]

    return lookup, {"kind": "schedule", "segments": len(segments)}


def integrate(
    generator: GeneratorLike,
    rho0: DensityMatrix,
    t_end: float,
    dt: float,
    observables: Sequence[Operator] = (),
    record_stride: int = 1,
    observable_names: Sequence[str] | None = None,
) -> Trajectory:
    """Integrate rho over [0, t_end] with fixed step dt (final time within dt
    of t_end).  Aborts with a diagnostic when trace or positivity drift past
    1e-6: that signals a broken generator, not an integration problem.
    """
    if dt <= 0 or dt > t_end:
        raise ValueError("need 0 < dt <= t_end")
    if record_stride < 1:
        raise ValueError("record_stride must be >= 1")
    lookup, desc = _generator_lookup(generator)
    dims = rho0.dims
    side = rho0.side
    obs = [np.asarray(o.entries) for o in observables]
    for o in observables:
        if o.side != side:
            raise ValueError("observables must act on the state space")
    names = tuple(observable_names) if observable_names is not None else tuple(
        f"obs{i}" for i in range(len(obs))
    )
    if len(names) != len(obs):
        raise ValueError("one name per observable required")

    n_steps = max(int(round(t_end / dt)), 1)
    v = vec(np.array(rho0.entries, dtype=complex))
    steps, times, raws = [0], [0.0], [rho0.entries.copy()]
    for k in range(1, n_steps + 1):
        t = (k - 1) * dt
        # one lookup per step, at the midpoint: schedules are piecewise
        # constant on a grid the step subdivides, so the step never
        # straddles a segment boundary
        g = lookup(t + 0.5 * dt)
        k1 = g @ v
        k2 = g @ (v + 0.5 * dt * k1)
        k3 = g @ (v + 0.5 * dt * k2)
        k4 = g @ (v + dt * k3)
        v = v + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rho = hermitize(unvec(v, side))
        v = vec(rho)
        if k % record_stride == 0 or k == n_steps:
            drift = abs(np.real(np.trace(rho)) - 1.0)
            min_eig = float(np.linalg.eigvalsh(rho)[0])
            if drift > ABORT_TOL or min_eig < -ABORT_TOL:
                raise RuntimeError(
                    f"state invariants violated at t={k * dt:.6g}: "
                    f"|trace-1|={drift:.3e}, min eigenvalue={min_eig:.3e}"
                )
            steps.append(k)
            times.append(k * dt)
            raws.append(rho.copy())

    metadata = {"engine": "me-rk4", "dt": dt, "t_end": n_steps * dt, "generator": desc}
    return build_trajectory(
        steps, times, raws, dims, obs, names, metadata, state_atol=SAMPLE_ATOL
    )


def reduced_trajectory(traj: Trajectory, keep: Sequence[int]) -> Trajectory:
    """Partial trace applied samplewise; `keep` lists 1-based carrier indices."""
    from .ops import partial_trace

    keep0 = sorted(int(m) - 1 for m in keep)
    raws = []
    dims = None
    for state in traj.states:
        reduced = partial_trace(state.op, keep0)
        dims = reduced.dims
        raws.append(reduced.entries)
    metadata = dict(traj.metadata)
    metadata["reduced_to"] = list(keep)
    return build_trajectory(
        traj.steps,
        traj.times,
        raws,
        dims,
        [],
        [],
        metadata,
        state_atol=SAMPLE_ATOL,
    )


def trace_distance(a: DensityMatrix | Operator, b: DensityMatrix | Operator) -> float:
    """(1/2) sum |eigenvalues(a - b)|; in [0, 1] for states."""
    ea = a.entries if hasattr(a, "entries") else np.asarray(a)
    eb = b.entries if hasattr(b, "entries") else np.asarray(b)
    if ea.shape != eb.shape:
        raise ValueError(f"shape mismatch: {ea.shape} vs {eb.shape}")
    delta = hermitize(ea - eb)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(delta))))
