"""Exact discrete simulation of the multipartite collision model.

An ordered set of carriers S_1..S_M collides with a stream of identical
sub-environments; between collisions each sub-environment relaxes under a
CPT channel.  The main simulation path is the column recursion, which only
ever holds the carriers plus one environment site in memory.  The row
decomposition is kept as a correctness oracle on small instances.

Joint states are laid out as [S_1, ..., S_M, E] with the environment last.
Carrier indices m and collision indices n are 1-based throughout.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .channels import DensityMatrix, KrausChannel
from .ops import (
    DEFAULT_TOL,
    Operator,
    embed,
    expm_hermitian,
    kron,
    partial_trace,
)
from .trajectory import Trajectory, build_trajectory

ROW_PATH_MAX_SIDE = 256


def _check_coupling_list(ops: Sequence[Operator], dim: int, label: str):
    for op in ops:
        if op.side != dim:
            raise ValueError(f"{label} operator side {op.side} does not match dimension {dim}")
        if not op.is_hermitian(DEFAULT_TOL):
            raise ValueError(f"{label} operator is not Hermitian")
        if np.max(np.abs(op.entries)) == 0:
            raise ValueError(f"{label} operator is identically zero")


@dataclass(frozen=True, eq=False)
class CouplingSpec:
    """Hermitian coupling terms H = sum_l A_l (x) B_l for every carrier.

    `system_ops[m-1][l]` acts on carrier m, `env_ops[m-1][l]` on the
    sub-environment (carriers may share one environment list).  For
    non-uniform collisions, `collision_system_ops[n-1][m-1][l]` supplies the
    carrier operators used at collision n.
    """

    system_ops: tuple[tuple[Operator, ...], ...]
    env_ops: tuple[tuple[Operator, ...], ...]
    env_shared: bool = True
    collision_system_ops: tuple[tuple[tuple[Operator, ...], ...], ...] | None = None

    def __post_init__(self):
        system_ops = tuple(tuple(ops) for ops in self.system_ops)
        env_ops = tuple(tuple(ops) for ops in self.env_ops)
        if not system_ops:
            raise ValueError("need at least one carrier")
        if len(env_ops) != len(system_ops):
            raise ValueError("system and environment coupling lists must pair per carrier")
        env_dim = env_ops[0][0].side if env_ops[0] else 0
        for m, (a_list, b_list) in enumerate(zip(system_ops, env_ops), start=1):
            if not a_list or len(a_list) != len(b_list):
                raise ValueError(f"carrier {m}: coupling term counts differ or are empty")
            _check_coupling_list(a_list, a_list[0].side, f"carrier {m} system")
            _check_coupling_list(b_list, env_dim, f"carrier {m} environment")
        if self.collision_system_ops is not None:
            frozen = tuple(tuple(tuple(ops) for ops in per_m) for per_m in self.collision_system_ops)
            for per_m in frozen:
                if len(per_m) != len(system_ops):
                    raise ValueError("collision-indexed operators must cover every carrier")
                for m, ops in enumerate(per_m):
                    if len(ops) != len(system_ops[m]):
                        raise ValueError("collision-indexed term count mismatch")
            object.__setattr__(self, "collision_system_ops", frozen)
        object.__setattr__(self, "system_ops", system_ops)
        object.__setattr__(self, "env_ops", env_ops)

    @classmethod
    def uniform(
        cls, system_ops: Sequence[Sequence[Operator]], env_ops: Sequence[Operator]
    ) -> "CouplingSpec":
        """Same environment operators for every carrier, no collision index."""
        env = tuple(env_ops)
        return cls(
            system_ops=tuple(tuple(ops) for ops in system_ops),
            env_ops=tuple(env for _ in system_ops),
            env_shared=True,
        )

    @property
    def n_carriers(self) -> int:
        return len(self.system_ops)

    def n_terms(self, m: int) -> int:
        return len(self.system_ops[m - 1])

    def a_ops(self, m: int, n: int | None = None) -> tuple[Operator, ...]:
        """Carrier-m operators, at collision n when collision-indexed."""
        if self.collision_system_ops is not None and n is not None:
            if not 1 <= n <= len(self.collision_system_ops):
                raise ValueError(f"collision index {n} outside tabulated range")
            return self.collision_system_ops[n - 1][m - 1]
        return self.system_ops[m - 1]

    def b_ops(self, m: int) -> tuple[Operator, ...]:
        return self.env_ops[m - 1]


@dataclass(frozen=True, eq=False)
class HamiltonianSchedule:
    """Piecewise-constant local Hamiltonian h(t) for one carrier.

    Segment j covers [breakpoints[j], breakpoints[j+1]); the last segment
    extends to infinity.  The first breakpoint must be 0.
    """

    breakpoints: tuple[float, ...]
    ops: tuple[Operator, ...]

    def __post_init__(self):
        pts = tuple(float(t) for t in self.breakpoints)
        ops = tuple(self.ops)
        if not pts or pts[0] != 0.0 or any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValueError("breakpoints must start at 0 and increase strictly")
        if len(ops) != len(pts):
            raise ValueError("need one Hamiltonian per segment")
        for op in ops:
            if not op.is_hermitian(DEFAULT_TOL):
                raise ValueError("schedule Hamiltonians must be Hermitian")
        object.__setattr__(self, "breakpoints", pts)
        object.__setattr__(self, "ops", ops)

    @classmethod
    def constant(cls, h: Operator) -> "HamiltonianSchedule":
        return cls((0.0,), (h,))

    @property
    def dim(self) -> int:
        return self.ops[0].side

    def at(self, t: float) -> Operator:
        idx = bisect.bisect_right(self.breakpoints, t) - 1
        return self.ops[max(idx, 0)]

    def propagator(self, t0: float, t1: float) -> np.ndarray:
        """Time-ordered propagator over [t0, t1], exact for the step schedule."""
        if t1 < t0:
            raise ValueError("propagator requires t1 >= t0")
        cuts = [t0] + [t for t in self.breakpoints if t0 < t < t1] + [t1]
        u = np.eye(self.dim, dtype=complex)
        for a, b in zip(cuts, cuts[1:]):
            u = expm_hermitian(self.at(a), b - a).entries @ u
        return u


@dataclass(frozen=True, eq=False)
class CollisionConfig:
    """Full description of one collision-model run.

    The collision unitary is exp(-i g H dt); `collision_times` (default
    n*dt) only matters when local free-evolution schedules are present.
    """

    carrier_dims: tuple[int, ...]
    env_dim: int
    g: float
    dt: float
    n_collisions: int
    eta: DensityMatrix
    channel: KrausChannel
    couplings: CouplingSpec
    local_hamiltonians: tuple[HamiltonianSchedule | None, ...] | None = None
    collision_times: tuple[float, ...] | None = None

    def __post_init__(self):
        carrier_dims = tuple(int(d) for d in self.carrier_dims)
        object.__setattr__(self, "carrier_dims", carrier_dims)
        if self.dt <= 0:
            raise ValueError("collision duration dt must be positive")
        if self.g < 0:
            raise ValueError("coupling strength g must be nonnegative")
        if self.n_collisions < 0:
            raise ValueError("n_collisions must be nonnegative")
        if self.eta.side != self.env_dim:
            raise ValueError("environment state side does not match env_dim")
        if self.channel.side != self.env_dim:
            raise ValueError("relaxation channel side does not match env_dim")
        if self.couplings.n_carriers != len(carrier_dims):
            raise ValueError("coupling spec carrier count does not match carrier_dims")
        for m, d in enumerate(carrier_dims, start=1):
            if self.couplings.system_ops[m - 1][0].side != d:
                raise ValueError(f"carrier {m} coupling operators do not match dimension {d}")
            if self.couplings.env_ops[m - 1][0].side != self.env_dim:
                raise ValueError(f"carrier {m} environment operators do not match env_dim")
        if self.local_hamiltonians is not None:
            scheds = tuple(self.local_hamiltonians)
            if len(scheds) != len(carrier_dims):
                raise ValueError("need one schedule entry (or None) per carrier")
            for m, sched in enumerate(scheds, start=1):
                if sched is not None and sched.dim != carrier_dims[m - 1]:
                    raise ValueError(f"carrier {m} schedule dimension mismatch")
            object.__setattr__(self, "local_hamiltonians", scheds)
        if self.collision_times is not None:
            times = tuple(float(t) for t in self.collision_times)
            if len(times) != self.n_collisions:
                raise ValueError("collision_times must list one time per collision")
            if any(b <= a for a, b in zip((0.0,) + times, times)):
                raise ValueError("collision times must be positive and strictly increasing")
            object.__setattr__(self, "collision_times", times)

    @property
    def n_carriers(self) -> int:
        return len(self.carrier_dims)

    @property
    def gamma(self) -> float:
        return self.g * self.g * self.dt

    def tau(self, n: int) -> float:
        """Time of the n-th collision (tau_0 = 0)."""
        if n == 0:
            return 0.0
        if self.collision_times is not None:
            return self.collision_times[n - 1]
        return n * self.dt

    @property
    def joint_dims(self) -> tuple[int, ...]:
        return self.carrier_dims + (self.env_dim,)


def collision_hamiltonian(cfg: CollisionConfig, m: int, n: int) -> Operator:
    """Coupling Hamiltonian sum_l A_l (x) B_l on carrier m and one sub-environment."""
    if not 1 <= m <= cfg.n_carriers:
        raise ValueError(f"carrier index {m} out of range")
    a_ops = cfg.couplings.a_ops(m, n)
    b_ops = cfg.couplings.b_ops(m)
    total = None
    for a, b in zip(a_ops, b_ops):
        term = kron(a, b)
        total = term if total is None else total + term
    return total


def collision_unitary(cfg: CollisionConfig, m: int, n: int) -> Operator:
    """exp(-i g H dt) for the collision of carrier m with sub-environment n."""
    return expm_hermitian(collision_hamiltonian(cfg, m, n), cfg.g * cfg.dt)


@dataclass(frozen=True)
class AssumptionReport:
    """First-moment check of the environment operators along the relaxation orbit."""

    entries: tuple[tuple[int, int, float], ...]  # (channel power or carrier index, term, value)
    max_violation: float
    tol: float
    passed: bool
    uniform: bool

    def to_dict(self) -> dict:
        return {
            "uniform": self.uniform,
            "max_violation": self.max_violation,
            "tol": self.tol,
            "passed": self.passed,
            "entries": [
                {("power" if self.uniform else "carrier"): m, "term": l, "value": v}
                for (m, l, v) in self.entries
            ],
        }


def check_assumption(cfg: CollisionConfig, m_max: int, tol: float = DEFAULT_TOL) -> AssumptionReport:
    """Verify that every environment coupling operator has zero mean on the
    relaxation orbit of eta.

    Uniform case: |tr(B_l M^m(eta))| for m = 0..m_max.  Per-carrier
    environment operators: |tr(B_(m,l) M^(m-1)(eta))| for m = 1..m_max.
    """
    if m_max < 1:
        raise ValueError("m_max must be at least 1")
    entries = []
    uniform = cfg.couplings.env_shared
    sigma = cfg.eta.op
    if uniform:
        b_ops = cfg.couplings.b_ops(1)
        for power in range(m_max + 1):
            for l, b in enumerate(b_ops):
                value = abs(np.einsum("ij,ji->", b.entries, sigma.entries))
                entries.append((power, l, float(value)))
            sigma = cfg.channel.apply(sigma)
    else:
        for m in range(1, min(m_max, cfg.n_carriers) + 1):
            b_ops = cfg.couplings.b_ops(m)
            for l, b in enumerate(b_ops):
                value = abs(np.einsum("ij,ji->", b.entries, sigma.entries))
                entries.append((m, l, float(value)))
            sigma = cfg.channel.apply(sigma)
    max_violation = max(v for (_, _, v) in entries)
    return AssumptionReport(
        entries=tuple(entries),
        max_violation=max_violation,
        tol=tol,
        passed=max_violation <= tol,
        uniform=uniform,
    )


# --- column path -----------------------------------------------------------


def _apply_channel_env(arr: np.ndarray, cfg: CollisionConfig) -> np.ndarray:
    """Apply the relaxation channel to the trailing environment factor."""
    de = cfg.env_dim
    ds = arr.shape[0] // de
    x4 = arr.reshape(ds, de, ds, de)
    out = np.zeros_like(x4)
    for k in cfg.channel.kraus:
        ke = k.entries
        out += np.einsum("pa,iajb,qb->ipjq", ke, x4, ke.conj())
    return out.reshape(arr.shape)


def _trace_env(arr: np.ndarray, cfg: CollisionConfig) -> np.ndarray:
    de = cfg.env_dim
    ds = arr.shape[0] // de
    return np.einsum("iaja->ij", arr.reshape(ds, de, ds, de))


def _embedded_unitary(cfg: CollisionConfig, m: int, n: int) -> np.ndarray:
    u = collision_unitary(cfg, m, n)
    full = embed(u, cfg.joint_dims, (m - 1, cfg.n_carriers))
    return full.entries


def _unitary_provider(cfg: CollisionConfig) -> Callable[[int, int], np.ndarray]:
    if cfg.couplings.collision_system_ops is None:
        cache = {m: _embedded_unitary(cfg, m, 1) for m in range(1, cfg.n_carriers + 1)}
        return lambda m, n: cache[m]
    return lambda m, n: _embedded_unitary(cfg, m, n)


def _column_step_raw(
    joint: np.ndarray,
    cfg: CollisionConfig,
    n: int,
    provider: Callable[[int, int], np.ndarray],
) -> np.ndarray:
    arr = joint
    for m in range(1, cfg.n_carriers + 1):
        u = provider(m, n)
        arr = u @ arr @ u.conj().T
        arr = _apply_channel_env(arr, cfg)
    return _trace_env(arr, cfg)


def evolve_column_step(
    joint: DensityMatrix, cfg: CollisionConfig, collision_index: int = 1
) -> DensityMatrix:
    """One column of the collision sequence: for m = 1..M collide carrier m
    with the fresh sub-environment and relax it, then trace the environment
    factor out.  Input is the joint state carriers (x) one environment site.
    """
    if joint.dims != cfg.joint_dims:
        raise ValueError(
            f"joint state dims {joint.dims} do not match carriers+environment {cfg.joint_dims}"
        )
    out = _column_step_raw(joint.entries, cfg, collision_index, _unitary_provider(cfg))
    return DensityMatrix(Operator(cfg.carrier_dims, out), atol=1e-8)


def _free_evolution_unitary(cfg: CollisionConfig, t0: float, t1: float) -> np.ndarray | None:
    if cfg.local_hamiltonians is None:
        return None
    blocks = []
    for m, sched in enumerate(cfg.local_hamiltonians):
        if sched is None:
            blocks.append(np.eye(cfg.carrier_dims[m], dtype=complex))
        else:
            blocks.append(sched.propagator(t0, t1))
    full = blocks[0]
    for b in blocks[1:]:
        full = np.kron(full, b)
    return full


def simulate(
    cfg: CollisionConfig,
    rho0: DensityMatrix,
    observables: Sequence[Operator] = (),
    record_stride: int = 1,
    observable_names: Sequence[str] | None = None,
) -> Trajectory:
    """Iterate the column recursion for cfg.n_collisions collisions.

    Local free evolution, when configured, is applied to the carriers over
    [tau_(n-1), tau_n] before collision n.  Samples are recorded at step 0,
    every `record_stride` collisions, and at the final collision.
    """
    if rho0.dims != cfg.carrier_dims:
        raise ValueError(f"initial state dims {rho0.dims} do not match carriers {cfg.carrier_dims}")
    if record_stride < 1:
        raise ValueError("record_stride must be >= 1")
    obs = [np.asarray(o.entries) for o in observables]
    for o in observables:
        if o.side != math.prod(cfg.carrier_dims):
            raise ValueError("observables must act on the joint carrier space")
    names = tuple(observable_names) if observable_names is not None else tuple(
        f"obs{i}" for i in range(len(obs))
    )
    if len(names) != len(obs):
        raise ValueError("one name per observable required")

    provider = _unitary_provider(cfg)
    eta = cfg.eta.entries
    arr = np.array(rho0.entries, dtype=complex)

    steps, times, raws = [0], [0.0], [arr.copy()]
    for n in range(1, cfg.n_collisions + 1):
        v = _free_evolution_unitary(cfg, cfg.tau(n - 1), cfg.tau(n))
        if v is not None:
            arr = v @ arr @ v.conj().T
        joint = np.kron(arr, eta)
        arr = _column_step_raw(joint, cfg, n, provider)
        if n % record_stride == 0 or n == cfg.n_collisions:
            steps.append(n)
            times.append(cfg.tau(n))
            raws.append(arr.copy())

    metadata = {
        "engine": "collision",
        "g": cfg.g,
        "dt": cfg.dt,
        "gamma": cfg.gamma,
        "n_collisions": cfg.n_collisions,
        "record_stride": record_stride,
    }
    return build_trajectory(steps, times, raws, cfg.carrier_dims, obs, names, metadata)


# --- row path (correctness oracle) ----------------------------------------


def _apply_channel_at(arr: np.ndarray, dims: tuple[int, ...], pos: int, channel: KrausChannel) -> np.ndarray:
    n = len(dims)
    tensor = arr.reshape(dims + dims)
    in_labels = list(range(2 * n))
    out_labels = list(range(2 * n))
    out_labels[pos] = 2 * n
    out_labels[n + pos] = 2 * n + 1
    out = np.zeros(dims + dims, dtype=complex)
    for k in channel.kraus:
        ke = k.entries
        out += np.einsum(ke, [2 * n, pos], tensor, in_labels, ke.conj(), [2 * n + 1, n + pos], out_labels)
    side = arr.shape[0]
    return out.reshape(side, side)


def evolve_row(cfg: CollisionConfig, rho0: DensityMatrix, n_sites: int) -> DensityMatrix:
    """Row decomposition: carrier by carrier, collide with sub-environments
    1..n_sites and then relax all of them once.  Exponential in n_sites;
    guarded to a total side of 256.
    """
    if rho0.dims != cfg.carrier_dims:
        raise ValueError("initial state dims do not match carriers")
    if n_sites < 1:
        raise ValueError("need at least one environment site")
    side = math.prod(cfg.carrier_dims) * cfg.env_dim**n_sites
    if side > ROW_PATH_MAX_SIDE:
        raise ValueError(
            f"row path total side {side} exceeds the guard {ROW_PATH_MAX_SIDE}; "
            "use the column path for larger instances"
        )
    dims = cfg.carrier_dims + (cfg.env_dim,) * n_sites
    arr = rho0.entries
    for _ in range(n_sites):
        arr = np.kron(arr, cfg.eta.entries)
    n_carr = cfg.n_carriers
    for m in range(1, n_carr + 1):
        for j in range(1, n_sites + 1):
            u = embed(collision_unitary(cfg, m, j), dims, (m - 1, n_carr - 1 + j)).entries
            arr = u @ arr @ u.conj().T
        for j in range(1, n_sites + 1):
            arr = _apply_channel_at(arr, dims, n_carr - 1 + j, cfg.channel)
    reduced = partial_trace(Operator(dims, arr), keep=range(n_carr))
    return DensityMatrix(reduced, atol=1e-8)


# --- interaction picture ---------------------------------------------------


def interaction_frame_couplings(cfg: CollisionConfig) -> CouplingSpec:
    """Rotate the carrier coupling operators into the frame of the local free
    evolution: A -> V(tau_n,0)^dag A V(tau_n,0), tabulated per collision.

    The collision duration is assumed short against the spacing of the
    collision times; the transformation itself is exact for the piecewise
    constant schedules used here.
    """
    if cfg.local_hamiltonians is None:
        raise ValueError("interaction frame requires local Hamiltonian schedules")
    spec = cfg.couplings
    if spec.collision_system_ops is not None:
        raise ValueError("couplings are already collision-indexed")
    cumulative = [np.eye(d, dtype=complex) for d in cfg.carrier_dims]
    tabulated = []
    for n in range(1, cfg.n_collisions + 1):
        t0, t1 = cfg.tau(n - 1), cfg.tau(n)
        per_m = []
        for m, sched in enumerate(cfg.local_hamiltonians):
            if sched is not None:
                cumulative[m] = sched.propagator(t0, t1) @ cumulative[m]
            v = cumulative[m]
            per_m.append(
                tuple(
                    Operator(a.dims, v.conj().T @ a.entries @ v)
                    for a in spec.system_ops[m]
                )
            )
        tabulated.append(tuple(per_m))
    return CouplingSpec(
        system_ops=spec.system_ops,
        env_ops=spec.env_ops,
        env_shared=spec.env_shared,
        collision_system_ops=tuple(tabulated),
    )


def frame_propagator(cfg: CollisionConfig, n: int) -> np.ndarray:
    """Joint free-evolution unitary V(tau_n, 0) over all carriers."""
    if cfg.local_hamiltonians is None:
        raise ValueError("no local Hamiltonian schedules configured")
    blocks = []
    for m, sched in enumerate(cfg.local_hamiltonians):
        if sched is None:
            blocks.append(np.eye(cfg.carrier_dims[m], dtype=complex))
        else:
            blocks.append(sched.propagator(0.0, cfg.tau(n)))
    full = blocks[0]
    for b in blocks[1:]:
        full = np.kron(full, b)
    return full
