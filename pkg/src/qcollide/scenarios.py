"""Scenario configuration, built-in scenario library, and run drivers.

Configs are JSON with named operator shorthands plus an explicit-matrix
escape hatch, so parameter sweeps are scriptable without code changes.
For every sweep entry n the scaling dt = t_end/n, g = sqrt(gamma/dt) is
derived here and never user-supplied: the weak-coupling limit is walked
along the line g^2 dt = gamma.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channels import (
    DensityMatrix,
    KrausChannel,
    channel_from_dict,
    identity_channel,
    lossy_bosonic_channel,
    replacer_channel,
    unitary_channel,
)
from .collision import (
    CollisionConfig,
    CouplingSpec,
    check_assumption,
    simulate,
)
from .generators import GeneratorSet, full_generator
from .integrator import integrate, trace_distance
from .jsonio import complex_matrix_from_json
from .ops import (
    Operator,
    annihilation,
    creation,
    embed,
    expm_hermitian,
    momentum_op,
    number_op,
    pauli,
    position_op,
    projector,
)
from .perturbation import (
    remainder_halving_ratios,
    verify_first_order,
    verify_second_order,
)
from .trajectory import Trajectory

BUILTIN_NAMES = ("dephasing-1q", "ad-chain-2q", "rotating-env-2q", "bosonic-fiber", "replacer")


class ConfigError(Exception):
    """Raised for malformed or inconsistent scenario configuration."""


@dataclass(eq=False)
class ScenarioConfig:
    name: str
    carrier_dims: tuple[int, ...]
    env_dim: int
    couplings: CouplingSpec
    eta: DensityMatrix
    channel: KrausChannel
    rho0: DensityMatrix
    observables: tuple[tuple[str, Operator], ...]
    gamma: float = 1.0
    t_end: float = 0.5
    sweep: tuple[int, ...] = (50, 100, 200, 400)
    n_collisions: int = 100
    record_stride: int = 1
    seed: int = 0
    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.gamma <= 0:
            raise ConfigError("gamma must be positive")
        if self.t_end <= 0:
            raise ConfigError("t_end must be positive")
        if any(int(n) < 1 for n in self.sweep):
            raise ConfigError("sweep entries must be positive collision counts")
        self.sweep = tuple(int(n) for n in self.sweep)
        if self.n_collisions < 0:
            raise ConfigError("n_collisions must be nonnegative")


def collision_config(sc: ScenarioConfig, n: int) -> CollisionConfig:
    """Collision parameters for n collisions: dt = t_end/n first, then
    g = sqrt(gamma/dt), enforcing the weak-coupling scaling."""
    if n < 1:
        raise ConfigError("collision count must be >= 1")
    dt = sc.t_end / n
    g = math.sqrt(sc.gamma / dt)
    return CollisionConfig(
        carrier_dims=sc.carrier_dims,
        env_dim=sc.env_dim,
        g=g,
        dt=dt,
        n_collisions=n,
        eta=sc.eta,
        channel=sc.channel,
        couplings=sc.couplings,
    )


def scenario_generator(sc: ScenarioConfig) -> GeneratorSet:
    return full_generator(sc.couplings, sc.eta, sc.channel, sc.gamma, sc.carrier_dims)


# --- operator / state parsing ------------------------------------------------

_OP_BUILDERS = {
    "sx": lambda d: _require_qubit(d, "sx") or pauli("x"),
    "sy": lambda d: _require_qubit(d, "sy") or pauli("y"),
    "sz": lambda d: _require_qubit(d, "sz") or pauli("z"),
    "id": lambda d: Operator((d,), np.eye(d)),
    "annihilation": annihilation,
    "a": annihilation,
    "creation": creation,
    "adag": creation,
    "number": number_op,
    "n": number_op,
    "x": position_op,
    "p": momentum_op,
}


def _require_qubit(d: int, name: str):
    if d != 2:
        raise ConfigError(f"operator {name!r} needs a qubit factor, got dimension {d}")
    return None


def parse_operator(spec, dim: int) -> Operator:
    """Named shorthand ('sx', 'annihilation', 'proj1', ...) or explicit
    {'matrix': [[ [re,im], ...], ...]}; dimension comes from context."""
    if isinstance(spec, dict):
        if "matrix" not in spec:
            raise ConfigError(f"operator dict needs a 'matrix' key, got {sorted(spec)}")
        mat = complex_matrix_from_json(spec["matrix"])
        if mat.shape[0] != dim:
            raise ConfigError(f"operator matrix side {mat.shape[0]} does not match dimension {dim}")
        return Operator((dim,), mat)
    if not isinstance(spec, str):
        raise ConfigError(f"operator spec must be a name or a matrix dict, got {type(spec).__name__}")
    name = spec.strip().lower()
    if "(" in name:  # tolerate explicit dimension suffix like "annihilation(4)"
        base, arg = name.split("(", 1)
        arg = arg.rstrip(")")
        if int(arg) != dim:
            raise ConfigError(f"operator {spec!r} declares dimension {arg}, context expects {dim}")
        name = base
    if name.startswith("proj"):
        return projector(dim, int(name[4:]))
    try:
        return _OP_BUILDERS[name](dim)
    except KeyError:
        raise ConfigError(f"unknown operator shorthand {spec!r}") from None


def parse_state(spec, dims: Sequence[int]) -> DensityMatrix:
    dims = tuple(dims)
    side = math.prod(dims)
    if isinstance(spec, str):
        name = spec.strip().lower()
        if name == "ground":
            ket = np.zeros(side)
            ket[0] = 1.0
            return DensityMatrix.from_ket(ket, dims)
        if name == "maximally-mixed":
            return DensityMatrix.maximally_mixed(dims)
        raise ConfigError(f"unknown state shorthand {spec!r}")
    if not isinstance(spec, dict):
        raise ConfigError("state spec must be a shorthand name or a dict")
    kind = spec.get("kind")
    if kind == "ket":
        amps = np.array([complex(a[0], a[1]) for a in spec["amplitudes"]])
        if amps.size != side:
            raise ConfigError(f"ket length {amps.size} does not match dimension {side}")
        return DensityMatrix.from_ket(amps, dims)
    if kind == "matrix":
        mat = complex_matrix_from_json(spec["matrix"])
        if mat.shape[0] != side:
            raise ConfigError(f"state matrix side {mat.shape[0]} does not match dimension {side}")
        try:
            return DensityMatrix.from_matrix(mat, dims)
        except ValueError as exc:
            raise ConfigError(f"invalid density matrix: {exc}") from exc
    if kind == "product":
        factors = spec["factors"]
        if len(factors) != len(dims):
            raise ConfigError("product state needs one factor per carrier")
        mats = [complex_matrix_from_json(m) for m in factors]
        full = mats[0]
        for m in mats[1:]:
            full = np.kron(full, m)
        try:
            return DensityMatrix.from_matrix(full, dims)
        except ValueError as exc:
            raise ConfigError(f"invalid product state: {exc}") from exc
    raise ConfigError(f"unknown state kind {kind!r}")


def _parse_observables(entries, carrier_dims) -> tuple[tuple[str, Operator], ...]:
    parsed = []
    side = math.prod(carrier_dims)
    for entry in entries:
        if "name" not in entry:
            raise ConfigError("each observable needs a 'name'")
        name = str(entry["name"])
        if "carrier" in entry:
            m = int(entry["carrier"])
            if not 1 <= m <= len(carrier_dims):
                raise ConfigError(f"observable {name!r}: carrier {m} out of range")
            local = parse_operator(entry["op"], carrier_dims[m - 1])
            parsed.append((name, embed(local, carrier_dims, (m - 1,))))
        elif "matrix" in entry:
            mat = complex_matrix_from_json(entry["matrix"])
            if mat.shape[0] != side:
                raise ConfigError(f"observable {name!r}: matrix side mismatch")
            parsed.append((name, Operator(tuple(carrier_dims), mat)))
        else:
            raise ConfigError(f"observable {name!r} needs 'carrier'+'op' or 'matrix'")
    return tuple(parsed)


# --- built-in scenarios -------------------------------------------------------


def _check_params(name: str, params: dict, allowed: set[str]):
    unknown = set(params) - allowed
    if unknown:
        raise ConfigError(f"scenario {name!r} does not accept parameters {sorted(unknown)}")


def _qubit_chain(name: str, channel: KrausChannel, rho0: DensityMatrix) -> ScenarioConfig:
    sx = pauli("x")
    dims = (2, 2)
    spec = CouplingSpec.uniform([[sx], [sx]], [sx])
    observables = tuple(
        (f"pe_c{m}", embed(projector(2, 1), dims, (m - 1,))) for m in (1, 2)
    )
    return ScenarioConfig(
        name=name,
        carrier_dims=dims,
        env_dim=2,
        couplings=spec,
        eta=DensityMatrix.ground(2),
        channel=channel,
        rho0=rho0,
        observables=observables,
    )


def builtin_scenario(name: str, params: dict | None = None) -> ScenarioConfig:
    params = dict(params or {})
    if name == "dephasing-1q":
        _check_params(name, params, set())
        sx = pauli("x")
        return ScenarioConfig(
            name=name,
            carrier_dims=(2,),
            env_dim=2,
            couplings=CouplingSpec.uniform([[sx]], [sx]),
            eta=DensityMatrix.ground(2),
            channel=identity_channel(2),
            rho0=DensityMatrix.ground(2),
            observables=(("p0_c1", projector(2, 0)),),
        )
    if name == "ad-chain-2q":
        _check_params(name, params, {"kappa", "p"})
        if "kappa" in params and "p" in params:
            raise ConfigError("give either the transmissivity 'kappa' or the damping 'p', not both")
        if "p" in params:
            kappa = 1.0 - float(params["p"])
        else:
            kappa = float(params.get("kappa", 0.25))
        theta8 = math.pi / 8
        ket = np.zeros(4, dtype=complex)
        ket[1] = math.cos(theta8)  # |01>
        ket[2] = math.sin(theta8)  # |10>
        return _qubit_chain(
            name,
            lossy_bosonic_channel(2, kappa),
            DensityMatrix.from_ket(ket, (2, 2)),
        )
    if name == "rotating-env-2q":
        _check_params(name, params, {"theta"})
        theta = float(params.get("theta", math.pi / 4))
        ket = np.array([1, 0, 0, 1j]) / math.sqrt(2)
        return _qubit_chain(
            name,
            unitary_channel(expm_hermitian(pauli("z"), theta)),
            DensityMatrix.from_ket(ket, (2, 2)),
        )
    if name == "bosonic-fiber":
        _check_params(name, params, {"d", "kappa"})
        d = int(params.get("d", 4))
        kappa = float(params.get("kappa", 0.25))
        dims = (d, d)
        x, p = position_op(d), momentum_op(d)
        spec = CouplingSpec.uniform([[x, p], [x, p]], [x, p])
        ket1 = np.zeros(d, dtype=complex)
        ket1[0] = ket1[1] = 1 / math.sqrt(2)
        ket = np.kron(ket1, np.eye(d)[0].astype(complex))
        observables = tuple(
            (f"n_c{m}", embed(number_op(d), dims, (m - 1,))) for m in (1, 2)
        )
        return ScenarioConfig(
            name=name,
            carrier_dims=dims,
            env_dim=d,
            couplings=spec,
            eta=DensityMatrix.ground(d),
            channel=lossy_bosonic_channel(d, kappa),
            rho0=DensityMatrix.from_ket(ket, dims),
            observables=observables,
        )
    if name == "replacer":
        _check_params(name, params, set())
        eta = DensityMatrix.ground(2)
        plus = np.array([[0.5, 0.5], [0.5, 0.5]], dtype=complex)
        rho0 = DensityMatrix.from_matrix(np.kron(plus, np.diag([0.3, 0.7])), (2, 2))
        return _qubit_chain(name, replacer_channel(eta), rho0)
    raise ConfigError(f"unknown scenario {name!r}; built-ins: {', '.join(BUILTIN_NAMES)}")


_TOP_LEVEL_KEYS = {
    "scenario",
    "params",
    "gamma",
    "t_end",
    "sweep",
    "n_collisions",
    "record_stride",
    "seed",
    "rho0",
    "observables",
    "carrier_dims",
    "env_dim",
    "couplings",
    "eta",
    "channel",
}


def load_scenario(source) -> ScenarioConfig:
    """Build a ScenarioConfig from a dict, a JSON file path, or a builtin name."""
    if isinstance(source, (str, os.PathLike)):
        path = os.fspath(source)
        if os.path.exists(path):
            try:
                with open(path) as fh:
                    data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        elif path in BUILTIN_NAMES:
            data = {"scenario": path}
        else:
            raise ConfigError(f"config {path!r} is neither a file nor a builtin scenario name")
    elif isinstance(source, dict):
        data = source
    else:
        raise ConfigError("config source must be a path, builtin name, or dict")

    unknown = set(data) - _TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    kind = data.get("scenario")
    if kind is None:
        raise ConfigError("config needs a 'scenario' key")

    if kind == "custom":
        sc = _load_custom(data)
    else:
        sc = builtin_scenario(kind, data.get("params"))
        if "rho0" in data:
            sc.rho0 = parse_state(data["rho0"], sc.carrier_dims)
        if "observables" in data:
            sc.observables = _parse_observables(data["observables"], sc.carrier_dims)
    for key in ("gamma", "t_end"):
        if key in data:
            setattr(sc, key, float(data[key]))
    if "sweep" in data:
        sc.sweep = tuple(int(n) for n in data["sweep"])
    if "n_collisions" in data:
        sc.n_collisions = int(data["n_collisions"])
    if "record_stride" in data:
        sc.record_stride = int(data["record_stride"])
    if "seed" in data:
        sc.seed = int(data["seed"])
    sc.raw = dict(data)
    sc.__post_init__()
    return sc


def _load_custom(data: dict) -> ScenarioConfig:
    try:
        carrier_dims = tuple(int(d) for d in data["carrier_dims"])
        env_dim = int(data["env_dim"])
        coupling_block = data["couplings"]
        eta = parse_state(data["eta"], (env_dim,))
        channel = channel_from_dict(data["channel"])
    except KeyError as exc:
        raise ConfigError(f"custom scenario is missing key {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    system = coupling_block.get("system")
    environment = coupling_block.get("environment")
    if system is None or environment is None:
        raise ConfigError("couplings need 'system' and 'environment' lists")
    if len(system) != len(carrier_dims):
        raise ConfigError("one system coupling list per carrier required")
    system_ops = [
        [parse_operator(op, carrier_dims[m]) for op in ops] for m, ops in enumerate(system)
    ]
    if environment and isinstance(environment[0], list):
        if len(environment) != len(carrier_dims):
            raise ConfigError("per-carrier environment couplings must cover every carrier")
        env_ops = [[parse_operator(op, env_dim) for op in ops] for ops in environment]
        spec = CouplingSpec(
            system_ops=tuple(tuple(ops) for ops in system_ops),
            env_ops=tuple(tuple(ops) for ops in env_ops),
            env_shared=False,
        )
    else:
        env_list = [parse_operator(op, env_dim) for op in environment]
        spec = CouplingSpec.uniform(system_ops, env_list)
    if channel.side != env_dim:
        raise ConfigError("channel dimension does not match env_dim")
    rho0 = parse_state(data.get("rho0", "ground"), carrier_dims)
    observables = _parse_observables(data.get("observables", []), carrier_dims)
    try:
        return ScenarioConfig(
            name="custom",
            carrier_dims=carrier_dims,
            env_dim=env_dim,
            couplings=spec,
            eta=eta,
            channel=channel,
            rho0=rho0,
            observables=observables,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# --- run drivers ---------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(eq=False)
class ConvergeReport:
    scenario: str
    entries: list[dict]
    fitted_order: float | None
    errors_strictly_decreasing: bool
    assumption: dict
    reference_dt: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "entries": self.entries,
            "fitted_order": self.fitted_order,
            "errors_strictly_decreasing": self.errors_strictly_decreasing,
            "assumption": self.assumption,
            "reference_dt": self.reference_dt,
            "passed": self.passed,
        }

    def to_csv(self, path):
        lines = ["n,dt,g,error"]
        for e in self.entries:
            lines.append(f"{e['n']},{_fmt(e['dt'])},{_fmt(e['g'])},{_fmt(e['error'])}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def run_converge(sc: ScenarioConfig, reference_dt: float | None = None) -> ConvergeReport:
    """Integrate the weak-coupling generator once as reference, then run the
    collision model along the sweep and report the trace-distance error at
    t_end per n, with the order fitted from the last two sweep points."""
    probe = collision_config(sc, max(sc.sweep))
    report = check_assumption(probe, m_max=len(sc.carrier_dims) + 2)
    if not report.passed:
        return ConvergeReport(
            scenario=sc.name,
            entries=[],
            fitted_order=None,
            errors_strictly_decreasing=False,
            assumption=report.to_dict(),
            reference_dt=0.0,
            passed=False,
        )
    gen = scenario_generator(sc)
    if reference_dt is None:
        reference_dt = sc.t_end / max(2000, 2 * max(sc.sweep))
    reference = integrate(gen.total, sc.rho0, sc.t_end, reference_dt)
    ref_state = reference.final_state()

    def one_entry(n: int) -> dict:
        cfg = collision_config(sc, n)
        traj = simulate(cfg, sc.rho0, record_stride=max(n, 1))
        err = trace_distance(traj.final_state(), ref_state)
        return {"n": n, "dt": cfg.dt, "g": cfg.g, "error": err}

    sweep = sorted(sc.sweep)
    with ThreadPoolExecutor(max_workers=min(len(sweep), os.cpu_count() or 1)) as pool:
        entries = list(pool.map(one_entry, sweep))

    errors = [e["error"] for e in entries]
    decreasing = all(b < a for a, b in zip(errors, errors[1:]))
    fitted = None
    if len(entries) >= 2:
        e_prev, e_last = errors[-2], errors[-1]
        n_prev, n_last = entries[-2]["n"], entries[-1]["n"]
        if e_last > 0 and e_prev > 0:
            fitted = math.log(e_prev / e_last) / math.log(n_last / n_prev)
    return ConvergeReport(
        scenario=sc.name,
        entries=entries,
        fitted_order=fitted,
        errors_strictly_decreasing=decreasing,
        assumption=report.to_dict(),
        reference_dt=reference_dt,
        passed=decreasing,
    )


def run_simulate(sc: ScenarioConfig, out_dir: str | None = None, fmt: str = "csv") -> Trajectory:
    """Collision-model trajectory at the configured n_collisions.

    n_collisions = 0 emits a single-sample trajectory holding rho0."""
    cfg = collision_config(sc, max(sc.n_collisions, 1))
    if sc.n_collisions == 0:
        cfg = dataclasses.replace(cfg, n_collisions=0)
    names = [name for name, _ in sc.observables]
    obs = [op for _, op in sc.observables]
    traj = simulate(cfg, sc.rho0, observables=obs, record_stride=sc.record_stride, observable_names=names)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        if fmt == "json":
            traj.to_json(os.path.join(out_dir, "trajectory.json"), include_states=True)
        else:
            traj.to_csv(os.path.join(out_dir, "trajectory.csv"))
    return traj


def run_generators(sc: ScenarioConfig, out_dir: str | None = None, fmt: str = "csv") -> GeneratorSet:
    """Rate tables and generator matrices for the configured scenario."""
    gen = scenario_generator(sc)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        rows = gen.rates.rate_table_rows()
        if fmt == "json":
            with open(os.path.join(out_dir, "rates.json"), "w") as fh:
                json.dump(gen.rates.to_dict(), fh, indent=1)
        else:
            lines = ["m,m_prime,l,l_prime,re,im"]
            for (m, mp, l, lp, re, im) in rows:
                lines.append(f"{m},{mp},{l},{lp},{_fmt(re)},{_fmt(im)}")
            with open(os.path.join(out_dir, "rates.csv"), "w") as fh:
                fh.write("\n".join(lines) + "\n")
        with open(os.path.join(out_dir, "generators.json"), "w") as fh:
            json.dump(gen.to_dict(), fh, indent=1)
    return gen


RATIO_WINDOW = (6.0, 10.0)
FIRST_ORDER_TOL = 1e-12
SECOND_ORDER_TOL = 1e-10


@dataclass(eq=False)
class VerifyReport:
    scenario: str
    seed: int
    assumption: dict
    first_order: list[dict]
    second_order: list[dict]
    halving: dict
    passed: bool

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "assumption": self.assumption,
            "first_order": self.first_order,
            "second_order": self.second_order,
            "halving": self.halving,
            "tolerances": {
                "first_order": FIRST_ORDER_TOL,
                "second_order": SECOND_ORDER_TOL,
                "ratio_window": list(RATIO_WINDOW),
            },
            "passed": self.passed,
        }


def _random_state(rng: np.random.Generator, dims: tuple[int, ...]) -> DensityMatrix:
    side = math.prod(dims)
    r = rng.normal(size=(side, side)) + 1j * rng.normal(size=(side, side))
    rho = r @ r.conj().T
    rho /= np.trace(rho).real
    return DensityMatrix.from_matrix(rho, dims)


def run_verify(sc: ScenarioConfig, n_states: int = 3, seed: int | None = None) -> VerifyReport:
    """Expansion identity checks on the scenario: first-order cancellation,
    second-order identification with the generator pieces, and remainder
    halving ratios."""
    seed = sc.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    cfg = collision_config(sc, max(sc.n_collisions, 1))
    assumption = check_assumption(cfg, m_max=len(sc.carrier_dims) + 2)

    gen = full_generator(sc.couplings, sc.eta, sc.channel, 1.0, sc.carrier_dims)
    states = [sc.rho0, DensityMatrix.maximally_mixed(sc.carrier_dims)]
    states += [_random_state(rng, sc.carrier_dims) for _ in range(n_states)]
    first, second = [], []
    ok = assumption.passed
    for i, rho in enumerate(states):
        f = verify_first_order(cfg, rho, tol=FIRST_ORDER_TOL)
        s = verify_second_order(cfg, rho, tol=SECOND_ORDER_TOL, gen=gen)
        ok = ok and f.passed and s.passed
        first.append({"state": i, "residual": f.residual, "passed": f.passed})
        second.append(
            {
                "state": i,
                "residual_a": s.residual_a,
                "residual_b": s.residual_b,
                "passed": s.passed,
            }
        )

    ratios = remainder_halving_ratios(cfg, seed=seed)
    lo, hi = RATIO_WINDOW
    ratio_ok = (
        lo <= ratios.unitary[2] <= hi
        and lo <= ratios.column[2] <= hi
        and ratios.step[2] >= lo  # faster-than-cubic decay also satisfies the bound
    )
    halving = {
        "unitary": {"residuals": list(ratios.unitary[:2]), "ratio": ratios.unitary[2]},
        "column": {"residuals": list(ratios.column[:2]), "ratio": ratios.column[2]},
        "step": {"residuals": list(ratios.step[:2]), "ratio": ratios.step[2]},
    }
    return VerifyReport(
        scenario=sc.name,
        seed=seed,
        assumption=assumption.to_dict(),
        first_order=first,
        second_order=second,
        halving=halving,
        passed=ok and ratio_ok,
    )
