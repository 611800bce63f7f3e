"""CPT maps in Kraus form, density matrices, and the built-in environments.

The relaxation channel acting on a sub-environment between collisions is
always represented by a finite Kraus list; channel powers are materialized
as superoperator matrices (environment sides here are small).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .jsonio import complex_matrix_from_json, complex_matrix_to_json
from .ops import (
    DEFAULT_TOL,
    Operator,
    Superoperator,
    kraus_superop,
    max_abs,
)

STATE_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Operator constrained to be a valid quantum state.

    `atol` loosens the Hermiticity/trace/positivity checks, e.g. for states
    produced by numerical integration.
    """

    op: Operator
    atol: float = STATE_TOL

    def __post_init__(self):
        op = self.op
        if not op.is_hermitian(max(self.atol, DEFAULT_TOL)):
            raise ValueError("density matrix is not Hermitian within tolerance")
        tr = op.trace()
        if abs(tr - 1.0) > self.atol:
            raise ValueError(f"trace {tr} is not 1 within {self.atol}")
        min_eig = float(np.linalg.eigvalsh(op.entries)[0])
        if min_eig < -self.atol:
            raise ValueError(f"minimum eigenvalue {min_eig} below -{self.atol}")

    @property
    def dims(self) -> tuple[int, ...]:
        return self.op.dims

    @property
    def entries(self) -> np.ndarray:
        return self.op.entries

    @property
    def side(self) -> int:
        return self.op.side

    @classmethod
    def from_matrix(cls, entries, dims: Sequence[int], atol: float = STATE_TOL) -> "DensityMatrix":
        return cls(Operator(tuple(dims), entries), atol)

    @classmethod
    def from_ket(cls, ket, dims: Sequence[int]) -> "DensityMatrix":
        ket = np.asarray(ket, dtype=complex)
        norm = np.linalg.norm(ket)
        if norm == 0:
            raise ValueError("zero vector is not a state")
        ket = ket / norm
        return cls(Operator(tuple(dims), np.outer(ket, ket.conj())))

    @classmethod
    def ground(cls, dim: int) -> "DensityMatrix":
        rho = np.zeros((dim, dim), dtype=complex)
        rho[0, 0] = 1.0
        return cls(Operator((dim,), rho))

    @classmethod
    def maximally_mixed(cls, dims: Sequence[int]) -> "DensityMatrix":
        dims = tuple(dims)
        side = math.prod(dims)
        return cls(Operator(dims, np.eye(side) / side))

    def __repr__(self):  # pragma: no cover
        return f"DensityMatrix(dims={self.dims})"


def _trace_norm_hermitian(delta: np.ndarray) -> float:
    return float(np.sum(np.abs(np.linalg.eigvalsh(delta))))


@dataclass(frozen=True, eq=False)
class KrausChannel:
    """CPT map as a finite Kraus-operator list.

    Construction only checks shapes; completeness is reported by
    `validate_cpt` so that broken channels can still be inspected.
    `description` optionally records how the channel was built, for
    JSON round-tripping.
    """

    kraus: tuple[Operator, ...]
    description: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        kraus = tuple(self.kraus)
        if not kraus:
            raise ValueError("Kraus list must be nonempty")
        side = kraus[0].side
        if any(k.side != side for k in kraus):
            raise ValueError("Kraus operators must all have the same side")
        object.__setattr__(self, "kraus", kraus)

    @property
    def side(self) -> int:
        return self.kraus[0].side

    @property
    def dims(self) -> tuple[int, ...]:
        return self.kraus[0].dims

    def apply(self, x: Operator) -> Operator:
        """sum_k K_k x K_k^dag; x need not be a state."""
        if x.side != self.side:
            raise ValueError(f"operator side {x.side} does not match channel side {self.side}")
        out = np.zeros_like(x.entries)
        for k in self.kraus:
            out = out + k.entries @ x.entries @ k.entries.conj().T
        return Operator(x.dims, out)

    __call__ = apply

    def apply_raw(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros_like(x)
        for k in self.kraus:
            out = out + k.entries @ x @ k.entries.conj().T
        return out

    def superoperator(self) -> Superoperator:
        return kraus_superop(self.kraus)

    def to_dict(self) -> dict:
        if self.description is not None:
            return dict(self.description)
        return {
            "kind": "kraus",
            "operators": [complex_matrix_to_json(k.entries) for k in self.kraus],
        }


@dataclass(frozen=True)
class CPTReport:
    residual: float
    tol: float
    passed: bool


def validate_cpt(c: KrausChannel, tol: float = STATE_TOL) -> CPTReport:
    """Report the max-norm of sum_k K_k^dag K_k - identity."""
    acc = np.zeros((c.side, c.side), dtype=complex)
    for k in c.kraus:
        acc += k.entries.conj().T @ k.entries
    residual = max_abs(acc - np.eye(c.side))
    return CPTReport(residual=residual, tol=tol, passed=residual <= tol)


def power(c: KrausChannel, m: int) -> Superoperator:
    """Superoperator matrix of the m-fold composition; m = 0 is the identity."""
    if m < 0:
        raise ValueError("channel power must be nonnegative")
    if m == 0:
        return Superoperator.identity(c.dims)
    base = c.superoperator()
    return Superoperator(c.dims, c.dims, np.linalg.matrix_power(base.matrix, m))


def lossy_bosonic_channel(d: int, kappa: float) -> KrausChannel:
    """Beam-splitter loss of transmissivity kappa, truncated to d Fock levels.

    <n-k|K_k|n> = sqrt(C(n,k)) * kappa^((n-k)/2) * (1-kappa)^(k/2).  On the
    truncated space completeness holds exactly because each level n only
    draws on k <= n.
    """
    if d < 2:
        raise ValueError("need at least two Fock levels")
    if not 0.0 <= kappa <= 1.0:
        raise ValueError(f"transmissivity must lie in [0, 1], got {kappa}")
    kraus = []
    for k in range(d):
        mat = np.zeros((d, d), dtype=complex)
        for n in range(k, d):
            mat[n - k, n] = math.sqrt(math.comb(n, k)) * kappa ** ((n - k) / 2.0) * (
                1.0 - kappa
            ) ** (k / 2.0)
        kraus.append(Operator((d,), mat))
    return KrausChannel(
        tuple(kraus), description={"kind": "lossy", "dim": d, "kappa": float(kappa)}
    )


def replacer_channel(eta: DensityMatrix) -> KrausChannel:
    """Channel sending every input to eta: Kraus {sqrt(l_i) |e_i><j|}.

    Built from the eigendecomposition of eta so mixed targets are valid.
    """
    w, v = np.linalg.eigh(eta.entries)
    d = eta.side
    kraus = []
    for i in range(d):
        if w[i] <= 0.0:  # numerically zero weights contribute nothing
            continue
        root = math.sqrt(w[i])
        for j in range(d):
            mat = np.zeros((d, d), dtype=complex)
            mat[:, j] = root * v[:, i]
            kraus.append(Operator(eta.dims, mat))
    return KrausChannel(
        tuple(kraus),
        description={"kind": "replacer", "eta": complex_matrix_to_json(eta.entries)},
    )


def unitary_channel(u: Operator, tol: float = DEFAULT_TOL) -> KrausChannel:
    if not u.is_unitary(tol):
        raise ValueError("matrix is not unitary within tolerance")
    return KrausChannel(
        (u,), description={"kind": "unitary", "matrix": complex_matrix_to_json(u.entries)}
    )


def identity_channel(dim: int) -> KrausChannel:
    return unitary_channel(Operator((dim,), np.eye(dim)))


def fixed_point_distance(c: KrausChannel, eta: DensityMatrix) -> float:
    """Trace distance between the channel output on eta and eta itself."""
    if c.side != eta.side:
        raise ValueError("channel and state sides differ")
    delta = c.apply(eta.op).entries - eta.entries
    return 0.5 * _trace_norm_hermitian(0.5 * (delta + delta.conj().T))


def channel_from_dict(data: dict) -> KrausChannel:
    """Rebuild a channel from its JSON description."""
    try:
        kind = data["kind"]
    except (TypeError, KeyError):
        raise ValueError("channel description needs a 'kind' field") from None
    if kind == "lossy":
        return lossy_bosonic_channel(int(data["dim"]), float(data["kappa"]))
    if kind == "replacer":
        eta = complex_matrix_from_json(data["eta"])
        return replacer_channel(DensityMatrix.from_matrix(eta, (eta.shape[0],)))
    if kind == "unitary":
        mat = complex_matrix_from_json(data["matrix"])
        return unitary_channel(Operator((mat.shape[0],), mat))
    if kind == "kraus":
        ops = [complex_matrix_from_json(m) for m in data["operators"]]
        chan = KrausChannel(tuple(Operator((m.shape[0],), m) for m in ops))
        report = validate_cpt(chan)
        if not report.passed:
            warnings.warn(
                f"deserialized Kraus channel is not trace preserving (residual {report.residual:.3e})",
                RuntimeWarning,
            )
        return chan
    raise ValueError(f"unknown channel kind {kind!r}")
