"""Trajectory container shared by the collision engine and the ME integrator.

Both writers emit the same CSV schema (step, t, observable re/im pairs,
trace, min_eigenvalue) so outputs can be diffed at the file level.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channels import DensityMatrix
from .jsonio import complex_matrix_to_json
from .ops import Operator


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(eq=False)
class Trajectory:
    """Ordered samples of a state evolution with observable expectations."""

    steps: np.ndarray
    times: np.ndarray
    states: tuple[DensityMatrix, ...]
    observable_names: tuple[str, ...]
    observable_values: np.ndarray  # shape (n_samples, n_observables), complex
    traces: np.ndarray
    min_eigenvalues: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.states)
        self.steps = np.asarray(self.steps, dtype=int)
        self.times = np.asarray(self.times, dtype=float)
        self.observable_values = np.asarray(self.observable_values, dtype=complex).reshape(
            n, len(self.observable_names)
        )
        self.traces = np.asarray(self.traces, dtype=float)
        self.min_eigenvalues = np.asarray(self.min_eigenvalues, dtype=float)
        if not (len(self.steps) == len(self.times) == n == len(self.traces) == len(self.min_eigenvalues)):
            raise ValueError("trajectory field lengths disagree")
        if np.any(np.diff(self.times) <= 0) and n > 1:
            raise ValueError("sample times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.states)

    def final_state(self) -> DensityMatrix:
        return self.states[-1]

    def expectations(self, name: str) -> np.ndarray:
        idx = self.observable_names.index(name)
        return self.observable_values[:, idx]

    def to_csv(self, path) -> None:
        header = ["step", "t"]
        for name in self.observable_names:
            header += [f"{name}_re", f"{name}_im"]
        header += ["trace", "min_eigenvalue"]
        lines = [",".join(header)]
        for i in range(len(self)):
            row = [str(int(self.steps[i])), _fmt(self.times[i])]
            for v in self.observable_values[i]:
                row += [_fmt(v.real), _fmt(v.imag)]
            row += [_fmt(self.traces[i]), _fmt(self.min_eigenvalues[i])]
            lines.append(",".join(row))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    def to_json(self, path, include_states: bool = False) -> None:
        payload = {
            "metadata": self.metadata,
            "observable_names": list(self.observable_names),
            "samples": [
                {
                    "step": int(self.steps[i]),
                    "t": float(self.times[i]),
                    "observables": [[float(v.real), float(v.imag)] for v in self.observable_values[i]],
                    "trace": float(self.traces[i]),
                    "min_eigenvalue": float(self.min_eigenvalues[i]),
                }
                for i in range(len(self))
            ],
        }
        if include_states:
            for i, sample in enumerate(payload["samples"]):
                sample["state"] = complex_matrix_to_json(self.states[i].entries)
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1)


def build_trajectory(
    steps: Sequence[int],
    times: Sequence[float],
    raw_states: Sequence[np.ndarray],
    dims: tuple[int, ...],
    observables: Sequence[np.ndarray],
    observable_names: Sequence[str],
    metadata: dict | None = None,
    state_atol: float = 1e-8,
) -> Trajectory:
    """Assemble a Trajectory from raw state matrices, validating each sample."""
    states = []
    traces = []
    mins = []
    values = np.zeros((len(raw_states), len(observables)), dtype=complex)
    for i, arr in enumerate(raw_states):
        traces.append(float(np.real(np.trace(arr))))
        mins.append(float(np.linalg.eigvalsh(0.5 * (arr + arr.conj().T))[0]))
        states.append(DensityMatrix(Operator(dims, arr), atol=state_atol))
        for j, obs in enumerate(observables):
            values[i, j] = np.einsum("ij,ji->", obs, arr)
    return Trajectory(
        steps=np.asarray(steps),
        times=np.asarray(times),
        states=tuple(states),
        observable_names=tuple(observable_names),
        observable_values=values,
        traces=np.asarray(traces),
        min_eigenvalues=np.asarray(mins),
        metadata=metadata or {},
    )
