"""Euler-Maruyama generation of discretely observed paths."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, DivergenceError, ParameterError
from .model import SamplingDesign, TrueDynamics
from .noise import as_generator, increments


@dataclass(frozen=True)
class SamplePath:
    values: np.ndarray
    design: SamplingDesign

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.shape[0] != self.design.n + 1:
            raise ParameterError(
                f"path has {v.shape} values, design expects {self.design.n + 1}")
        if not np.all(np.isfinite(v)):
            raise ParameterError("path contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.design.n

    @property
    def h(self) -> float:
        return self.design.h

    @property
    def T(self) -> float:
        return self.design.T

    @property
    def dx(self) -> np.ndarray:
        """Increments ``X_{t_j} - X_{t_{j-1}}``, j = 1..n."""
        return np.diff(self.values)

    @property
    def left(self) -> np.ndarray:
        """Left end points ``X_{t_{j-1}}``, j = 1..n."""
        return self.values[:-1]

    def times(self) -> np.ndarray:
        return self.design.times()

    # CSV with header t,x; repr gives shortest round-trip formatting
    def to_csv(self, dest) -> None:
        lines = ["t,x"]
        lines += [f"{t!r},{x!r}" for t, x in zip(self.times().tolist(), self.values.tolist())]
        text = "\n".join(lines) + "\n"
        if hasattr(dest, "write"):
            dest.write(text)
        else:
            with open(dest, "w", newline="") as fh:
                fh.write(text)

    @classmethod
    def from_csv(cls, src) -> "SamplePath":
        if hasattr(src, "read"):
            text = src.read()
        else:
            with open(src, newline="") as fh:
                text = fh.read()
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != ["t", "x"]:
            raise ParameterError("path CSV must start with header 't,x'")
        data = np.array([[float(a), float(b)] for a, b in rows[1:] if a.strip()], dtype=float)
        if data.shape[0] < 3:
            raise DegenerateDataError("path CSV needs at least three observations")
        t, x = data[:, 0], data[:, 1]
        n = t.shape[0] - 1
        h = (t[-1] - t[0]) / n
        if not np.allclose(np.diff(t), h, rtol=1e-9, atol=1e-12 * max(1.0, abs(t[-1]))):
            raise ParameterError("observation times are not equally spaced")
        return cls(x, SamplingDesign(n, h))


def simulate_batch(dyn: TrueDynamics, design: SamplingDesign, substeps: int, rngs) -> np.ndarray:
    """Simulate one path per stream in ``rngs``; returns shape ``(len(rngs), n + 1)``.

    Row ``i`` depends only on ``rngs[i]``: the noise for each path is drawn
    from its own stream and the recursion is elementwise across rows.
    """
    if int(substeps) != substeps or substeps < 1:
        raise ParameterError(f"substeps must be a positive integer, got {substeps}")
    substeps = int(substeps)
    n = design.n
    m = n * substeps
    delta = design.h / substeps
    noise = np.empty((len(rngs), m))
    for i, rng in enumerate(rngs):
        noise[i] = increments(dyn.noise, delta, m, as_generator(rng))

    out = np.empty((len(rngs), n + 1))
    x = np.full(len(rngs), float(dyn.x0))
    out[:, 0] = x
    A, C = dyn.true_drift, dyn.true_scale
    for step in range(m):
        x = x + A(x) * delta + C(x) * noise[:, step]
        if (step + 1) % substeps == 0:
            out[:, (step + 1) // substeps] = x
    bad = ~np.isfinite(out)
    if bad.any():
        # locate the first non-finite observation for the error message
        rows, cols = np.nonzero(bad)
        first = int(cols.min())
        raise DivergenceError(
            f"state became non-finite at observation {first} "
            f"(micro-step <= {first * substeps})", step=first * substeps)
    return out


def simulate(dyn: TrueDynamics, design: SamplingDesign, substeps: int = 1, rng=None) -> SamplePath:
    """Euler-Maruyama path of ``dyn`` observed on ``design``."""
    if rng is None:
        raise ParameterError("simulate needs an explicit random stream")
    values = simulate_batch(dyn, design, substeps, [rng])[0]
    return SamplePath(values, design)
