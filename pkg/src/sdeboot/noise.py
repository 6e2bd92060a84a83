"""Driving-noise increments: Wiener or bilateral gamma, plus seeded streams."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, UnsupportedNoiseError

_NORMALIZATION_TOL = 1e-12


@dataclass(frozen=True)
class Wiener:
    name = "wiener"

    def to_dict(self):
        return {"kind": "wiener"}


@dataclass(frozen=True)
class BilateralGamma:
    """Law of ``tau_1 - tau_2`` with gamma subordinators ``tau_i`` of Lévy
    density ``delta_i / z * exp(-gamma_i z)``.

    Only the mean-zero, unit-variance normalisation is accepted.
    """

    delta1: float
    gamma1: float
    delta2: float
    gamma2: float
    name = "bgamma"

    def __post_init__(self):
        params = (self.delta1, self.gamma1, self.delta2, self.gamma2)
        if not all(math.isfinite(v) and v > 0 for v in params):
            raise ParameterError(f"bilateral gamma parameters must be positive, got {params}")
        mean = self.delta1 / self.gamma1 - self.delta2 / self.gamma2
        var = self.delta1 / self.gamma1 ** 2 + self.delta2 / self.gamma2 ** 2
        if abs(mean) > _NORMALIZATION_TOL or abs(var - 1.0) > _NORMALIZATION_TOL:
            raise ParameterError(
                f"bilateral gamma noise must have E[Z_1]=0 and Var[Z_1]=1 "
                f"(got mean {mean:.3g}, variance {var:.15g})")

    def to_dict(self):
        return {"kind": "bgamma", "params": [self.delta1, self.gamma1, self.delta2, self.gamma2]}


NoiseKind = Wiener | BilateralGamma

STANDARD_BGAMMA = BilateralGamma(1.0, math.sqrt(2.0), 1.0, math.sqrt(2.0))


def parse_noise(spec) -> NoiseKind:
    """Accept ``"wiener"``, ``"bgamma"``, ``"bgamma:d1,g1,d2,g2"`` or a dict."""
    if isinstance(spec, (Wiener, BilateralGamma)):
        return spec
    if isinstance(spec, dict):
        kind = spec.get("kind")
        params = spec.get("params")
    else:
        kind, _, rest = str(spec).partition(":")
        params = [float(v) for v in rest.split(",")] if rest else None
    kind = (kind or "").strip().lower()
    if kind in ("wiener", "gaussian", "normal"):
        return Wiener()
    if kind in ("bgamma", "bilateral_gamma"):
        if params is None:
            return STANDARD_BGAMMA
        if len(params) != 4:
            raise ParameterError("bgamma needs four parameters d1,g1,d2,g2")
        return BilateralGamma(*(float(v) for v in params))
    raise ParameterError(f"unknown noise kind {spec!r}")


def levy_fourth_moment(kind: NoiseKind) -> float:
    """Fourth moment of the Lévy measure, ``6 d1/g1^4 + 6 d2/g2^4``."""
    if not isinstance(kind, BilateralGamma):
        raise UnsupportedNoiseError("Wiener noise has no jump measure")
    return 6.0 * kind.delta1 / kind.gamma1 ** 4 + 6.0 * kind.delta2 / kind.gamma2 ** 4


# --- random streams ---------------------------------------------------------

_MASK64 = (1 << 64) - 1


def stream_id(role: str, *indices: int) -> int:
    """Stable 64-bit id for a (role, indices...) tuple, independent of PYTHONHASHSEED."""
    key = role + "/" + "/".join(str(int(i)) for i in indices)
    return int.from_bytes(hashlib.blake2b(key.encode(), digest_size=8).digest(), "little")


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream identified by ``(seed, stream)``.

    Every call to :meth:`generator` restarts the stream from its beginning.
    """

    seed: int
    stream: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)
        object.__setattr__(self, "stream", int(self.stream) & _MASK64)

    @classmethod
    def for_role(cls, seed: int, role: str, *indices: int) -> "RngStream":
        return cls(seed, stream_id(role, *indices))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


def gamma_sample(shape: float, rate: float, rng, size=None):
    """Gamma(shape, rate) draws; exact for shape < 1 as well."""
    if not (math.isfinite(shape) and shape > 0 and math.isfinite(rate) and rate > 0):
        raise ParameterError(f"gamma needs positive finite shape and rate, got ({shape}, {rate})")
    return as_generator(rng).gamma(shape, 1.0 / rate, size)


def increments(kind: NoiseKind, h: float, n: int, rng) -> np.ndarray:
    """``n`` i.i.d. copies of ``Z_h - Z_0``."""
    if not (h > 0 and math.isfinite(h)):
        raise ParameterError(f"step must be positive, got {h}")
    if int(n) != n or n < 1:
        raise ParameterError(f"need at least one increment, got n={n}")
    gen = as_generator(rng)
    if isinstance(kind, Wiener):
        return gen.standard_normal(int(n)) * math.sqrt(h)
    if isinstance(kind, BilateralGamma):
        up = gamma_sample(kind.delta1 * h, kind.gamma1, gen, int(n))
        down = gamma_sample(kind.delta2 * h, kind.gamma2, gen, int(n))
        return up - down
    raise UnsupportedNoiseError(f"unknown noise kind {kind!r}")
