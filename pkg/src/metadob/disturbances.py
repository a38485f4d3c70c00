"""Synthetic disturbance generators.

Training data comes from per-axis random sine series (domain
randomization); the benchmark adds structural effects the training tier
never contained: linear body drag, constant mass-uncertainty offsets and
step forces.  All magnitudes are accelerations in m/s^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyData


@dataclass
class FourierProfile:
    """Per-axis sine series d_j(t) = c_j + sum_i a_i sin(w_i t + psi_i)."""

    amplitudes: list            # per axis: array of a_i >= 0
    frequencies: list           # per axis: array of w_i >= 0 (rad/s)
    phases: list                # per axis: array of psi_i in [0, 2pi)
    offsets: np.ndarray         # (n,) constant c_j

    @property
    def n(self) -> int:
        return len(self.amplitudes)

    def eval(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.empty(t.shape + (self.n,))
        for j in range(self.n):
            s = np.sin(np.multiply.outer(t, self.frequencies[j]) + self.phases[j])
            out[..., j] = self.offsets[j] + s @ self.amplitudes[j]
        return out

    def magnitude_bound(self) -> np.ndarray:
        """Per-axis bound: |d_j| <= |c_j| + sum a_i."""
        return np.array([abs(self.offsets[j]) + self.amplitudes[j].sum()
                         for j in range(self.n)])

    def rate_bound(self) -> np.ndarray:
        """Per-axis bound on |d_j'|: sum a_i w_i."""
        return np.array([(self.amplitudes[j] * self.frequencies[j]).sum()
                         for j in range(self.n)])

    def to_dict(self) -> dict:
        return {
            "amplitudes": [a.tolist() for a in self.amplitudes],
            "frequencies": [w.tolist() for w in self.frequencies],
            "phases": [p.tolist() for p in self.phases],
            "offsets": self.offsets.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FourierProfile":
        return cls(
            amplitudes=[np.asarray(a, dtype=float) for a in doc["amplitudes"]],
            frequencies=[np.asarray(w, dtype=float) for w in doc["frequencies"]],
            phases=[np.asarray(p, dtype=float) for p in doc["phases"]],
            offsets=np.asarray(doc["offsets"], dtype=float),
        )


@dataclass
class RandomizationRanges:
    """Uniform sampling ranges for one dataset tier."""

    amplitude: tuple = (0.0, 2.0)       # m/s^2
    frequency: tuple = (0.0, 2.0)       # rad/s
    offset: tuple = (-1.0, 1.0)         # m/s^2
    n_terms: tuple = (1, 4)             # inclusive

    def __post_init__(self):
        for lo, hi in (self.amplitude, self.frequency, self.n_terms):
            if lo > hi or lo < 0:
                raise ValueError(f"bad range ({lo}, {hi})")

    def shifted(self) -> "RandomizationRanges":
        """The distribution-shift tier: doubled amplitudes and rates."""
        return RandomizationRanges(
            amplitude=(self.amplitude[0], 2.0 * self.amplitude[1]),
            frequency=(self.frequency[0], 2.0 * self.frequency[1]),
            offset=(2.0 * self.offset[0], 2.0 * self.offset[1]),
            n_terms=self.n_terms,
        )


def sample_profile(rng: np.random.Generator, ranges: RandomizationRanges,
                   n: int = 3) -> FourierProfile:
    """Draw an independent sine series per axis; deterministic given rng."""
    amplitudes, frequencies, phases = [], [], []
    for _ in range(n):
        n_terms = int(rng.integers(ranges.n_terms[0], ranges.n_terms[1] + 1))
        amplitudes.append(rng.uniform(*ranges.amplitude, size=n_terms))
        frequencies.append(rng.uniform(*ranges.frequency, size=n_terms))
        phases.append(rng.uniform(0.0, 2.0 * np.pi, size=n_terms))
    offsets = rng.uniform(*ranges.offset, size=n)
    return FourierProfile(amplitudes, frequencies, phases, offsets)


@dataclass
class Scenario:
    """A disturbance source evaluated as d(t, x) on the velocity rows.

    kinds:
      fourier    time-only sine series (params: profile)
      drag       -(1/mass) * D @ v, linear body drag (params: drag, mass)
      step       vector * 1[t >= t_step] (params: vector, t_step)
      composite  sum of children
    """

    kind: str
    profile: FourierProfile = None
    drag: np.ndarray = None
    mass: float = 1.0
    vector: np.ndarray = None
    t_step: float = 0.0
    children: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("fourier", "drag", "step", "composite"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.kind == "composite" and not self.children:
            raise ValueError("composite scenario needs children")
        if self.drag is not None:
            self.drag = np.asarray(self.drag, dtype=float)
        if self.vector is not None:
            self.vector = np.asarray(self.vector, dtype=float)

    def eval(self, t: float, x: np.ndarray) -> np.ndarray:
        if self.kind == "fourier":
            return self.profile.eval(float(t))
        if self.kind == "drag":
            v = np.asarray(x, dtype=float)[-self.drag.shape[0]:]
            return -(self.drag @ v) / self.mass
        if self.kind == "step":
            return self.vector if t >= self.t_step else np.zeros_like(self.vector)
        return sum(c.eval(t, x) for c in self.children)

    def to_dict(self) -> dict:
        doc = {"kind": self.kind}
        if self.kind == "fourier":
            doc["profile"] = self.profile.to_dict()
        elif self.kind == "drag":
            doc["drag"] = self.drag.tolist()
            doc["mass"] = self.mass
        elif self.kind == "step":
            doc["vector"] = self.vector.tolist()
            doc["t_step"] = self.t_step
        else:
            doc["children"] = [c.to_dict() for c in self.children]
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        kind = doc["kind"]
        if kind == "fourier":
            return cls(kind, profile=FourierProfile.from_dict(doc["profile"]))
        if kind == "drag":
            return cls(kind, drag=np.asarray(doc["drag"], dtype=float),
                       mass=float(doc.get("mass", 1.0)))
        if kind == "step":
            return cls(kind, vector=np.asarray(doc["vector"], dtype=float),
                       t_step=float(doc.get("t_step", 0.0)))
        return cls(kind, children=[cls.from_dict(c) for c in doc["children"]])


def dataset_stats(series: np.ndarray, dt: float) -> dict:
    """Magnitude / rate / RMS summary of a logged disturbance sequence.

    Rates are central finite differences, so a dense grid is required for
    the bounds to be tight.
    """
    series = np.atleast_2d(np.asarray(series, dtype=float))
    if series.size == 0:
        raise EmptyData("no disturbance samples")
    mags = np.abs(series)
    stats = {
        "max_abs": float(mags.max()),
        "rms": float(np.sqrt(np.mean(series * series))),
        "max_rate": 0.0,
    }
    if series.shape[0] >= 3:
        rate = (series[2:] - series[:-2]) / (2.0 * dt)
        stats["max_rate"] = float(np.abs(rate).max())
    return stats


def profile_stats(profile: FourierProfile, duration: float = 20.0,
                  dt: float = 1e-3) -> dict:
    """dataset_stats over a dense evaluation grid of the profile."""
    t = np.arange(0.0, duration + dt / 2, dt)
    return dataset_stats(profile.eval(t), dt)
