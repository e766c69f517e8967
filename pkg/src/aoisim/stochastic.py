"""Seeded i.i.d. on/off channel and Bernoulli arrival processes.

Each trial owns one :class:`RngStream` per purpose (channel, arrivals, policy
tie-breaking, ...). The streams are derived from ``(seed, trial, label)`` with
``numpy.random.SeedSequence`` spawn keys, so changing a policy never perturbs
the channel or arrival realization of the same trial.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SUBSTREAMS = {"channel": 0, "arrivals": 1, "policy": 2, "pilot": 3}


@dataclass
class RngStream:
    seed: int
    trial: int = 0
    label: str = "channel"
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.label not in SUBSTREAMS:
            raise ValueError(f"unknown substream label {self.label!r}")
        ss = np.random.SeedSequence(
            int(self.seed) & 0xFFFFFFFFFFFFFFFF,
            spawn_key=(int(self.trial), SUBSTREAMS[self.label]),
        )
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def uniform(self, size) -> np.ndarray:
        return self.generator.random(size)


def trial_streams(seed: int, trial: int) -> dict:
    return {label: RngStream(seed, trial, label) for label in SUBSTREAMS}


@dataclass(frozen=True)
class ChannelModel:
    """Each link is independently on (gain 1) with probability ``q`` per slot."""

    q: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"channel success probability {self.q} outside [0, 1]")

    def sample_block(self, rng: RngStream, slots: int, n_links: int) -> np.ndarray:
        """``(slots, n_links)`` array of 0/1 gains; row ``t`` is slot ``t``."""
        return (rng.uniform((slots, n_links)) < self.q).astype(np.uint8)


@dataclass(frozen=True)
class ArrivalModel:
    """Per-flow Bernoulli arrivals, independent across flows and slots."""

    rates: tuple

    def __post_init__(self):
        for p in self.rates:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"arrival rate {p} outside [0, 1]")

    def sample_block(self, rng: RngStream, slots: int) -> np.ndarray:
        p = np.asarray(self.rates, dtype=float)
        return (rng.uniform((slots, len(p))) < p).astype(np.uint8)


def sample_channel_state(model: ChannelModel, rng: RngStream, links, t: int | None = None) -> dict:
    """Draw one slot of channel gains, consuming the next ``len(links)`` uniforms."""
    draws = rng.uniform(len(links))
    return {l: int(u < model.q) for l, u in zip(links, draws)}


def sample_arrivals(model: ArrivalModel, rng: RngStream, flow_ids, t: int | None = None) -> dict:
    draws = rng.uniform(len(model.rates))
    return {f: int(u < p) for f, u, p in zip(flow_ids, draws, model.rates)}
