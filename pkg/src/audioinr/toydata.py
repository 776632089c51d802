"""Deterministic synthetic audio for demos and harness tests."""

from __future__ import annotations

import numpy as np

from .wavio import AudioClip


def sine_mixture(n: int = 2048, sample_rate: int = 22050,
                 freqs=(220.0, 650.0, 1480.0), amps=(0.5, 0.3, 0.2),
                 phases=(0.0, 1.0, 2.0)) -> np.ndarray:
    """Sum of sines; defaults give a three-component mixture peaking near 1."""
    t = np.arange(n, dtype=np.float64) / sample_rate
    out = np.zeros(n)
    for f, a, p in zip(freqs, amps, phases):
        out += a * np.sin(2.0 * np.pi * f * t + p)
    return out


def toy_clips(count: int = 3, n: int = 2048, sample_rate: int = 22050,
              seed: int = 0) -> list[AudioClip]:
    """Seeded mixtures with varied frequencies and amplitudes."""
    rng = np.random.Generator(np.random.PCG64(seed))
    clips = []
    for i in range(count):
        freqs = rng.uniform(150.0, 2000.0, 3)
        amps = rng.uniform(0.15, 0.4, 3)
        phases = rng.uniform(0.0, 2.0 * np.pi, 3)
        clips.append(AudioClip(sample_rate,
                               sine_mixture(n, sample_rate, freqs, amps, phases),
                               source_id=f"toy{i}"))
    return clips
