"""WAV file I/O, polyphase resampling, and dataset preparation.

Reads RIFF/WAVE containers holding PCM-16 or IEEE float-32 frames with
one or two channels; stereo is averaged to mono.  Writes float-32 by
default so reconstructions slightly outside [-1,1] survive a roundtrip;
PCM-16 output clamps.  Resampling runs a windowed-sinc lowpass (Kaiser
beta 8.555, 64 taps per phase, cutoff 0.9 of the tighter Nyquist)
through a polyphase filter.
"""

from __future__ import annotations

import math
import os
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import resample_poly

from .tensor import ContractError
from .serialize import atomic_write_bytes


class WavError(ValueError):
    """Malformed or unsupported WAV data; message carries the byte offset."""


PCM_SCALE = 32768.0


@dataclass
class AudioClip:
    sample_rate: int
    samples: np.ndarray = field(repr=False)
    source_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise ContractError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.samples.ndim != 1:
            raise ContractError(f"samples must be mono 1-D, got shape {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise ContractError("samples contain non-finite values")

    def __len__(self) -> int:
        return self.samples.size


def wav_read(path) -> AudioClip:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 12:
        raise WavError(f"offset 0: file too short ({len(blob)} bytes) for a RIFF header")
    if blob[0:4] != b"RIFF":
        raise WavError("offset 0: missing RIFF tag")
    if blob[8:12] != b"WAVE":
        raise WavError("offset 8: missing WAVE tag")

    fmt = None
    data = None
    off = 12
    while off + 8 <= len(blob):
        cid = blob[off:off + 4]
        (size,) = struct.unpack("<I", blob[off + 4:off + 8])
        body_off = off + 8
        if body_off + size > len(blob):
            raise WavError(f"offset {off}: chunk {cid!r} of {size} bytes overruns file")
        body = blob[body_off:body_off + size]
        if cid == b"fmt ":
            if size < 16:
                raise WavError(f"offset {off}: fmt chunk too small ({size} bytes)")
            fmt = struct.unpack("<HHIIHH", body[:16]) + (off,)
        elif cid == b"data":
            data = (body, body_off)
        off = body_off + size + (size & 1)       # chunks are word-aligned

    if fmt is None:
        raise WavError(f"offset {off}: no fmt chunk found")
    if data is None:
        raise WavError(f"offset {off}: no data chunk found")
    codec, channels, rate, _, _, bits, fmt_off = fmt
    if channels not in (1, 2):
        raise WavError(f"offset {fmt_off}: {channels} channels unsupported (want 1 or 2)")

    body, body_off = data
    if codec == 1 and bits == 16:
        raw = np.frombuffer(body, dtype="<i2").astype(np.float64) / PCM_SCALE
    elif codec == 3 and bits == 32:
        raw = np.frombuffer(body, dtype="<f4").astype(np.float64)
    else:
        raise WavError(f"offset {fmt_off}: unsupported codec (format {codec}, "
                       f"{bits}-bit); want PCM-16 or IEEE float-32")
    if channels == 2:
        if raw.size % 2:
            raise WavError(f"offset {body_off}: odd sample count for stereo data")
        raw = raw.reshape(-1, 2).mean(axis=1)
    return AudioClip(rate, raw, source_id=os.path.basename(os.fspath(path)))


def wav_write(path, clip: AudioClip, pcm16: bool = False) -> None:
    """Float-32 WAV by default; pcm16=True clamps to [-1, 32767/32768]."""
    x = clip.samples
    if pcm16:
        scaled = np.clip(np.round(x * PCM_SCALE), -32768, 32767).astype("<i2")
        body = scaled.tobytes()
        fmt = struct.pack("<HHIIHH", 1, 1, clip.sample_rate,
                          clip.sample_rate * 2, 2, 16)
        chunks = [(b"fmt ", fmt), (b"data", body)]
    else:
        body = x.astype("<f4").tobytes()
        fmt = struct.pack("<HHIIHH", 3, 1, clip.sample_rate,
                          clip.sample_rate * 4, 4, 32)
        fact = struct.pack("<I", x.size)
        chunks = [(b"fmt ", fmt), (b"fact", fact), (b"data", body)]

    out = []
    total = 4
    for cid, cbody in chunks:
        pad = b"\x00" if len(cbody) & 1 else b""
        out.append(cid + struct.pack("<I", len(cbody)) + cbody + pad)
        total += 8 + len(cbody) + len(pad)
    blob = b"RIFF" + struct.pack("<I", total) + b"WAVE" + b"".join(out)
    atomic_write_bytes(path, blob)


def _sinc_kaiser_filter(up: int, down: int) -> np.ndarray:
    """Lowpass for rate conversion by up/down, gain up in the passband."""
    cutoff = 0.45 / max(up, down)                # cycles per upsampled sample
    half = 32 * up
    n = np.arange(-half, half + 1)
    h = 2.0 * cutoff * np.sinc(2.0 * cutoff * n)
    h *= np.kaiser(2 * half + 1, 8.555)
    return up * h / h.sum()                      # DC gain exactly up


def resample(clip: AudioClip, target_sr: int = 22050) -> AudioClip:
    if target_sr <= 0:
        raise ContractError(f"target_sr must be positive, got {target_sr}")
    if target_sr == clip.sample_rate:
        return AudioClip(clip.sample_rate, clip.samples.copy(), clip.source_id)
    g = math.gcd(clip.sample_rate, target_sr)
    up, down = target_sr // g, clip.sample_rate // g
    h = _sinc_kaiser_filter(up, down)
    y = resample_poly(clip.samples, up, down, window=h)
    return AudioClip(target_sr, y, clip.source_id)


def prepare_dataset(directory, crop_len: int, seed: int = 0,
                    target_sr: int = 22050) -> list[AudioClip]:
    """Read every WAV under a directory (recursively, sorted by path),
    resample, and crop a random window of crop_len from each.  Short
    clips are zero-padded with a warning."""
    directory = os.fspath(directory)
    paths = []
    for root, _, names in os.walk(directory):
        for name in sorted(names):
            if name.lower().endswith(".wav"):
                paths.append(os.path.join(root, name))
    paths.sort()
    if not paths:
        raise ContractError(f"no .wav files under {directory!r}")
    rng = np.random.Generator(np.random.PCG64(seed))
    clips = []
    for p in paths:
        clip = resample(wav_read(p), target_sr)
        x = clip.samples
        if x.size < crop_len:
            warnings.warn(f"{p}: {x.size} samples < crop {crop_len}; zero-padding")
            x = np.pad(x, (0, crop_len - x.size))
        else:
            start = int(rng.integers(0, x.size - crop_len + 1))
            x = x[start:start + crop_len]
        clips.append(AudioClip(target_sr, x, clip.source_id))
    return clips
