"""Ground-motion records: parsing, synthesis, filtering, spectral peak."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import signal

G = 9.81
DEFAULT_CUTOFF_HZ = 15.0
DT_TOLERANCE = 1e-6


class MotionUnits(enum.Enum):
    G = "g"
    MS2 = "m/s2"

    @classmethod
    def parse(cls, text) -> "MotionUnits":
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower().replace("²", "2").replace("^", "").replace(" ", "")
        aliases = {"g": cls.G, "m/s2": cls.MS2, "m/s/s": cls.MS2, "ms2": cls.MS2,
                   "mps2": cls.MS2}
        if key not in aliases:
            raise MotionFileError(f"unknown acceleration units '{text}'")
        return aliases[key]


class MotionFileError(ValueError):
    """Malformed, empty, non-uniform or unit-ambiguous motion input."""


@dataclass(frozen=True)
class GroundMotion:
    """Uniformly sampled base acceleration."""

    dt: float
    samples: np.ndarray
    units: MotionUnits = MotionUnits.G
    label: str = ""

    def __post_init__(self):
        if self.dt <= 0.0:
            raise MotionFileError("dt must be positive")
        object.__setattr__(self, "samples", np.asarray(self.samples, float))
        object.__setattr__(self, "units", MotionUnits.parse(self.units))
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise MotionFileError("motion needs a non-empty 1-D sample array")

    @property
    def accel_g(self) -> np.ndarray:
        return self.samples if self.units is MotionUnits.G else self.samples / G

    @property
    def accel_ms2(self) -> np.ndarray:
        return self.samples * G if self.units is MotionUnits.G else self.samples

    @property
    def pga(self) -> float:
        """Peak absolute acceleration in g."""
        return float(np.abs(self.accel_g).max())

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) * self.dt

    @property
    def duration(self) -> float:
        return (self.samples.size - 1) * self.dt

    def scaled_to_pga(self, pga_g: float) -> "GroundMotion":
        peak = self.pga
        if peak == 0.0:
            raise ValueError("cannot scale a zero motion")
        return replace(self, samples=self.samples * (pga_g / peak))


def load_ground_motion(path, units=None, label: str | None = None) -> GroundMotion:
    """Read a two-column (time, acceleration) or single-column record.

    Header lines ``dt=<s>`` and ``units=<g|m/s2>`` may precede the data;
    ``#`` starts a comment. Units must be given by the argument or the
    header (if both, they must agree). Time stamps must be uniform to 1e-6 s.
    """
    path = Path(path)
    header, rows = {}, []
    try:
        text = path.read_text()
    except OSError as exc:
        raise MotionFileError(f"cannot read motion file: {exc}") from exc
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, val = (s.strip() for s in line.split("=", 1))
            header[key.lower()] = val
            continue
        try:
            rows.append([float(v) for v in line.replace(",", " ").split()])
        except ValueError as exc:
            raise MotionFileError(f"line {n}: cannot parse '{raw.strip()}'") from exc
    if not rows:
        raise MotionFileError(f"{path}: no samples")
    ncol = {len(r) for r in rows}
    if len(ncol) != 1 or ncol.pop() not in (1, 2):
        raise MotionFileError(f"{path}: expected one or two columns on every line")
    data = np.array(rows)
    hdr_dt = float(header["dt"]) if "dt" in header else None
    if data.shape[1] == 2:
        t = data[:, 0]
        if len(t) < 2:
            raise MotionFileError(f"{path}: need at least two samples to infer dt")
        steps = np.diff(t)
        dt = float((t[-1] - t[0]) / (len(t) - 1))
        if dt <= 0.0 or np.abs(steps - dt).max() > DT_TOLERANCE:
            raise MotionFileError(f"{path}: non-uniform sampling")
        if hdr_dt is not None and abs(hdr_dt - dt) > DT_TOLERANCE:
            raise MotionFileError(f"{path}: header dt disagrees with time column")
        acc = data[:, 1]
    else:
        if hdr_dt is None:
            raise MotionFileError(f"{path}: single-column file needs a 'dt=' header")
        dt, acc = hdr_dt, data[:, 0]
    hdr_units = header.get("units")
    if units is None and hdr_units is None:
        raise MotionFileError(f"{path}: acceleration units not specified")
    if units is not None and hdr_units is not None and \
            MotionUnits.parse(units) is not MotionUnits.parse(hdr_units):
        raise MotionFileError(f"{path}: units argument conflicts with file header")
    u = MotionUnits.parse(units if units is not None else hdr_units)
    return GroundMotion(dt, acc, u, label if label is not None else header.get("label", path.stem))


def synthesize_motion(kind: str, amplitude_g: float, frequency: float, duration: float,
                      dt: float = 0.005, taper: float | None = None,
                      cutoff: float = DEFAULT_CUTOFF_HZ, label: str | None = None) -> GroundMotion:
    """Harmonic or Ricker base motion in units of g.

    ``harmonic``: ``A sin(2 pi f t)`` with half-cosine ramps of length
    ``taper`` (default one period) at both ends. ``ricker``: wavelet centred
    at ``1.5 / f`` (or mid-record if shorter), scaled so its peak is ``A``.
    ``duration / dt`` samples are generated.
    """
    if frequency <= 0.0:
        raise ValueError("frequency must be positive")
    if frequency >= cutoff:
        raise ValueError(f"frequency {frequency} Hz is not below the {cutoff} Hz cutoff")
    n = int(round(duration / dt))
    if n < 2:
        raise ValueError("duration must cover at least two samples")
    t = np.arange(n) * dt
    if kind == "harmonic":
        a = np.sin(2.0 * np.pi * frequency * t)
        ramp = 1.0 / frequency if taper is None else taper
        if ramp > 0.0:
            w = np.ones(n)
            up = t < ramp
            w[up] = 0.5 * (1.0 - np.cos(np.pi * t[up] / ramp))
            down = t > t[-1] - ramp
            w[down] = np.minimum(w[down], 0.5 * (1.0 - np.cos(np.pi * (t[-1] - t[down]) / ramp)))
            a = a * w
    elif kind == "ricker":
        t0 = min(1.5 / frequency, 0.5 * t[-1])
        arg = (np.pi * frequency * (t - t0)) ** 2
        a = (1.0 - 2.0 * arg) * np.exp(-arg)
    else:
        raise ValueError(f"unknown motion kind '{kind}'")
    peak = np.abs(a).max()
    a = a * (amplitude_g / peak) if peak > 0.0 and amplitude_g != 0.0 else np.zeros(n)
    return GroundMotion(dt, a, MotionUnits.G, label or f"{kind}_{amplitude_g:g}g_{frequency:g}Hz")


@dataclass(frozen=True)
class FilterDesign:
    order: int
    passband_edge: float
    stopband_edge: float
    sos: np.ndarray


def design_lowpass(dt: float, f_cutoff: float = DEFAULT_CUTOFF_HZ) -> FilterDesign:
    """Butterworth lowpass meeting the targets after forward-backward use.

    A single pass keeps ripple below 0.5 % up to ``0.7 f_cutoff`` and
    attenuates at least 20 dB from ``f_cutoff`` on; running it forward and
    backward squares the gain.
    """
    nyq = 0.5 / dt
    if not 0.0 < f_cutoff < nyq:
        raise ValueError(f"cutoff {f_cutoff} Hz must lie in (0, Nyquist={nyq:g} Hz)")
    wp, ws = 0.7 * f_cutoff, f_cutoff
    gpass = -20.0 * math.log10(0.995)
    order, wn = signal.buttord(wp, ws, gpass, 20.0, fs=1.0 / dt)
    sos = signal.butter(order, wn, btype="low", output="sos", fs=1.0 / dt)
    return FilterDesign(int(order), wp, ws, sos)


def lowpass_filter(motion: GroundMotion, f_cutoff: float = DEFAULT_CUTOFF_HZ) -> GroundMotion:
    """Zero-phase Butterworth lowpass of a motion."""
    design = design_lowpass(motion.dt, f_cutoff)
    if motion.samples.size <= 3 * (2 * design.sos.shape[0] + 1):
        raise ValueError("record too short for the filter")
    out = signal.sosfiltfilt(design.sos, motion.samples)
    return replace(motion, samples=out)


def predominant_frequency(motion: GroundMotion, f_max: float = DEFAULT_CUTOFF_HZ) -> float:
    """Frequency of the Fourier amplitude peak in ``(0, f_max]`` Hz."""
    a = motion.accel_ms2
    spec = np.abs(np.fft.rfft(a))
    freqs = np.fft.rfftfreq(a.size, motion.dt)
    band = (freqs > 0.0) & (freqs <= f_max)
    if not band.any() or not np.any(spec[band] > 0.0):
        raise ValueError("motion has no spectral content below the cutoff")
    return float(freqs[band][np.argmax(spec[band])])
