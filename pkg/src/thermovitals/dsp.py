"""Shared DSP primitives for the biosignal chains.

IIR design and zero-phase filtering, Savitzky-Golay and median smoothing,
Hilbert envelopes, a Daubechies-4 approximation projection, Welch spectral
density, parabolic peak refinement and normalized cross-correlation. All
functions are pure and operate on 1-d float arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage
import scipy.signal

from .errors import InputError, ThermovitalsError, TooFewSamplesError, ZeroVarianceError
from .model import check_finite

STABILITY_MARGIN = 1e-9


def next_pow2(n: int) -> int:
    if n < 1:
        raise InputError(f"need a positive sample count, got {n}")
    return 1 << (int(n) - 1).bit_length()


def standardize(x: np.ndarray, name: str = "signal") -> np.ndarray:
    """Zero-mean unit-variance copy of ``x`` (population std)."""
    x = np.asarray(x, dtype=np.float64)
    check_finite(x, name)
    sd = float(x.std())
    if sd <= 0.0:
        raise ZeroVarianceError(f"{name} has zero variance, cannot standardize")
    return (x - x.mean()) / sd


# ---------------------------------------------------------------------------
# IIR design and zero-phase filtering

@dataclass(frozen=True)
class IirFilter:
    """A designed digital IIR filter.

    Coefficients are kept in transfer-function form (``b``, ``a`` with
    ``a[0] == 1``) alongside the zero-pole-gain factorization used for
    response evaluation and the stability check.
    """

    family: str                      # "butterworth" | "bessel"
    kind: str                        # "lowpass" | "bandpass"
    order: int
    cutoffs_hz: tuple[float, ...]
    fs: float
    b: np.ndarray
    a: np.ndarray
    zeros: np.ndarray = field(repr=False)
    poles: np.ndarray = field(repr=False)
    gain: float = field(repr=False, default=1.0)

    @property
    def max_pole_modulus(self) -> float:
        if self.poles.size == 0:
            return 0.0
        return float(np.max(np.abs(self.poles)))

    @property
    def is_stable(self) -> bool:
        return self.max_pole_modulus < 1.0 - STABILITY_MARGIN

    @property
    def padlen(self) -> int:
        """Minimum reflect-padding (and input-length bound) for filtfilt."""
        return 3 * (max(len(self.a), len(self.b)) - 1)

    @property
    def edge_pad(self) -> int:
        """Padding wide enough for edge transients to decay below 1e-15."""
        rho = self.max_pole_modulus
        if rho <= 0.0:
            return self.padlen
        return max(self.padlen, int(np.ceil(34.5 / -np.log(rho))))

    def response(self, freqs_hz: np.ndarray) -> np.ndarray:
        """Complex frequency response evaluated on the unit circle."""
        f = np.atleast_1d(np.asarray(freqs_hz, dtype=np.float64))
        w = np.exp(2j * np.pi * f / self.fs)
        num = np.prod(w[:, None] - self.zeros[None, :], axis=1) if self.zeros.size else 1.0
        den = np.prod(w[:, None] - self.poles[None, :], axis=1) if self.poles.size else 1.0
        return self.gain * num / den

    def magnitude(self, freqs_hz: np.ndarray) -> np.ndarray:
        return np.abs(self.response(freqs_hz))


def design_iir(
    family: str,
    order: int,
    kind: str,
    cutoffs_hz: float | tuple[float, float],
    fs: float,
) -> IirFilter:
    """Design a digital Butterworth or Bessel filter.

    Parameters
    ----------
    family : str
        "butterworth" or "bessel". Bessel cutoffs are normalized to the
        -3 dB point so the two families are interchangeable as trend
        extractors.
    order : int
        Filter order (of the analog prototype).
    kind : str
        "lowpass" or "bandpass".
    cutoffs_hz : float or (float, float)
        Cutoff frequency, or (low, high) band edges for a bandpass.
    fs : float
        Sampling rate in Hz.

    Returns
    -------
    IirFilter
        Stable design; raises if the discretized filter is not.
    """
    if order < 1:
        raise InputError(f"filter order must be >= 1, got {order}")
    if fs <= 0:
        raise InputError(f"sampling rate must be positive, got {fs}")
    if kind == "lowpass":
        wn = (float(cutoffs_hz),) if np.isscalar(cutoffs_hz) else tuple(cutoffs_hz)
        if len(wn) != 1:
            raise InputError("lowpass takes exactly one cutoff")
    elif kind == "bandpass":
        wn = tuple(float(c) for c in np.atleast_1d(cutoffs_hz))
        if len(wn) != 2:
            raise InputError("bandpass takes (low, high) cutoffs")
        if not wn[0] < wn[1]:
            raise InputError(f"bandpass edges must satisfy low < high, got {wn}")
    else:
        raise InputError(f"unknown filter kind: {kind!r}")
    for c in wn:
        if not 0.0 < c < fs / 2.0:
            raise InputError(f"cutoff {c} Hz outside (0, Nyquist={fs / 2.0} Hz)")

    crit = wn[0] if kind == "lowpass" else list(wn)
    if family == "butterworth":
        z, p, k = scipy.signal.butter(order, crit, btype=kind, output="zpk", fs=fs)
    elif family == "bessel":
        # -3 dB normalization keeps the cutoff comparable to Butterworth
        z, p, k = scipy.signal.bessel(
            order, crit, btype=kind, output="zpk", norm="mag", fs=fs)
    else:
        raise InputError(f"unknown filter family: {family!r}")

    b, a = scipy.signal.zpk2tf(z, p, k)
    filt = IirFilter(
        family=family,
        kind=kind,
        order=order,
        cutoffs_hz=wn,
        fs=fs,
        b=np.asarray(b, dtype=np.float64),
        a=np.asarray(a, dtype=np.float64),
        zeros=np.asarray(z, dtype=np.complex128),
        poles=np.asarray(p, dtype=np.complex128),
        gain=float(k),
    )
    if not filt.is_stable:
        raise ThermovitalsError(
            f"{family} {kind} order {order} at {wn} Hz (fs={fs}) discretized "
            f"unstable: max pole modulus {filt.max_pole_modulus:.12f}")
    return filt


def filtfilt(filt: IirFilter, x: np.ndarray) -> np.ndarray:
    """Zero-phase filtering: forward pass, reverse, second pass, reverse.

    The input is reflect-padded at both ends before filtering and the
    padding is removed afterwards, so the effective magnitude response is
    |H|^2 with no phase shift. The pad is at least
    ``3 * (max(len(a), len(b)) - 1)`` samples and is widened until the
    slowest pole's transient decays below 1e-15 across it. Both pass orders
    (forward-backward and backward-forward) are averaged, which makes the
    result exactly symmetric under time reversal.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InputError(f"expected a 1-d sequence, got shape {x.shape}")
    if len(x) <= filt.padlen:
        raise TooFewSamplesError(
            f"zero-phase filtering needs more than {filt.padlen} samples, "
            f"got {len(x)}",
            minimum=filt.padlen + 1,
            got=len(x),
        )
    check_finite(x, "filter input")
    # transfer-function form can lose precision at very low normalized
    # cutoffs, so the passes run on second-order sections
    sos = scipy.signal.zpk2sos(filt.zeros, filt.poles, filt.gain)
    zi0 = scipy.signal.sosfilt_zi(sos)
    pad = filt.edge_pad
    ext = np.pad(x, pad, mode="reflect")

    def causal(v: np.ndarray) -> np.ndarray:
        # initial state matched to a step at v[0], as in a plain filtfilt
        y, _ = scipy.signal.sosfilt(sos, v, zi=zi0 * v[0])
        return y

    y1 = causal(causal(ext)[::-1])[::-1]
    y2 = causal(causal(ext[::-1])[::-1])
    y = 0.5 * (y1 + y2)
    return y[pad: pad + len(x)]


def lowpass(x: np.ndarray, fs: float, cutoff_hz: float, order: int = 3,
            family: str = "butterworth") -> np.ndarray:
    return filtfilt(design_iir(family, order, "lowpass", cutoff_hz, fs), x)


def bandpass(x: np.ndarray, fs: float, lo_hz: float, hi_hz: float,
             order: int = 4, family: str = "butterworth") -> np.ndarray:
    return filtfilt(design_iir(family, order, "bandpass", (lo_hz, hi_hz), fs), x)


# ---------------------------------------------------------------------------
# Polynomial and order-statistic smoothers

def _fit_poly_at(x: np.ndarray, center: int, lo: int, hi: int, order: int) -> float:
    """Least-squares polynomial over x[lo:hi] evaluated at ``center``."""
    t = np.arange(lo, hi, dtype=np.float64) - center
    deg = min(order, hi - lo - 1)
    return float(np.polynomial.Polynomial.fit(t, x[lo:hi], deg)(0.0))


def savgol(x: np.ndarray, window_s: float, poly_order: int, fs: float) -> np.ndarray:
    """Savitzky-Golay smoothing with truncated-window endpoint fits.

    The window length is ``round(window_s * fs)`` forced odd upward.
    Interior samples get the standard least-squares convolution; samples
    whose centered window would overhang the signal are instead fitted on
    the truncated one-sided window that remains.
    """
    x = np.asarray(x, dtype=np.float64)
    check_finite(x, "savgol input")
    n = len(x)
    if n == 0:
        raise InputError("cannot smooth an empty sequence")
    window = int(round(window_s * fs))
    if window % 2 == 0:
        window += 1
    if window <= poly_order:
        raise InputError(
            f"window of {window} samples must exceed polynomial order {poly_order}")
    half = window // 2

    if window <= n:
        y = scipy.signal.savgol_filter(x, window, poly_order, mode="interp")
    else:
        y = np.empty(n, dtype=np.float64)
        half = n  # every sample is an endpoint case below
    for i in range(min(half, n)):
        y[i] = _fit_poly_at(x, i, max(0, i - window // 2), min(n, i + window // 2 + 1),
                            poly_order)
    for i in range(max(n - half, 0), n):
        y[i] = _fit_poly_at(x, i, max(0, i - window // 2), min(n, i + window // 2 + 1),
                            poly_order)
    return y


def median_smooth(x: np.ndarray, window_s: float, fs: float) -> np.ndarray:
    """Running median, window forced odd, edges replicated."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) == 0:
        raise InputError("cannot smooth an empty sequence")
    k = int(round(window_s * fs))
    if k % 2 == 0:
        k += 1
    k = max(1, min(k, 2 * len(x) - 1))
    return scipy.ndimage.median_filter(x, size=k, mode="nearest")


def moving_average(x: np.ndarray, window_samples: int) -> np.ndarray:
    """Centered moving average; windows truncate at the signal edges."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) == 0:
        raise InputError("cannot smooth an empty sequence")
    w = max(1, int(window_samples))
    kernel = np.ones(w, dtype=np.float64)
    num = np.convolve(x, kernel, mode="same")
    den = np.convolve(np.ones(len(x), dtype=np.float64), kernel, mode="same")
    return num / den


def ema(x: np.ndarray, span_samples: int) -> np.ndarray:
    """Exponential moving average with alpha = 2 / (span + 1), seeded at x[0]."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) == 0:
        raise InputError("cannot smooth an empty sequence")
    span = max(1, int(span_samples))
    alpha = 2.0 / (span + 1.0)
    y, _ = scipy.signal.lfilter(
        [alpha], [1.0, -(1.0 - alpha)], x, zi=np.array([(1.0 - alpha) * x[0]]))
    return y


def hilbert_envelope(x: np.ndarray, fs: float) -> np.ndarray:
    """Magnitude of the analytic signal (frequency-domain one-sided doubling)."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) < 64:
        raise TooFewSamplesError(
            f"analytic envelope needs at least 64 samples, got {len(x)}",
            minimum=64,
            got=len(x),
        )
    check_finite(x, "envelope input")
    return np.abs(scipy.signal.hilbert(x))


# ---------------------------------------------------------------------------
# Daubechies-4 approximation projection

# 8-tap Daubechies-4 reconstruction lowpass (4 vanishing moments),
# exact to double precision
DB4_REC_LO = np.array([
    0.23037781330885523,
    0.7148465705525415,
    0.6308807679295904,
    -0.02798376941698385,
    -0.18703481171888114,
    0.030841381835986965,
    0.032883011666982945,
    -0.010597401784997278,
])
DB4_DEC_LO = DB4_REC_LO[::-1].copy()
# alternating flip of the analysis lowpass; this exact pairing makes the
# strided-correlation analysis below an orthogonal transform
DB4_DEC_HI = DB4_DEC_LO[::-1] * np.array([1.0 if k % 2 == 0 else -1.0
                                          for k in range(len(DB4_DEC_LO))])


def dwt_level_for_band(fs: float, target_band_hz: float) -> int:
    """Smallest L with fs / 2^(L+1) <= target_band_hz."""
    if fs <= 0 or target_band_hz <= 0:
        raise InputError("fs and target band must be positive")
    level = 0
    while fs / 2.0 ** (level + 1) > target_band_hz:
        level += 1
    return level


def _dwt_step(a: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # periodic analysis; len(a) is even by construction
    n = len(a)
    idx = (2 * np.arange(n // 2)[:, None] + np.arange(len(lo))[None, :]) % n
    win = a[idx]
    return win @ lo, win @ hi


def _idwt_step(ca: np.ndarray, cd: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    # adjoint of the orthogonal analysis step
    n = 2 * len(ca)
    idx = (2 * np.arange(len(ca))[:, None] + np.arange(len(lo))[None, :]) % n
    out = np.zeros(n, dtype=np.float64)
    np.add.at(out, idx, ca[:, None] * lo[None, :] + cd[:, None] * hi[None, :])
    return out


def dwt_approx(x: np.ndarray, fs: float, target_band_hz: float = 0.05) -> np.ndarray:
    """Daubechies-4 approximation at the level whose band covers the target.

    The signal is symmetrically extended, decomposed ``L`` levels with
    ``L = dwt_level_for_band(fs, target_band_hz)``, all detail coefficients
    are zeroed, and the reconstruction is cropped back to the input length.
    """
    x = np.asarray(x, dtype=np.float64)
    check_finite(x, "dwt input")
    level = dwt_level_for_band(fs, target_band_hz)
    if level == 0:
        return x.copy()
    block = 1 << level
    if len(x) < block:
        raise TooFewSamplesError(
            f"level-{level} approximation needs at least {block} samples, got {len(x)}",
            minimum=block,
            got=len(x),
        )
    # symmetric extension wide enough that the periodic wrap cannot reach
    # back into the retained region at the coarsest scale
    pad = 4 * block
    total = len(x) + 2 * pad
    extra = (-total) % block
    ext = np.pad(x, (pad, pad + extra), mode="symmetric")

    approx = ext
    lengths: list[int] = []
    for _ in range(level):
        lengths.append(len(approx))
        approx, _detail = _dwt_step(approx, DB4_DEC_LO, DB4_DEC_HI)
    for n_parent in reversed(lengths):
        zeros = np.zeros_like(approx)
        approx = _idwt_step(approx, zeros, DB4_DEC_LO, DB4_DEC_HI)
        assert len(approx) == n_parent
    return approx[pad: pad + len(x)]


# ---------------------------------------------------------------------------
# Spectral estimation

@dataclass(frozen=True)
class Spectrum:
    """One-sided power spectral density on a uniform frequency grid."""

    freqs: np.ndarray       # Hz, ascending
    power: np.ndarray       # density, >= 0
    resolution: float       # Hz per bin

    def band_slice(self, lo_hz: float, hi_hz: float) -> slice:
        idx = np.nonzero((self.freqs >= lo_hz) & (self.freqs <= hi_hz))[0]
        if idx.size == 0:
            raise InputError(
                f"band {lo_hz}-{hi_hz} Hz contains no spectral bins "
                f"(grid spans {self.freqs[0]}-{self.freqs[-1]} Hz)")
        return slice(int(idx[0]), int(idx[-1]) + 1)


def welch_psd(
    x: np.ndarray,
    fs: float,
    seg_len: int | None = None,
    overlap: float = 0.5,
    nfft: int | None = None,
) -> Spectrum:
    """Hann-windowed averaged periodogram, zero-padded for grid refinement.

    Parameters
    ----------
    x : ndarray
        Input samples.
    fs : float
        Sampling rate in Hz.
    seg_len : int, optional
        Sub-segment length; defaults to half the input length.
    overlap : float
        Fractional overlap between sub-segments, in [0, 1).
    nfft : int, optional
        FFT length; defaults to 4x the next power of two above ``seg_len``.
    """
    x = np.asarray(x, dtype=np.float64)
    if len(x) < 2:
        raise TooFewSamplesError(
            f"spectral estimate needs at least 2 samples, got {len(x)}",
            minimum=2,
            got=len(x),
        )
    if not 0.0 <= overlap < 1.0:
        raise InputError(f"overlap fraction must be in [0, 1), got {overlap}")
    if seg_len is None:
        seg_len = max(2, len(x) // 2)
    if seg_len > len(x):
        raise InputError(
            f"segment length {seg_len} exceeds input length {len(x)}")
    if nfft is None:
        nfft = 4 * next_pow2(seg_len)
    freqs, power = scipy.signal.welch(
        x,
        fs=fs,
        window="hann",
        nperseg=seg_len,
        noverlap=int(round(overlap * seg_len)),
        nfft=nfft,
        detrend="constant",
        scaling="density",
    )
    return Spectrum(freqs=freqs, power=power, resolution=float(freqs[1] - freqs[0]))


@dataclass(frozen=True)
class PeakEstimate:
    freq_hz: float
    power: float        # density at the peak bin
    refined: bool       # False when the parabola was degenerate or at a band edge


def parabolic_peak(spectrum: Spectrum, band_hz: tuple[float, float]) -> PeakEstimate:
    """Band-limited spectral peak with log-power parabolic refinement.

    The argmax bin inside the band is refined by the vertex of the parabola
    through the log-power of its two neighbors:
    ``delta = 0.5 * (a - g) / (a - 2b + g)``, clamped to [-0.5, 0.5]. A peak
    on the band edge, or a degenerate parabola, is returned unrefined.
    """
    sl = spectrum.band_slice(*band_hz)
    if sl.stop - sl.start < 3:
        raise InputError(
            f"band {band_hz} covers only {sl.stop - sl.start} bins, need >= 3")
    p = spectrum.power[sl]
    f = spectrum.freqs[sl]
    k = int(np.argmax(p))
    if k == 0 or k == len(p) - 1:
        return PeakEstimate(freq_hz=float(f[k]), power=float(p[k]), refined=False)
    floor = 1e-300  # keeps log finite on empty bins
    alpha, beta, gamma = np.log(np.maximum(p[k - 1: k + 2], floor))
    denom = alpha - 2.0 * beta + gamma
    if abs(denom) < 1e-12:
        return PeakEstimate(freq_hz=float(f[k]), power=float(p[k]), refined=False)
    delta = float(np.clip(0.5 * (alpha - gamma) / denom, -0.5, 0.5))
    return PeakEstimate(
        freq_hz=float(f[k] + delta * spectrum.resolution),
        power=float(p[k]),
        refined=True,
    )


def peak_to_median_ratio(spectrum: Spectrum, band_hz: tuple[float, float]) -> float:
    """Peak power over median power within a band; inf on a zero median."""
    p = spectrum.power[spectrum.band_slice(*band_hz)]
    med = float(np.median(p))
    top = float(p.max())
    if med <= 0.0:
        return np.inf if top > 0.0 else 0.0
    return top / med


# ---------------------------------------------------------------------------
# Normalized cross-correlation

@dataclass(frozen=True)
class XcorrResult:
    lags: np.ndarray        # samples, -max_lag..+max_lag
    values: np.ndarray      # normalized correlation per lag
    tau_star: int           # lag of max |R|
    r_max: float            # max |R|

    @property
    def r_at_tau_star(self) -> float:
        return float(self.values[np.nonzero(self.lags == self.tau_star)[0][0]])


def xcorr_normalized(e: np.ndarray, r: np.ndarray, max_lag: int) -> XcorrResult:
    """Normalized cross-correlation over lags -max_lag..+max_lag.

    Both inputs are globally standardized; each lag is then normalized on
    the overlapping region so shrinking overlap does not deflate the score.
    A positive ``tau_star`` means ``r`` is a delayed copy of ``e``.
    """
    if max_lag < 0:
        raise InputError(f"max_lag must be nonnegative, got {max_lag}")
    if min(len(e), len(r)) < max(2 * max_lag, 2):
        raise TooFewSamplesError(
            f"sequences of {len(e)} and {len(r)} samples are too short for "
            f"max_lag {max_lag} (need at least {max(2 * max_lag, 2)})",
            minimum=max(2 * max_lag, 2),
            got=min(len(e), len(r)),
        )
    ez = standardize(e, "first sequence")
    rz = standardize(r, "second sequence")

    lags = np.arange(-max_lag, max_lag + 1, dtype=np.int64)
    values = np.zeros(len(lags), dtype=np.float64)
    for j, tau in enumerate(lags):
        a = max(0, -int(tau))
        b = min(len(ez), len(rz) - int(tau))
        if b - a < 2:
            continue
        eo = ez[a:b]
        ro = rz[a + tau: b + tau]
        den = np.sqrt(float(eo @ eo) * float(ro @ ro))
        if den > 0.0:
            values[j] = float(eo @ ro) / den
    best = int(np.argmax(np.abs(values)))
    return XcorrResult(
        lags=lags,
        values=values,
        tau_star=int(lags[best]),
        r_max=float(abs(values[best])),
    )
