"""Sampling-rate unification and fixed-length windowing."""

from __future__ import annotations

import math

import numpy as np

TARGET_FS = 500
TARGET_LEN = 8192
TAPS_PER_PHASE = 64
STOPBAND_DB = 60.0


def kaiser_beta(attenuation_db: float) -> float:
    """Kaiser's empirical beta for a given stopband attenuation."""
    a = attenuation_db
    if a > 50:
        return 0.1102 * (a - 8.7)
    if a >= 21:
        return 0.5842 * (a - 21) ** 0.4 + 0.07886 * (a - 21)
    return 0.0


def lowpass_taps(factor: int, taps_per_phase: int = TAPS_PER_PHASE, attenuation_db: float = STOPBAND_DB):
    """Odd-length, unity-DC-gain Kaiser-windowed sinc with cutoff ``fs_in / (2*factor)``."""
    n = factor * taps_per_phase + 1
    m = np.arange(n) - (n - 1) / 2
    h = np.sinc(m / factor) / factor * np.kaiser(n, kaiser_beta(attenuation_db))
    return h / h.sum()


def resample_polyphase(x, from_fs: int = 1000, to_fs: int = TARGET_FS, taps=None) -> np.ndarray:
    """Anti-aliased integer decimation of ``x[..., L]``, output length ``ceil(L / M)``.

    The filter is split into its M polyphase branches; each branch runs at the
    output rate on one input phase.  The filter is centred on every kept
    sample (zero phase) and the edges are extended by odd reflection.
    """
    x = np.asarray(x, dtype=np.float64)
    if from_fs <= 0 or to_fs <= 0 or from_fs % to_fs:
        raise ValueError(f"polyphase decimation needs an integer ratio, got {from_fs}->{to_fs}")
    M = from_fs // to_fs
    if M == 1:
        return x.copy()
    h = lowpass_taps(M) if taps is None else np.asarray(taps, dtype=np.float64)
    if len(h) % 2 == 0:
        raise ValueError("decimation filter must have odd length")
    L = x.shape[-1]
    n_out = math.ceil(L / M)
    centre = (len(h) - 1) // 2
    pad = centre + M
    xp = np.pad(x, [(0, 0)] * (x.ndim - 1) + [(pad, pad)], mode="reflect", reflect_type="odd")

    # y[m] = sum_n h[n] * x[M*m + centre - n]; with n = M*j + p each phase p is a
    # plain convolution of h[p::M] with the input samples x[M*i + centre - p].
    y = np.zeros(x.shape[:-1] + (n_out,))
    for p in range(M):
        hp = h[p::M]
        start = pad + centre - p - M * (len(hp) - 1)
        stop = start + M * (n_out + len(hp) - 1)
        seg = xp[..., start:stop:M]
        y += np.apply_along_axis(lambda s: np.convolve(s, hp, mode="valid"), -1, seg)
    return y


def resample_fft(x, from_fs: int = 257, to_fs: int = TARGET_FS, num: int | None = None) -> np.ndarray:
    """Fourier-method resampling of ``x[..., L]`` to ``round(L * to_fs / from_fs)`` samples.

    The spectrum is zero-padded (or truncated) symmetrically; an even-length
    Nyquist bin is split between the positive and negative halves.  Output is
    scaled by ``new_len / old_len`` so amplitudes are preserved.
    """
    x = np.asarray(x, dtype=np.float64)
    L = x.shape[-1]
    if L < 2:
        raise ValueError("FFT resampling needs at least two samples")
    n_new = int(round(L * to_fs / from_fs)) if num is None else int(num)
    if n_new < 1:
        raise ValueError("resampled length must be positive")
    X = np.fft.fft(x, axis=-1)
    Y = np.zeros(x.shape[:-1] + (n_new,), dtype=complex)
    k = min(L, n_new)
    half = (k + 1) // 2  # bins 0..half-1 are copied from each side
    Y[..., :half] = X[..., :half]
    if half > 1:
        Y[..., n_new - (half - 1) :] = X[..., L - (half - 1) :]
    if k % 2 == 0:
        if n_new > L:  # upsampling: split the old Nyquist bin
            Y[..., half] = X[..., half] / 2
            Y[..., n_new - half] = X[..., half] / 2
        elif n_new < L:  # downsampling: fold both halves onto the new Nyquist bin
            Y[..., half] = X[..., half] + X[..., L - half]
        else:
            Y[..., half] = X[..., half]
    return np.fft.ifft(Y, axis=-1).real * (n_new / L)


def to_target_rate(x, fs: float, target_fs: int = TARGET_FS) -> np.ndarray:
    """Polyphase decimation for integer multiples of ``target_fs``, FFT resampling otherwise."""
    x = np.asarray(x, dtype=np.float64)
    if fs == target_fs:
        return x.copy()
    if fs > target_fs and float(fs) % target_fs == 0:
        return resample_polyphase(x, int(fs), target_fs)
    return resample_fft(x, fs, target_fs)


def fix_length(x, target: int = TARGET_LEN, rng: np.random.Generator | None = None) -> np.ndarray:
    """Right zero-pad or crop ``x[C, L]`` to ``[C, target]``.

    Longer signals are cropped at a uniformly random start drawn from ``rng``
    (shared by all leads); with ``rng=None`` the crop starts at 0.
    """
    x = np.asarray(x, dtype=np.float64)
    L = x.shape[-1]
    if L < 1:
        raise ValueError("empty signal")
    if L < target:
        out = np.zeros(x.shape[:-1] + (target,))
        out[..., :L] = x
        return out
    start = 0 if rng is None or L == target else int(rng.integers(0, L - target + 1))
    return x[..., start : start + target].copy()
