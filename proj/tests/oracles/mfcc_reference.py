"""Reference MFCC used to freeze tests/fixtures/sine_1khz_mfcc.txt.

Built only from numpy/scipy primitives (np.pad reflect, np.hamming,
np.fft.rfft, scipy.fft.dct) with the same parameters as the C++ frontend:
16 kHz, 480-sample window, 320-sample hop, half-window reflective padding,
512-point FFT, 40 HTK-mel triangular filters over 0-8000 Hz with area
normalisation, natural log floored at 1e-10, orthonormal DCT-II, first 20
coefficients.

    python3 tests/oracles/mfcc_reference.py > tests/fixtures/sine_1khz_mfcc.txt
"""
import numpy as np
from scipy.fft import dct

RATE, WIN, HOP, NFFT, MELS, CEPS = 16000, 480, 320, 512, 40, 20


def mel_filterbank():
    to_mel = lambda f: 2595.0 * np.log10(1.0 + f / 700.0)
    to_hz = lambda m: 700.0 * (10.0 ** (m / 2595.0) - 1.0)
    edges = to_hz(np.linspace(to_mel(0.0), to_mel(8000.0), MELS + 2))
    freqs = np.fft.rfftfreq(NFFT, d=1.0 / RATE)
    fb = np.zeros((MELS, freqs.size))
    for m in range(MELS):
        lo, c, hi = edges[m], edges[m + 1], edges[m + 2]
        tri = np.minimum((freqs - lo) / (c - lo), (hi - freqs) / (hi - c))
        fb[m] = np.clip(tri, 0.0, None) * 2.0 / (hi - lo)
    return fb


def mfcc(signal):
    padded = np.pad(signal, WIN // 2, mode="reflect")
    frames = 1 + (padded.size - WIN) // HOP
    window = np.hamming(WIN)
    fb = mel_filterbank()
    out = np.empty((CEPS, frames))
    for t in range(frames):
        frame = padded[t * HOP : t * HOP + WIN] * window
        power = np.abs(np.fft.rfft(frame, n=NFFT)) ** 2
        logmel = np.log(np.maximum(fb @ power, 1e-10))
        out[:, t] = dct(logmel, type=2, norm="ortho")[:CEPS]
    return out


def sine_clip():
    n = np.arange(RATE)
    # The C++ side stores samples as float32.
    return (0.5 * np.sin(2.0 * np.pi * 1000.0 * n / RATE)).astype(np.float32).astype(np.float64)


if __name__ == "__main__":
    m = mfcc(sine_clip())
    assert m.shape == (20, 51), m.shape
    print("# 1 kHz sine, amplitude 0.5, 16000 samples; rows = coefficients, cols = frames")
    print(f"{m.shape[0]} {m.shape[1]}")
    for row in m:
        print(" ".join(f"{v:.10e}" for v in row))
