"""Synthetic 12-lead corpus with FFT-separable classes.

Class ``k`` adds a sinusoid at ``3 + 4k`` Hz plus a class-shaped wave after
every beat, both mixed into the leads with fixed per-class lead gains.  A
class-independent QRS-like pulse train and white noise are always present.
"""

from __future__ import annotations

import numpy as np

from ..tensor import make_rng
from .labels import LabelMap
from .records import EcgRecord, RawSignal

FS = 500
LENGTHS = (4096, 8192, 12000)
N_LEADS = 12


def class_frequency(k: int) -> float:
    return 3.0 + 4.0 * k


def _gauss(t, centre, width):
    return np.exp(-0.5 * ((t - centre) / width) ** 2)


def synth_generate(
    n_records: int,
    n_classes: int,
    seed: int,
    cooccurrence: float = 0.15,
    lengths=LENGTHS,
    label_map: LabelMap | None = None,
    noise: float = 0.05,
) -> tuple[list[EcgRecord], LabelMap]:
    """``n_records`` records at 500 Hz, each with at least one positive class."""
    base = LabelMap.builtin(2021) if label_map is None else label_map
    if not 1 <= n_classes <= min(26, base.n_classes):
        raise ValueError(f"n_classes must be in 1..{min(26, base.n_classes)}")
    if n_records < 1:
        raise ValueError("n_records must be positive")
    lmap = base.subset(n_classes)
    rng = make_rng(seed)
    mix = rng.uniform(0.5, 1.5, size=(n_classes, N_LEADS)) * rng.choice([-1.0, 1.0], size=(n_classes, N_LEADS))
    qrs_gain = rng.uniform(0.6, 1.4, size=N_LEADS)

    records = []
    for r in range(n_records):
        L = int(rng.choice(lengths))
        t = np.arange(L) / FS
        primary = int(rng.integers(n_classes))
        positive = {primary} | {k for k in range(n_classes) if k != primary and rng.random() < cooccurrence}

        rate = rng.uniform(0.9, 1.6)
        beats = np.arange(rng.uniform(0, 1 / rate), t[-1], 1 / rate)
        qrs = sum(_gauss(t, b, 0.012) for b in beats) if len(beats) else np.zeros(L)
        sig = qrs_gain[:, None] * qrs[None, :]
        for k in sorted(positive):
            phase = rng.uniform(0, 2 * np.pi)
            tone = 0.3 * np.sin(2 * np.pi * class_frequency(k) * t + phase)
            width = 0.02 + 0.01 * k
            delay = 0.18 + 0.02 * k
            wave = sum(_gauss(t, b + delay, width) for b in beats) if len(beats) else np.zeros(L)
            sig = sig + mix[k][:, None] * (tone + 0.4 * (-1) ** k * wave)[None, :]
        sig = sig + noise * rng.standard_normal((N_LEADS, L))

        codes = tuple(lmap.codes_for(k)[0] for k in sorted(positive))
        records.append(
            EcgRecord(
                id=f"S{r:05d}",
                signal=RawSignal(sig, FS),
                dx_codes=codes,
                age=str(int(rng.integers(20, 90))),
                sex=str(rng.choice(["Male", "Female"])),
            )
        )
    return records, lmap
