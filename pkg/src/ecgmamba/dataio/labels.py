"""SNOMED-CT code -> class index maps."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class LabelMap:
    """Ordered ``(code, index, group)`` entries.

    Codes that share an index belong to one equivalence group and collapse to
    a single positive.
    """

    entries: tuple[tuple[str, int, str], ...]

    def __post_init__(self):
        indices = sorted({i for _, i, _ in self.entries})
        if indices != list(range(len(indices))):
            raise ValueError("class indices must be exactly 0..n_classes-1")
        codes = [c for c, _, _ in self.entries]
        if len(set(codes)) != len(codes):
            raise ValueError("a code appears twice in the label map")
        for i in indices:
            if len({g for _, j, g in self.entries if j == i}) != 1:
                raise ValueError(f"class {i} has conflicting group names")

    @property
    def n_classes(self) -> int:
        return len({i for _, i, _ in self.entries})

    @property
    def index(self) -> dict[str, int]:
        return {c: i for c, i, _ in self.entries}

    @property
    def class_names(self) -> list[str]:
        names = {i: g for _, i, g in self.entries}
        return [names[i] for i in range(self.n_classes)]

    def codes_for(self, index: int) -> list[str]:
        return [c for c, i, _ in self.entries if i == index]

    def subset(self, n_classes: int) -> "LabelMap":
        """The first ``n_classes`` classes, indices unchanged."""
        if not 1 <= n_classes <= self.n_classes:
            raise ValueError(f"n_classes must be in 1..{self.n_classes}")
        return LabelMap(tuple(e for e in self.entries if e[1] < n_classes))

    def to_text(self) -> str:
        return "# code,index,group\n" + "".join(f"{c},{i},{g}\n" for c, i, g in self.entries)

    @classmethod
    def from_text(cls, text: str) -> "LabelMap":
        entries = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 3:
                raise ValueError(f"label map line {lineno}: expected code,index,group: {raw!r}")
            try:
                entries.append((parts[0], int(parts[1]), parts[2]))
            except ValueError:
                raise ValueError(f"label map line {lineno}: bad class index {parts[1]!r}") from None
        return cls(tuple(entries))

    @classmethod
    def load(cls, path) -> "LabelMap":
        return cls.from_text(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def builtin(cls, year: int = 2021) -> "LabelMap":
        name = {2021: "scored_2021.csv", 2020: "scored_2020.csv"}.get(year)
        if name is None:
            raise ValueError(f"no built-in label map for {year}")
        return cls.from_text(resources.files(__package__).joinpath("maps", name).read_text())


def label_vector(dx_codes: Iterable[str], label_map: LabelMap) -> np.ndarray:
    """Multi-hot vector; unmapped codes are ignored."""
    vec = np.zeros(label_map.n_classes, dtype=np.int8)
    index = label_map.index
    for code in dx_codes:
        i = index.get(code.strip())
        if i is not None:
            vec[i] = 1
    return vec
