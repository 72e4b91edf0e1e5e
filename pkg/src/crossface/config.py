"""Run configuration stored as a flat ``key=value`` text file."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields

from .features import FeatureBank, Quantization, generate_bank


@dataclass(frozen=True)
class RunConfig:
    window_w: int = 64
    window_h: int = 64
    min_size: int = 8
    position_stride: int = 6
    size_stride: int = 4
    rounds: int | None = None
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        for name in ("window_w", "window_h", "min_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.position_stride < 1 or self.size_stride < 1:
            raise ValueError("strides must be >= 1")
        if self.rounds is not None and self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.threads < 0:
            raise ValueError("threads must be >= 0 (0 = auto)")

    @property
    def quantization(self) -> Quantization:
        return Quantization(self.min_size, self.position_stride, self.size_stride)

    def bank(self) -> FeatureBank:
        return generate_bank(self.window_w, self.window_h, self.quantization)

    def replace(self, **changes) -> RunConfig:
        changes = {k: v for k, v in changes.items() if v is not None}
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None:
                lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> RunConfig:
        known = {f.name for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: expected key=value, got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in known:
                raise ValueError(f"config line {lineno}: unknown key {key!r}")
            try:
                values[key] = int(value)
            except ValueError:
                raise ValueError(f"config line {lineno}: {key} must be an integer") from None
        return cls(**values)

    @classmethod
    def load(cls, path: str | os.PathLike) -> RunConfig:
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_text())
