"""Finite trigonometric sums with exact evaluation and differentiation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TrigSeries:
    """``f(s) = sum_k c_k cos(k s) + d_k sin(k s)`` over non-negative integer ``k``.

    Terms are kept as an explicit harmonic list ``(k, c_k, d_k)`` so the
    series can be sampled on any grid without interpolation error.
    """

    terms: tuple = field(default_factory=tuple)

    @classmethod
    def zero(cls) -> "TrigSeries":
        return cls(())

    @classmethod
    def constant(cls, value: float) -> "TrigSeries":
        return cls(((0, float(value), 0.0),))

    @classmethod
    def cos_phase(cls, k: int, amp: float, phase: float = 0.0) -> "TrigSeries":
        """``amp * cos(k s - phase)``."""
        return cls(((int(k), amp * np.cos(phase), amp * np.sin(phase)),))._canonical()

    @classmethod
    def sin_phase(cls, k: int, amp: float, phase: float = 0.0) -> "TrigSeries":
        """``amp * sin(k s - phase)``."""
        return cls(((int(k), -amp * np.sin(phase), amp * np.cos(phase)),))._canonical()

    @classmethod
    def pinned_sin(cls, k: int, amp: float, phase: float = 0.0) -> "TrigSeries":
        """``amp * (sin(k s - phase) + sin(phase))``, which vanishes at ``s = 0``."""
        return cls.sin_phase(k, amp, phase) + cls.constant(amp * np.sin(phase))

    def _canonical(self) -> "TrigSeries":
        acc: dict[int, list] = {}
        for k, c, d in self.terms:
            if k < 0:
                k, d = -k, -d
            slot = acc.setdefault(int(k), [0.0, 0.0])
            slot[0] += float(c)
            slot[1] += 0.0 if k == 0 else float(d)
        return TrigSeries(tuple((k, c, d) for k, (c, d) in sorted(acc.items())))

    def __add__(self, other: "TrigSeries") -> "TrigSeries":
        return TrigSeries(self.terms + other.terms)._canonical()

    def __sub__(self, other: "TrigSeries") -> "TrigSeries":
        return self + other * -1.0

    def __mul__(self, scalar: float) -> "TrigSeries":
        return TrigSeries(tuple((k, c * scalar, d * scalar) for k, c, d in self.terms))

    __rmul__ = __mul__

    def __call__(self, s, deriv: int = 0) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        for k, c, d in self.terms:
            # d^n/ds^n of (c cos + d sin)(k s): rotate coefficients by n quarter turns
            cn, dn = c, d
            for _ in range(deriv):
                cn, dn = k * dn, -k * cn
            if k == 0:
                if deriv == 0:
                    out = out + cn
                continue
            out = out + cn * np.cos(k * s) + dn * np.sin(k * s)
        return out

    def coefficient(self, k: int) -> tuple[float, float]:
        for kk, c, d in self.terms:
            if kk == k:
                return c, d
        return 0.0, 0.0

    def mean(self) -> float:
        return self.coefficient(0)[0]

    def max_abs_coefficient(self) -> float:
        return max((max(abs(c), abs(d)) for _, c, d in self.terms), default=0.0)
