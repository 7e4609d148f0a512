"""Elementwise activations with closed-form derivatives through order three.

Third derivatives are needed because training losses that penalize
second-input-derivative mismatch are themselves differentiated with respect
to the network parameters. All four kinds are smooth, so every order exists
in closed form; no finite differencing happens inside the package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

__all__ = ["Activation", "Identity", "Tanh", "Gelu", "SoftClip", "activation_from_name"]

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)

MAX_DERIVATIVE_ORDER = 3


def _norm_cdf(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + erf(z * _INV_SQRT2))


def _norm_pdf(z: np.ndarray) -> np.ndarray:
    return _INV_SQRT2PI * np.exp(-0.5 * z * z)


@dataclass(frozen=True)
class Activation:
    """Base elementwise nonlinearity. Subclasses define value/derivative."""

    name = "base"

    def value(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, z: np.ndarray, order: int) -> np.ndarray:
        """order-th derivative, 1 <= order <= 3, evaluated elementwise."""
        raise NotImplementedError

    def derivatives(self, z: np.ndarray, upto: int) -> list[np.ndarray]:
        if not 1 <= upto <= MAX_DERIVATIVE_ORDER:
            raise ValueError(
                f"derivative order must be within 1..{MAX_DERIVATIVE_ORDER}, got {upto}"
            )
        return [self.derivative(z, k) for k in range(1, upto + 1)]

    def descriptor(self) -> dict:
        return {"kind": self.name}


@dataclass(frozen=True)
class Identity(Activation):
    name = "identity"

    def value(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=np.float64).copy()

    def derivative(self, z: np.ndarray, order: int) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        return np.ones_like(z) if order == 1 else np.zeros_like(z)


@dataclass(frozen=True)
class Tanh(Activation):
    name = "tanh"

    def value(self, z: np.ndarray) -> np.ndarray:
        return np.tanh(z)

    def derivative(self, z: np.ndarray, order: int) -> np.ndarray:
        t = np.tanh(z)
        s = 1.0 - t * t  # sech^2
        if order == 1:
            return s
        if order == 2:
            return -2.0 * t * s
        if order == 3:
            return -2.0 * s * (1.0 - 3.0 * t * t)
        raise ValueError(f"unsupported derivative order {order}")


@dataclass(frozen=True)
class Gelu(Activation):
    """Exact Gaussian-error linear unit z * Phi(z) (no tanh approximation)."""

    name = "gelu"

    def value(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        return z * _norm_cdf(z)

    def derivative(self, z: np.ndarray, order: int) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        phi = _norm_pdf(z)
        if order == 1:
            return _norm_cdf(z) + z * phi
        if order == 2:
            return phi * (2.0 - z * z)
        if order == 3:
            return z * phi * (z * z - 4.0)
        raise ValueError(f"unsupported derivative order {order}")


@dataclass(frozen=True)
class SoftClip(Activation):
    """Saturating output map A * tanh(z / A); |value| < A for finite z.

    Near zero it is the identity to second order, so it leaves small actions
    untouched while capping runaway outputs at the clip level.
    """

    clip: float = 10.0
    name = "softclip"

    def __post_init__(self):
        if not self.clip > 0:
            raise ValueError(f"clip level must be positive, got {self.clip}")

    def value(self, z: np.ndarray) -> np.ndarray:
        return self.clip * np.tanh(np.asarray(z, dtype=np.float64) / self.clip)

    def derivative(self, z: np.ndarray, order: int) -> np.ndarray:
        a = self.clip
        t = np.tanh(np.asarray(z, dtype=np.float64) / a)
        s = 1.0 - t * t
        if order == 1:
            return s
        if order == 2:
            return -2.0 * t * s / a
        if order == 3:
            return -2.0 * s * (1.0 - 3.0 * t * t) / (a * a)
        raise ValueError(f"unsupported derivative order {order}")

    def descriptor(self) -> dict:
        return {"kind": self.name, "clip": self.clip}


def activation_from_name(kind: str, clip: float | None = None) -> Activation:
    """Rebuild an activation from its checkpoint descriptor."""
    if kind == "identity":
        return Identity()
    if kind == "tanh":
        return Tanh()
    if kind == "gelu":
        return Gelu()
    if kind == "softclip":
        return SoftClip(clip if clip is not None else 10.0)
    raise ValueError(f"unknown activation kind {kind!r}")
