"""Style representations and the codebook that stores them.

Each style is a short float vector (16 numbers by default). The codebook
is an ordered collection of named representations bound to a specific
network fingerprint, with one reserved identity entry used for
reconstruction and for blending stylization strength.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CodebookError, ContractError, NonFiniteError

IDENTITY_ID = "identity"


@dataclass
class StyleRepresentation:
    """A single pluggable style: id, display name, and its code vector."""

    id: str
    name: str
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 1:
            raise CodebookError(f"style values must be a flat vector, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteError(f"style {self.id!r} has non-finite values")

    def copy(self) -> "StyleRepresentation":
        return StyleRepresentation(self.id, self.name, self.values.copy())


class StyleCodebook:
    """Ordered map of style id to representation, plus the identity entry."""

    def __init__(self, style_dim: int, network_fingerprint: str = ""):
        self.style_dim = int(style_dim)
        self.network_fingerprint = network_fingerprint
        self._entries: dict[str, StyleRepresentation] = {}
        self.add(StyleRepresentation(IDENTITY_ID, "identity",
                                     np.ones(self.style_dim, dtype=np.float32)))

    # -- container protocol ------------------------------------------------
    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, style_id: str) -> bool:
        return style_id in self._entries

    def ids(self) -> list[str]:
        return list(self._entries)

    def entries(self) -> list[StyleRepresentation]:
        return list(self._entries.values())

    def get(self, style_id: str) -> StyleRepresentation:
        try:
            return self._entries[style_id]
        except KeyError:
            raise CodebookError(f"unknown style id {style_id!r}") from None

    def resolve(self, key: str) -> StyleRepresentation:
        """Look a style up by id, falling back to display name."""
        if key in self._entries:
            return self._entries[key]
        for rep in self._entries.values():
            if rep.name == key:
                return rep
        raise CodebookError(f"no style with id or name {key!r}")

    @property
    def identity(self) -> StyleRepresentation:
        return self._entries[IDENTITY_ID]

    def add(self, rep: StyleRepresentation) -> None:
        if rep.values.shape != (self.style_dim,):
            raise CodebookError(
                f"style {rep.id!r} has {rep.values.shape[0]} values, codebook expects {self.style_dim}")
        if rep.id in self._entries:
            raise CodebookError(f"duplicate style id {rep.id!r}")
        self._entries[rep.id] = rep

    def replace(self, rep: StyleRepresentation) -> None:
        if rep.id not in self._entries:
            raise CodebookError(f"unknown style id {rep.id!r}")
        self._entries[rep.id] = rep

    def copy(self) -> "StyleCodebook":
        dup = StyleCodebook(self.style_dim, self.network_fingerprint)
        for rep in self._entries.values():
            if rep.id == IDENTITY_ID:
                dup._entries[IDENTITY_ID] = rep.copy()
            else:
                dup.add(rep.copy())
        return dup


@dataclass(frozen=True)
class MixedStyle:
    """Result of blending representations; flags server-side renormalization."""

    values: np.ndarray
    weights_normalized: bool

    def as_representation(self, style_id: str = "mixed", name: str = "mixed") -> StyleRepresentation:
        return StyleRepresentation(style_id, name, self.values)


def mix_representation(entries: list[tuple[StyleRepresentation, float]]) -> MixedStyle:
    """Componentwise blend sum(w_i * f_i).

    Weights are expected to sum to 1 within 1e-6; anything else is
    renormalized and reported through ``weights_normalized``.
    """
    if not entries:
        raise ContractError("mix_representation needs at least one entry")
    weights = np.array([w for _, w in entries], dtype=np.float64)
    if not np.all(np.isfinite(weights)):
        raise NonFiniteError("mix weights must be finite")
    total = float(weights.sum())
    normalized = abs(total - 1.0) > 1e-6
    if normalized:
        if abs(total) < 1e-12:
            raise ContractError("mix weights sum to zero and cannot be normalized")
        weights = weights / total
    if len(entries) == 1 and not normalized:
        # exact passthrough for the one-hot case
        return MixedStyle(entries[0][0].values.copy(), False)
    dim = entries[0][0].values.shape[0]
    acc = np.zeros(dim, dtype=np.float32)
    for (rep, _), w in zip(entries, weights):
        if rep.values.shape[0] != dim:
            raise CodebookError("mixed representations must share one length")
        acc = acc + np.float32(w) * rep.values
    return MixedStyle(acc, normalized)


def resolve_blend(cb: StyleCodebook, weights: list[tuple[str, float]],
                  alpha: float = 1.0) -> tuple[np.ndarray, bool]:
    """Turn a stylize request into one style vector.

    ``weights`` maps style ids to blend weights; the result is
    ``(1 - alpha) * identity + alpha * sum(w_i * f_i)``. Returns the vector
    and whether the weights had to be renormalized. This is the single
    resolution path shared by the CLI and the HTTP service.
    """
    if not weights:
        raise ContractError("stylize request needs at least one style weight")
    entries = [(cb.get(sid), float(w)) for sid, w in weights]
    mixed = mix_representation(entries)
    blended = tradeoff_representation(cb.identity, mixed.as_representation(), alpha)
    return blended.values, mixed.weights_normalized


def tradeoff_representation(f0: StyleRepresentation, fi: StyleRepresentation,
                            alpha: float) -> StyleRepresentation:
    """Blend the identity entry with a style: (1 - alpha) * f0 + alpha * fi."""
    if not np.isfinite(alpha):
        raise NonFiniteError("alpha must be finite")
    if alpha < 0.0 or alpha > 1.0:
        raise ContractError(f"alpha must lie in [0, 1], got {alpha}")
    if alpha == 0.0:
        return StyleRepresentation(f0.id, f0.name, f0.values.copy())
    if alpha == 1.0:
        return StyleRepresentation(fi.id, fi.name, fi.values.copy())
    values = (1.0 - np.float32(alpha)) * f0.values + np.float32(alpha) * fi.values
    return StyleRepresentation(f"blend:{fi.id}", f"{fi.name}@{alpha:g}", values)
