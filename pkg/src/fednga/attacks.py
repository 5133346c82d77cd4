"""Byzantine upload generators.

Three upload strategies for compromised clients, applied after the honest
clients have computed their gradients:

  * ``sign_flip``  — minus three times the (unweighted) sum of the honest
                     uploads; every Byzantine client sends the same vector
                     in a round.
  * ``gaussian_attack`` — i.i.d. zero-mean Gaussian noise per coordinate
                     (variance 90 by default), drawn independently per
                     Byzantine client per round.
  * ``same_value`` — the all-ones vector.

Attacks read only the round's honest uploads; they never touch the honest
clients' data or the server state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

#: Valid attack tags ("none" disables the Byzantine set entirely).
ATTACK_TAGS = ("none", "sign_flip", "gaussian", "same_value")

#: Default per-coordinate variance of the Gaussian attack.
GAUSSIAN_VARIANCE = 90.0


@dataclass(frozen=True)
class AttackKind:
    """An attack tag plus its parameters (only the Gaussian one has any)."""

    tag: str
    gaussian_var: float = GAUSSIAN_VARIANCE

    def __post_init__(self) -> None:
        if self.tag not in ATTACK_TAGS:
            raise ValueError(
                f"unknown attack {self.tag!r}; expected one of {ATTACK_TAGS}"
            )
        if self.tag == "gaussian" and self.gaussian_var <= 0.0:
            raise ValueError(
                f"gaussian attack variance must be positive, got {self.gaussian_var}"
            )


def sign_flip(honest_uploads: Sequence[np.ndarray]) -> np.ndarray:
    """Return -3 times the component-wise sum of the honest uploads.

    Homogeneous in the uploads: scaling every honest upload by c scales
    the attack by c.
    """
    if len(honest_uploads) == 0:
        raise ValueError("sign_flip needs at least one honest upload")
    total = np.zeros_like(np.asarray(honest_uploads[0], dtype=np.float64))
    for vec in honest_uploads:
        total += np.asarray(vec, dtype=np.float64)
    return -3.0 * total


def gaussian_attack(
    dim: int, rng: np.random.Generator, variance: float = GAUSSIAN_VARIANCE
) -> np.ndarray:
    """Draw a length-``dim`` vector of i.i.d. N(0, variance) coordinates from ``rng``."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if variance <= 0.0:
        raise ValueError(f"variance must be positive, got {variance}")
    return rng.standard_normal(dim) * np.sqrt(variance)


def same_value(dim: int) -> np.ndarray:
    """Return the all-ones vector of length ``dim``."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    return np.ones(dim, dtype=np.float64)
