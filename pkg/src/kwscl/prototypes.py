"""Class prototypes in latent space and the distance statistics around them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import NO, YES
from .errors import IncompleteArtifactsError, InsufficientDataError, ShapeError

DEFAULT_N_SIGMA = 2.0
CLASSES = (NO, YES)


class OpCounter:
    """Counts distance evaluations, so callers can check short-circuiting."""

    def __init__(self):
        self.count = 0

    def reset(self):
        self.count = 0


distance_ops = OpCounter()


@dataclass(frozen=True)
class ClassArtifacts:
    class_id: int
    prototype: np.ndarray
    mean_dist: float
    std_dist: float
    n_sigma: float = DEFAULT_N_SIGMA

    @property
    def threshold(self) -> float:
        return self.mean_dist + self.n_sigma * self.std_dist


def mae_distance(a, b, counter: OpCounter | None = distance_ops) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {a.shape} vs {b.shape}")
    if counter is not None:
        counter.count += 1
    return float(np.mean(np.abs(a - b)))


def _by_class(latents, labels):
    latents = np.asarray(latents, dtype=np.float64)
    labels = np.asarray(labels)
    if latents.ndim != 2 or len(latents) != len(labels):
        raise ShapeError("latents must be (n, d) with one label each")
    return latents, labels


def compute_prototypes(latents, labels, classes=CLASSES) -> dict[int, np.ndarray]:
    latents, labels = _by_class(latents, labels)
    protos = {}
    for c in classes:
        members = latents[labels == c]
        if len(members) == 0:
            raise IncompleteArtifactsError(f"no latents for class {c}")
        protos[c] = members.sum(axis=0) / len(members)
    return protos


def compute_artifacts(latents, labels, n_sigma: float = DEFAULT_N_SIGMA,
                      classes=CLASSES) -> dict[int, ClassArtifacts]:
    """Prototype, then mean and population std of within-class MAE distances."""
    latents, labels = _by_class(latents, labels)
    for c in classes:
        if np.count_nonzero(labels == c) < 2:
            raise InsufficientDataError(f"class {c} needs at least 2 latents")
    protos = compute_prototypes(latents, labels, classes)
    out = {}
    for c in classes:
        d = np.mean(np.abs(latents[labels == c] - protos[c]), axis=1)
        out[c] = ClassArtifacts(c, protos[c], float(d.mean()), float(d.std()), n_sigma)
    return out


def with_n_sigma(artifacts: dict[int, ClassArtifacts], n_sigma: float) -> dict[int, ClassArtifacts]:
    return {c: ClassArtifacts(a.class_id, a.prototype, a.mean_dist, a.std_dist, n_sigma)
            for c, a in artifacts.items()}
