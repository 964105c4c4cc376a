"""Cosine-scoring baselines on a single embedding view.

Four variants: score a held-out utterance against each speaker's labeled
utterances and average (CS), or against the per-speaker mean embedding
(CSEA); the 2-step variants first pseudo-label the unlabeled pool with the
same method and then re-score with labels and pseudo-labels together.
"""

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegeneracyWarning, StructuralError


@dataclass(frozen=True)
class SpeakerProfile:
    """Per-class mean embedding and how many utterances contributed."""

    class_index: int
    mean_embedding: np.ndarray
    support_count: int

    def __post_init__(self):
        if self.support_count < 1:
            raise StructuralError("profile needs at least one supporting utterance")


@dataclass(frozen=True)
class BaselinePrediction:
    labels: np.ndarray
    scores: np.ndarray
    ties: tuple[int, ...] = ()


def _normalize_rows(x: np.ndarray, warn: bool = True) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1)
    zero = norms == 0.0
    if zero.any() and warn:
        warnings.warn("zero-norm embedding: its cosine similarities are 0",
                      DegeneracyWarning, stacklevel=3)
    out = np.zeros_like(x, dtype=float)
    nz = ~zero
    out[nz] = x[nz] / norms[nz, None]
    return out


def cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarities; zero-norm rows contribute 0."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    return _normalize_rows(a) @ _normalize_rows(b).T


def _argmax_with_ties(scores: np.ndarray) -> BaselinePrediction:
    labels = np.argmax(scores, axis=1)
    row_max = scores.max(axis=1)
    ties = tuple(np.flatnonzero(
        (scores == row_max[:, None]).sum(axis=1) > 1).tolist())
    return BaselinePrediction(labels=labels, scores=scores, ties=ties)


def cs_score(embedding: np.ndarray,
             class_embeddings: Sequence[np.ndarray]) -> np.ndarray:
    """Per-class mean cosine similarity of one utterance to each class's pool."""
    emb = np.asarray(embedding, dtype=float)[None, :]
    return np.array([cosine_matrix(emb, np.atleast_2d(group)).mean()
                     for group in class_embeddings])


def csea_score(embedding: np.ndarray,
               profiles: Sequence[SpeakerProfile]) -> np.ndarray:
    """Cosine similarity of one utterance to each class's mean embedding."""
    means = np.vstack([p.mean_embedding for p in profiles])
    return cosine_matrix(np.asarray(embedding, dtype=float)[None, :], means)[0]


def build_profiles(embeddings: np.ndarray, classes: np.ndarray,
                   class_count: int) -> list[SpeakerProfile]:
    classes = np.asarray(classes, dtype=int)
    profiles = []
    for c in range(class_count):
        members = embeddings[classes == c]
        if members.shape[0] == 0:
            raise StructuralError(f"class {c} has no utterances to average")
        profiles.append(SpeakerProfile(class_index=c,
                                       mean_embedding=members.mean(axis=0),
                                       support_count=members.shape[0]))
    return profiles


def _check_inputs(labeled: np.ndarray, classes: np.ndarray, class_count: int):
    classes = np.asarray(classes, dtype=int)
    if labeled.shape[0] != classes.size:
        raise StructuralError("one class per labeled embedding required")
    present = np.unique(classes)
    if present.size != class_count or present.min() < 0 or present.max() >= class_count:
        raise StructuralError("every class needs at least one labeled embedding")


def run_cs(labeled: np.ndarray, classes: np.ndarray, heldout: np.ndarray,
           class_count: int) -> BaselinePrediction:
    """CS: average cosine against each class's labeled utterances."""
    labeled = np.asarray(labeled, dtype=float)
    classes = np.asarray(classes, dtype=int)
    _check_inputs(labeled, classes, class_count)
    sims = cosine_matrix(np.atleast_2d(heldout), labeled)
    scores = np.column_stack([sims[:, classes == c].mean(axis=1)
                              for c in range(class_count)])
    return _argmax_with_ties(scores)


def run_csea(labeled: np.ndarray, classes: np.ndarray, heldout: np.ndarray,
             class_count: int) -> BaselinePrediction:
    """CSEA: cosine against per-class mean embeddings."""
    labeled = np.asarray(labeled, dtype=float)
    classes = np.asarray(classes, dtype=int)
    _check_inputs(labeled, classes, class_count)
    profiles = build_profiles(labeled, classes, class_count)
    means = np.vstack([p.mean_embedding for p in profiles])
    return _argmax_with_ties(cosine_matrix(np.atleast_2d(heldout), means))


def _two_step(scorer, labeled, classes, unlabeled, heldout, class_count):
    labeled = np.asarray(labeled, dtype=float)
    classes = np.asarray(classes, dtype=int)
    unlabeled = np.atleast_2d(np.asarray(unlabeled, dtype=float))
    if unlabeled.size == 0:
        return scorer(labeled, classes, heldout, class_count)
    pseudo = scorer(labeled, classes, unlabeled, class_count).labels
    ext_emb = np.vstack([labeled, unlabeled])
    ext_cls = np.concatenate([classes, pseudo])
    return scorer(ext_emb, ext_cls, heldout, class_count)


def run_2cs(labeled, classes, unlabeled, heldout, class_count) -> BaselinePrediction:
    """2-step CS: pseudo-label the unlabeled pool with CS, then re-score."""
    return _two_step(run_cs, labeled, classes, unlabeled, heldout, class_count)


def run_2csea(labeled, classes, unlabeled, heldout, class_count) -> BaselinePrediction:
    """2-step CSEA: pseudo-label with CSEA, then re-average the profiles."""
    return _two_step(run_csea, labeled, classes, unlabeled, heldout, class_count)
