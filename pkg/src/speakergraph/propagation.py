"""Label propagation with class normalization, plus the LP pipelines.

The solver evolves an n-by-C score matrix by

    Y(t+1) = alpha * S @ Y(t) + (1 - alpha) * Y(0)

until convergence, or jumps straight to the fixed point
(1 - alpha) * (I - alpha*S)^(-1) @ Y(0). Columns of Y(0) are normalized to
unit sum so imbalanced label (and pseudo-label) counts cannot drown a class.
The fixed point with lam = alpha / (1 - alpha) minimizes
||f - Y0||^2 + lam * trace(f^T L f), the usual quadratic smoothness
objective on the graph.
"""

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .baselines import cosine_matrix
from .errors import ConfigurationError, DegeneracyWarning, NumericalError, StructuralError
from .fusion import FusedGraph

ABSTAIN = -1

# Households stay small, so a direct solve is the default below this size.
CLOSED_FORM_MAX_NODES = 512


@dataclass(frozen=True)
class PropagationConfig:
    alpha: float = 0.9
    tol: float = 1e-6
    max_iter: int = 1000
    solver: str = "auto"  # "auto" | "iterative" | "closed_form"
    # Whether the first pass of the two-step pipelines propagates over the
    # full graph (held-out nodes included) or only labeled+unlabeled.
    step1_includes_heldout: bool = False

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError(f"alpha must be in (0, 1), got {self.alpha}")
        if not self.tol > 0:
            raise ConfigurationError(f"tol must be > 0, got {self.tol}")
        if self.max_iter < 1:
            raise ConfigurationError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.solver not in ("auto", "iterative", "closed_form"):
            raise ConfigurationError(f"unknown solver {self.solver!r}")


@dataclass(frozen=True)
class HouseholdGraph:
    """Fused graph plus the index partition labeled | unlabeled | held-out.

    Nodes 0..l-1 are labeled with class indices ``labels``; nodes l..l+u-1
    are unlabeled; held-out nodes occupy the tail. Every class must have at
    least one labeled node.
    """

    fused: FusedGraph
    labels: np.ndarray
    n_unlabeled: int
    n_heldout: int
    class_count: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int)
        object.__setattr__(self, "labels", labels)
        if labels.ndim != 1 or labels.size < 1:
            raise StructuralError("need at least one labeled node")
        if self.class_count < 2:
            raise StructuralError(f"class_count must be >= 2, got {self.class_count}")
        if labels.min() < 0 or labels.max() >= self.class_count:
            raise StructuralError("label out of range")
        if self.n_unlabeled < 0 or self.n_heldout < 0:
            raise StructuralError("negative partition size")
        n = labels.size + self.n_unlabeled + self.n_heldout
        if self.fused.node_count != n:
            raise StructuralError(
                f"partition sizes sum to {n} but graph has {self.fused.node_count} nodes")
        present = np.unique(labels)
        if present.size != self.class_count:
            missing = sorted(set(range(self.class_count)) - set(present.tolist()))
            raise StructuralError(f"classes without labeled nodes: {missing}")

    @property
    def n_labeled(self) -> int:
        return self.labels.size

    @property
    def n(self) -> int:
        return self.fused.node_count

    @property
    def unlabeled_slice(self) -> slice:
        return slice(self.n_labeled, self.n_labeled + self.n_unlabeled)

    @property
    def heldout_slice(self) -> slice:
        return slice(self.n_labeled + self.n_unlabeled, self.n)

    def without_heldout(self) -> "HouseholdGraph":
        core = np.arange(self.n_labeled + self.n_unlabeled)
        return HouseholdGraph(fused=self.fused.subgraph(core), labels=self.labels,
                              n_unlabeled=self.n_unlabeled, n_heldout=0,
                              class_count=self.class_count)


@dataclass(frozen=True)
class PropagationOutcome:
    y: np.ndarray
    converged: bool
    iterations: int


@dataclass(frozen=True)
class PredictionResult:
    """Hard labels with tie/abstain diagnostics (ABSTAIN = -1)."""

    labels: np.ndarray
    ties: tuple[int, ...] = ()
    abstains: tuple[int, ...] = ()
    converged: bool = True
    iterations: int = 0


def class_normalize(y0: np.ndarray) -> np.ndarray:
    """Divide each class column by its sum; all-zero columns stay zero."""
    y0 = np.asarray(y0, dtype=float).copy()
    sums = y0.sum(axis=0)
    nonzero = sums > 0
    y0[:, nonzero] /= sums[nonzero]
    return y0


def init_label_matrix(graph: HouseholdGraph,
                      pseudo: np.ndarray | None = None) -> np.ndarray:
    """One-hot rows for labeled (and pseudo-labeled) nodes, column-normalized.

    ``pseudo`` covers exactly the unlabeled index range; entries of ABSTAIN
    leave the node unlabeled.
    """
    y0 = np.zeros((graph.n, graph.class_count))
    y0[np.arange(graph.n_labeled), graph.labels] = 1.0
    if pseudo is not None:
        pseudo = np.asarray(pseudo, dtype=int)
        if pseudo.shape != (graph.n_unlabeled,):
            raise StructuralError(
                f"pseudo labels must cover the unlabeled range "
                f"({graph.n_unlabeled} nodes), got shape {pseudo.shape}")
        if pseudo.size and (pseudo.min() < ABSTAIN or pseudo.max() >= graph.class_count):
            raise StructuralError("pseudo label index out of range")
        keep = pseudo != ABSTAIN
        rows = graph.n_labeled + np.flatnonzero(keep)
        y0[rows, pseudo[keep]] = 1.0
    return class_normalize(y0)


def _resolve_solver(cfg: PropagationConfig, n: int) -> str:
    if cfg.solver != "auto":
        return cfg.solver
    return "closed_form" if n <= CLOSED_FORM_MAX_NODES else "iterative"


def propagate(graph: HouseholdGraph, y0: np.ndarray,
              cfg: PropagationConfig) -> PropagationOutcome:
    """Run Y(t+1) = alpha*S@Y(t) + (1-alpha)*Y(0) to (or at) its fixed point."""
    s = graph.fused.propagation_matrix()
    if _resolve_solver(cfg, graph.n) == "closed_form":
        a = np.eye(graph.n) - cfg.alpha * s
        try:
            y = np.linalg.solve(a, (1.0 - cfg.alpha) * y0)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"(I - alpha*S) is singular: {exc}") from exc
        if not np.isfinite(y).all():
            raise NumericalError("closed-form solution has non-finite values")
        return PropagationOutcome(y=y, converged=True, iterations=0)

    base = (1.0 - cfg.alpha) * y0
    y = y0.copy()
    for t in range(1, cfg.max_iter + 1):
        y_next = cfg.alpha * (s @ y) + base
        if not np.isfinite(y_next).all():
            raise NumericalError(f"non-finite values at iteration {t}")
        delta = np.linalg.norm(y_next - y)
        prev_norm = np.linalg.norm(y)
        y = y_next
        if delta < cfg.tol * max(1.0, prev_norm):
            return PropagationOutcome(y=y, converged=True, iterations=t)
    return PropagationOutcome(y=y, converged=False, iterations=cfg.max_iter)


def predict(y: np.ndarray, rows: slice | np.ndarray | None = None) -> PredictionResult:
    """Per-row argmax with lowest-index tie-break; all-zero rows abstain."""
    block = y if rows is None else y[rows]
    labels = np.argmax(block, axis=1)
    row_max = block.max(axis=1)
    tie_mask = (block == row_max[:, None]).sum(axis=1) > 1
    abstain_mask = np.all(block == 0.0, axis=1)
    labels = np.where(abstain_mask, ABSTAIN, labels)
    ties = tuple(np.flatnonzero(tie_mask & ~abstain_mask).tolist())
    abstains = tuple(np.flatnonzero(abstain_mask).tolist())
    return PredictionResult(labels=labels, ties=ties, abstains=abstains)


def run_lp(graph: HouseholdGraph, cfg: PropagationConfig) -> PredictionResult:
    """Single propagation over the full graph; read off the held-out rows."""
    outcome = propagate(graph, init_label_matrix(graph), cfg)
    pred = predict(outcome.y, graph.heldout_slice)
    return replace(pred, converged=outcome.converged, iterations=outcome.iterations)


def _step1_pseudo_labels(graph: HouseholdGraph,
                         cfg: PropagationConfig) -> tuple[np.ndarray, PropagationOutcome]:
    """First-pass hard labels for the unlabeled nodes."""
    step1 = graph if cfg.step1_includes_heldout else graph.without_heldout()
    outcome = propagate(step1, init_label_matrix(step1), cfg)
    pred = predict(outcome.y, step1.unlabeled_slice)
    return pred.labels, outcome


def run_2lp(graph: HouseholdGraph, cfg: PropagationConfig) -> PredictionResult:
    """Two-step propagation: pseudo-label unlabeled nodes, then re-propagate.

    Step 1 runs on the labeled+unlabeled subgraph; its argmax labels join
    the true labels in a re-normalized Y(0) for a second pass over the full
    graph. Abstaining pseudo-labels leave their node unlabeled again.
    """
    if graph.n_unlabeled == 0:
        return run_lp(graph, cfg)
    pseudo, step1_out = _step1_pseudo_labels(graph, cfg)
    y0 = init_label_matrix(graph, pseudo=pseudo)
    outcome = propagate(graph, y0, cfg)
    pred = predict(outcome.y, graph.heldout_slice)
    return replace(pred,
                   converged=step1_out.converged and outcome.converged,
                   iterations=step1_out.iterations + outcome.iterations)


def run_2lpea(graph: HouseholdGraph, embeddings: np.ndarray,
              cfg: PropagationConfig) -> PredictionResult:
    """Propagation for pseudo-labels, class-mean cosine scoring for held-out.

    ``embeddings`` holds the primary view's raw vectors for all n nodes in
    graph order. Step 2 averages labeled + pseudo-labeled embeddings per
    class and assigns each held-out utterance to the nearest class mean by
    cosine similarity; classes that end up empty are skipped.
    """
    embeddings = np.asarray(embeddings, dtype=float)
    if embeddings.ndim != 2 or embeddings.shape[0] != graph.n:
        raise StructuralError(
            f"need one primary-view embedding per node "
            f"({graph.n}), got shape {embeddings.shape}")
    if graph.n_unlabeled > 0:
        pseudo, step1_out = _step1_pseudo_labels(graph, cfg)
        converged, iterations = step1_out.converged, step1_out.iterations
    else:
        pseudo = np.zeros(0, dtype=int)
        converged, iterations = True, 0

    core_labels = np.concatenate([graph.labels, pseudo])
    core_emb = embeddings[: graph.n_labeled + graph.n_unlabeled]
    heldout_emb = embeddings[graph.heldout_slice]

    means = np.zeros((graph.class_count, embeddings.shape[1]))
    empty = []
    for c in range(graph.class_count):
        members = core_emb[core_labels == c]
        if members.shape[0] == 0:
            empty.append(c)
        else:
            means[c] = members.mean(axis=0)
    if empty:
        warnings.warn(f"classes {empty} empty after step 1; skipped in scoring",
                      DegeneracyWarning, stacklevel=2)

    scores = cosine_matrix(heldout_emb, means)
    if empty:
        scores[:, empty] = -np.inf
    pred = predict_scores(scores)
    return replace(pred, converged=converged, iterations=iterations)


def predict_scores(scores: np.ndarray) -> PredictionResult:
    """Argmax over a plain score matrix (no abstain; ties flagged)."""
    labels = np.argmax(scores, axis=1)
    row_max = scores.max(axis=1)
    ties = tuple(np.flatnonzero(
        (scores == row_max[:, None]).sum(axis=1) > 1).tolist())
    return PredictionResult(labels=labels, ties=ties)
