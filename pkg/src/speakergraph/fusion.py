"""Multi-view graph fusion.

Two fusion routes: edge-level max-pooling of per-view affinity matrices,
and graph-level fusion through the matrix power mean of per-view symmetric
normalized Laplacians,

    L = ((1/V) * sum_v (L_v + shift*I)^p)^(1/p),

where p interpolates between min-like (p << 0), harmonic (p = -1),
arithmetic (p = 1) and max-like (p >> 0) pooling of the view spectra.
"""

import math
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import ConfigurationError, StructuralError
from .graph import (
    NEG_POWER_EIG_FLOOR,
    AffinityMatrix,
    LaplacianMatrix,
    normalized_laplacian,
    propagation_operator,
    sym_matrix_power,
)


# ---------------------------------------------------------------------------
# Rules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SingleView:
    view_name: str


@dataclass(frozen=True)
class EdgePoolFusion:
    """Elementwise maximum of per-view affinity matrices."""

    view_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "view_names", tuple(self.view_names))
        if not self.view_names:
            raise ConfigurationError("edge-pool fusion needs at least one view")


@dataclass(frozen=True)
class PowerMeanFusion:
    """Matrix power mean of per-view normalized Laplacians.

    ``shift`` regularizes the always-singular Laplacians before negative
    powers; None selects the default log(1 + |p|) for p < 0 and 0 otherwise.
    """

    view_names: tuple[str, ...]
    p: float
    shift: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "view_names", tuple(self.view_names))
        if not self.view_names:
            raise ConfigurationError("power-mean fusion needs at least one view")
        if self.p == 0:
            raise ConfigurationError("power-mean exponent p must be nonzero")
        if self.shift is not None:
            if self.shift < 0:
                raise ConfigurationError(f"shift must be >= 0, got {self.shift}")
            if self.p < 0 and self.shift == 0:
                raise ConfigurationError("shift must be > 0 when p < 0")

    @property
    def effective_shift(self) -> float:
        if self.shift is not None:
            return self.shift
        return math.log1p(abs(self.p)) if self.p < 0 else 0.0


FusionRule = Union[SingleView, EdgePoolFusion, PowerMeanFusion]


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def edgepool_fuse(matrices: Sequence[AffinityMatrix]) -> AffinityMatrix:
    """Elementwise maximum across views; keeps symmetry and the zero diagonal."""
    if not matrices:
        raise ConfigurationError("edgepool_fuse needs at least one matrix")
    n = matrices[0].n
    for m in matrices:
        if m.n != n:
            raise StructuralError(f"affinity size mismatch: {m.n} != {n}")
    return AffinityMatrix(np.maximum.reduce([m.w for m in matrices]))


def _power_floor(p: float) -> float:
    return 0.0 if p > 0 else NEG_POWER_EIG_FLOOR


def pml_fuse(laplacians: Sequence[LaplacianMatrix], p: float,
             shift: float = 0.0) -> LaplacianMatrix:
    """Matrix power mean of the given Laplacians with exponent p.

    Eigenvalues are floored at NEG_POWER_EIG_FLOOR before negative powers.
    A single input is handled in one eigendecomposition; re-decomposing its
    own matrix power would destroy the small eigenvalues whenever the floor
    inflates the null space by many orders of magnitude.
    """
    if not laplacians:
        raise ConfigurationError("pml_fuse needs at least one Laplacian")
    if p == 0:
        raise ConfigurationError("power-mean exponent p must be nonzero")
    if shift < 0:
        raise ConfigurationError(f"shift must be >= 0, got {shift}")
    n = laplacians[0].n
    for lap in laplacians:
        if lap.n != n:
            raise StructuralError(f"laplacian size mismatch: {lap.n} != {n}")

    eye = np.eye(n)
    if len(laplacians) == 1:
        m = laplacians[0].l + shift * eye
        vals, vecs = np.linalg.eigh((m + m.T) / 2.0)
        powered = np.maximum(vals, _power_floor(p)) ** p
        back = np.maximum(powered, _power_floor(1.0 / p)) ** (1.0 / p)
        fused = (vecs * back) @ vecs.T
    else:
        acc = np.zeros((n, n))
        for lap in laplacians:
            acc += sym_matrix_power(lap.l + shift * eye, p, floor=_power_floor(p))
        mean = acc / len(laplacians)
        fused = sym_matrix_power(mean, 1.0 / p, floor=_power_floor(1.0 / p))
    fused = (fused + fused.T) / 2.0
    return LaplacianMatrix(l=fused, provenance="fused", complement=eye - fused)


# ---------------------------------------------------------------------------
# Fused graphs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FusedGraph:
    """Fusion output plus the per-view affinities it was built from.

    ``kind`` is "affinity" (single view, edge pool) or "laplacian" (power
    mean). The per-view affinities are kept so that node subsets can be
    re-fused: a submatrix of a fused Laplacian is not the Laplacian of the
    subgraph, so subgraphs drop back to the affinity level and re-normalize.
    """

    kind: str
    matrix: np.ndarray
    view_affinities: tuple[AffinityMatrix, ...] = ()
    pml_p: float | None = None
    pml_shift: float | None = None

    def __post_init__(self):
        if self.kind not in ("affinity", "laplacian"):
            raise ConfigurationError(f"unknown fused-graph kind {self.kind!r}")
        object.__setattr__(self, "view_affinities", tuple(self.view_affinities))

    @property
    def node_count(self) -> int:
        return self.matrix.shape[0]

    def propagation_matrix(self) -> np.ndarray:
        """S for label propagation: D^{-1/2} W D^{-1/2}, or I - L when fused."""
        if self.kind == "affinity":
            return propagation_operator(AffinityMatrix(self.matrix))
        return np.eye(self.node_count) - self.matrix

    def subgraph(self, indices: np.ndarray) -> "FusedGraph":
        idx = np.asarray(indices, dtype=int)
        if not self.view_affinities:
            if self.kind == "affinity":
                return FusedGraph(kind="affinity",
                                  matrix=AffinityMatrix(self.matrix).submatrix(idx).w)
            raise ConfigurationError(
                "subgraph of a fused Laplacian requires per-view affinities")
        subs = [aff.submatrix(idx) for aff in self.view_affinities]
        if self.kind == "affinity":
            return FusedGraph(kind="affinity", matrix=edgepool_fuse(subs).w,
                              view_affinities=subs)
        fused = pml_fuse([normalized_laplacian(w) for w in subs],
                         self.pml_p, self.pml_shift)
        return FusedGraph(kind="laplacian", matrix=fused.l, view_affinities=subs,
                          pml_p=self.pml_p, pml_shift=self.pml_shift)


def fuse(affinities: Mapping[str, AffinityMatrix], rule: FusionRule) -> FusedGraph:
    """Apply a fusion rule to named per-view affinity matrices."""
    def pick(name: str) -> AffinityMatrix:
        if name not in affinities:
            raise ConfigurationError(f"fusion rule references unknown view {name!r}")
        return affinities[name]

    if isinstance(rule, SingleView):
        w = pick(rule.view_name)
        return FusedGraph(kind="affinity", matrix=w.w, view_affinities=(w,))
    if isinstance(rule, EdgePoolFusion):
        mats = [pick(name) for name in rule.view_names]
        return FusedGraph(kind="affinity", matrix=edgepool_fuse(mats).w,
                          view_affinities=mats)
    if isinstance(rule, PowerMeanFusion):
        mats = [pick(name) for name in rule.view_names]
        shift = rule.effective_shift
        fused = pml_fuse([normalized_laplacian(w) for w in mats], rule.p, shift)
        return FusedGraph(kind="laplacian", matrix=fused.l, view_affinities=mats,
                          pml_p=rule.p, pml_shift=shift)
    raise ConfigurationError(f"unknown fusion rule {type(rule).__name__}")
