"""Maximal ratio function on a tree and the stopping-time decomposition.

For a measure Lam on the tree and a node function phi, each node K
carries the ratio

    r_K = (integral of phi dLam over the subtree of K) / Lam(subtreeK),

set to 0 where the subtree mass vanishes.  The maximal function m_I is
the largest ratio over ancestors of I (including I itself).  The
stopping-time decomposition cuts the tree at the minimal descendants
where the ratio at least doubles; the resulting regions of controlled
ratio prove the maximal inequality

    sum_I Lam(I)^2 m_I^2  <=  32 * integral of phi^2 dLam

whenever the Carleson box constant of Lam is at most 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .carleson import AlphaSequence, alpha_test_constant, carleson_ratios
from .errors import PreconditionError, ValidationError
from .tree import NodeVector, TreeMeasure, TreeShape, as_node_array, subtree_sums

__all__ = [
    "MaximalReport",
    "StoppingDecomposition",
    "StoppingInvariantReport",
    "average_ratios",
    "maximal_ratios",
    "maximal_theorem_check",
    "stopping_decomposition",
    "verify_stopping_invariants",
]


def _subtree_arrays(lam: TreeMeasure, phi) -> tuple[np.ndarray, np.ndarray]:
    phi_a = as_node_array(lam.shape, phi)
    num = subtree_sums(lam.shape.depth, phi_a * lam.masses)
    den = subtree_sums(lam.shape.depth, lam.masses)
    return num, den


def _ratio_array(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def average_ratios(lam: TreeMeasure, phi) -> NodeVector:
    """Per-node ratio of the phi-integral to the mass of the subtree."""
    num, den = _subtree_arrays(lam, phi)
    return NodeVector(lam.shape, _ratio_array(num, den))


def maximal_ratios(lam: TreeMeasure, phi) -> NodeVector:
    """Running maximum of the subtree ratios along root-to-node paths."""
    num, den = _subtree_arrays(lam, phi)
    m = _ratio_array(num, den)
    for d in range(1, lam.shape.depth + 1):
        lo = (1 << d) - 1
        hi = (1 << (d + 1)) - 1
        parents = m[(1 << (d - 1)) - 1 : lo]
        np.maximum(m[lo:hi], np.repeat(parents, 2), out=m[lo:hi])
    return NodeVector(lam.shape, m)


def _stops(child_ratio: float, parent_ratio: float) -> bool:
    # With a zero parent ratio the >= test would fire at every child;
    # require strict growth instead so the recursion cannot degenerate.
    if parent_ratio == 0.0:
        return child_ratio > 0.0
    return child_ratio >= 2.0 * parent_ratio


@dataclass(frozen=True, eq=False)
class StoppingDecomposition:
    """Stopping vertices, per-node owners, and the region masses."""

    shape: TreeShape
    generations: list[list[int]]
    owner: np.ndarray
    beta: dict[int, float]
    ratios: dict[int, float]

    def stopping_vertices(self) -> list[int]:
        return sorted(self.beta)

    def region_sizes(self) -> dict[int, int]:
        # keyed by every owner that actually occurs, so a corrupted
        # decomposition still tallies instead of blowing up
        sizes = {h: 0 for h in self.beta}
        for h in self.owner:
            sizes[int(h)] = sizes.get(int(h), 0) + 1
        return sizes

    def to_dict(self) -> dict:
        return {
            "depth": self.shape.depth,
            "generations": [list(g) for g in self.generations],
            "owner": [int(h) for h in self.owner],
            "stopping": [
                {"node": h, "beta": self.beta[h], "ratio": self.ratios[h]}
                for h in self.stopping_vertices()
            ],
        }


def stopping_decomposition(
    lam: TreeMeasure, phi, *, allow_signed: bool = False
) -> StoppingDecomposition:
    """Cut the tree at minimal descendants where the ratio doubles.

    The root always opens generation zero.  A descendant J of the
    current vertex H becomes a stopping vertex when its subtree has
    positive mass and its ratio reaches twice the ratio at H (strictly
    positive when the ratio at H is zero).  Zero-mass subtrees never
    stop and stay with the vertex that reached them.

    Signed phi makes the ratios oscillate and voids the guarantees of
    ``verify_stopping_invariants``; pass ``allow_signed=True`` to
    experiment anyway.
    """
    shape = lam.shape
    phi_a = as_node_array(shape, phi)
    if not allow_signed and np.any(phi_a < 0):
        raise ValidationError(
            "phi must be nonnegative (pass allow_signed=True to override)"
        )
    num = subtree_sums(shape.depth, phi_a * lam.masses)
    den = subtree_sums(shape.depth, lam.masses)
    r = _ratio_array(num, den)

    owner = np.zeros(shape.node_count, dtype=np.int64)
    beta: dict[int, float] = {}
    ratios: dict[int, float] = {}
    generations: list[list[int]] = [[1]]
    frontier = [1]
    while frontier:
        next_generation: list[int] = []
        for h in frontier:
            r_h = float(r[h - 1])
            ratios[h] = r_h
            absorbed = float(den[h - 1])
            stack = [h]
            while stack:
                node = stack.pop()
                owner[node - 1] = h
                if shape.is_leaf(node):
                    continue
                for child in shape.children(node):
                    if den[child - 1] <= 0.0:
                        # whole subtree is massless; keep it in O_h
                        for k in _subtree_nodes(shape, child):
                            owner[k - 1] = h
                        continue
                    if _stops(float(r[child - 1]), r_h):
                        next_generation.append(child)
                        absorbed -= float(den[child - 1])
                    else:
                        stack.append(child)
            beta[h] = absorbed
        if next_generation:
            next_generation.sort()
            generations.append(next_generation)
        frontier = next_generation
    return StoppingDecomposition(shape, generations, owner, beta, ratios)


def _subtree_nodes(shape: TreeShape, node: int) -> list[int]:
    nodes = []
    level = [node]
    while level:
        nodes.extend(level)
        level = [
            c for n in level if not shape.is_leaf(n) for c in shape.children(n)
        ]
    return nodes


@dataclass(frozen=True)
class StoppingInvariantReport:
    partition_ok: bool
    owner_consistent: bool
    region_mass_ok: bool
    region_mass_margin: float
    beta_sum_ok: bool
    beta_sum_margin: float
    chain_ok: bool
    chain_margin: float
    ownership_ratio_ok: bool
    ownership_ratio_margin: float
    maximal_ratio_ok: bool
    maximal_ratio_margin: float
    alpha_test_ok: bool
    alpha_test_constant: float
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def derived_alpha(dec: StoppingDecomposition, lam: TreeMeasure) -> AlphaSequence:
    """Weight sequence beta_H / (subtree average of Lam at H)^2.

    Supported on the stopping vertices; its Carleson test constant is at
    most 1 because the beta masses of stopping descendants never exceed
    the subtree mass.
    """
    shape = lam.shape
    den = subtree_sums(shape.depth, lam.masses)
    lengths = shape.lengths()
    values = np.zeros(shape.node_count)
    for h, b in dec.beta.items():
        d = den[h - 1]
        if d > 0:
            values[h - 1] = b * (lengths[h - 1] / d) ** 2
    return AlphaSequence(shape, values)


def verify_stopping_invariants(
    dec: StoppingDecomposition, lam: TreeMeasure, phi, tol: float = 1e-12
) -> StoppingInvariantReport:
    """Check every structural claim the decomposition is built on.

    Pure check: nothing raises, each invariant reports pass/fail with
    its worst margin and failures are collected by name.
    """
    shape = lam.shape
    num, den = _subtree_arrays(lam, phi)
    r = _ratio_array(num, den)
    m = maximal_ratios(lam, phi).values
    failures: list[str] = []

    stopping = set(dec.beta)
    sizes = dec.region_sizes() if stopping else {}
    partition_ok = (
        bool(stopping)
        and dec.generations[0] == [1]
        and set(int(h) for h in dec.owner) <= stopping
        and sum(sizes.values()) == shape.node_count
        and all(s >= 1 for s in sizes.values())
        and set(h for g in dec.generations for h in g) == stopping
    )
    if not partition_ok:
        failures.append("partition")

    owner_consistent = True
    for node in range(1, shape.node_count + 1):
        h = int(dec.owner[node - 1])
        if node in stopping:
            if h != node:
                owner_consistent = False
                break
        elif node == 1 or h != int(dec.owner[shape.parent(node) - 1]):
            owner_consistent = False
            break
    if not owner_consistent:
        failures.append("owner-consistency")

    # mass captured by the stopping children must stay below half
    stop_children: dict[int, list[int]] = {h: [] for h in stopping}
    for gen in dec.generations[1:]:
        for j in gen:
            stop_children[int(dec.owner[shape.parent(j) - 1])].append(j)
    region_margin = -np.inf
    beta_margin = -np.inf
    for h in stopping:
        escaped = sum(den[j - 1] for j in stop_children[h])
        region_margin = max(region_margin, escaped - 0.5 * den[h - 1])
        beta_margin = max(
            beta_margin, abs(dec.beta[h] - (den[h - 1] - escaped))
        )
    region_mass_ok = region_margin <= tol
    if not region_mass_ok:
        failures.append("region-mass")

    beta_values = np.zeros(shape.node_count)
    for h, b in dec.beta.items():
        beta_values[h - 1] = b
    beta_sums = subtree_sums(shape.depth, beta_values)
    beta_sum_margin = float(max(beta_margin, (beta_sums - den).max()))
    beta_sum_ok = beta_sum_margin <= tol
    if not beta_sum_ok:
        failures.append("beta-sum")

    chain_margin = -np.inf
    chain_ok = True
    for gen in dec.generations[1:]:
        for j in gen:
            pred = int(dec.owner[shape.parent(j) - 1])
            r_p = dec.ratios.get(pred, r[pred - 1])
            r_j = float(r[j - 1])
            if r_p == 0.0:
                if not r_j > 0.0:
                    chain_ok = False
            else:
                chain_margin = max(chain_margin, 2.0 * r_p - r_j)
    chain_ok = chain_ok and chain_margin <= tol
    if not chain_ok:
        failures.append("chain-growth")

    owner_ratio = r[dec.owner - 1] if stopping else np.zeros_like(r)
    ratio_margin = float((r - 2.0 * owner_ratio).max())
    ownership_ratio_ok = ratio_margin <= tol
    if not ownership_ratio_ok:
        failures.append("ownership-ratio")
    maximal_margin = float((m - 2.0 * owner_ratio).max())
    maximal_ratio_ok = maximal_margin <= tol
    if not maximal_ratio_ok:
        failures.append("maximal-ratio")

    alpha = derived_alpha(dec, lam)
    alpha_constant = float(alpha_test_constant(lam, alpha).constant)
    alpha_test_ok = alpha_constant <= 1.0 + 1e-9
    if not alpha_test_ok:
        failures.append("alpha-test")

    return StoppingInvariantReport(
        partition_ok=partition_ok,
        owner_consistent=owner_consistent,
        region_mass_ok=region_mass_ok,
        region_mass_margin=float(region_margin),
        beta_sum_ok=beta_sum_ok,
        beta_sum_margin=beta_sum_margin,
        chain_ok=chain_ok,
        chain_margin=float(chain_margin),
        ownership_ratio_ok=ownership_ratio_ok,
        ownership_ratio_margin=ratio_margin,
        maximal_ratio_ok=maximal_ratio_ok,
        maximal_ratio_margin=maximal_margin,
        alpha_test_ok=alpha_test_ok,
        alpha_test_constant=alpha_constant,
        failures=failures,
    )


@dataclass(frozen=True, eq=False)
class MaximalReport:
    lhs: float
    rhs: float
    ratio: float
    passed: bool
    stopping_bound: float
    stopping_bound_ok: bool
    one_box_constant: float
    decomposition: StoppingDecomposition


def maximal_theorem_check(
    lam: TreeMeasure,
    phi,
    tol: float = 1e-9,
    *,
    allow_signed: bool = False,
) -> MaximalReport:
    """End-to-end constant-32 maximal inequality on one instance.

    lhs = sum of Lam(I)^2 m_I^2 over nodes, rhs = integral of phi^2
    dLam; passes when lhs <= 32 rhs + tol.  Also recomputes the
    intermediate stopping bound 8 * sum of ratio_H^2 beta_H, which must
    dominate lhs on the way to the constant 32.  Requires the box
    constant of Lam to be at most 1; rescale first (both sides are
    homogeneous, quadratic against linear, so this costs nothing).
    """
    box = carleson_ratios(lam).test_constant
    if box > 1.0 + 1e-9:
        raise PreconditionError(
            f"box constant {box:.12g} exceeds 1; scale the measure by "
            f"1/{box:.12g} first"
        )
    shape = lam.shape
    phi_a = as_node_array(shape, phi)
    den = subtree_sums(shape.depth, lam.masses)
    m = maximal_ratios(lam, phi_a).values
    lhs = float((den**2 * m**2).sum())
    rhs = float((phi_a**2 * lam.masses).sum())
    dec = stopping_decomposition(lam, phi_a, allow_signed=allow_signed)
    bound = 8.0 * sum(dec.ratios[h] ** 2 * dec.beta[h] for h in dec.beta)
    ratio = lhs / rhs if rhs > 0 else 0.0
    return MaximalReport(
        lhs=lhs,
        rhs=rhs,
        ratio=ratio,
        passed=lhs <= 32.0 * rhs + tol,
        stopping_bound=float(bound),
        stopping_bound_ok=lhs <= bound + tol,
        one_box_constant=float(box),
        decomposition=dec,
    )
