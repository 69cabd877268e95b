"""Stein functional gradients and second-variation Hessians over a particle set.

The graphical variants use one local kernel per factor, so each factor's
gradient block and each Hessian block depends only on blanket coordinates;
the global variants use a single kernel over full state vectors.  Every
expectation over the particle distribution is the empirical mean over all
particles, including the particle being updated, summed in ascending particle
order so results do not depend on how work is scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import KernelSpec, LocalKernelFamily, rbf_matrix
from .model.layout import FactorLayout, TargetModel


@dataclass
class ParticleSet:
    """Evolving sample: n points in R^total_dim."""

    positions: np.ndarray
    iteration: int = 0
    seed: int | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim != 2 or self.positions.shape[0] < 1:
            raise ValueError("positions must be a nonempty (n, total_dim) matrix")
        if not np.isfinite(self.positions).all():
            raise ValueError("particle positions must be finite")

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    def advanced(self, positions: np.ndarray, steps: int = 1) -> "ParticleSet":
        """New set with updated positions and an advanced iteration counter."""
        return ParticleSet(positions, iteration=self.iteration + steps, seed=self.seed)


@dataclass
class SteinGradientField:
    """Per-particle functional-gradient vectors, stacked as an (n, dim) matrix."""

    layout: FactorLayout
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] != self.layout.total_dim:
            raise ValueError("field values must be (n, total_dim)")
        if not np.isfinite(self.values).all():
            raise ValueError("gradient field must be finite")


class ParticleHessian:
    """Symmetric block-sparse Hessian keyed by factor pairs (a, b), a <= b.

    Blocks are assembled for the upper triangle and mirrored on access, so the
    matrix equals its transpose exactly.  Missing pairs are treated as zero.
    """

    def __init__(self, layout: FactorLayout, blocks: dict[tuple[int, int], np.ndarray]):
        self.layout = layout
        self.blocks = {}
        for (a, b), block in sorted(blocks.items()):
            if b < a:
                raise ValueError("blocks must be keyed with a <= b")
            block = np.asarray(block, dtype=float)
            expected = (layout.factors[a].size, layout.factors[b].size)
            if block.shape != expected:
                raise ValueError(f"block {(a, b)} must have shape {expected}")
            if a == b:
                upper = np.triu(block)
                block = upper + np.triu(block, 1).T
            self.blocks[(a, b)] = block

    def block(self, a: int, b: int) -> np.ndarray:
        """Dense view of block (a, b), mirroring or zero-filling as needed."""
        if (a, b) in self.blocks:
            return self.blocks[(a, b)]
        if (b, a) in self.blocks:
            return self.blocks[(b, a)].T
        return np.zeros(
            (self.layout.factors[a].size, self.layout.factors[b].size)
        )

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Block-sparse matrix-vector product H @ v."""
        v = np.asarray(v, dtype=float)
        if v.shape != (self.layout.total_dim,):
            raise ValueError("vector length must equal total_dim")
        out = np.zeros_like(v)
        factors = self.layout.factors
        for (a, b), block in self.blocks.items():
            out[factors[a]] += block @ v[factors[b]]
            if a != b:
                out[factors[b]] += block.T @ v[factors[a]]
        return out

    def to_dense(self) -> np.ndarray:
        d = self.layout.total_dim
        out = np.zeros((d, d))
        factors = self.layout.factors
        for (a, b), block in self.blocks.items():
            out[np.ix_(factors[a], factors[b])] = block
            if a != b:
                out[np.ix_(factors[b], factors[a])] = block.T
        return out


def hessian_apply(hessian: ParticleHessian, v: np.ndarray) -> np.ndarray:
    """Matrix-free product for the trust-region subproblem solver."""
    return hessian.apply(v)


def _check_layouts(target: TargetModel, layout: FactorLayout) -> None:
    t = target.layout
    if t.total_dim != layout.total_dim or t.n_factors != layout.n_factors:
        raise ValueError("target and kernel layouts disagree")
    for fa, fb in zip(t.factors, layout.factors):
        if not np.array_equal(fa, fb):
            raise ValueError("target and kernel layouts disagree")


@dataclass
class AssemblyContext:
    """Kernel matrices and pair structure shared by gradient and Hessian
    assembly at one particle configuration."""

    X: np.ndarray
    layout: FactorLayout
    lengthscale: float
    kmats: list[np.ndarray]
    supports: list[np.ndarray]
    pairs: list[tuple[int, int]]
    is_global: bool = False


def local_context(X: np.ndarray, family: LocalKernelFamily) -> AssemblyContext:
    layout = family.layout
    ls = family.kernel.lengthscale
    kmats = [
        rbf_matrix(X, X, ls, dims=layout.blankets[a])
        for a in range(layout.n_factors)
    ]
    return AssemblyContext(
        X, layout, ls, kmats, list(layout.blankets), layout.overlapping_pairs()
    )


def global_context(
    X: np.ndarray, layout: FactorLayout, kernel: KernelSpec
) -> AssemblyContext:
    K = rbf_matrix(X, X, kernel.lengthscale)
    kmats = [K] * layout.n_factors
    supports = [np.arange(layout.total_dim)] * layout.n_factors
    return AssemblyContext(
        X, layout, kernel.lengthscale, kmats, supports, layout.all_pairs(),
        is_global=True,
    )


def field_from_context(ctx: AssemblyContext, target: TargetModel) -> SteinGradientField:
    X, layout = ctx.X, ctx.layout
    scores = target.gradient_batch(X)
    n = X.shape[0]
    out = np.empty_like(X)
    inv_ls2 = 1.0 / ctx.lengthscale**2
    for a, dims in enumerate(layout.factors):
        Ka = ctx.kmats[a]                   # Ka[j, i] = k_a(x_j, x_i)
        colsum = Ka.sum(axis=0)
        term1 = Ka.T @ scores[:, dims]
        term2 = -inv_ls2 * (Ka.T @ X[:, dims] - X[:, dims] * colsum[:, None])
        out[:, dims] = -(term1 + term2) / n
    return SteinGradientField(layout, out)


def hessian_stack_from_context(
    ctx: AssemblyContext, target: TargetModel
) -> np.ndarray:
    """Every particle's Hessian as one dense (n, dim, dim) stack.

    Same entries as the block-sparse assembly; the drivers use this form so
    the per-particle subproblem solves stay cheap at desk-scale dimensions.
    """
    X, layout = ctx.X, ctx.layout
    n, dim = X.shape
    model_hessians = target.hessian_batch(X)
    inv_ls2 = 1.0 / ctx.lengthscale**2
    if ctx.is_global:
        K = ctx.kmats[0]
        stack = -np.tensordot(K * K, model_hessians, axes=(0, 0)) / n
        grads = -inv_ls2 * (X[:, None, :] - X[None, :, :]) * K[:, :, None]
        stack += np.matmul(grads.transpose(1, 2, 0), grads.transpose(1, 0, 2)) / n
        return _mirror_upper(stack)

    factors = layout.factors
    stack = np.zeros((n, dim, dim))
    for a, b in ctx.pairs:
        Ca, Cb = factors[a], factors[b]
        model_block = model_hessians[np.ix_(np.arange(n), Ca, Cb)]
        weight = ctx.kmats[a] * ctx.kmats[b]
        term = -np.tensordot(weight, model_block, axes=(0, 0)) / n
        # cross term: x-gradient of k_b over C_a against x-gradient of k_a
        # over C_b; coordinates outside the other kernel's support contribute
        # nothing.
        mask_a = np.isin(Ca, ctx.supports[b]).astype(float)
        mask_b = np.isin(Cb, ctx.supports[a]).astype(float)
        da = (X[:, None, Ca] - X[None, :, Ca]) * mask_a
        db = (X[:, None, Cb] - X[None, :, Cb]) * mask_b
        rows = -inv_ls2 * da * ctx.kmats[b][:, :, None]
        cols = -inv_ls2 * db * ctx.kmats[a][:, :, None]
        term += np.matmul(rows.transpose(1, 2, 0), cols.transpose(1, 0, 2)) / n
        stack[:, Ca[:, None], Cb[None, :]] = term
        if a != b:
            stack[:, Cb[:, None], Ca[None, :]] = term.transpose(0, 2, 1)
    return _mirror_upper(stack)


def _mirror_upper(stack: np.ndarray) -> np.ndarray:
    """Exact symmetry: keep each matrix's upper triangle, mirror it down."""
    return np.triu(stack) + np.triu(stack, 1).transpose(0, 2, 1)


def hessians_from_context(
    ctx: AssemblyContext, target: TargetModel
) -> list[ParticleHessian]:
    stack = hessian_stack_from_context(ctx, target)
    factors = ctx.layout.factors
    return [
        ParticleHessian(
            ctx.layout,
            {
                (a, b): stack[i][np.ix_(factors[a], factors[b])]
                for a, b in ctx.pairs
            },
        )
        for i in range(stack.shape[0])
    ]


def graphical_stein_gradient(
    particles: ParticleSet, target: TargetModel, local_kernels: LocalKernelFamily
) -> SteinGradientField:
    """Functional gradient under the product of local-kernel spaces."""
    _check_layouts(target, local_kernels.layout)
    return field_from_context(local_context(particles.positions, local_kernels), target)


def global_stein_gradient(
    particles: ParticleSet, target: TargetModel, kernel: KernelSpec
) -> SteinGradientField:
    """Functional gradient under a single kernel over full state vectors."""
    ctx = global_context(particles.positions, target.layout, kernel)
    return field_from_context(ctx, target)


def graphical_hessians(
    particles: ParticleSet, target: TargetModel, local_kernels: LocalKernelFamily
) -> list[ParticleHessian]:
    """Second-variation Hessian for every particle, local-kernel variant."""
    _check_layouts(target, local_kernels.layout)
    ctx = local_context(particles.positions, local_kernels)
    return hessians_from_context(ctx, target)


def global_hessians(
    particles: ParticleSet, target: TargetModel, kernel: KernelSpec
) -> list[ParticleHessian]:
    """Dense analogue of the graphical Hessian under the global kernel."""
    ctx = global_context(particles.positions, target.layout, kernel)
    return hessians_from_context(ctx, target)


def graphical_hessian(
    particles: ParticleSet,
    target: TargetModel,
    local_kernels: LocalKernelFamily,
    i: int,
) -> ParticleHessian:
    """Second-variation Hessian of particle i, local-kernel variant."""
    if not 0 <= i < particles.n:
        raise IndexError("particle index out of range")
    return graphical_hessians(particles, target, local_kernels)[i]


def global_hessian(
    particles: ParticleSet, target: TargetModel, kernel: KernelSpec, i: int
) -> ParticleHessian:
    """Second-variation Hessian of particle i under the global kernel."""
    if not 0 <= i < particles.n:
        raise IndexError("particle index out of range")
    return global_hessians(particles, target, kernel)[i]
