"""Reference SVI updates used as ablations: plain SVGD, message-passing SVGD
with static / decayed / AdaGrad step rules, and the global-kernel Newton step
with a constant trust region.

Every update is synchronous: all particle moves are computed from the
pre-step particle matrix, then applied at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import KernelSpec, LocalKernelFamily
from .model.layout import TargetModel
from .stein import (
    ParticleSet,
    field_from_context,
    global_context,
    graphical_stein_gradient,
    hessian_stack_from_context,
)
from .trustregion import solve_subproblems

STATIC = "static"
DECAYED = "decayed"
ADAGRAD = "adagrad"


@dataclass
class StepSchedule:
    """First-order step rule: constant, geometrically decayed, or AdaGrad."""

    kind: str
    initial_step: float
    decay: float = 1.0
    epsilon: float = 1e-8
    accumulator: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in (STATIC, DECAYED, ADAGRAD):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.initial_step <= 0:
            raise ValueError("initial step must be positive")
        if not 0.0 < self.decay <= 1.0:
            raise ValueError("decay must lie in (0, 1]")

    def scaled_step(self, direction: np.ndarray, t: int) -> np.ndarray:
        """Displacement for one update; AdaGrad accumulates squared directions."""
        if self.kind == STATIC:
            return self.initial_step * direction
        if self.kind == DECAYED:
            return self.initial_step * self.decay**t * direction
        if self.accumulator is None:
            self.accumulator = np.zeros_like(direction)
        self.accumulator = self.accumulator + direction**2
        return self.initial_step * direction / (np.sqrt(self.accumulator) + self.epsilon)


def svgd_step(
    particles: ParticleSet,
    target: TargetModel,
    kernel: KernelSpec,
    step: float,
    field=None,
) -> ParticleSet:
    """One SVGD update: kernel-weighted score plus kernel repulsion.

    A precomputed gradient field for the current positions may be passed in
    to avoid recomputing it (the runner already needs it for traces).
    """
    if step <= 0:
        raise ValueError("step size must be positive")
    if field is None:
        ctx = global_context(particles.positions, target.layout, kernel)
        field = field_from_context(ctx, target)
    return particles.advanced(particles.positions - step * field.values)


def mp_svgd_step(
    particles: ParticleSet,
    target: TargetModel,
    local_kernels: LocalKernelFamily,
    schedule: StepSchedule,
    t: int,
    field=None,
) -> ParticleSet:
    """One first-order update along the local-kernel functional gradient."""
    if field is None:
        field = graphical_stein_gradient(particles, target, local_kernels)
    displacement = schedule.scaled_step(-field.values, t)
    return particles.advanced(particles.positions + displacement)


def svn_ctr_step(
    particles: ParticleSet,
    target: TargetModel,
    global_kernel: KernelSpec,
    radius: float,
) -> ParticleSet:
    """One Newton step per particle under the global kernel, solved inside a
    constant trust region and applied unconditionally."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    ctx = global_context(particles.positions, target.layout, global_kernel)
    field = field_from_context(ctx, target)
    hessians = hessian_stack_from_context(ctx, target)
    steps, _, _ = solve_subproblems(field, hessians, radius)
    return particles.advanced(particles.positions + steps)
