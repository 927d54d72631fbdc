"""Joint learning of proper multiclass losses and class probabilities.

The inverse link from logits to the projected probability simplex is
modelled as a fixed squashing map composed with gradients of learned
strongly convex blocks. Each factor is the gradient of a convex function
with a symmetric positive definite Jacobian, so the composition is
invertible and orientation preserving; in the chainless and binary cases
it is itself a convex gradient, which couples the probability model to a
proper canonical loss (the verification module measures how far a general
composition is from that ideal). Submodules: simplex geometry, the
gradient engine, convex blocks, loss machinery, monotonicity
certification, training, data handling, and the CLI.
"""

from __future__ import annotations

__version__ = "0.1.0"

from . import autodiff, blocks, data, losses, simplex, train, verify  # noqa: F401
