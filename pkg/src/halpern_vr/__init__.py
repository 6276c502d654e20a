"""Variance-reduced anchored (Halpern-type) solvers for finite-sum
monotone inclusions 0 in F(u) + G(u), with a benchmark harness, HTTP
service, and CLI.

Solvers:

* :mod:`halpern_vr.halpern_coco` -- single-loop anchored iteration with a
  recursive variance-reduced estimator, for average-cocoercive F;
* :mod:`halpern_vr.inexact_halpern` -- anchored iteration on the resolvent
  of eta(F+G) with a randomized inner solver, for monotone Lipschitz F;
* :mod:`halpern_vr.vr_forb` -- the variance-reduced forward-reflected-
  backward method for strongly monotone inclusions (also the inner solver
  above).

Benchmarks live in :mod:`halpern_vr.problems`; the epoch-budgeted driver,
CSV and plot emission in :mod:`halpern_vr.harness`.
"""

from .core import (
    DivergenceError,
    EvalCounter,
    ProblemInstance,
    RngStream,
    SamplingDistribution,
    TraceRecord,
    bernoulli,
    residual_norm,
    sample_batch_without_replacement,
    sample_categorical,
)

__version__ = "0.1.0"

__all__ = [
    "DivergenceError",
    "EvalCounter",
    "ProblemInstance",
    "RngStream",
    "SamplingDistribution",
    "TraceRecord",
    "bernoulli",
    "residual_norm",
    "sample_batch_without_replacement",
    "sample_categorical",
    "__version__",
]
