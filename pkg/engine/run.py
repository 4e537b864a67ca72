"""
Non-Conservative Equilibrium Propagation Engine

One-call batch engine: free phase + the selected method's gradient estimate.

This is what the training loop calls once per mini-batch. It hides the
difference between the two-phase learners (EP, VF, AEP), which need the free
equilibrium first, and Dyadic EP, which runs its own free phase.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict

import numpy as np

from .cost import QuadraticCost
from .dynamics import ForceField, RelaxationConfig, relax
from .learners import GradientEstimate, NudgeConfig, aep_update, dyadic_update, ep_update, vf_update

logger = logging.getLogger(__name__)

TWO_PHASE = {"EP": ep_update, "VF": vf_update, "AEP": aep_update}


@dataclass
class BatchStep:
    """Result of one batch: free states, cost and the averaged estimate."""
    x_free: np.ndarray  # (B, N_dyn)
    cost: float  # mean free-equilibrium cost over valid samples
    estimate: GradientEstimate
    n_samples: int
    diverged: Dict[str, int]  # phase -> number of diverged samples

    @property
    def n_diverged(self) -> int:
        """Samples lost in any phase."""
        n_valid = self.estimate.diagnostics.get("n_valid", self.n_samples)
        return self.n_samples - n_valid


def estimate_batch(
    *,
    field: ForceField,
    params,
    inputs: np.ndarray,
    targets: np.ndarray,
    x0: np.ndarray,
    method: str,
    free_cfg: RelaxationConfig,
    nudge: NudgeConfig,
) -> BatchStep:
    """
    One-call engine:
    - relax the free phase from x0 (per-sample divergence flagged, not raised)
    - compute the method's gradient estimate over the non-diverged samples
    - report the batch-mean free cost
    """
    cost = QuadraticCost(targets)
    if method == "DyadicEP":
        estimate = dyadic_update(field, params, inputs, cost, nudge, x0, free_cfg=free_cfg,
                                 on_divergence="flag")
        free = estimate.diagnostics["free"]
    elif method in TWO_PHASE:
        free = relax(field, params, inputs, x0, free_cfg, on_divergence="flag")
        estimate = TWO_PHASE[method](field, params, inputs, cost, nudge, free.state,
                                     on_divergence="flag", exclude=free.diverged)
    else:
        raise ValueError(f"Unknown method {method!r}")

    ok = ~free.diverged if free.diverged is not None else np.ones(len(x0), dtype=bool)
    costs = cost.value(free.state)
    mean_cost = float(np.mean(costs[ok])) if ok.any() else float("nan")
    diverged = {"free": free.n_diverged}
    diverged.update({k: v for k, v in estimate.diagnostics.get("n_diverged", {}).items() if k != "free"})
    return BatchStep(free.state, mean_cost, estimate, len(x0), diverged)
