"""
Non-Conservative Equilibrium Propagation Engine

Feedforward module - one hidden layer driven as a relaxing system.

State x = [h, o]. Free forces:
    F_h = rho'(h) * (J_in u) - h
    F_o = rho'(o) * (W rho(h)) - o
which is the Hopfield force with J_dyn = [[0, 0], [W, 0]].

VF cannot train the hidden layer here: nudging only moves o, and h does not
see o, so the hidden post-synaptic signal is exactly zero. The AEP correction
creates the missing backward path.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, Optional

import numpy as np

from .cost import QuadraticCost
from .dynamics import ForceField
from .errors import ConfigError
from .hopfield import TANH, HopfieldParams, feedforward_mask, hidden_input_mask, hopfield_jacobian


@dataclass(frozen=True)
class FeedforwardParams:
    J_in: np.ndarray  # (n_hidden, N_in)
    W: np.ndarray  # (n_out, n_hidden)

    def __post_init__(self):
        if self.J_in.ndim != 2 or self.W.ndim != 2 or self.W.shape[1] != self.J_in.shape[0]:
            raise ConfigError(f"Inconsistent shapes J_in {self.J_in.shape}, W {self.W.shape}")

    @property
    def n_hidden(self) -> int:
        return self.J_in.shape[0]

    @property
    def n_out(self) -> int:
        return self.W.shape[0]

    @property
    def n_dyn(self) -> int:
        return self.n_hidden + self.n_out

    @property
    def n_in(self) -> int:
        return self.J_in.shape[1]

    def groups(self) -> Dict[str, np.ndarray]:
        return {"J_in": self.J_in, "W": self.W}

    def with_groups(self, **updates) -> "FeedforwardParams":
        return replace(
            self,
            J_in=np.asarray(updates.get("J_in", self.J_in), dtype=float),
            W=np.asarray(updates.get("W", self.W), dtype=float),
        )

    def as_hopfield(self) -> HopfieldParams:
        """Equivalent Hopfield couplings: J_dyn strictly block lower-triangular."""
        nh, no = self.n_hidden, self.n_out
        J_dyn = np.zeros((self.n_dyn, self.n_dyn))
        J_dyn[nh:, :nh] = self.W
        J_in = np.zeros((self.n_dyn, self.n_in))
        J_in[:nh] = self.J_in
        return HopfieldParams(J_in=J_in, J_dyn=J_dyn, layer_mask=feedforward_mask(nh, no),
                              input_mask=hidden_input_mask(nh, no, self.n_in))


def feedforward_forces(
    p: FeedforwardParams,
    u,
    x: np.ndarray,
    mode: str = "free",
    x_free: Optional[np.ndarray] = None,
    beta: float = 0.0,
    cost: Optional[QuadraticCost] = None,
) -> np.ndarray:
    """
    Free or nudged forces on [h, o].

    Nudged mode adds the antisymmetric correction frozen at x_free plus -beta dC/do:
        hidden += rho'(h0) * W^T (rho'(o0) * (o - o0))
        output -= rho'(o0) * W (rho'(h0) * (h - h0))
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape[-1] != p.n_dyn or u.shape[-1] != p.n_in:
        raise ConfigError(f"State {x.shape} / input {u.shape} do not match a {p.n_in}-{p.n_hidden}-{p.n_out} net")
    nh = p.n_hidden
    h, o = x[..., :nh], x[..., nh:]
    F_h = TANH.d1(h) * (u @ p.J_in.T) - h
    F_o = TANH.d1(o) * (TANH.rho(h) @ p.W.T) - o
    if mode == "free":
        return np.concatenate([F_h, F_o], axis=-1)
    if mode != "nudged":
        raise ConfigError(f"mode must be 'free' or 'nudged', got {mode!r}")
    if x_free is None:
        raise ConfigError("nudged mode requires the free equilibrium x_free")

    x_free = np.asarray(x_free, dtype=float)
    h0, o0 = x_free[..., :nh], x_free[..., nh:]
    dh0, do0 = TANH.d1(h0), TANH.d1(o0)
    F_h = F_h + dh0 * ((do0 * (o - o0)) @ p.W)
    F_o = F_o - do0 * ((dh0 * (h - h0)) @ p.W.T)
    forces = np.concatenate([F_h, F_o], axis=-1)
    if beta != 0.0:
        if cost is None:
            raise ConfigError("nudged mode with beta != 0 requires a cost")
        forces = forces - beta * cost.grad(x)
    return forces


class FeedforwardField(ForceField):
    name = "feedforward"

    def state_dim(self, params: FeedforwardParams) -> int:
        return params.n_dyn

    def input_dim(self, params: FeedforwardParams) -> int:
        return params.n_in

    def force(self, params, u, x):
        return feedforward_forces(params, u, x)

    def analytic_jacobian(self, params, u, x):
        return hopfield_jacobian(params.as_hopfield(), u, x)

    def presynaptic_transpose(self, params, x, u, v):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        v = np.atleast_2d(np.asarray(v, dtype=float))
        u = np.broadcast_to(np.atleast_2d(np.asarray(u, dtype=float)), (x.shape[0], params.n_in))
        nh = params.n_hidden
        w = v * TANH.d1(x)
        return {"J_in": w[:, :nh].T @ u, "W": w[:, nh:].T @ TANH.rho(x[:, :nh])}

    def as_hopfield(self, params: FeedforwardParams) -> HopfieldParams:
        return params.as_hopfield()
