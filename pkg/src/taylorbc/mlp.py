"""Multilayer perceptron policies with analytic input-derivative propagation.

The training losses in this package penalize mismatches not only in policy
outputs but in input Jacobians and Hessians. Rather than pulling in a tape
autodiff framework, each layer pushes forward the triple

    (value, d value / d input, d^2 value / d input^2)

in closed form, and parameter gradients are accumulated by a hand-written
reverse sweep over that same pipeline. Everything is exact (up to float64
rounding); finite differences appear only in tests and in the explicitly
finite-difference loss variant.

Shape conventions (batch size B, input dim d, layer width n):
    values    (B, n)
    jacobians (B, n, d)
    hessians  (B, n, d, d), symmetric in the trailing axes
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .activations import Activation, activation_from_name
from .tensorops import symmetrize_last_two

__all__ = [
    "Layer",
    "MlpPolicy",
    "DerivativeBundle",
    "ForwardTape",
    "forward_bundle",
    "param_gradient_from_seeds",
    "save_policy",
    "load_policy",
]

CHECKPOINT_VERSION = 1


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: Activation

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2:
            raise ValueError(f"layer weight must be a matrix, got ndim={self.weight.ndim}")
        if self.bias.shape != (self.weight.shape[0],):
            raise ValueError(
                f"bias shape {self.bias.shape} does not match weight rows {self.weight.shape[0]}"
            )


@dataclass
class DerivativeBundle:
    """Policy output and its input derivatives at one state or a batch."""

    value: np.ndarray
    jacobian: np.ndarray | None = None
    hessian: np.ndarray | None = None


@dataclass
class ForwardTape:
    """Per-layer intermediates cached by the forward sweep for the reverse one."""

    order: int
    inputs: list[tuple[np.ndarray, np.ndarray | None, np.ndarray | None]]  # (z, J, H) into each layer
    pre: list[tuple[np.ndarray, np.ndarray | None, np.ndarray | None]]  # (A, JA, HA) of each layer


class MlpPolicy:
    """Fully connected policy; one activation per layer (output layer included)."""

    def __init__(self, layers: list[Layer]):
        if not layers:
            raise ValueError("policy needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if nxt.weight.shape[1] != prev.weight.shape[0]:
                raise ValueError(
                    f"layer widths do not chain: {prev.weight.shape} -> {nxt.weight.shape}"
                )
        self.layers = layers

    # ------------------------------------------------------------------
    # shape metadata
    # ------------------------------------------------------------------

    @property
    def in_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    @property
    def param_count(self) -> int:
        return sum(l.weight.size + l.bias.size for l in self.layers)

    # ------------------------------------------------------------------
    # flat parameter view
    # ------------------------------------------------------------------

    def get_params(self) -> np.ndarray:
        """Flat copy of all parameters: per layer, kernel entries then bias."""
        return np.concatenate([np.concatenate([l.weight.ravel(), l.bias]) for l in self.layers])

    def set_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.param_count,):
            raise ValueError(f"expected {self.param_count} parameters, got shape {flat.shape}")
        k = 0
        for l in self.layers:
            w = l.weight.size
            l.weight = flat[k : k + w].reshape(l.weight.shape).copy()
            k += w
            b = l.bias.size
            l.bias = flat[k : k + b].copy()
            k += b

    def copy(self) -> "MlpPolicy":
        return MlpPolicy(
            [Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers]
        )

    # ------------------------------------------------------------------
    # evaluation
    # ------------------------------------------------------------------

    def value(self, x: np.ndarray) -> np.ndarray:
        """Policy output at x; accepts (d,) or (B, d)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        z = x[np.newaxis, :] if single else x
        if z.shape[1] != self.in_dim:
            raise ValueError(f"input dim {z.shape[1]} does not match policy ({self.in_dim})")
        for l in self.layers:
            z = l.activation.value(z @ l.weight.T + l.bias)
        return z[0] if single else z

    def input_derivatives(self, x: np.ndarray, order: int) -> DerivativeBundle:
        """Value plus input derivatives up to `order` (0, 1, or 2)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        xb = x[np.newaxis, :] if single else x
        bundle, _ = forward_bundle(self, xb, order)
        if single:
            return DerivativeBundle(
                bundle.value[0],
                None if bundle.jacobian is None else bundle.jacobian[0],
                None if bundle.hessian is None else bundle.hessian[0],
            )
        return bundle

    def descriptor(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "layers": [
                {
                    "in": int(l.weight.shape[1]),
                    "out": int(l.weight.shape[0]),
                    "activation": l.activation.descriptor(),
                }
                for l in self.layers
            ],
        }


# ----------------------------------------------------------------------
# forward sweep with derivative propagation
# ----------------------------------------------------------------------


def forward_bundle(
    policy: MlpPolicy, x: np.ndarray, order: int
) -> tuple[DerivativeBundle, ForwardTape]:
    """Batched forward pass carrying input derivatives up to `order`.

    Affine step:       A = z W^T + b,  JA = W J,  HA = W H
    Activation step:   z' = s(A),      J' = s1 * JA,
                       H' = s2 * (JA outer JA) + s1 * HA
    where s1, s2 are the first two activation derivatives at A, applied
    elementwise per unit. The returned Hessian is symmetrized in its trailing
    axes; propagation preserves symmetry analytically, so this only removes
    last-ulp asymmetry from the contractions.
    """
    if order not in (0, 1, 2):
        raise ValueError(f"derivative order must be 0, 1, or 2, got {order}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != policy.in_dim:
        raise ValueError(f"expected batch of shape (B, {policy.in_dim}), got {x.shape}")
    bsz, d = x.shape

    z = x
    jac = np.broadcast_to(np.eye(d), (bsz, d, d)).copy() if order >= 1 else None
    hess = np.zeros((bsz, d, d, d)) if order >= 2 else None

    inputs: list[tuple] = []
    pre: list[tuple] = []
    for l in policy.layers:
        inputs.append((z, jac, hess))
        w = l.weight
        a = z @ w.T + l.bias
        ja = np.matmul(w, jac) if order >= 1 else None
        ha = None
        if order >= 2:
            k = hess.shape[1]
            ha = np.matmul(w, hess.reshape(bsz, k, d * d)).reshape(bsz, -1, d, d)
        pre.append((a, ja, ha))

        z = l.activation.value(a)
        if order >= 1:
            s1 = l.activation.derivative(a, 1)
            jac = s1[:, :, np.newaxis] * ja
            if order >= 2:
                s2 = l.activation.derivative(a, 2)
                outer = ja[:, :, :, np.newaxis] * ja[:, :, np.newaxis, :]
                hess = s2[:, :, np.newaxis, np.newaxis] * outer + s1[:, :, np.newaxis, np.newaxis] * ha

    if hess is not None:
        hess = symmetrize_last_two(hess)
    return DerivativeBundle(z, jac, hess), ForwardTape(order, inputs, pre)


# ----------------------------------------------------------------------
# reverse sweep: parameter gradients of derivative-dependent losses
# ----------------------------------------------------------------------


def param_gradient_from_seeds(
    policy: MlpPolicy,
    tape: ForwardTape,
    g_value: np.ndarray | None,
    g_jacobian: np.ndarray | None = None,
    g_hessian: np.ndarray | None = None,
) -> np.ndarray:
    """Flat parameter gradient of sum_b <seeds, outputs(b)>.

    Seeds are the partial derivatives of a scalar loss with respect to the
    forward bundle (value, jacobian, hessian); missing seeds are treated as
    zero. The Hessian seed is taken against the symmetrized output, matching
    what `forward_bundle` returns.
    """
    order = tape.order
    bsz = tape.pre[0][0].shape[0]
    m = policy.out_dim
    d = policy.in_dim

    gz = np.zeros((bsz, m)) if g_value is None else np.asarray(g_value, dtype=np.float64)
    gj = None
    gh = None
    if order >= 1:
        gj = (
            np.zeros((bsz, m, d))
            if g_jacobian is None
            else np.asarray(g_jacobian, dtype=np.float64)
        )
    elif g_jacobian is not None:
        raise ValueError("jacobian seed supplied but tape was recorded at order 0")
    if order >= 2:
        gh = (
            np.zeros((bsz, m, d, d))
            if g_hessian is None
            else symmetrize_last_two(np.asarray(g_hessian, dtype=np.float64))
        )
    elif g_hessian is not None:
        raise ValueError(f"hessian seed supplied but tape was recorded at order {order}")

    grads_w: list[np.ndarray] = [None] * len(policy.layers)  # type: ignore[list-item]
    grads_b: list[np.ndarray] = [None] * len(policy.layers)  # type: ignore[list-item]

    for idx in range(len(policy.layers) - 1, -1, -1):
        layer = policy.layers[idx]
        w = layer.weight
        z_in, j_in, h_in = tape.inputs[idx]
        a, ja, ha = tape.pre[idx]
        act = layer.activation

        # --- activation step adjoints -------------------------------------
        s1 = act.derivative(a, 1)
        ga = gz * s1
        if order >= 1:
            s2 = act.derivative(a, 2)
            ga = ga + s2 * np.sum(gj * ja, axis=-1)
            gja = gj * s1[:, :, np.newaxis]
        if order >= 2:
            s3 = act.derivative(a, 3)
            # H'[o,i,j] = s2 JA_i JA_j + s1 HA[i,j]; differentiate through A and JA
            gh_ja = np.matmul(gh, ja[:, :, :, np.newaxis])[..., 0]  # sum_j gh[...,i,j] ja[...,j]
            ga = ga + s3 * np.sum(gh_ja * ja, axis=-1) + s2 * np.sum(gh * ha, axis=(-1, -2))
            gh_t = np.swapaxes(gh, -1, -2)
            ghja_sym = np.matmul(gh + gh_t, ja[:, :, :, np.newaxis])[..., 0]
            gja = gja + s2[:, :, np.newaxis] * ghja_sym
            gha = gh * s1[:, :, np.newaxis, np.newaxis]

        # --- affine step adjoints -----------------------------------------
        gw = ga.T @ z_in
        gb = ga.sum(axis=0)
        if order >= 1:
            gw = gw + np.tensordot(gja, j_in, axes=([0, 2], [0, 2]))
        if order >= 2:
            gw = gw + np.tensordot(gha, h_in, axes=([0, 2, 3], [0, 2, 3]))
        grads_w[idx] = gw
        grads_b[idx] = gb

        if idx > 0:
            gz = ga @ w
            if order >= 1:
                gj = np.matmul(w.T, gja)
            if order >= 2:
                k = w.shape[1]
                gh = np.matmul(w.T, gha.reshape(bsz, -1, d * d)).reshape(bsz, k, d, d)

    return np.concatenate(
        [np.concatenate([gw.ravel(), gb]) for gw, gb in zip(grads_w, grads_b)]
    )


# ----------------------------------------------------------------------
# checkpoints
# ----------------------------------------------------------------------


def save_policy(path, policy: MlpPolicy) -> None:
    """Write architecture descriptor plus raw float64 parameter arrays.

    npz carries the arrays bit-exactly, so save/load round-trips are
    bit-identical.
    """
    arrays = {}
    for i, l in enumerate(policy.layers):
        arrays[f"w{i}"] = l.weight
        arrays[f"b{i}"] = l.bias
    np.savez(path, meta=np.bytes_(json.dumps(policy.descriptor()).encode()), **arrays)


def load_policy(path) -> MlpPolicy:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')!r}")
        layers = []
        for i, entry in enumerate(meta["layers"]):
            act_meta = entry["activation"]
            act = activation_from_name(act_meta["kind"], act_meta.get("clip"))
            layers.append(Layer(data[f"w{i}"].copy(), data[f"b{i}"].copy(), act))
    return MlpPolicy(layers)
