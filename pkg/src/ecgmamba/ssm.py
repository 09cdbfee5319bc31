"""Zero-order-hold discretisation and the selective scan.

The continuous system ``h' = A h + B u``, ``y = C h`` (no feed-through term)
is discretised per timestep with step ``delta``:

    a_d = exp(a * delta)
    b_d = (exp(a * delta) - 1) / a * b        (-> delta * b as a -> 0)

``A`` is diagonal, stored per channel as ``[d_inner, N]``; ``delta`` is a
per-timestep, per-channel step and ``B``/``C`` are per-timestep rows shared
across channels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor

SMALL_RATE = 1e-8
SCAN_CHUNK = 32


def discretize_zoh(a: float, b: float, delta: float) -> tuple[float, float]:
    """Scalar ZOH step.  Returns ``(a_d, b_d)``."""
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    x = a * delta
    a_d = math.exp(x)
    if abs(x) < SMALL_RATE:
        return a_d, delta * b * (1.0 + x / 2.0)
    return a_d, math.expm1(x) / a * b


def _zoh_coeffs(delta: np.ndarray, A: np.ndarray):
    """Vectorised ``exp(A*delta)`` and ``(exp(A*delta)-1)/A`` over ``[..., d, N]``."""
    x = delta[..., None] * A
    g = np.expm1(x)
    a_d = g + 1.0
    small = None
    if delta.size and np.abs(A).min() * np.abs(delta).min() < SMALL_RATE:
        small = np.abs(x) < SMALL_RATE
    with np.errstate(divide="ignore", invalid="ignore"):
        np.divide(g, A, out=g)
    if small is not None and small.any():
        g[small] = np.broadcast_to(delta[..., None], x.shape)[small] * (1.0 + x[small] / 2.0)
    else:
        small = None
    return x, a_d, g, small


def _check_scan_shapes(u, delta, A, B, C):
    if u.ndim < 2:
        raise ShapeError(f"u must be [..., L, d_inner], got {u.shape}")
    *lead, L, d = u.shape
    if delta.shape != u.shape:
        raise ShapeError(f"delta shape {delta.shape} != u shape {u.shape}")
    if A.ndim != 2 or A.shape[0] != d:
        raise ShapeError(f"A must be [{d}, N], got {A.shape}")
    n = A.shape[1]
    want = (*lead, L, n)
    if B.shape != want or C.shape != want:
        raise ShapeError(f"B and C must be {want}, got {B.shape} and {C.shape}")


def _scan_forward(u, delta, A, B, C, keep_states: bool):
    *lead, L, d = u.shape
    n = A.shape[1]
    h = np.zeros((*lead, d, n))
    y = np.empty(u.shape)
    hs = np.empty((*lead, L, d, n)) if keep_states else None
    for start in range(0, L, SCAN_CHUNK):
        stop = min(start + SCAN_CHUNK, L)
        a_d, states = _zoh_coeffs(delta[..., start:stop, :], A)[1:3]
        # states holds b_d * u on entry and h on exit
        states *= B[..., start:stop, None, :]
        states *= u[..., start:stop, :, None]
        for t in range(stop - start):
            h = states[..., t, :, :] = a_d[..., t, :, :] * h + states[..., t, :, :]
        if keep_states:
            hs[..., start:stop, :, :] = states
        y[..., start:stop, :] = np.einsum("...ldn,...ln->...ld", states, C[..., start:stop, :])
    return y, hs


def selective_scan(u, delta, A, B, C) -> Tensor:
    """Run the discretised recurrence from ``h = 0``.

    Shapes: ``u, delta: [..., L, d_inner]``, ``A: [d_inner, N]``,
    ``B, C: [..., L, N]``.  Returns ``y: [..., L, d_inner]``.
    """
    u, delta, A, B, C = (T.as_tensor(v) for v in (u, delta, A, B, C))
    _check_scan_shapes(u.data, delta.data, A.data, B.data, C.data)
    inputs = (u, delta, A, B, C)
    tracking = T.is_grad_enabled() and any(t.requires_grad for t in inputs)
    y, hs = _scan_forward(u.data, delta.data, A.data, B.data, C.data, keep_states=tracking)
    if not tracking:
        return Tensor(y)

    def bw(gy):
        ud, dd, Ad, Bd, Cd = (t.data for t in inputs)
        x, a_d, g, small = _zoh_coeffs(dd, Ad)
        L = ud.shape[-2]
        dhs = np.empty_like(hs)
        carry = np.zeros(hs.shape[:-3] + hs.shape[-2:])
        for t in range(L - 1, -1, -1):
            dh = carry + gy[..., t, :, None] * Cd[..., t, None, :]
            dhs[..., t, :, :] = dh
            carry = a_d[..., t, :, :] * dh
        h_prev = np.concatenate([np.zeros_like(hs[..., :1, :, :]), hs[..., :-1, :, :]], axis=-3)

        d_x = dhs * h_prev * a_d  # through exp(x), x = A * delta
        dg = dhs * Bd[..., None, :] * ud[..., None]
        with np.errstate(divide="ignore", invalid="ignore"):
            dg_dA = (dd[..., None] * a_d * Ad - np.expm1(x)) / Ad**2
        dg_ddelta = a_d
        if small is not None:
            dg_dA = np.where(small, (dd**2)[..., None] / 2.0, dg_dA)
            dg_ddelta = np.where(small, 1.0 + x, a_d)

        red = tuple(range(dhs.ndim - 2))
        g_delta = (d_x * Ad).sum(-1) + (dg * dg_ddelta).sum(-1)
        g_A = (d_x * dd[..., None]).sum(axis=red) + (dg * dg_dA).sum(axis=red)
        dbu_g = dhs * g
        g_u = np.einsum("...ldn,...ln->...ld", dbu_g, Bd)
        g_B = np.einsum("...ldn,...ld->...ln", dbu_g, ud)
        g_C = np.einsum("...ld,...ldn->...ln", gy, hs)
        return g_u, g_delta, g_A, g_B, g_C

    return T.apply_op("selective_scan", y, inputs, bw)


def selective_scan_reference(u, delta, A, B, C) -> np.ndarray:
    """Per-channel, per-timestep loop over :func:`discretize_zoh`.  Unbatched."""
    u, delta, A, B, C = (np.asarray(T.as_tensor(v).data) for v in (u, delta, A, B, C))
    _check_scan_shapes(u, delta, A, B, C)
    if u.ndim != 2:
        raise ShapeError("the reference scan takes a single [L, d_inner] sequence")
    L, d = u.shape
    n = A.shape[1]
    y = np.zeros((L, d))
    for c in range(d):
        h = [0.0] * n
        for t in range(L):
            acc = 0.0
            for k in range(n):
                a_d, b_d = discretize_zoh(A[c, k], B[t, k], delta[t, c])
                h[k] = a_d * h[k] + b_d * u[t, c]
                acc += C[t, k] * h[k]
            y[t, c] = acc
    return y


@dataclass
class SsmParams:
    """Learned parameters of one scan direction.

    ``delta_weight``/``delta_bias`` give ``delta = softplus(x @ W + b)``;
    ``x_proj`` maps ``d_inner -> 2N`` and is split into the B and C rows.
    """

    A_log: Tensor  # [d_inner, N]
    delta_weight: Tensor  # [d_inner, d_inner]
    delta_bias: Tensor  # [d_inner]
    x_proj: Tensor  # [d_inner, 2N]

    @property
    def d_state(self) -> int:
        return self.A_log.shape[1]

    def A(self) -> Tensor:
        return T.neg(T.exp(self.A_log))

    def tensors(self) -> dict[str, Tensor]:
        return {
            "A_log": self.A_log,
            "delta_weight": self.delta_weight,
            "delta_bias": self.delta_bias,
            "x_proj": self.x_proj,
        }

    @classmethod
    def init(cls, d_inner: int, d_state: int, rng, dt_min=1e-3, dt_max=1e-1) -> "SsmParams":
        rng = T.make_rng(rng)
        A_log = np.tile(np.log(np.arange(1, d_state + 1, dtype=float)), (d_inner, 1))
        bound = 1.0 / math.sqrt(d_inner)
        delta_weight = rng.uniform(-bound, bound, size=(d_inner, d_inner))
        dt = np.exp(rng.uniform(math.log(dt_min), math.log(dt_max), size=d_inner))
        delta_bias = dt + np.log(-np.expm1(-dt))  # inverse softplus
        x_proj = rng.uniform(-bound, bound, size=(d_inner, 2 * d_state))
        return cls(*(Tensor(v, requires_grad=True) for v in (A_log, delta_weight, delta_bias, x_proj)))


def selective_parameterize(x, params: SsmParams):
    """Input-dependent ``(delta, B, C)`` for a ``[..., L, d_inner]`` input."""
    x = T.as_tensor(x)
    n = params.d_state
    delta = T.softplus(x @ params.delta_weight + params.delta_bias)
    bc = x @ params.x_proj
    return delta, bc[..., :n], bc[..., n:]
