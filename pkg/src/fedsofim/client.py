"""Record-level DP release: clip each per-example gradient, sum, perturb, normalize.

Order matters and is load-bearing: Gaussian noise is added to the *sum* of
clipped gradients before dividing by the local dataset size, and the noise
variance carries a 1/n factor.  The accountant's closed-form sensitivity and
release-noise expressions assume exactly this arrangement, so do not "fix" it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .task import ClientDataset, Task


@dataclass(frozen=True)
class ClientRelease:
    vector: np.ndarray
    client_id: int
    round: int


def clip_gradient(g: np.ndarray, c_g: float) -> np.ndarray:
    """Scale g onto the l2 ball of radius c_g; vectors inside pass unchanged.

    A vector needing clipping is rescaled and then nudged by at most a few
    ulps until its recomputed norm is <= c_g: plain multiplication by
    c_g/||g|| overshoots the radius by ~1e-16 relative about a quarter of the
    time, and downstream norm guarantees are stated without slack.
    """
    if c_g <= 0:
        raise ValueError("c_g must be positive")
    g = np.asarray(g, dtype=np.float64)
    norm = float(np.linalg.norm(g))
    if norm <= c_g:
        return g
    out = g * (c_g / norm)
    new_norm = float(np.linalg.norm(out))
    while new_norm > c_g:
        out = out * (c_g / new_norm)
        new_norm = float(np.linalg.norm(out))
    return out


def clip_rows(grads: np.ndarray, c_g: float) -> np.ndarray:
    """Row-wise clip_gradient over an (m, d) stack, vectorized.

    Rows already inside the ball are multiplied by exactly 1.0 (a no-op in
    IEEE arithmetic), so they come back bit-identical.
    """
    if c_g <= 0:
        raise ValueError("c_g must be positive")
    grads = np.asarray(grads, dtype=np.float64)
    norms = np.linalg.norm(grads, axis=1)
    scale = np.minimum(1.0, c_g / np.maximum(norms, np.finfo(np.float64).tiny))
    out = grads * scale[:, None]
    # Same ulp correction as the scalar path, restricted to rows that still
    # poke past the radius after rescaling.
    over = np.flatnonzero(np.linalg.norm(out, axis=1) > c_g)
    while over.size:
        sub_norms = np.linalg.norm(out[over], axis=1)
        out[over] = out[over] * (c_g / sub_norms)[:, None]
        over = over[np.linalg.norm(out[over], axis=1) > c_g]
    return out


def private_release(
    dataset: ClientDataset,
    theta: np.ndarray,
    c_g: float,
    sigma_g: float,
    n: int,
    stream,
    task: Task,
    client_id: int = 0,
    round_index: int = 0,
    batch_size: int = 0,
) -> ClientRelease:
    """One client's noisy normalized update for one round.

    Computes (S + E) / |D| where S sums the individually clipped per-example
    gradients at theta and E ~ N(0, (c_g sigma_g)^2 / n * I_d).  With
    sigma_g = 0 the draw is skipped entirely, so non-private runs never touch
    the stream.  A positive batch_size sub-samples that many examples for the
    round (drawn from the same stream, before the noise) and normalizes by
    the batch count; the accountant grants no amplification credit for it.
    """
    if dataset.size < 1:
        raise ValueError("empty dataset")
    if sigma_g < 0:
        raise ValueError("sigma_g must be nonnegative")
    if n < 1:
        raise ValueError("n must be >= 1")

    if batch_size and batch_size < dataset.size:
        if stream is None:
            raise ValueError("mini-batch selection requires a stream")
        indices = stream.choice(dataset.size, size=batch_size, replace=False)
        grads = task.per_example_gradients(theta, dataset)[np.sort(indices)]
    else:
        grads = task.per_example_gradients(theta, dataset)
    count = grads.shape[0]

    summed = clip_rows(grads, c_g).sum(axis=0)
    if sigma_g > 0:
        summed = summed + stream.normal(0.0, c_g * sigma_g / math.sqrt(n), size=summed.shape)
    return ClientRelease(vector=summed / count, client_id=client_id, round=round_index)
