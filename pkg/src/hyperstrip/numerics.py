"""Shared numerical kernels: quadrature, small symmetric eigenproblems,
monotone cubic slopes, periodic interpolation."""

from __future__ import annotations

import numpy as np

__all__ = [
    "cumulative_simpson",
    "simpson",
    "gauss_legendre_01",
    "symmetric_eigenvalues",
    "jacobi_eigenvalues",
    "eigenvalues_2x2",
    "monotone_cubic_slopes",
    "periodic_linear",
]


def cumulative_simpson(samples: np.ndarray, step: float) -> np.ndarray:
    """Cumulative integral of uniformly spaced samples along axis 0.

    Panels are processed in Simpson pairs: the parabola through samples
    (2k, 2k+1, 2k+2) is integrated over each of its two half panels, so
    the cumulative values at even nodes reproduce composite Simpson
    exactly and odd nodes carry a single half-panel correction.  A
    trailing unpaired panel uses the last triple; two samples fall back
    to the trapezoid rule.
    """
    samples = np.asarray(samples, dtype=float)
    count = samples.shape[0]
    out = np.zeros_like(samples)
    if count < 2:
        return out
    if count == 2:
        out[1] = 0.5 * step * (samples[0] + samples[1])
        return out
    increments = np.zeros_like(samples)
    pairs = (count - 1) // 2
    base = 2 * np.arange(pairs)
    left = samples[base]
    mid = samples[base + 1]
    right = samples[base + 2]
    increments[base + 1] = step * (5.0 * left + 8.0 * mid - right) / 12.0
    increments[base + 2] = step * (-left + 8.0 * mid + 5.0 * right) / 12.0
    if (count - 1) % 2 == 1:
        # odd panel count: close the last panel with the final triple
        increments[-1] = step * (-samples[-3] + 8.0 * samples[-2] + 5.0 * samples[-1]) / 12.0
    np.cumsum(increments, axis=0, out=out)
    return out


def simpson(samples: np.ndarray, step: float) -> np.ndarray:
    """Composite Simpson along axis 0; the sample count must be odd."""
    samples = np.asarray(samples, dtype=float)
    count = samples.shape[0]
    if count % 2 == 0:
        raise ValueError("composite Simpson needs an odd number of samples")
    if count == 1:
        return np.zeros(samples.shape[1:])
    weights = np.ones(count)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    return np.tensordot(weights, samples, axes=(0, 0)) * (step / 3.0)


# 5-point Gauss-Legendre rule transplanted to [0, 1].
_GL_X = np.array([
    -0.906179845938663992797626878299,
    -0.538469310105683091036314420700,
    0.0,
    0.538469310105683091036314420700,
    0.906179845938663992797626878299,
])
_GL_W = np.array([
    0.236926885056189087514264040720,
    0.478628670499366468041291514836,
    0.568888888888888888888888888889,
    0.478628670499366468041291514836,
    0.236926885056189087514264040720,
])


def gauss_legendre_01() -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the 5-point Gauss-Legendre rule on [0, 1]."""
    return 0.5 * (_GL_X + 1.0), 0.5 * _GL_W


def eigenvalues_2x2(mats: np.ndarray) -> np.ndarray:
    """Closed-form eigenvalues of symmetric 2x2 matrices.

    ``mats`` has shape (..., 2, 2); the result has shape (..., 2) with
    eigenvalues in ascending order.
    """
    a = mats[..., 0, 0]
    b = mats[..., 0, 1]
    d = mats[..., 1, 1]
    half_trace = 0.5 * (a + d)
    radius = np.sqrt(np.square(0.5 * (a - d)) + np.square(b))
    return np.stack([half_trace - radius, half_trace + radius], axis=-1)


def jacobi_eigenvalues(mat: np.ndarray, tol: float = 1e-12, max_sweeps: int = 50) -> np.ndarray:
    """Eigenvalues of one symmetric matrix by cyclic Jacobi rotations.

    Terminates when every off-diagonal entry is below ``tol`` times the
    Frobenius scale of the input.
    """
    a = np.array(mat, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    if not np.allclose(a, a.T, atol=1e-12 * (1.0 + np.abs(a).max())):
        raise ValueError("matrix must be symmetric")
    scale = max(np.sqrt(np.sum(np.square(a))), 1e-300)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.square(a)) - np.sum(np.square(np.diag(a))))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                elif abs(theta) > 1e150:
                    # theta^2 would overflow; the rotation is essentially 1/(2 theta)
                    t = 0.5 / theta
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
    return np.sort(np.diag(a))


def symmetric_eigenvalues(mats: np.ndarray) -> np.ndarray:
    """Eigenvalues of a batch of symmetric matrices, ascending.

    Uses the closed form for 2x2 blocks and cyclic Jacobi otherwise.
    """
    mats = np.asarray(mats, dtype=float)
    n = mats.shape[-1]
    if n == 1:
        return mats[..., 0]
    if n == 2:
        return eigenvalues_2x2(mats)
    flat = mats.reshape(-1, n, n)
    out = np.empty((flat.shape[0], n))
    for i in range(flat.shape[0]):
        out[i] = jacobi_eigenvalues(flat[i])
    return out.reshape(mats.shape[:-2] + (n,))


def monotone_cubic_slopes(values: np.ndarray, step: float) -> np.ndarray:
    """Fritsch-Carlson slopes for shape-preserving cubic interpolation.

    ``values`` is sampled on a uniform grid along the last axis.  The
    returned slopes give a monotone interpolant on every monotone run.
    """
    values = np.asarray(values, dtype=float)
    deltas = np.diff(values, axis=-1) / step
    slopes = np.zeros_like(values)
    left = deltas[..., :-1]
    right = deltas[..., 1:]
    agree = (left * right) > 0.0
    denom = left + right
    with np.errstate(divide="ignore", invalid="ignore"):
        harmonic = np.where(agree, 2.0 * left * right / np.where(denom == 0.0, 1.0, denom), 0.0)
    slopes[..., 1:-1] = harmonic
    if values.shape[-1] == 2:
        slopes[..., 0] = deltas[..., 0]
        slopes[..., 1] = deltas[..., 0]
        return slopes
    # one-sided ends, clipped to keep the end panel monotone
    end0 = 0.5 * (3.0 * deltas[..., 0] - harmonic[..., 0])
    end1 = 0.5 * (3.0 * deltas[..., -1] - harmonic[..., -1])
    end0 = np.where(end0 * deltas[..., 0] <= 0.0, 0.0, end0)
    end1 = np.where(end1 * deltas[..., -1] <= 0.0, 0.0, end1)
    end0 = np.where(np.abs(end0) > 3.0 * np.abs(deltas[..., 0]), 3.0 * deltas[..., 0], end0)
    end1 = np.where(np.abs(end1) > 3.0 * np.abs(deltas[..., -1]), 3.0 * deltas[..., -1], end1)
    slopes[..., 0] = end0
    slopes[..., -1] = end1
    return slopes


def periodic_linear(values: np.ndarray, period: float, t) -> np.ndarray:
    """Periodic linear interpolation in time.

    ``values`` holds samples at k * period / count along axis 0; ``t`` is
    broadcast.  Values at t and t + period agree bitwise whenever t + period
    is exactly representable.
    """
    values = np.asarray(values, dtype=float)
    count = values.shape[0]
    t = np.asarray(t, dtype=float)
    dt = period / count
    scaled = np.mod(t, period) / dt
    base = np.floor(scaled)
    frac = scaled - base
    snap_low = frac < 1e-9
    snap_high = frac > 1.0 - 1e-9
    base = base.astype(int) + np.where(snap_high, 1, 0)
    frac = np.where(snap_low | snap_high, 0.0, frac)
    i0 = np.mod(base, count)
    i1 = np.mod(base + 1, count)
    v0 = values[i0]
    v1 = values[i1]
    w = frac.reshape(frac.shape + (1,) * (values.ndim - 1))
    return v0 * (1.0 - w) + v1 * w
