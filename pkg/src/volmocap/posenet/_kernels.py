"""Fused CPU kernels for the per-voxel loss terms.

The focal loss touches every voxel of every joint; written as a chain of
tensor ops it dominates a CPU training step. These loops compute the loss
and its gradient in one pass.
"""

from __future__ import annotations

import math

import numba
import numpy as np
import torch


@numba.njit(cache=True, inline="always")
def _pow(x, a):
    # integer exponents are the common case and far cheaper than pow()
    if a == 2.0:
        return x * x
    if a == 1.0:
        return x
    if a == 4.0:
        x2 = x * x
        return x2 * x2
    if a == 3.0:
        return x * x * x
    return x ** a


@numba.njit(cache=True)
def _focal_forward_backward(p, t, alpha, beta, eps, loss, grad):
    B, N = p.shape
    for b in range(B):
        total = 0.0
        n_pos = 0
        for i in range(N):
            if t[b, i] >= 1.0:
                n_pos += 1
        norm = max(n_pos, 1)
        for i in range(N):
            q = p[b, i]
            inside = eps <= q <= 1.0 - eps
            if q < eps:
                q = eps
            elif q > 1.0 - eps:
                q = 1.0 - eps
            if t[b, i] >= 1.0:
                lq = math.log(q)
                om = 1.0 - q
                total += -lq * _pow(om, alpha)
                g = -_pow(om, alpha) / q + alpha * lq * _pow(om, alpha - 1.0)
            else:
                w = _pow(1.0 - t[b, i], beta)
                l1q = math.log(1.0 - q)
                qa = _pow(q, alpha)
                total += -l1q * qa * w
                g = w * (qa / (1.0 - q) - alpha * _pow(q, alpha - 1.0) * l1q)
            grad[b, i] = g / norm if inside else 0.0
        loss[b] = total / norm


class _FocalLoss(torch.autograd.Function):
    @staticmethod
    def forward(ctx, pred, target, alpha, beta, eps):
        B = pred.shape[0]
        p = pred.detach().reshape(B, -1).contiguous().numpy()
        t = target.detach().to(pred.dtype).reshape(B, -1).contiguous().numpy()
        loss = np.zeros(B, dtype=p.dtype)
        grad = np.empty_like(p)
        _focal_forward_backward(p, t, float(alpha), float(beta), float(eps), loss, grad)
        ctx.save_for_backward(torch.from_numpy(grad).reshape(pred.shape))
        return torch.from_numpy(loss).mean()

    @staticmethod
    def backward(ctx, grad_output):
        (grad,) = ctx.saved_tensors
        return grad * (grad_output / grad.shape[0]), None, None, None, None


def focal_loss_fused(pred, target, alpha=2.0, beta=4.0, eps=1e-6):
    return _FocalLoss.apply(pred, target, alpha, beta, eps)


@numba.njit(cache=True)
def _gt_heatmaps(index, resolution, sigma, out):
    B, P, J, _ = index.shape
    g = np.empty((3, resolution))
    for b in range(B):
        for p in range(P):
            for j in range(J):
                if index[b, p, j, 0] < 0:
                    continue
                for k in range(3):
                    for r in range(resolution):
                        d = r - index[b, p, j, k]
                        g[k, r] = math.exp(-d * d / (2.0 * sigma * sigma))
                for x in range(resolution):
                    gx = g[0, x]
                    if gx < 1e-12:
                        continue
                    for y in range(resolution):
                        gxy = gx * g[1, y]
                        if gxy < 1e-12:
                            continue
                        for z in range(resolution):
                            v = gxy * g[2, z]
                            if v > out[b, j, x, y, z]:
                                out[b, j, x, y, z] = v


def gt_heatmaps_fused(index, resolution=32, sigma_voxels=1.5, dtype=torch.float32):
    idx = np.ascontiguousarray(np.asarray(index, dtype=np.int64))
    B, P, J, _ = idx.shape
    out = np.zeros((B, J, resolution, resolution, resolution), dtype=np.float64)
    _gt_heatmaps(idx, resolution, float(sigma_voxels), out)
    return torch.from_numpy(out).to(dtype)
