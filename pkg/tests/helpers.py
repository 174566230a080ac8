"""Shared test utilities: finite-difference gradient checking and tensor
generators at toy dimensions."""

import torch


def finite_difference_max_rel_error(make_loss, tensors, eps=1e-5):
    """Max relative error between autograd and central finite differences.

    make_loss() must recompute a scalar loss from `tensors`, which are leaf
    tensors with requires_grad=True (double precision recommended).
    """
    loss = make_loss()
    grads = torch.autograd.grad(loss, tensors, allow_unused=False)
    worst = 0.0
    with torch.no_grad():
        for t, g in zip(tensors, grads):
            flat = t.view(-1)
            gflat = g.reshape(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + eps
                up = make_loss().item()
                flat[i] = orig - eps
                down = make_loss().item()
                flat[i] = orig
                fd = (up - down) / (2.0 * eps)
                denom = max(abs(gflat[i].item()), abs(fd), 1e-8)
                worst = max(worst, abs(gflat[i].item() - fd) / denom)
    return worst


def probe_loss(output, seed=0):
    """Scalar loss with non-uniform weights so gradients are generic."""
    gen = torch.Generator().manual_seed(seed)
    probe = torch.randn(output.shape, generator=gen, dtype=output.dtype)
    return (output * probe).sum()


def rand(shape, seed, dtype=torch.float64, requires_grad=False):
    gen = torch.Generator().manual_seed(seed)
    t = torch.randn(*shape, generator=gen, dtype=dtype)
    t.requires_grad_(requires_grad)
    return t
