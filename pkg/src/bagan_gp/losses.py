"""Adversarial objectives: original GAN, Wasserstein, gradient-penalty
variants (WGAN-GP, DRAGAN, conditional DRAGAN) and the balanced
conditional loss with a wrong-label term.

All classification-style losses consume logits; the log-sigmoid is applied
internally via torch's numerically stable form, so logits of magnitude 100
stay finite. Wasserstein objectives consume raw scores with no sigmoid.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import ClassCountOne, NonFiniteGradient, NonFiniteInput

VARIANTS = ("original_gan", "wgan", "wgan_gp", "dragan", "cdragan", "bagan_gp")
INTERPOLATION_MODES = ("model", "noise")
BAGAN_GP_VERSIONS = ("v1", "v2", "v3")


@dataclass(frozen=True)
class LossConfig:
    variant: str = "bagan_gp"
    lambda_gp: float = 10.0
    interpolation: str = "model"
    bagan_gp_version: str = "v3"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.interpolation not in INTERPOLATION_MODES:
            raise ValueError(f"unknown interpolation {self.interpolation!r}")
        if self.bagan_gp_version not in BAGAN_GP_VERSIONS:
            raise ValueError(f"unknown version {self.bagan_gp_version!r}")
        if self.lambda_gp < 0:
            raise ValueError("lambda_gp must be >= 0")


def _check_finite(*tensors):
    for t in tensors:
        if not torch.isfinite(t).all():
            raise NonFiniteInput("non-finite logits/scores")


def original_d_loss(real_logits, fake_logits):
    """-E[log sigma(real)] - E[log(1 - sigma(fake))]."""
    _check_finite(real_logits, fake_logits)
    return -(F.logsigmoid(real_logits).mean() + F.logsigmoid(-fake_logits).mean())


def original_g_loss(fake_logits):
    """Non-saturating generator loss: -E[log sigma(fake)]."""
    _check_finite(fake_logits)
    return -F.logsigmoid(fake_logits).mean()


def wgan_d_objective(real_scores, fake_scores):
    """Critic objective to maximize: E[real] - E[fake]. Raw scores."""
    _check_finite(real_scores, fake_scores)
    return real_scores.mean() - fake_scores.mean()


def wgan_g_loss(fake_scores):
    _check_finite(fake_scores)
    return -fake_scores.mean()


def interpolate(x_r, x_other, generator: torch.Generator | None = None, alpha=None):
    """Per-sample convex combination alpha*x_r + (1-alpha)*x_other.

    alpha ~ U(0,1), drawn once per sample and broadcast over pixels; pass
    alpha explicitly to force an endpoint.
    """
    if x_r.shape != x_other.shape:
        raise ValueError(f"endpoint shapes differ: {x_r.shape} vs {x_other.shape}")
    n = x_r.shape[0]
    if alpha is None:
        alpha = torch.rand(n, generator=generator, dtype=x_r.dtype, device=x_r.device)
    else:
        alpha = torch.as_tensor(alpha, dtype=x_r.dtype, device=x_r.device).reshape(-1)
        if alpha.numel() == 1:
            alpha = alpha.expand(n)
    shape = (n,) + (1,) * (x_r.dim() - 1)
    alpha = alpha.view(shape)
    return alpha * x_r + (1.0 - alpha) * x_other


def noise_endpoint(x_r, generator: torch.Generator | None = None):
    """DRAGAN-style perturbed endpoint: x_r + 0.5*std(x_r)*U(0,1) per element."""
    u = torch.rand(x_r.shape, generator=generator, dtype=x_r.dtype, device=x_r.device)
    return x_r + 0.5 * x_r.std() * u


def gradient_penalty(d_fn, x_hat, labels=None):
    """Mean over samples of (||grad_x D||_2 - 1)^2.

    The gradient is taken with respect to the image input only; labels, when
    given, are fixed conditioning passed through to the discriminator.
    """
    x_hat = x_hat.detach().requires_grad_(True)
    scores = d_fn(x_hat, labels) if labels is not None else d_fn(x_hat)
    grads = torch.autograd.grad(
        outputs=scores,
        inputs=x_hat,
        grad_outputs=torch.ones_like(scores),
        create_graph=True,
    )[0]
    if not torch.isfinite(grads).all():
        raise NonFiniteGradient("non-finite discriminator gradient")
    norms = grads.flatten(1).norm(2, dim=1)
    return ((norms - 1.0) ** 2).mean()


def dragan_d_loss(real_logits, fake_logits, gp, lambda_gp):
    """Log-sigmoid discriminator loss plus the weighted gradient penalty."""
    return original_d_loss(real_logits, fake_logits) + lambda_gp * gp


def cdragan_d_loss(d_fn, x_r, y_r, x_g, cfg: LossConfig, generator=None, return_parts=False):
    """Conditional discriminator loss; fake images scored under real labels."""
    base = original_d_loss(d_fn(x_r, y_r), d_fn(x_g, y_r))
    if cfg.lambda_gp == 0:
        gp = torch.zeros((), dtype=base.dtype)
    else:
        if cfg.interpolation == "model":
            other = x_g.detach()
        else:
            other = noise_endpoint(x_r, generator)
        x_hat = interpolate(x_r, other, generator)
        gp = gradient_penalty(d_fn, x_hat, y_r)
    total = base + cfg.lambda_gp * gp
    if return_parts:
        return total, {"base": base, "gp": gp}
    return total


def cdragan_g_loss(d_fn, x_g, y_r):
    return original_g_loss(d_fn(x_g, y_r))


def bagan_gp_d_loss(d_fn, g_fn, x_r, y_r, z, y_f, y_wrong, cfg: LossConfig,
                    generator=None, return_parts=False):
    """Balanced conditional discriminator loss with a wrong-label term.

    Terms: real pair scored as real; generated images under balanced fake
    labels scored as fake; real images under deliberately wrong labels
    scored as fake; plus the gradient penalty on real/generated
    interpolates conditioned on the real labels.
    """
    if torch.equal(y_wrong, y_r):
        # wrong labels can only coincide with the real ones wholesale when
        # there is a single class to draw from
        raise ClassCountOne("wrong-label term undefined with a single class")
    x_g = g_fn(z, y_f)
    real_term = -F.logsigmoid(d_fn(x_r, y_r)).mean()
    fake_term = -F.logsigmoid(-d_fn(x_g, y_f)).mean()
    wrong_term = -F.logsigmoid(-d_fn(x_r, y_wrong)).mean()
    for t in (real_term, fake_term, wrong_term):
        _check_finite(t)
    base = real_term + fake_term + wrong_term
    if cfg.lambda_gp == 0:
        gp = torch.zeros((), dtype=base.dtype)
    else:
        x_hat = interpolate(x_r, x_g.detach(), generator)
        gp = gradient_penalty(d_fn, x_hat, y_r)
    total = base + cfg.lambda_gp * gp
    if return_parts:
        return total, {"base": base, "gp": gp}
    return total


def bagan_gp_g_loss(d_fn, g_fn, z, y_f):
    return original_g_loss(d_fn(g_fn(z, y_f), y_f))


def sample_balanced_labels(n, num_classes, generator: torch.Generator | None = None):
    """n i.i.d. uniform class labels, independent of the real class skew."""
    return torch.randint(0, num_classes, (n,), generator=generator)


def sample_wrong_labels(y_r, num_classes, generator: torch.Generator | None = None):
    """Uniform labels guaranteed per-sample unequal to y_r (shifted draw)."""
    if num_classes < 2:
        raise ClassCountOne("cannot draw a wrong label with one class")
    offsets = torch.randint(1, num_classes, y_r.shape, generator=generator)
    return (y_r + offsets) % num_classes
