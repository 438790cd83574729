"""The ensemble-inversion training loop.

A conditional generator is optimized so that every frozen ensemble member
classifies its outputs as the intended class, sharply and confidently.  In
auxiliary mode a discriminator trained on auxiliary data adds a realism
term; in data-free mode no discriminator exists at all.
"""

from __future__ import annotations

import csv
from pathlib import Path

import torch
from sklearn.base import BaseEstimator

from ..config import AttackConfig
from ..datasets import LabeledImages
from ..errors import AttackDivergedError, ValidationError
from ..frozen import Ensemble
from ..seeding import RngContext
from .losses import (
    LossBreakdown,
    adversarial_losses,
    class_loss,
    combine_losses,
    max_response_loss,
    one_hot_loss,
)
from .nets import ConditionalGenerator, Discriminator, make_discriminator, make_generator


class EnsembleInversionAttack(BaseEstimator):
    """Estimator interface to the inversion attack.

    Parameters mirror AttackConfig; ``fit(ensemble, aux_data=...)`` trains the
    generator and exposes it as ``generator_`` with the per-step loss trace in
    ``trace_``.

    Parameters
    ----------
    alpha1, alpha2 : float
        Weights of the agreement (one-hot) and response-magnitude terms.
    beta1, beta2 : float
        Weights of the class-conditioning and adversarial terms.
    mode : {'data_free', 'auxiliary'}
        data_free forbids a discriminator (beta2 must be 0).
    target_classes : tuple of int, optional
        Canonical classes to invert; default all shared classes.
    """

    def __init__(
        self,
        alpha1: float = 200.0,
        alpha2: float = 1e-4,
        beta1: float = 1.0,
        beta2: float = 0.0,
        mode: str = "data_free",
        latent_dim: int = 100,
        batch_size: int = 64,
        steps: int = 2000,
        lr: float = 2e-4,
        betas: tuple = (0.5, 0.999),
        target_classes: tuple | None = None,
        seed: int = 0,
        base_channels: int = 64,
    ):
        self.alpha1 = alpha1
        self.alpha2 = alpha2
        self.beta1 = beta1
        self.beta2 = beta2
        self.mode = mode
        self.latent_dim = latent_dim
        self.batch_size = batch_size
        self.steps = steps
        self.lr = lr
        self.betas = betas
        self.target_classes = target_classes
        self.seed = seed
        self.base_channels = base_channels

    def _config(self) -> AttackConfig:
        return AttackConfig(
            alpha1=self.alpha1,
            alpha2=self.alpha2,
            beta1=self.beta1,
            beta2=self.beta2,
            mode=self.mode,
            latent_dim=self.latent_dim,
            batch_size=self.batch_size,
            steps=self.steps,
            lr=self.lr,
            betas=tuple(self.betas),
            target_classes=self.target_classes,
            seed=self.seed,
        )

    def fit(self, ensemble: Ensemble, aux_data: LabeledImages | None = None):
        config = self._config()
        generator, discriminator, trace = run_attack(
            ensemble, config, aux_data=aux_data, base_channels=self.base_channels
        )
        self.config_ = config
        self.generator_ = generator
        self.discriminator_ = discriminator
        self.trace_ = trace
        return self

    def predict(self, z: torch.Tensor, classes: torch.Tensor) -> torch.Tensor:
        """Generate images for explicit latents and canonical classes."""
        if not hasattr(self, "generator_"):
            raise ValidationError("EnsembleInversionAttack is not fitted")
        self.generator_.eval()
        with torch.no_grad():
            return self.generator_(z, classes)


def run_attack(
    ensemble: Ensemble,
    config: AttackConfig,
    aux_data: LabeledImages | None = None,
    base_channels: int = 64,
) -> tuple[ConditionalGenerator, Discriminator | None, list[LossBreakdown]]:
    """Train a conditional generator against a frozen ensemble.

    Returns (generator, discriminator or None, per-step loss trace).  Any
    non-finite loss aborts with the step index and all component values;
    member weight hashes are verified unchanged before and after.
    """
    config.validate()
    m = len(ensemble)
    shared = ensemble.shared_class_count
    classes = config.target_classes or tuple(range(shared))
    if any(c >= shared for c in classes):
        raise ValidationError(
            f"target_classes {classes} exceed shared class count {shared}"
        )

    if config.mode == "auxiliary":
        if aux_data is None:
            raise ValidationError("auxiliary mode requires aux_data")
        real_x, _ = aux_data.to_tensors()
        if len(real_x) < config.batch_size:
            raise ValidationError(
                f"aux_data has {len(real_x)} samples, need >= batch_size {config.batch_size}"
            )
    elif aux_data is not None:
        raise ValidationError("data_free mode must not receive aux_data")

    ensemble.verify_unchanged()
    ctx = RngContext(config.seed)
    generator = make_generator(
        config.latent_dim, shared, ctx.derive("generator-init"), base_channels
    )
    discriminator = None
    opt_d = None
    if config.mode == "auxiliary":
        discriminator = make_discriminator(ctx.derive("discriminator-init"))
        opt_d = torch.optim.Adam(discriminator.parameters(), lr=config.lr, betas=config.betas)
    opt_g = torch.optim.Adam(generator.parameters(), lr=config.lr, betas=config.betas)

    z_gen = ctx.torch_gen("latent")
    c_gen = ctx.torch_gen("classes")
    r_gen = ctx.torch_gen("real-batches")
    class_pool = torch.tensor(classes, dtype=torch.long)

    trace: list[LossBreakdown] = []
    generator.train()
    for step in range(config.steps):
        c = class_pool[torch.randint(len(class_pool), (config.batch_size,), generator=c_gen)]
        z = torch.randn(config.batch_size, config.latent_dim, generator=z_gen)
        fake = generator(z, c)

        logits = [member.logits(fake) for member in ensemble]
        l_oh = one_hot_loss(logits)
        l_mr = max_response_loss(logits)
        l_class = class_loss(logits, c, ensemble.class_maps)

        l_adv = fake.new_zeros(())
        l_d = fake.new_zeros(())
        if discriminator is not None:
            idx = torch.randint(len(real_x), (config.batch_size,), generator=r_gen)
            l_adv, l_d = adversarial_losses(discriminator, real_x[idx], fake)

        l_g_total = combine_losses(l_oh, l_mr, l_class, l_adv, config, m)
        components = {
            "l_oh": float(l_oh),
            "l_mr": float(l_mr),
            "l_class": float(l_class),
            "l_adv": float(l_adv),
            "l_g_total": float(l_g_total),
            "l_d": float(l_d),
        }
        if not all(torch.isfinite(torch.tensor(v)) for v in components.values()):
            raise AttackDivergedError(step, components)

        opt_g.zero_grad()
        l_g_total.backward()
        opt_g.step()
        if discriminator is not None:
            opt_d.zero_grad()
            l_d.backward()
            opt_d.step()

        trace.append(LossBreakdown(step=step, **components))

    generator.eval()
    ensemble.verify_unchanged()
    return generator, discriminator, trace


TRACE_FIELDS = ("step", "l_oh", "l_mr", "l_class", "l_adv", "l_g_total", "l_d")


def write_loss_trace(trace: list[LossBreakdown], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TRACE_FIELDS)
        for row in trace:
            writer.writerow([getattr(row, k) for k in TRACE_FIELDS])


def read_loss_trace(path) -> list[LossBreakdown]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        return [
            LossBreakdown(
                step=int(r["step"]),
                **{k: float(r[k]) for k in TRACE_FIELDS if k != "step"},
            )
            for r in reader
        ]
