"""Generator and discriminator networks for the inversion attack."""

from __future__ import annotations

import torch
import torch.nn as nn

from ..errors import ValidationError


def dcgan_init(module: nn.Module) -> None:
    classname = module.__class__.__name__
    if "Conv" in classname or "Linear" in classname:
        nn.init.normal_(module.weight.data, 0.0, 0.02)
        if getattr(module, "bias", None) is not None:
            nn.init.zeros_(module.bias.data)
    elif "BatchNorm" in classname:
        nn.init.normal_(module.weight.data, 1.0, 0.02)
        nn.init.zeros_(module.bias.data)


class ConditionalGenerator(nn.Module):
    """Upsampling convnet mapping (z, class) to a 28x28 image in [-1, 1].

    The class condition is a learned embedding concatenated to z before the
    initial projection.
    """

    def __init__(self, latent_dim: int = 100, num_classes: int = 10, base_channels: int = 64):
        super().__init__()
        if latent_dim < 1 or num_classes < 2 or base_channels < 4:
            raise ValidationError("bad generator spec")
        self.latent_dim = latent_dim
        self.num_classes = num_classes
        self.base_channels = base_channels
        c = base_channels
        self.label_emb = nn.Embedding(num_classes, latent_dim)
        self.fc = nn.Linear(2 * latent_dim, 2 * c * 7 * 7)
        self.blocks = nn.Sequential(
            nn.BatchNorm2d(2 * c),
            nn.Upsample(scale_factor=2),
            nn.Conv2d(2 * c, c, 3, padding=1),
            nn.BatchNorm2d(c),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Upsample(scale_factor=2),
            nn.Conv2d(c, c // 2, 3, padding=1),
            nn.BatchNorm2d(c // 2),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(c // 2, 1, 3, padding=1),
            nn.Tanh(),
        )

    def forward(self, z: torch.Tensor, classes: torch.Tensor) -> torch.Tensor:
        if z.shape[0] != classes.shape[0]:
            raise ValidationError(
                f"z batch {z.shape[0]} != classes batch {classes.shape[0]}"
            )
        if classes.max() >= self.num_classes or classes.min() < 0:
            raise ValidationError("class index out of range for generator")
        h = torch.cat([z, self.label_emb(classes)], dim=1)
        h = self.fc(h).view(-1, 2 * self.base_channels, 7, 7)
        return self.blocks(h)


class Discriminator(nn.Module):
    """Strided convnet emitting one real/fake logit per image."""

    def __init__(self, base_channels: int = 16):
        super().__init__()
        c = base_channels
        self.features = nn.Sequential(
            nn.Conv2d(1, c, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(c, 2 * c, 3, stride=2, padding=1),
            nn.BatchNorm2d(2 * c),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(2 * c, 4 * c, 3, stride=2, padding=1),
            nn.BatchNorm2d(4 * c),
            nn.LeakyReLU(0.2, inplace=True),
        )
        self.head = nn.Linear(4 * c * 4 * 4, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.features(x)
        return self.head(torch.flatten(h, 1))


def make_generator(
    latent_dim: int, num_classes: int, seed: int, base_channels: int = 64
) -> ConditionalGenerator:
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        g = ConditionalGenerator(latent_dim, num_classes, base_channels)
        g.apply(dcgan_init)
    return g


def make_discriminator(seed: int, base_channels: int = 16) -> Discriminator:
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        d = Discriminator(base_channels)
        d.apply(dcgan_init)
    return d
