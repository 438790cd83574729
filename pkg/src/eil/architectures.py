"""Classifier architectures for zoo members and evaluation models.

Every network exposes ``forward(x, return_features=False)``; with the flag
set it also returns the penultimate-layer activations used as the feature
space for distance metrics.  Construction is seeded through ``fork_rng`` so
model weights are reproducible without touching the global RNG.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ValidationError


class LeNet5(nn.Module):
    """Classic small convnet for 28x28 grayscale input."""

    feature_dim = 84

    def __init__(self, num_classes: int = 10):
        super().__init__()
        self.conv1 = nn.Conv2d(1, 6, 5, padding=2)
        self.conv2 = nn.Conv2d(6, 16, 5)
        self.fc1 = nn.Linear(16 * 5 * 5, 120)
        self.fc2 = nn.Linear(120, 84)
        self.fc3 = nn.Linear(84, num_classes)

    def forward(self, x, return_features: bool = False):
        x = F.max_pool2d(F.relu(self.conv1(x)), 2)
        x = F.max_pool2d(F.relu(self.conv2(x)), 2)
        x = torch.flatten(x, 1)
        x = F.relu(self.fc1(x))
        feats = F.relu(self.fc2(x))
        logits = self.fc3(feats)
        if return_features:
            return logits, feats
        return logits


class ConvNet32(nn.Module):
    """Two-block convnet with a 64-d embedding, a deliberately different
    inductive bias from LeNet for use as an independent feature space."""

    feature_dim = 64

    def __init__(self, num_classes: int = 10):
        super().__init__()
        self.conv1 = nn.Conv2d(1, 16, 3, padding=1)
        self.conv2 = nn.Conv2d(16, 32, 3, padding=1)
        self.fc1 = nn.Linear(32 * 7 * 7, 64)
        self.fc2 = nn.Linear(64, num_classes)

    def forward(self, x, return_features: bool = False):
        x = F.max_pool2d(F.relu(self.conv1(x)), 2)
        x = F.max_pool2d(F.relu(self.conv2(x)), 2)
        x = torch.flatten(x, 1)
        feats = F.relu(self.fc1(x))
        logits = self.fc2(feats)
        if return_features:
            return logits, feats
        return logits


class BasicBlock(nn.Module):
    def __init__(self, cin: int, cout: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(cout)
        self.shortcut = nn.Sequential()
        if stride != 1 or cin != cout:
            self.shortcut = nn.Sequential(
                nn.Conv2d(cin, cout, 1, stride=stride, bias=False),
                nn.BatchNorm2d(cout),
            )

    def forward(self, x):
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return F.relu(out + self.shortcut(x))


class ResNetSmall(nn.Module):
    """Residual net sized for 28x28 inputs, used as the held-out evaluator."""

    feature_dim = 64

    def __init__(self, num_classes: int = 10):
        super().__init__()
        self.conv1 = nn.Conv2d(1, 16, 3, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(16)
        self.layer1 = nn.Sequential(BasicBlock(16, 16), BasicBlock(16, 16))
        self.layer2 = nn.Sequential(BasicBlock(16, 32, stride=2), BasicBlock(32, 32))
        self.layer3 = nn.Sequential(BasicBlock(32, 64, stride=2), BasicBlock(64, 64))
        self.fc = nn.Linear(64, num_classes)

    def forward(self, x, return_features: bool = False):
        x = F.relu(self.bn1(self.conv1(x)))
        x = self.layer3(self.layer2(self.layer1(x)))
        feats = torch.flatten(F.adaptive_avg_pool2d(x, 1), 1)
        logits = self.fc(feats)
        if return_features:
            return logits, feats
        return logits


class MLP(nn.Module):
    """Tiny fully-connected net, mostly useful for fast tests."""

    feature_dim = 64

    def __init__(self, num_classes: int = 10):
        super().__init__()
        self.fc1 = nn.Linear(28 * 28, 64)
        self.fc2 = nn.Linear(64, num_classes)

    def forward(self, x, return_features: bool = False):
        feats = F.relu(self.fc1(torch.flatten(x, 1)))
        logits = self.fc2(feats)
        if return_features:
            return logits, feats
        return logits


ARCHITECTURES = {
    "lenet5": LeNet5,
    "cnn32": ConvNet32,
    "resnet-small": ResNetSmall,
    "mlp64": MLP,
}


def make_model(arch_id: str, num_classes: int, seed: int = 0) -> nn.Module:
    """Construct a named architecture with seeded initialization."""
    if arch_id not in ARCHITECTURES:
        raise ValidationError(
            f"unknown arch_id {arch_id!r}; known: {', '.join(sorted(ARCHITECTURES))}"
        )
    if num_classes < 2:
        raise ValidationError(f"num_classes must be >= 2, got {num_classes}")
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        model = ARCHITECTURES[arch_id](num_classes=num_classes)
    return model
