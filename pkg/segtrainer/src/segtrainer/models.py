"""Encoder-decoder networks for the blob corpora.

UNet2D is a small from-scratch U-Net.  SliceContextNet reuses the same
2D encoder blocks slice by slice and mixes the per-slice features with
full 3D convolutions in the decoder, so inter-slice context enters
only on the way back up, matching how anisotropic stacks are usually
read: in-plane detail first, neighbor slices for confirmation.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F


def _init_prior_bias(head, prior=0.1):
    """Start the head at the foreground prior (logit of about -2.2).

    Only safe together with the BCE term in seg_loss: under a pure
    dice loss the shared bias is the steepest ascent direction and
    overshoots into sigmoid saturation, where dice gradients die.
    """
    nn.init.constant_(head.bias, float(torch.logit(torch.tensor(prior))))


class ConvBlock2D(nn.Module):
    # No normalization layers: per-image normalization washes out the
    # absolute intensity scale, and telling an all-noise image from a
    # blob image depends on it.
    def __init__(self, cin, cout):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(cin, cout, 3, padding=1),
            nn.LeakyReLU(0.1, inplace=True),
            nn.Conv2d(cout, cout, 3, padding=1),
            nn.LeakyReLU(0.1, inplace=True),
        )

    def forward(self, x):
        return self.net(x)


class UNet2D(nn.Module):
    """3-level U-Net with bilinear upsampling, logits out."""

    def __init__(self, base=16):
        super().__init__()
        self.e1 = ConvBlock2D(1, base)
        self.e2 = ConvBlock2D(base, base * 2)
        self.e3 = ConvBlock2D(base * 2, base * 4)
        self.bottom = ConvBlock2D(base * 4, base * 8)
        self.d3 = ConvBlock2D(base * 8 + base * 4, base * 4)
        self.d2 = ConvBlock2D(base * 4 + base * 2, base * 2)
        self.d1 = ConvBlock2D(base * 2 + base, base)
        self.head = nn.Conv2d(base, 1, 1)
        _init_prior_bias(self.head)

    def forward(self, x):
        s1 = self.e1(x)
        s2 = self.e2(F.max_pool2d(s1, 2))
        s3 = self.e3(F.max_pool2d(s2, 2))
        b = self.bottom(F.max_pool2d(s3, 2))

        def up(t, ref):
            return F.interpolate(t, size=ref.shape[-2:], mode="bilinear",
                                 align_corners=False)

        y = self.d3(torch.cat([up(b, s3), s3], dim=1))
        y = self.d2(torch.cat([up(y, s2), s2], dim=1))
        y = self.d1(torch.cat([up(y, s1), s1], dim=1))
        return self.head(y)


class ConvBlock3D(nn.Module):
    def __init__(self, cin, cout):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv3d(cin, cout, 3, padding=1),
            nn.LeakyReLU(0.1, inplace=True),
            nn.Conv3d(cout, cout, 3, padding=1),
            nn.LeakyReLU(0.1, inplace=True),
        )

    def forward(self, x):
        return self.net(x)


class SliceContextNet(nn.Module):
    """Per-slice 2D encoder, 3D decoder.

    Input (B, 1, Z, H, W).  The encoder sees each slice independently
    (weights shared across slices); the decoder convolves across z at
    every level, upsampling only in-plane so output slices stay
    aligned 1:1 with the input stack.
    """

    def __init__(self, base=12):
        super().__init__()
        self.e1 = ConvBlock2D(1, base)
        self.e2 = ConvBlock2D(base, base * 2)
        self.e3 = ConvBlock2D(base * 2, base * 4)
        self.bottom = ConvBlock3D(base * 4, base * 4)
        self.d3 = ConvBlock3D(base * 4 + base * 4, base * 4)
        self.d2 = ConvBlock3D(base * 4 + base * 2, base * 2)
        self.d1 = ConvBlock3D(base * 2 + base, base)
        self.head = nn.Conv3d(base, 1, 1)
        _init_prior_bias(self.head)

    @staticmethod
    def _per_slice(block, x):
        b, c, z, h, w = x.shape
        flat = x.permute(0, 2, 1, 3, 4).reshape(b * z, c, h, w)
        out = block(flat)
        c2, h2, w2 = out.shape[1:]
        return out.reshape(b, z, c2, h2, w2).permute(0, 2, 1, 3, 4)

    def forward(self, x):
        s1 = self._per_slice(self.e1, x)
        s2 = self._per_slice(self.e2, F.max_pool3d(s1, (1, 2, 2)))
        s3 = self._per_slice(self.e3, F.max_pool3d(s2, (1, 2, 2)))
        b = self.bottom(F.max_pool3d(s3, (1, 2, 2)))

        def up(t, ref):
            return F.interpolate(t, size=ref.shape[-3:], mode="trilinear",
                                 align_corners=False)

        y = self.d3(torch.cat([up(b, s3), s3], dim=1))
        y = self.d2(torch.cat([up(y, s2), s2], dim=1))
        y = self.d1(torch.cat([up(y, s1), s1], dim=1))
        return self.head(y)


def soft_dice_loss(logits, target, eps=1.0):
    """1 - soft dice pooled over the whole batch; target is float 0/1.

    Pooling the dice across the batch (rather than per sample) keeps
    the loss well behaved when many samples have empty targets, which
    is the normal situation for slice-wise volume training.
    """
    prob = torch.sigmoid(logits)
    inter = (prob * target).sum()
    denom = prob.sum() + target.sum()
    dice = (2 * inter + eps) / (denom + eps)
    return 1 - dice


def seg_loss(logits, target):
    """Batch dice plus pixelwise BCE; returns (total, dice term).

    Dice alone has two early attractors: on foreground-heavy batches
    the shared head bias races everything above 0.5, on
    background-heavy ones below, and either way the sigmoid saturates
    where the dice gradient vanishes.  The BCE term's gradient stays
    proportional to prob - target, so a wrongly saturated output keeps
    receiving signal; dice still dominates once predictions overlap.
    """
    dsc = soft_dice_loss(logits, target)
    bce = F.binary_cross_entropy_with_logits(logits, target)
    return dsc + bce, dsc
