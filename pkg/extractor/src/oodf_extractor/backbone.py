"""ResNet-18 backbone tapped at the four residual blocks.

Each tap is global-average-pooled into one vector per image, giving
layer widths (64, 128, 256, 512). The backbone runs in eval mode under
inference_mode, so outputs are deterministic for fixed weights.
"""

import torch
from torchvision.models import resnet18
from torchvision.models.feature_extraction import create_feature_extractor

TAP_NODES = {"layer1": "block1", "layer2": "block2", "layer3": "block3", "layer4": "block4"}
LAYER_NAMES = tuple(TAP_NODES.values())
LAYER_DIMS = (64, 128, 256, 512)

# Standard preprocessing constants for the pretrained backbone family.
CHANNEL_MEAN = (0.485, 0.456, 0.406)
CHANNEL_STD = (0.229, 0.224, 0.225)

_RANDOM_INIT_SEED = 901


def build_backbone(weights: str = "pretrained") -> torch.nn.Module:
    """Tapped backbone; ``weights`` is 'pretrained' or 'random'.

    The random variant draws from a fixed seed so repeated builds (and
    therefore repeated extractions) stay bit-stable without a download.
    """
    if weights == "pretrained":
        model = resnet18(weights="IMAGENET1K_V1")
    elif weights == "random":
        with torch.random.fork_rng():
            torch.manual_seed(_RANDOM_INIT_SEED)
            model = resnet18(weights=None)
    else:
        raise ValueError(f"weights must be 'pretrained' or 'random', got {weights!r}")
    model.eval()
    return create_feature_extractor(model, return_nodes=TAP_NODES)


@torch.inference_mode()
def gap_features(tapped: torch.nn.Module, batch: torch.Tensor) -> dict:
    """Per-tap (n, d) matrices from an (n, 3, H, W) image batch."""
    out = tapped(batch)
    return {name: fmap.mean(dim=(2, 3)) for name, fmap in out.items()}
