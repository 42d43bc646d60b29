"""Backbone loading and per-family feature-map extraction rules.

Three extraction families cover the usual architectures:

* ``cnn``    output of a named convolutional block, pre-pooling
             (default ``layer4``, the final block of torchvision resnets),
             shape (B, C, H, W);
* ``vit``    the encoder's patch tokens with the class token dropped,
             reshaped to a (B, C, sqrt(N), sqrt(N)) grid;
* ``hooked`` the raw output of any named submodule that yields a
             (B, C, H, W) map, e.g. a diffusion up-sampling block.

Checkpoints are either a state dict for a named torchvision architecture
(``arch``) or a whole pickled module (``arch=None``).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torchvision.models as tvm


class BackboneError(Exception):
    """Raised when a backbone cannot be loaded or its shapes make no sense."""


_FAMILY_DEFAULT_MODULE = {"cnn": "layer4", "vit": "encoder", "hooked": None}


@dataclass(frozen=True)
class BackboneSpec:
    """How to load one backbone and where to read its feature map."""

    name: str
    family: str  # cnn | vit | hooked
    arch: str | None = None
    checkpoint: str | None = None
    feature_module: str | None = None
    input_size: int = 224
    norm_mean: tuple[float, float, float] = (0.485, 0.456, 0.406)
    norm_std: tuple[float, float, float] = (0.229, 0.224, 0.225)

    def __post_init__(self):
        if self.family not in _FAMILY_DEFAULT_MODULE:
            raise BackboneError(
                f"unknown family {self.family!r} (expected cnn, vit or hooked)"
            )
        if self.arch is None and self.checkpoint is None:
            raise BackboneError(f"backbone {self.name}: need an arch or a checkpoint")
        if self.family == "hooked" and self.feature_module is None:
            raise BackboneError(
                f"backbone {self.name}: family 'hooked' requires feature_module"
            )

    @property
    def module_path(self) -> str:
        return self.feature_module or _FAMILY_DEFAULT_MODULE[self.family]


def load_backbone(spec: BackboneSpec) -> torch.nn.Module:
    if spec.arch is not None:
        ctor = getattr(tvm, spec.arch, None)
        if ctor is None:
            raise BackboneError(f"backbone {spec.name}: unknown torchvision arch {spec.arch!r}")
        model = ctor(weights=None)
        if spec.checkpoint is not None:
            try:
                state = torch.load(spec.checkpoint, map_location="cpu", weights_only=True)
            except (FileNotFoundError, RuntimeError) as e:
                raise BackboneError(f"checkpoint {spec.checkpoint}: {e}") from None
            try:
                model.load_state_dict(state)
            except RuntimeError as e:
                raise BackboneError(f"checkpoint {spec.checkpoint}: {e}") from None
    else:
        try:
            model = torch.load(spec.checkpoint, map_location="cpu", weights_only=False)
        except FileNotFoundError as e:
            raise BackboneError(f"checkpoint {spec.checkpoint}: {e}") from None
        if not isinstance(model, torch.nn.Module):
            raise BackboneError(
                f"checkpoint {spec.checkpoint}: expected a pickled nn.Module, "
                f"got {type(model).__name__}"
            )
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model


def _captured_forward(model: torch.nn.Module, module_path: str, batch: torch.Tensor):
    try:
        target = model.get_submodule(module_path)
    except AttributeError:
        raise BackboneError(f"model has no submodule {module_path!r}") from None
    captured: dict[str, torch.Tensor] = {}
    handle = target.register_forward_hook(
        lambda mod, inp, out: captured.setdefault("out", out)
    )
    try:
        model(batch)
    finally:
        handle.remove()
    if "out" not in captured:
        raise BackboneError(f"submodule {module_path!r} produced no output")
    return captured["out"]


def extract_feature_map(
    spec: BackboneSpec, model: torch.nn.Module, batch: torch.Tensor
) -> torch.Tensor:
    """Run one preprocessed batch and return (B, C, H, W) feature maps."""
    with torch.no_grad():
        out = _captured_forward(model, spec.module_path, batch)
    if spec.family in ("cnn", "hooked"):
        if out.dim() != 4:
            raise BackboneError(
                f"backbone {spec.name}: expected a (B, C, H, W) map from "
                f"{spec.module_path!r}, got shape {tuple(out.shape)}"
            )
        return out
    # vit: tokens (B, N+1, C) with the class token first; drop it and fold
    # the remaining N patch tokens back onto their spatial grid
    if out.dim() != 3 or out.shape[1] < 2:
        raise BackboneError(
            f"backbone {spec.name}: expected (B, tokens, C) from the encoder, "
            f"got shape {tuple(out.shape)}"
        )
    tokens = out[:, 1:, :]
    n = tokens.shape[1]
    side = int(round(n**0.5))
    if side * side != n:
        raise BackboneError(
            f"backbone {spec.name}: {n} patch tokens do not form a square grid"
        )
    b, _, c = tokens.shape
    return tokens.permute(0, 2, 1).reshape(b, c, side, side)
