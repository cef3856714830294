"""The (k, c) architecture family and its expansion into a layer topology.

Every candidate is a plain CNN:

    Rescale -> Conv3x3(k) -> [MaxPool2x2 -> Conv3x3(n_i) -> BatchNorm -> ReLU] * c
            -> GlobalAvgPool -> Dense(num_classes) -> Softmax

Convolutions are stride 1 with zero "same" padding, so only the pooling
stages change the spatial size (floor division on odd sizes).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Iterator

RESCALE = "Rescale"
CONV3X3 = "Conv3x3"
MAXPOOL2X2 = "MaxPool2x2"
BATCHNORM = "BatchNorm"
RELU = "ReLU"
GAP = "GlobalAvgPool"
DENSE = "Dense"
SOFTMAX = "Softmax"

LAYER_KINDS = (RESCALE, CONV3X3, MAXPOOL2X2, BATCHNORM, RELU, GAP, DENSE, SOFTMAX)


class ArchitectureError(ValueError):
    """Raised for an (k, c) point that cannot be built for the given input."""


@dataclass(frozen=True, order=True)
class Architecture:
    k: int
    c: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ArchitectureError(f"k must be a positive integer, got {self.k!r}")
        if int(self.c) != self.c or self.c < 0:
            raise ArchitectureError(f"c must be a non-negative integer, got {self.c!r}")

    def as_tuple(self) -> tuple[int, int]:
        return (self.k, self.c)

    def __str__(self) -> str:
        return f"({self.k},{self.c})"


@dataclass(frozen=True)
class InputShape:
    height: int
    width: int
    channels: int

    def __post_init__(self):
        for name in ("height", "width", "channels"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ArchitectureError(f"{name} must be a positive integer, got {v!r}")

    @classmethod
    def parse(cls, text: str) -> "InputShape":
        """Parse ``HxWxC`` (e.g. ``50x50x3``)."""
        parts = text.lower().replace("×", "x").split("x")
        if len(parts) != 3:
            raise ArchitectureError(f"shape must look like HxWxC, got {text!r}")
        try:
            h, w, ch = (int(p) for p in parts)
        except ValueError:
            raise ArchitectureError(f"shape must look like HxWxC, got {text!r}") from None
        return cls(h, w, ch)

    @property
    def size(self) -> int:
        return self.height * self.width * self.channels

    def __str__(self) -> str:
        return f"{self.height}x{self.width}x{self.channels}"


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_channels: int
    out_channels: int
    in_height: int
    in_width: int
    out_height: int
    out_width: int

    @property
    def in_elements(self) -> int:
        return self.in_channels * self.in_height * self.in_width

    @property
    def out_elements(self) -> int:
        return self.out_channels * self.out_height * self.out_width

    @property
    def weight_count(self) -> int:
        if self.kind == CONV3X3:
            return 9 * self.in_channels * self.out_channels
        if self.kind == DENSE:
            return self.in_channels * self.out_channels
        return 0

    @property
    def bias_count(self) -> int:
        if self.kind in (CONV3X3, DENSE):
            return self.out_channels
        return 0


@dataclass(frozen=True)
class Topology:
    layers: tuple[LayerSpec, ...]
    num_classes: int

    def __iter__(self) -> Iterator[LayerSpec]:
        return iter(self.layers)

    def __len__(self) -> int:
        return len(self.layers)

    @property
    def kinds(self) -> list[str]:
        return [layer.kind for layer in self.layers]

    @property
    def conv_channels(self) -> list[int]:
        return [layer.out_channels for layer in self.layers if layer.kind == CONV3X3]

    @property
    def input_shape(self) -> InputShape:
        first = self.layers[0]
        return InputShape(first.in_height, first.in_width, first.in_channels)

    def deploy_param_count(self) -> int:
        """Weights + biases of the inference graph (BatchNorm folded away)."""
        return sum(layer.weight_count + layer.bias_count for layer in self.layers)

    def trainable_param_count(self) -> int:
        """Parameters updated by the optimizer: conv/dense W and b, BN gamma and beta."""
        bn = sum(2 * layer.out_channels for layer in self.layers if layer.kind == BATCHNORM)
        return self.deploy_param_count() + bn

    def check_chain(self) -> None:
        """Verify shape chaining and per-kind shape rules; raise ArchitectureError."""
        for i, layer in enumerate(self.layers):
            if layer.kind not in LAYER_KINDS:
                raise ArchitectureError(f"layer {i}: unknown kind {layer.kind!r}")
            if min(layer.out_height, layer.out_width, layer.out_channels) < 1:
                raise ArchitectureError(f"layer {i} ({layer.kind}) has an empty output")
            if i:
                prev = self.layers[i - 1]
                if (prev.out_channels, prev.out_height, prev.out_width) != (
                    layer.in_channels, layer.in_height, layer.in_width
                ):
                    raise ArchitectureError(f"layer {i} ({layer.kind}) does not chain")
            same = (layer.in_height, layer.in_width) == (layer.out_height, layer.out_width)
            if layer.kind == MAXPOOL2X2:
                if (layer.out_height, layer.out_width) != (
                    layer.in_height // 2, layer.in_width // 2
                ):
                    raise ArchitectureError(f"layer {i}: pooling must halve (floor)")
            elif layer.kind in (GAP, DENSE, SOFTMAX):
                if (layer.out_height, layer.out_width) != (1, 1):
                    raise ArchitectureError(f"layer {i}: {layer.kind} output must be 1x1")
            elif not same:
                raise ArchitectureError(f"layer {i}: {layer.kind} must preserve spatial size")

    def to_records(self) -> list[dict]:
        return [asdict(layer) for layer in self.layers]

    def to_json(self) -> str:
        return json.dumps(
            {"num_classes": self.num_classes, "layers": self.to_records()}, indent=2
        )

    @classmethod
    def from_json(cls, text: str) -> "Topology":
        doc = json.loads(text)
        layers = tuple(LayerSpec(**rec) for rec in doc["layers"])
        return cls(layers, int(doc["num_classes"]))

    def table(self) -> str:
        """Fixed-width human-readable layer table."""
        rows = [f"{'#':>3}  {'kind':<14}{'in':>14}  {'out':>14}"]
        for i, l in enumerate(self.layers):
            a = f"{l.in_height}x{l.in_width}x{l.in_channels}"
            b = f"{l.out_height}x{l.out_width}x{l.out_channels}"
            rows.append(f"{i:>3}  {l.kind:<14}{a:>14}  {b:>14}")
        return "\n".join(rows)


def kernel_counts(k: int, c: int) -> list[int]:
    """Kernel count of the base conv followed by each building-cell conv.

    n_0 = k and n_i = n_{i-1} + floor(2**(1-i) * n_{i-1}). The increment is
    computed exactly in integers: floor(n * 2**(1-i)) == (2*n) >> i.
    """
    if int(k) != k or k < 1:
        raise ArchitectureError(f"k must be >= 1, got {k!r}")
    if int(c) != c or c < 0:
        raise ArchitectureError(f"c must be >= 0, got {c!r}")
    counts = [int(k)]
    for i in range(1, int(c) + 1):
        prev = counts[-1]
        counts.append(prev + ((2 * prev) >> i))
    return counts


def max_cells(shape: InputShape) -> int:
    """Largest c such that c halvings of min(H, W) still leave >= 1 pixel."""
    side = min(shape.height, shape.width)
    c = 0
    while side // 2 >= 1:
        side //= 2
        c += 1
    return c


def expand(arch: Architecture, shape: InputShape, num_classes: int) -> Topology:
    if num_classes < 1:
        raise ArchitectureError(f"num_classes must be >= 1, got {num_classes}")
    limit = max_cells(shape)
    if arch.c > limit:
        raise ArchitectureError(
            f"{arch} needs {arch.c} pooling stages but {shape} allows at most {limit}"
        )
    counts = kernel_counts(arch.k, arch.c)
    h, w, ch = shape.height, shape.width, shape.channels
    layers = [LayerSpec(RESCALE, ch, ch, h, w, h, w), LayerSpec(CONV3X3, ch, counts[0], h, w, h, w)]
    ch = counts[0]
    for n in counts[1:]:
        layers.append(LayerSpec(MAXPOOL2X2, ch, ch, h, w, h // 2, w // 2))
        h, w = h // 2, w // 2
        layers.append(LayerSpec(CONV3X3, ch, n, h, w, h, w))
        layers.append(LayerSpec(BATCHNORM, n, n, h, w, h, w))
        layers.append(LayerSpec(RELU, n, n, h, w, h, w))
        ch = n
    layers.append(LayerSpec(GAP, ch, ch, h, w, 1, 1))
    layers.append(LayerSpec(DENSE, ch, num_classes, 1, 1, 1, 1))
    layers.append(LayerSpec(SOFTMAX, num_classes, num_classes, 1, 1, 1, 1))
    return Topology(tuple(layers), num_classes)
