"""Analytical RAM / Flash / MAC / training-memory estimators.

The deployment view assumes an int8 post-training-quantized model run by an
arena-based interpreter: BatchNorm is folded into the preceding convolution,
every activation element takes one byte, and only the input and output
buffers of the layer being executed need to be resident at the same time.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

from .archmodel import BATCHNORM, CONV3X3, DENSE, Architecture, InputShape, Topology, expand


@dataclass(frozen=True)
class OverheadConfig:
    ram_overhead_bytes: int = 4096
    flash_overhead_bytes: int = 8192
    weight_bytes: int = 1
    bias_bytes: int = 1

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 0:
                raise ValueError(f"{name} must be >= 0, got {value}")


@dataclass(frozen=True)
class ResourceProfile:
    ram_bytes: int
    flash_bytes: int
    macs: int
    train_mem_bytes: int

    def to_dict(self) -> dict:
        return asdict(self)


def estimate_macs(topology: Topology) -> int:
    total = 0
    for layer in topology:
        if layer.kind == CONV3X3:
            total += layer.out_height * layer.out_width * 9 * layer.in_channels * layer.out_channels
        elif layer.kind == DENSE:
            total += layer.in_channels * layer.out_channels
    return total


def estimate_flash(topology: Topology, cfg: OverheadConfig = OverheadConfig()) -> int:
    weights = sum(layer.weight_count for layer in topology)
    biases = sum(layer.bias_count for layer in topology)
    return weights * cfg.weight_bytes + biases * cfg.bias_bytes + cfg.flash_overhead_bytes


def estimate_ram(topology: Topology, cfg: OverheadConfig = OverheadConfig()) -> int:
    peak = max((layer.in_elements + layer.out_elements for layer in topology), default=0)
    return peak + cfg.ram_overhead_bytes


def train_param_count(topology: Topology) -> int:
    # BN: gamma, beta plus the two running statistics
    bn = sum(4 * layer.out_channels for layer in topology if layer.kind == BATCHNORM)
    return topology.deploy_param_count() + bn


def activation_elements(topology: Topology) -> int:
    """Per-sample sum of every layer's output tensor size."""
    return sum(layer.out_elements for layer in topology)


def estimate_train_mem(topology: Topology, batch_size: int) -> int:
    """fp32 working set of one Adam training step.

    16 bytes per parameter (weight, gradient, two moments) plus 8 bytes per
    activation element per sample (forward value and its gradient).
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    return 16 * train_param_count(topology) + 8 * batch_size * activation_elements(topology)


def profile(
    arch: Architecture,
    shape: InputShape,
    classes: int,
    batch: int = 16,
    cfg: OverheadConfig = OverheadConfig(),
) -> ResourceProfile:
    topo = expand(arch, shape, classes)
    return ResourceProfile(
        ram_bytes=estimate_ram(topo, cfg),
        flash_bytes=estimate_flash(topo, cfg),
        macs=estimate_macs(topo),
        train_mem_bytes=estimate_train_mem(topo, batch),
    )
