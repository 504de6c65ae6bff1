"""Analytic FLOP, parameter and activation accounting for a ModelConfig.

One multiply-accumulate counts as one FLOP. Only the linear maps (feature
projections, time mixing, fusion) are counted; normalization and activation
costs are a few percent of the total and are left out.
"""

from dataclasses import dataclass, field

import numpy as np

from .model import _time_mask, param_shapes

BYTES_PER_VALUE = 4


@dataclass
class LayerCost:
    name: str
    flops: int
    params: int


@dataclass
class CostReport:
    flops: int
    params: int
    activation_bytes: int
    layers: list = field(default_factory=list)

    @property
    def gflops(self):
        return self.flops / 1e9

    @property
    def mparams(self):
        return self.params / 1e6

    @property
    def size_mb(self):
        return self.params * BYTES_PER_VALUE / 2**20


def _nparams(shapes, prefix):
    return int(sum(np.prod(s, dtype=np.int64) for n, s in shapes.items() if n.startswith(prefix)))


def count_cost(config):
    T, K, D = config.T, config.K, config.D
    shapes = param_shapes(config)
    mask = _time_mask(config)
    mix_terms = T * T if mask is None else int(mask.sum())
    layers = [LayerCost("proj", T * config.d_in * D, _nparams(shapes, "proj."))]
    acts = T * D
    for k in range(1, K + 1):
        layers.append(LayerCost(f"window.{k}", T * config.d_in * D, _nparams(shapes, f"windows.{k}.")))
        acts += 3 * T * D + D
    fusion = set(config.active_fusion_layers)
    for l in range(1, config.L + 1):
        layers.append(LayerCost(f"block.{l}.time_mix", mix_terms * D, _nparams(shapes, f"blocks.{l}.time_mix")))
        fc_params = _nparams(shapes, f"blocks.{l}.") - _nparams(shapes, f"blocks.{l}.time_mix")
        layers.append(LayerCost(f"block.{l}.fc", T * D * D, fc_params))
        acts += 7 * T * D
        if l in fusion:
            if config.fusion_axis == "time":
                flops = T * (T + K) * D
                acts += (T + K) * D + T * D
            else:
                flops = T * D * (K + 1) * D
                acts += T * D * (K + 1) + T * D
            layers.append(LayerCost(f"fusion.{l}", flops, _nparams(shapes, f"fusion.{l}")))
    layers.append(LayerCost("out", T * D * config.d_out, _nparams(shapes, "out.")))
    acts += T * config.d_out
    layers.append(LayerCost("uncertainty", 0, _nparams(shapes, "s_")))
    return CostReport(
        flops=sum(x.flops for x in layers),
        params=sum(x.params for x in layers),
        activation_bytes=acts * BYTES_PER_VALUE,
        layers=layers,
    )


def format_cost_table(rows):
    """Tab-separated table of (label, CostReport) rows."""
    lines = ["method\tT\tK\tL\tD\tFLOPs(G)\tSIZE(MB)\t#PARAMS(M)"]
    for label, config, report in rows:
        lines.append(
            f"{label}\t{config.T}\t{config.K}\t{config.L}\t{config.D}\t"
            f"{report.gflops:.3f}\t{report.size_mb:.2f}\t{report.mparams:.3f}"
        )
    return "\n".join(lines)
