"""Matched training runs for the skip-connection studies.

A variant names a set of network configurations. Every run in the set
trains on the same patches with the same seed and iteration count, so
the loss traces line up row for row.
"""

from __future__ import annotations

import re
from dataclasses import replace

from .errors import ConfigError
from .network import REDNetConfig, build
from .optim import TrainConfig, train_loop

FIXED_VARIANTS = ("depth", "depth-noskip", "depth-skip", "bottleneck-stride3")
BLOCK_VARIANTS = ("he-block-B", "red-block-B", "block-B")

# input side the stride-3 bottleneck collapses to 1x1 in five layers
BOTTLENECK_SIZE = 243


def variant_names() -> list[str]:
    return list(FIXED_VARIANTS) + list(BLOCK_VARIANTS)


def _depth(base, layers, style):
    return replace(base, conv_layers=layers // 2, skip_style=style, stride=1, padding=None)


def bottleneck_pair(base: REDNetConfig) -> list[tuple[str, REDNetConfig]]:
    """Five stride-3 convs (243 -> 1) and five stride-3 deconvs back."""
    geo = dict(conv_layers=5, kernel=3, stride=3, padding=0, skip_step=1, global_input_skip=False)
    return [
        ("bottleneck-skip", replace(base, skip_style="mirrored", **geo)),
        ("bottleneck-noskip", replace(base, skip_style="none", **geo)),
    ]


def variant_runs(variant: str, base: REDNetConfig) -> list[tuple[str, REDNetConfig]]:
    """``(run_name, config)`` pairs for ``variant``; ``base`` supplies width,
    kernel and (for the block variants) depth."""
    if variant == "depth-noskip":
        return [(f"noskip-{n}", _depth(base, n, "none")) for n in (10, 20, 30)]
    if variant == "depth-skip":
        return [(f"skip-{n}", _depth(base, n, "mirrored")) for n in (20, 30)]
    if variant == "depth":
        return variant_runs("depth-noskip", base) + variant_runs("depth-skip", base)
    if variant == "bottleneck-stride3":
        return bottleneck_pair(base)
    m = re.fullmatch(r"(he-|red-)?block-(\d+)", variant)
    if m and int(m.group(2)) >= 1:
        b = int(m.group(2))
        runs = []
        if m.group(1) in (None, "he-"):
            runs.append((f"he-block-{b}", replace(base, skip_style="sequential", skip_step=b, stride=1, padding=None)))
        if m.group(1) in (None, "red-"):
            runs.append((f"red-block-{b}", replace(base, skip_style="mirrored", skip_step=b, stride=1, padding=None)))
        return runs
    raise ConfigError(f"unknown variant {variant!r}; valid variants: {', '.join(variant_names())} (B = block size)")


def run_all(runs, dataset, cfg: TrainConfig, progress=None) -> dict[str, list]:
    """Train each config from a fresh init seeded by ``cfg.seed``.

    Returns ``{run_name: trace}``.
    """
    traces = {}
    for name, config in runs:
        net = build(config, seed=cfg.seed, init=cfg.init)
        cb = None if progress is None else (lambda it, loss, name=name: progress(name, it, loss))
        _, traces[name] = train_loop(net, dataset, cfg, progress=cb)
    return traces


def final_loss(trace, window: int = 100) -> float:
    """Mean of the last ``window`` logged losses (smooths minibatch noise)."""
    tail = [loss for _, loss in trace[-window:]]
    return sum(tail) / len(tail)
