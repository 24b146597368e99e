"""Executable layer graphs for blind-spot denoising networks.

A ModelGraph is a flat topologically-ordered list of nodes (input, conv
with optional fused ReLU, channel concat) with exact forward/backward
passes built on :mod:`mmbsn.ops`.  Three builders are provided:

* ``build_apbsn``    -- center-dot baseline: per kernel size, a masked conv
  followed by a stack of dilated conv blocks, branches concatenated into a
  pointwise tail.
* ``build_smmbsn``   -- naive multi-mask variant: one full baseline path per
  mask, concatenated before the tail (model size grows with the number of
  masks).
* ``build_mmbsn``    -- multi-mask network with concatenation-based skip
  connections: every (mask, kernel size) branch carries a short dilated
  stack whose output is concatenated with a pointwise transform of the
  masked feature, same-size branches are fused, and a deep dilated trunk
  plus pointwise tail produce the output.

Checkpoints are single files: one line of JSON (version "mmbsn-ckpt-v1",
builder name, architecture, seed, step) followed by raw little-endian
float64 parameter blocks in registry order.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import numpy as np

from .masks import MASK_TAGS, KernelMask, render_mask
from .ops import (
    AdamState,
    ConvParams,
    check_tensor4,
    concat_channels,
    conv2d,
    conv2d_backward,
)

CHECKPOINT_VERSION = "mmbsn-ckpt-v1"


@dataclass
class ArchitectureConfig:
    """Hyperparameters shared by the three builders."""

    base_channels: int = 128
    masks: tuple = ("slash", "backslash")
    cdcl_depth: int = 2
    trunk_depth: int = 7
    kernel_sizes: tuple = (3, 5)
    dilations: tuple = (2, 3)
    in_channels: int = 3

    def __post_init__(self):
        self.masks = tuple(str(m).lower() for m in self.masks)
        self.kernel_sizes = tuple(int(k) for k in self.kernel_sizes)
        self.dilations = tuple(int(d) for d in self.dilations)
        if not self.masks:
            raise ValueError("at least one mask is required")
        for m in self.masks:
            if m not in MASK_TAGS:
                raise ValueError(f"unknown mask tag {m!r}; known: {', '.join(MASK_TAGS)}")
        if len(self.kernel_sizes) != len(self.dilations):
            raise ValueError("kernel_sizes and dilations must have equal length")
        if not self.kernel_sizes:
            raise ValueError("at least one kernel size is required")
        for k in self.kernel_sizes:
            if k < 3 or k % 2 == 0:
                raise ValueError(f"masked kernel sizes must be odd and >= 3, got {k}")
        for d in self.dilations:
            if d < 1:
                raise ValueError(f"dilations must be >= 1, got {d}")
        if self.base_channels < 2 or self.base_channels % 2:
            raise ValueError("base_channels must be even and >= 2")
        if self.cdcl_depth < 1 or self.trunk_depth < 1:
            raise ValueError("cdcl_depth and trunk_depth must be >= 1")
        if self.in_channels < 1:
            raise ValueError("in_channels must be >= 1")

    def to_dict(self):
        return {
            "base_channels": self.base_channels,
            "masks": list(self.masks),
            "cdcl_depth": self.cdcl_depth,
            "trunk_depth": self.trunk_depth,
            "kernel_sizes": list(self.kernel_sizes),
            "dilations": list(self.dilations),
            "in_channels": self.in_channels,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            base_channels=d["base_channels"],
            masks=tuple(d["masks"]),
            cdcl_depth=d["cdcl_depth"],
            trunk_depth=d["trunk_depth"],
            kernel_sizes=tuple(d["kernel_sizes"]),
            dilations=tuple(d["dilations"]),
            in_channels=d["in_channels"],
        )


@dataclass
class _Node:
    kind: str  # "input" | "conv" | "concat"
    inputs: list
    out_channels: int
    params: ConvParams | None = None
    relu: bool = False
    name: str = ""


class ModelGraph:
    """Single-input single-output DAG of convs and channel concats."""

    def __init__(self, in_channels):
        self.in_channels = in_channels
        self.nodes = [_Node("input", [], in_channels)]
        self.output_id = 0
        self.branches = []  # (mask_tag, kernel_size, dilation) per masked branch
        self.meta = {}
        self._acts = None

    # ---- construction ------------------------------------------------

    def add_conv(self, src, out_ch, k=1, dilation=1, mask=None, relu=False, name=""):
        in_ch = self.nodes[src].out_channels
        kernel_mask = mask.multiplier() if isinstance(mask, KernelMask) else mask
        params = ConvParams.create(in_ch, out_ch, k, dilation=dilation, kernel_mask=kernel_mask)
        self.nodes.append(_Node("conv", [src], out_ch, params=params, relu=relu, name=name))
        self.output_id = len(self.nodes) - 1
        return self.output_id

    def add_concat(self, srcs, name=""):
        out_ch = sum(self.nodes[s].out_channels for s in srcs)
        self.nodes.append(_Node("concat", list(srcs), out_ch, name=name))
        self.output_id = len(self.nodes) - 1
        return self.output_id

    # ---- parameters ---------------------------------------------------

    def param_items(self):
        return [(n.name, n.params) for n in self.nodes if n.kind == "conv"]

    def param_arrays(self):
        arrays = []
        for _, p in self.param_items():
            arrays.append(p.weight)
            arrays.append(p.bias)
        return arrays

    def param_masks(self):
        """Parallel to param_arrays: {0,1} multipliers for masked weights."""
        masks = []
        for _, p in self.param_items():
            masks.append(p.kernel_mask if p.kernel_mask is not None else None)
            masks.append(None)
        return masks

    def count_params(self):
        return sum(p.num_params() for _, p in self.param_items())

    def init_params(self, rng):
        for _, p in self.param_items():
            p.reinit(rng)

    def project_masks(self):
        for _, p in self.param_items():
            p.project_mask()

    def clone(self):
        return copy.deepcopy(self)

    def branch_masks(self):
        return [(render_mask(tag, k), d) for tag, k, d in self.branches]

    # ---- execution -----------------------------------------------------

    def forward(self, x):
        x = check_tensor4(x)
        if x.shape[1] != self.in_channels:
            raise ValueError(f"model expects {self.in_channels} channels, got {x.shape[1]}")
        acts = [None] * len(self.nodes)
        acts[0] = x
        for i, node in enumerate(self.nodes[1:], start=1):
            if node.kind == "conv":
                y = conv2d(acts[node.inputs[0]], node.params)
                if node.relu:
                    np.maximum(y, 0.0, out=y)
                acts[i] = y
            else:
                acts[i] = concat_channels([acts[s] for s in node.inputs])
        self._acts = acts
        return acts[self.output_id]

    def backward(self, grad_out):
        """Gradients of sum(grad_out * output) w.r.t. input and parameters.

        Requires a preceding forward; returns (grad_input, grads) where
        grads is parallel to param_arrays().
        """
        if self._acts is None:
            raise RuntimeError("backward called before forward")
        acts = self._acts
        out = acts[self.output_id]
        if grad_out.shape != out.shape:
            raise ValueError(f"grad_out shape {grad_out.shape} != output shape {out.shape}")
        pending = [None] * len(self.nodes)
        pending[self.output_id] = grad_out
        pgrads = {}
        for i in range(len(self.nodes) - 1, 0, -1):
            node = self.nodes[i]
            g = pending[i]
            if g is None:
                continue
            if node.kind == "conv":
                if node.relu:
                    g = g * (acts[i] > 0.0)
                gx, gw, gb = conv2d_backward(g, acts[node.inputs[0]], node.params)
                pgrads[i] = (gw, gb)
                src = node.inputs[0]
                pending[src] = gx if pending[src] is None else pending[src] + gx
            else:
                start = 0
                for s in node.inputs:
                    width = self.nodes[s].out_channels
                    piece = g[:, start : start + width]
                    pending[s] = piece.copy() if pending[s] is None else pending[s] + piece
                    start += width
        grads = []
        for i, node in enumerate(self.nodes):
            if node.kind != "conv":
                continue
            if i in pgrads:
                gw, gb = pgrads[i]
            else:
                gw, gb = np.zeros_like(node.params.weight), np.zeros_like(node.params.bias)
            grads.append(gw)
            grads.append(gb)
        self._acts = None  # free the activation cache until the next forward
        return pending[0], grads

    def make_adam(self, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        return AdamState.for_params(self.param_arrays(), lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def _add_dcl_block(g, src, channels, dilation, name):
    """Dilated 3x3 conv + ReLU followed by a pointwise conv + ReLU."""
    h = g.add_conv(src, channels, k=3, dilation=dilation, relu=True, name=f"{name}.dil")
    return g.add_conv(h, channels, k=1, relu=True, name=f"{name}.pw")


def build_mmbsn(config):
    """Multi-mask blind-spot network with concatenation-based skips.

    Stage 1: pointwise lift of the image to base_channels.
    Stage 2: per (mask, kernel size): a masked conv feeds two pointwise
             convs; one pointwise output runs through a short dilated
             stack (cdcl_depth blocks) and is concatenated with the other,
             then fused back to base_channels.
    Stage 3: per kernel size: same-size branches are concatenated, fused
             pointwise, and refined by trunk_depth dilated blocks.
    Stage 4: size paths are concatenated and reduced by three pointwise
             convs (2C -> C -> C/2 -> in_channels, last one linear).
    """
    cfg = config
    C = cfg.base_channels
    g = ModelGraph(cfg.in_channels)
    head = g.add_conv(0, C, k=1, relu=True, name="head")
    size_paths = []
    for si, (k, d) in enumerate(zip(cfg.kernel_sizes, cfg.dilations)):
        branch_outs = []
        for mi, tag in enumerate(cfg.masks):
            base = f"s{si}.m{mi}"
            mc = g.add_conv(
                head, C, k=k, mask=render_mask(tag, k), relu=True, name=f"{base}.masked"
            )
            skip = g.add_conv(mc, C, k=1, relu=True, name=f"{base}.skip")
            pre = g.add_conv(mc, C, k=1, relu=True, name=f"{base}.pre")
            cur = pre
            for b in range(cfg.cdcl_depth):
                cur = _add_dcl_block(g, cur, C, d, f"{base}.cdcl{b}")
            cat = g.add_concat([cur, skip], name=f"{base}.cat")
            branch_outs.append(
                g.add_conv(cat, C, k=1, relu=True, name=f"{base}.fuse")
            )
            g.branches.append((tag, k, d))
        cat = g.add_concat(branch_outs, name=f"s{si}.cat")
        cur = g.add_conv(cat, C, k=1, relu=True, name=f"s{si}.fuse")
        for b in range(cfg.trunk_depth):
            cur = _add_dcl_block(g, cur, C, d, f"s{si}.trunk{b}")
        size_paths.append(cur)
    merged = size_paths[0] if len(size_paths) == 1 else g.add_concat(size_paths, name="cat")
    t1 = g.add_conv(merged, C, k=1, relu=True, name="tail.0")
    t2 = g.add_conv(t1, C // 2, k=1, relu=True, name="tail.1")
    g.add_conv(t2, cfg.in_channels, k=1, relu=False, name="tail.2")
    g.meta = {"builder": "mmbsn", "config": cfg}
    return g


def build_apbsn(config):
    """Center-dot baseline: masked conv + dilated stack per kernel size.

    Ignores config.masks (the mask is always 'o'); branch depth is
    cdcl_depth + trunk_depth dilated blocks so the total depth matches
    build_mmbsn under equal settings.
    """
    cfg = config
    C = cfg.base_channels
    depth = cfg.cdcl_depth + cfg.trunk_depth
    g = ModelGraph(cfg.in_channels)
    head = g.add_conv(0, C, k=1, relu=True, name="head")
    size_paths = []
    for si, (k, d) in enumerate(zip(cfg.kernel_sizes, cfg.dilations)):
        cur = g.add_conv(
            head, C, k=k, mask=render_mask("o", k), relu=True, name=f"s{si}.masked"
        )
        for b in range(depth):
            cur = _add_dcl_block(g, cur, C, d, f"s{si}.dcl{b}")
        size_paths.append(cur)
        g.branches.append(("o", k, d))
    merged = size_paths[0] if len(size_paths) == 1 else g.add_concat(size_paths, name="cat")
    t1 = g.add_conv(merged, C, k=1, relu=True, name="tail.0")
    t2 = g.add_conv(t1, C // 2, k=1, relu=True, name="tail.1")
    g.add_conv(t2, cfg.in_channels, k=1, relu=False, name="tail.2")
    g.meta = {"builder": "apbsn", "config": cfg}
    return g


def build_smmbsn(config):
    """Naive multi-mask stack: one independent baseline path per mask.

    Each mask gets its own pointwise head, masked convs and dilated
    stacks; paths are concatenated only at the very end, in front of the
    shared pointwise tail.
    """
    cfg = config
    C = cfg.base_channels
    depth = cfg.cdcl_depth + cfg.trunk_depth
    g = ModelGraph(cfg.in_channels)
    path_outs = []
    for mi, tag in enumerate(cfg.masks):
        head = g.add_conv(0, C, k=1, relu=True, name=f"p{mi}.head")
        size_paths = []
        for si, (k, d) in enumerate(zip(cfg.kernel_sizes, cfg.dilations)):
            cur = g.add_conv(
                head, C, k=k, mask=render_mask(tag, k), relu=True, name=f"p{mi}.s{si}.masked"
            )
            for b in range(depth):
                cur = _add_dcl_block(g, cur, C, d, f"p{mi}.s{si}.dcl{b}")
            size_paths.append(cur)
            g.branches.append((tag, k, d))
        path_outs.append(
            size_paths[0]
            if len(size_paths) == 1
            else g.add_concat(size_paths, name=f"p{mi}.cat")
        )
    merged = path_outs[0] if len(path_outs) == 1 else g.add_concat(path_outs, name="cat")
    t1 = g.add_conv(merged, C, k=1, relu=True, name="tail.0")
    t2 = g.add_conv(t1, C // 2, k=1, relu=True, name="tail.1")
    g.add_conv(t2, cfg.in_channels, k=1, relu=False, name="tail.2")
    g.meta = {"builder": "smmbsn", "config": cfg}
    return g


def build_probe_stack(mask, k, dilation, channels=4, depth=4, in_channels=3):
    """Minimal canonical stack for receptive-field experiments.

    pointwise -> masked conv -> ``depth`` dilated blocks -> pointwise.
    depth=4 gives the stack enough hops to reach every offset within
    radius 6 that the mask does not structurally exclude.
    """
    kmask = render_mask(mask, k)
    g = ModelGraph(in_channels)
    head = g.add_conv(0, channels, k=1, relu=True, name="head")
    cur = g.add_conv(head, channels, k=k, mask=kmask, relu=True, name="masked")
    for b in range(depth):
        cur = _add_dcl_block(g, cur, channels, dilation, f"dcl{b}")
    g.add_conv(cur, in_channels, k=1, relu=False, name="tail")
    g.branches.append((mask if isinstance(mask, str) else kmask, k, dilation))
    g.meta = {"builder": "probe", "config": None}
    return g


BUILDERS = {
    "mmbsn": build_mmbsn,
    "apbsn": build_apbsn,
    "smmbsn": build_smmbsn,
}


def build(arch, config):
    if arch not in BUILDERS:
        raise ValueError(f"unknown architecture {arch!r}; known: {', '.join(BUILDERS)}")
    return BUILDERS[arch](config)


# ---- checkpoint serialization ------------------------------------------


def save_checkpoint(path, model, adam=None, seed=None, step=0):
    """Write a single-file checkpoint: JSON header line + raw float64 blocks."""
    if model.meta.get("builder") not in BUILDERS:
        raise ValueError("only mmbsn/apbsn/smmbsn graphs can be checkpointed")
    cfg = model.meta["config"]
    header = {
        "version": CHECKPOINT_VERSION,
        "builder": model.meta["builder"],
        "config": cfg.to_dict(),
        "masks": list(cfg.masks),
        "seed": seed,
        "step": int(step),
        "params": [
            {"name": name, "weight": list(p.weight.shape), "bias": int(p.bias.size)}
            for name, p in model.param_items()
        ],
        "optimizer": None
        if adam is None
        else {
            "lr": adam.lr,
            "beta1": adam.beta1,
            "beta2": adam.beta2,
            "eps": adam.eps,
            "step_count": adam.step_count,
        },
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for _, p in model.param_items():
            fh.write(np.ascontiguousarray(p.weight, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(p.bias, dtype="<f8").tobytes())
        if adam is not None:
            for m, v in zip(adam.m, adam.v):
                fh.write(np.ascontiguousarray(m, dtype="<f8").tobytes())
                fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def _read_block(fh, shape):
    count = int(np.prod(shape))
    raw = fh.read(count * 8)
    if len(raw) != count * 8:
        raise ValueError("checkpoint truncated")
    return np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)


def load_checkpoint(path):
    """Rebuild (model, adam_state_or_None, header) from save_checkpoint output."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')!r}")
        cfg = ArchitectureConfig.from_dict(header["config"])
        model = BUILDERS[header["builder"]](cfg)
        items = model.param_items()
        if len(items) != len(header["params"]):
            raise ValueError("checkpoint layer inventory does not match builder output")
        for (name, p), rec in zip(items, header["params"]):
            if rec["name"] != name or list(p.weight.shape) != rec["weight"]:
                raise ValueError(f"layer mismatch at {rec['name']!r}")
            p.weight[...] = _read_block(fh, p.weight.shape)
            p.bias[...] = _read_block(fh, (p.bias.size,))
        model.project_masks()
        adam = None
        if header["optimizer"] is not None:
            o = header["optimizer"]
            adam = AdamState(
                lr=o["lr"], beta1=o["beta1"], beta2=o["beta2"], eps=o["eps"],
                step_count=o["step_count"],
            )
            for arr in model.param_arrays():
                adam.m.append(_read_block(fh, arr.shape))
                adam.v.append(_read_block(fh, arr.shape))
    return model, adam, header
