"""Closed-form parameter inventories for the three architectures.

Pure arithmetic over the configuration fields: this module must never
import or inspect the graph builders, so that agreement with
ModelGraph.count_params is an independent cross-check.
"""


def conv_count(cin, cout, k):
    return k * k * cin * cout + cout


def dcl_count(c):
    """Dilated 3x3 conv + pointwise conv."""
    return conv_count(c, c, 3) + conv_count(c, c, 1)


def tail_count(cin, c, out):
    return conv_count(cin, c, 1) + conv_count(c, c // 2, 1) + conv_count(c // 2, out, 1)


def mmbsn_inventory(cfg):
    c, n = cfg.base_channels, len(cfg.masks)
    total = conv_count(cfg.in_channels, c, 1)
    for k in cfg.kernel_sizes:
        per_branch = (
            conv_count(c, c, k)                # masked conv
            + 2 * conv_count(c, c, 1)          # skip + stack-input pointwise
            + cfg.cdcl_depth * dcl_count(c)    # short dilated stack
            + conv_count(2 * c, c, 1)          # concat fusion
        )
        total += n * per_branch
        total += conv_count(n * c, c, 1) + cfg.trunk_depth * dcl_count(c)
    return total + tail_count(len(cfg.kernel_sizes) * c, c, cfg.in_channels)


def apbsn_inventory(cfg):
    c = cfg.base_channels
    depth = cfg.cdcl_depth + cfg.trunk_depth
    total = conv_count(cfg.in_channels, c, 1)
    for k in cfg.kernel_sizes:
        total += conv_count(c, c, k) + depth * dcl_count(c)
    return total + tail_count(len(cfg.kernel_sizes) * c, c, cfg.in_channels)


def smmbsn_inventory(cfg):
    c, n = cfg.base_channels, len(cfg.masks)
    depth = cfg.cdcl_depth + cfg.trunk_depth
    per_path = conv_count(cfg.in_channels, c, 1)
    for k in cfg.kernel_sizes:
        per_path += conv_count(c, c, k) + depth * dcl_count(c)
    return n * per_path + tail_count(
        n * len(cfg.kernel_sizes) * c, c, cfg.in_channels
    )
