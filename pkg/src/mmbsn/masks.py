"""Blind-spot mask geometry and receptive-field exclusion analysis.

A mask is a point-symmetric set of (row, col) kernel offsets that a
convolution is forbidden to read; rendering places those offsets on an
odd k x k kernel.  ``exclusion_set`` answers the structural question "which
input offsets can an output pixel provably never depend on?" for the
canonical stack

    pointwise layers -> one masked conv -> any number of 3x3 convs with a
    fixed dilation -> pointwise layers

and ``empirical_exclusion`` answers the same question numerically for an
actual model by perturbing inputs and demanding exact output equality.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

MASK_TAGS = (
    "o",
    "hbar",
    "vbar",
    "plus",
    "slash",
    "backslash",
    "cross",
    "square",
    "squareplus",
    "star",
)


def shape_offsets(tag, r):
    """Masked (row, col) offsets of a named shape on a kernel of half-width r.

    All shapes contain the center and are symmetric under 180-degree
    rotation.  ``square`` is the full 3x3 central block regardless of r;
    ``squareplus`` and ``star`` are the unions square|plus and plus|cross.
    """
    tag = tag.lower()
    span = range(-r, r + 1)
    if tag == "o":
        offs = {(0, 0)}
    elif tag == "hbar":
        offs = {(0, c) for c in span}
    elif tag == "vbar":
        offs = {(p, 0) for p in span}
    elif tag == "plus":
        offs = shape_offsets("hbar", r) | shape_offsets("vbar", r)
    elif tag == "slash":
        offs = {(t, -t) for t in span}
    elif tag == "backslash":
        offs = {(t, t) for t in span}
    elif tag == "cross":
        offs = shape_offsets("slash", r) | shape_offsets("backslash", r)
    elif tag == "square":
        offs = {(p, c) for p in range(-1, 2) for c in range(-1, 2) if max(abs(p), abs(c)) <= r}
    elif tag == "squareplus":
        offs = shape_offsets("square", r) | shape_offsets("plus", r)
    elif tag == "star":
        offs = shape_offsets("plus", r) | shape_offsets("cross", r)
    else:
        raise ValueError(f"unknown mask shape {tag!r}; known: {', '.join(MASK_TAGS)}")
    return frozenset(offs)


@dataclass(frozen=True)
class KernelMask:
    """A blind-tap pattern on an odd k x k convolution kernel."""

    k: int
    masked: frozenset

    def __post_init__(self):
        r = (self.k - 1) // 2
        if self.k % 2 == 0 or self.k < 1:
            raise ValueError(f"kernel size must be odd and positive, got {self.k}")
        for p, c in self.masked:
            if max(abs(p), abs(c)) > r:
                raise ValueError(f"offset {(p, c)} outside {self.k}x{self.k} support")
        if (0, 0) not in self.masked:
            raise ValueError("a blind-spot mask must cover the center tap")

    @property
    def radius(self):
        return (self.k - 1) // 2

    def unmasked(self):
        r = self.radius
        return frozenset(
            (p, c)
            for p in range(-r, r + 1)
            for c in range(-r, r + 1)
            if (p, c) not in self.masked
        )

    def multiplier(self):
        """(k, k) float array: 0.0 at blind taps, 1.0 elsewhere."""
        m = np.ones((self.k, self.k))
        r = self.radius
        for p, c in self.masked:
            m[p + r, c + r] = 0.0
        return m


def render_mask(shape, k):
    """Realize a named shape (or an explicit offset set) on a k x k kernel.

    k must be odd; k == 1 is legal only for the single-dot shape 'o'.
    A KernelMask of matching size passes through unchanged.
    """
    if isinstance(shape, KernelMask):
        if shape.k != k:
            raise ValueError(f"mask is {shape.k}x{shape.k}, requested {k}x{k}")
        return shape
    if k % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {k}")
    if k == 1 and shape != "o" and frozenset(shape) != frozenset({(0, 0)}):
        raise ValueError("k=1 can only carry the central dot mask 'o'")
    offsets = frozenset(shape) if not isinstance(shape, str) else shape_offsets(shape, (k - 1) // 2)
    return KernelMask(k, frozenset(offsets))


def offsets_within(radius):
    return frozenset(
        (a, b) for a in range(-radius, radius + 1) for b in range(-radius, radius + 1)
    )


def exclusion_set(mask, dilation, radius):
    """Offsets an output pixel cannot depend on, for the canonical stack.

    A masked conv contributes one unmasked tap (p, c); every subsequent
    dilated 3x3 conv shifts by a multiple of the dilation per axis, and
    the shifts compose to (d*u, d*v) for arbitrary integers u, v.  An
    offset (a, b) with max(|a|, |b|) <= radius is reachable iff

        a = d*u + p  and  b = d*v + c

    has a solution with (p, c) unmasked; it is excluded iff no solution
    exists.  Computed by exhaustive enumeration of u, v over the radius.
    """
    if dilation < 1:
        raise ValueError("dilation must be >= 1")
    d = dilation
    hops = (radius + mask.radius) // d + 1
    reached = set()
    for p, c in mask.unmasked():
        for u in range(-hops, hops + 1):
            a = d * u + p
            if abs(a) > radius:
                continue
            for v in range(-hops, hops + 1):
                b = d * v + c
                if abs(b) <= radius:
                    reached.add((a, b))
    return frozenset(offsets_within(radius) - reached)


def min_hops_required(mask, dilation, radius):
    """Dilated-conv layers needed so reachability saturates within radius.

    For each reachable offset, the cheapest decomposition (d*u + p, d*v + c)
    determines how many dilated hops a real network must stack; the maximum
    over the radius is the depth at which empirical probing can agree with
    the unbounded-depth analysis.
    """
    d = dilation
    hops = (radius + mask.radius) // d + 1
    best = {}
    for p, c in mask.unmasked():
        for u in range(-hops, hops + 1):
            a = d * u + p
            if abs(a) > radius:
                continue
            for v in range(-hops, hops + 1):
                b = d * v + c
                if abs(b) > radius:
                    continue
                cost = max(abs(u), abs(v))
                if best.get((a, b), hops + 1) > cost:
                    best[(a, b)] = cost
    return max(best.values(), default=0)


def combined_exclusion(branches, radius):
    """Exclusion set of a model fusing several masked branches.

    Fusing (concatenation plus pointwise layers) unions the dependencies,
    so the provably-independent offsets are the intersection across
    branches.  ``branches`` is an iterable of (KernelMask, dilation).
    """
    result = offsets_within(radius)
    for mask, dilation in branches:
        result &= exclusion_set(mask, dilation, radius)
    return frozenset(result)


def empirical_exclusion(model, radius, trials=3, probes=5, magnitude=1.0, seed=0):
    """Measure a model's exclusion set by input perturbation.

    For each of ``trials`` independent Kaiming re-initializations the model
    is evaluated on a random base image and on copies perturbed at ``probes``
    interior positions.  An offset within ``radius`` counts as excluded iff
    the output at every position that could witness it is exactly equal to
    the unperturbed output, across all trials and probes.  Exactness is not
    a tolerance choice: blind taps hold weights identically zero, so true
    exclusion shows up as bit-level equality.
    """
    # Interior band wide enough that some monotone tap path realizes every
    # structurally reachable offset without leaving the image.
    slack = 6
    if getattr(model, "branches", None):
        slack = max((m.radius + d) for m, d in model.branch_masks()) + 1
    half = radius + slack + 3
    size = 2 * half + 1
    rng = np.random.default_rng(seed)
    reached = set()
    ball = offsets_within(radius)

    probe_model = copy.deepcopy(model)
    for _ in range(trials):
        probe_model.init_params(rng)
        base = rng.uniform(0.0, 1.0, size=(1, model.in_channels, size, size))
        out0 = probe_model.forward(base)
        if out0.shape[2:] != base.shape[2:]:
            raise ValueError(
                f"model output spatial shape {out0.shape[2:]} differs from input {base.shape[2:]}"
            )
        centers = [(half + dy, half + dx) for dy in range(-3, 4) for dx in range(-3, 4)]
        picks = rng.choice(len(centers), size=probes, replace=False)
        for idx in picks:
            qy, qx = centers[idx]
            poked = base.copy()
            poked[0, :, qy, qx] += magnitude
            out = probe_model.forward(poked)
            changed = np.any(out != out0, axis=(0, 1))
            ys, xs = np.nonzero(changed)
            for y, x in zip(ys, xs):
                off = (qy - int(y), qx - int(x))
                if off in ball:
                    reached.add(off)
    return frozenset(ball - reached)
