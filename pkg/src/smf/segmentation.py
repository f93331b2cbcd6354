"""Turn spatial factor columns into labeled regions.

Each column's support (entries above a fraction of its peak magnitude) is
split into 8-connected components; components from different columns that
overlap by more than a fraction of the smaller one merge transitively.
Pixels claimed by several merged groups go to the group with the largest
column magnitude there, so the labeling depends only on the column
values, not their order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

__all__ = ["Component", "SegmentationResult", "segment", "iou", "region_ious"]

_EIGHT = np.ones((3, 3), dtype=int)


@dataclass(frozen=True)
class Component:
    """One merged region: flat pixel indices and contributing columns."""

    pixels: np.ndarray
    columns: tuple[int, ...]


@dataclass(frozen=True)
class SegmentationResult:
    """Label image (0 = background) plus per-label components.

    Label k corresponds to ``components[k - 1]``; labels are numbered by
    the smallest flat pixel index of each merged group, which makes the
    numbering invariant to column order.
    """

    label_image: np.ndarray
    components: tuple[Component, ...]


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def segment(
    v: np.ndarray,
    height: int,
    width: int,
    support_tol: float = 0.05,
    overlap_thresh: float = 0.10,
) -> SegmentationResult:
    """Segment the columns of a spatial factor into labeled regions.

    Parameters
    ----------
    v : ndarray, shape (height*width, k)
        Spatial factor; column magnitudes define supports.
    height, width : int
        Image geometry for reshaping columns.
    support_tol : float
        A pixel belongs to a column's support when its magnitude exceeds
        ``support_tol`` times the column's peak magnitude.
    overlap_thresh : float
        Two components merge when their intersection exceeds this
        fraction of the smaller component.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 2 or v.shape[0] != height * width:
        raise ValueError(f"v must be ({height * width}, k), got {v.shape}")

    raw: list[tuple[frozenset, int]] = []
    for col in range(v.shape[1]):
        mag = np.abs(v[:, col])
        peak = mag.max() if mag.size else 0.0
        if peak <= 0.0:
            continue
        mask = (mag > support_tol * peak).reshape(height, width)
        lab, nlab = ndimage.label(mask, structure=_EIGHT)
        flat = lab.ravel()
        for comp_id in range(1, nlab + 1):
            raw.append((frozenset(np.nonzero(flat == comp_id)[0].tolist()), col))

    uf = _UnionFind(len(raw))
    for a in range(len(raw)):
        for b in range(a + 1, len(raw)):
            pa, pb = raw[a][0], raw[b][0]
            inter = len(pa & pb)
            if inter and inter / min(len(pa), len(pb)) > overlap_thresh:
                uf.union(a, b)

    groups: dict[int, list[int]] = {}
    for i in range(len(raw)):
        groups.setdefault(uf.find(i), []).append(i)

    merged = []
    for members in groups.values():
        pixels: set = set()
        cols: set = set()
        for i in members:
            pixels |= raw[i][0]
            cols.add(raw[i][1])
        merged.append((np.array(sorted(pixels), dtype=np.intp), tuple(sorted(cols))))
    # canonical order: by the smallest pixel index of each group
    merged.sort(key=lambda g: int(g[0][0]))

    label_image = np.zeros(height * width, dtype=int)
    claim_mag = np.zeros(height * width)
    for k, (pixels, cols) in enumerate(merged, start=1):
        mag = np.max(np.abs(v[np.ix_(pixels, list(cols))]), axis=1)
        take = mag > claim_mag[pixels]
        idx = pixels[take]
        label_image[idx] = k
        claim_mag[idx] = mag[take]

    components = tuple(Component(pixels=p, columns=c) for p, c in merged)
    return SegmentationResult(
        label_image=label_image.reshape(height, width), components=components
    )


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two boolean masks (1.0 for two empties)."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum()) / float(union)


def region_ious(true_labels: np.ndarray, seg: SegmentationResult) -> np.ndarray:
    """Best overlap score per true region against the segmentation.

    Entry k-1 is the highest intersection-over-union between true region
    ``k`` and any segmented group.
    """
    true_labels = np.asarray(true_labels)
    if true_labels.shape != seg.label_image.shape:
        raise ValueError("label image shapes differ")
    n_true = int(true_labels.max())
    out = np.zeros(n_true)
    for k in range(1, n_true + 1):
        tmask = true_labels == k
        best = 0.0
        for g in range(1, len(seg.components) + 1):
            best = max(best, iou(tmask, seg.label_image == g))
        out[k - 1] = best
    return out
