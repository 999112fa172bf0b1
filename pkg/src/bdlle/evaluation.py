"""F1 scores of a detected point set against collars of the true boundary.

The collar of width r holds every sample whose ground-truth distance to the
boundary is at most r.  ``F1_max`` scans ``r_i = 0.05 i`` for i = 1..k.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GRID_STEP = 0.05
DEFAULT_GRID_K = 40


@dataclass
class F1Report:
    per_r: list
    f1_max: float
    best_r: float
    detector: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {"detector": self.detector, "f1_max": self.f1_max, "best_r": self.best_r,
                "per_r": [[r, f] for r, f in self.per_r], **self.extra}


def r_grid(k=DEFAULT_GRID_K, step=GRID_STEP):
    if k < 1:
        raise ValueError("grid needs k >= 1")
    # round so that 0.05 * 3 is exactly 0.15 in every report
    return [round(step * i, 10) for i in range(1, k + 1)]


def _as_mask(detected, n):
    mask = np.zeros(n, dtype=bool)
    mask[np.asarray(detected, dtype=np.intp)] = True
    return mask


def f1(detected, dist_gt, r):
    """``2 |A & C_r| / (|A| + |C_r|)``; 0 when both sets are empty."""
    if not r > 0:
        raise ValueError("collar width must be positive")
    dist_gt = np.asarray(dist_gt, dtype=float)
    mask = _as_mask(detected, dist_gt.size)
    collar = dist_gt <= r
    denom = int(mask.sum()) + int(collar.sum())
    if denom == 0:
        return 0.0
    return 2.0 * int(np.count_nonzero(mask & collar)) / denom


def _best(per_r):
    best_r, best = per_r[0]
    for r, v in per_r[1:]:
        if v > best:
            best_r, best = r, v
    return best, best_r


def f1_max(detected, dist_gt, grid_k=DEFAULT_GRID_K, detector="") -> F1Report:
    per_r = [(r, f1(detected, dist_gt, r)) for r in r_grid(grid_k)]
    best, best_r = _best(per_r)
    return F1Report(per_r, best, best_r, detector)


def f1_max_cps(cps, dist_gt, grid_k=DEFAULT_GRID_K, detector="cps") -> F1Report:
    """Detection radius and collar width move together: ``{d_hat < r_i}`` against ``C_{r_i}``."""
    d_hat = np.asarray(getattr(cps, "d_hat", cps), dtype=float)
    per_r = [(r, f1(np.flatnonzero(d_hat < r), dist_gt, r)) for r in r_grid(grid_k)]
    best, best_r = _best(per_r)
    return F1Report(per_r, best, best_r, detector)
