"""The six location- and distribution-based saliency scores.

Location-based: AUC-Judd thresholds the prediction at every fixated
pixel's value against all remaining pixels; AUC-Borji averages ROC areas
over seeded random negative sets; NSS is the mean z-scored prediction at
fixation pixels.  Distribution-based (on maps normalized to sum 1): SIM
is the histogram intersection, CC the Pearson correlation over cells,
KL the divergence of the ground truth from the prediction with an
epsilon-guarded denominator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

KL_EPS = 1e-7
AUC_BORJI_SPLITS = 100
AUC_BORJI_SEED = 17


@dataclass
class SaliencyScores:
    auc_judd: float
    auc_borji: float
    nss: float
    sim: float
    cc: float
    kl: float
    degenerate: list = field(default_factory=list)

    def as_dict(self):
        return {
            "AUC_Judd": self.auc_judd,
            "AUC_Borji": self.auc_borji,
            "NSS": self.nss,
            "SIM": self.sim,
            "CC": self.cc,
            "KL": self.kl,
        }


def _distribution(v):
    v = np.asarray(v, dtype=np.float64)
    s = v.sum()
    if s <= 0:
        raise ValueError("map has no mass to normalize")
    return v / s


def nss(pred, fix_mask):
    """Mean of the z-scored prediction at fixated pixels; 0 when the
    prediction has no variance (degenerate, flagged by the caller)."""
    pred = np.asarray(pred, dtype=np.float64)
    std = pred.std()
    if std == 0:
        return 0.0, True
    z = (pred - pred.mean()) / std
    return float(z[fix_mask].mean()), False


def sim(pred, gt):
    p, q = _distribution(pred), _distribution(gt)
    return float(np.minimum(p, q).sum())


def cc(pred, gt):
    p = np.asarray(pred, dtype=np.float64).ravel()
    q = np.asarray(gt, dtype=np.float64).ravel()
    if p.std() == 0 or q.std() == 0:
        return 0.0, True
    return float(np.corrcoef(p, q)[0, 1]), False


def kl(pred, gt, eps=KL_EPS):
    """Divergence of the ground-truth distribution q from the prediction
    p: sum of q * log(q / (p + eps)) over cells with q > 0."""
    p, q = _distribution(pred), _distribution(gt)
    m = q > 0
    return float((q[m] * np.log(q[m] / (p[m] + eps))).sum())


def auc_judd(pred, fix_mask):
    """Threshold sweep at the fixated-pixel values.

    True positive rate comes from fixated pixels, false positive rate
    from all remaining pixels; the curve is integrated by trapezoid.
    """
    pred = np.asarray(pred, dtype=np.float64).ravel()
    fix = np.asarray(fix_mask, dtype=bool).ravel()
    n_fix = int(fix.sum())
    if n_fix == 0:
        raise ValueError("AUC-Judd needs at least one fixated pixel")
    sal_fix = np.sort(pred[fix])[::-1]
    n_rest = pred.size - n_fix
    rest = pred[~fix]
    tp = [0.0]
    fp = [0.0]
    for i, thresh in enumerate(sal_fix):
        tp.append((i + 1) / n_fix)
        fp.append(float((rest >= thresh).sum()) / max(n_rest, 1))
    tp.append(1.0)
    fp.append(1.0)
    return float(np.trapezoid(tp, fp))


def auc_borji(pred, fix_mask, splits=AUC_BORJI_SPLITS, seed=AUC_BORJI_SEED):
    """ROC area against uniformly sampled negative pixel sets, averaged
    over `splits` seeded draws so reports are reproducible."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    fix = np.asarray(fix_mask, dtype=bool).ravel()
    n_fix = int(fix.sum())
    if n_fix == 0:
        raise ValueError("AUC-Borji needs at least one fixated pixel")
    sal_fix = pred[fix]
    rng = np.random.default_rng(seed)
    areas = []
    for _ in range(splits):
        negatives = pred[rng.integers(0, pred.size, size=n_fix)]
        thresholds = np.sort(np.concatenate([sal_fix, negatives]))[::-1]
        tp = [0.0]
        fp = [0.0]
        for thresh in thresholds:
            tp.append(float((sal_fix >= thresh).sum()) / n_fix)
            fp.append(float((negatives >= thresh).sum()) / n_fix)
        tp.append(1.0)
        fp.append(1.0)
        areas.append(np.trapezoid(tp, fp))
    return float(np.mean(areas))


def saliency_metrics(pred_map, gt_map, fix_mask):
    """All six scores for one image.

    `pred_map` / `gt_map` are SaliencyMap-like objects or arrays of the
    same dims; `fix_mask` is the binary map of ground-truth fixation
    pixels.
    """
    pred = np.asarray(getattr(pred_map, "values", pred_map), dtype=np.float64)
    gt = np.asarray(getattr(gt_map, "values", gt_map), dtype=np.float64)
    fix = np.asarray(fix_mask, dtype=bool)
    if pred.shape != gt.shape or pred.shape != fix.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape}, gt {gt.shape}, fixations {fix.shape}")
    degenerate = []
    nss_v, nss_flag = nss(pred, fix)
    if nss_flag:
        degenerate.append("NSS")
    cc_v, cc_flag = cc(pred, gt)
    if cc_flag:
        degenerate.append("CC")
    return SaliencyScores(
        auc_judd=auc_judd(pred, fix),
        auc_borji=auc_borji(pred, fix),
        nss=nss_v,
        sim=sim(pred, gt),
        cc=cc_v,
        kl=kl(pred, gt),
        degenerate=degenerate,
    )
