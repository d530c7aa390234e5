"""Error metrics and dataset-level reports for thickness maps."""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError
from .imageio import read_pfm
from .streamline import ThicknessMap


class EmptyRegionWarning(UserWarning):
    pass


def _arrays(pred, gt):
    p = pred.thickness if isinstance(pred, ThicknessMap) else np.asarray(pred, dtype=float)
    g = gt.thickness if isinstance(gt, ThicknessMap) else np.asarray(gt, dtype=float)
    if p.shape != g.shape:
        raise DomainError(f"geometry mismatch: {p.shape} vs {g.shape}")
    return p.astype(float), g.astype(float)


def _region(region, shape):
    if isinstance(region, str):
        if region != "whole":
            raise ValueError(f"region must be a mask or 'whole', got {region!r}")
        return np.ones(shape, dtype=bool)
    sel = region.wall if hasattr(region, "wall") else np.asarray(region, dtype=bool)
    if sel.shape != shape:
        raise DomainError(f"region {sel.shape} does not match maps {shape}")
    return sel


def _reduce(pred, gt, region, power):
    p, g = _arrays(pred, gt)
    sel = _region(region, p.shape)
    if not sel.any():
        warnings.warn("empty evaluation region; reporting 0", EmptyRegionWarning, stacklevel=3)
        return 0.0
    d = np.abs(p[sel] - g[sel])
    return float(np.mean(d ** power))


def mae(pred, gt, region="whole") -> float:
    """Mean absolute error over the region's wall pixels, or every pixel for ``"whole"``."""
    return _reduce(pred, gt, region, 1)


def mse(pred, gt, region="whole") -> float:
    return _reduce(pred, gt, region, 2)


def max_thickness(tmap) -> float:
    arr = tmap.thickness if isinstance(tmap, ThicknessMap) else np.asarray(tmap)
    return float(arr.max(initial=0.0))


def histogram(values, bin_width: float, value_range: tuple[float, float]) -> np.ndarray:
    """Counts in half-open bins [lo + k*w, lo + (k+1)*w); out-of-range values land in the edge bins."""
    lo, hi = value_range
    if not bin_width > 0 or not lo < hi:
        raise ValueError("need bin_width > 0 and lo < hi")
    nbins = max(1, math.ceil((hi - lo) / bin_width - 1e-12))
    counts = np.zeros(nbins, dtype=int)
    v = np.asarray(list(values), dtype=float)
    if v.size:
        idx = np.clip(np.floor((v - lo) / bin_width).astype(int), 0, nbins - 1)
        np.add.at(counts, idx, 1)
    return counts


def histogram_csv(counts, bin_width: float, value_range: tuple[float, float]) -> str:
    lo = value_range[0]
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["bin_lo", "bin_hi", "count"])
    for k, c in enumerate(counts):
        wr.writerow([f"{lo + k * bin_width:g}", f"{lo + (k + 1) * bin_width:g}", int(c)])
    return buf.getvalue()


def fmt_mean_std(mean: float, std: float) -> str:
    """Table-style ``mean(std)`` with three decimals, e.g. ``0.321(0.060)``."""
    return f"{mean:.3f}({std:.3f})"


@dataclass
class EvalReport:
    per_image: list[tuple[str, float, float, float]] = field(default_factory=list)
    mae_mean: float = 0.0
    mae_std: float = 0.0
    mse_mean: float = 0.0
    mse_std: float = 0.0
    region: str = "wall"

    @classmethod
    def from_rows(cls, rows, region="wall") -> "EvalReport":
        rows = list(rows)
        if rows:
            maes = np.array([r[1] for r in rows])
            mses = np.array([r[2] for r in rows])
            # population std (ddof=0)
            return cls(rows, float(maes.mean()), float(maes.std()), float(mses.mean()), float(mses.std()), region)
        return cls([], region=region)

    @property
    def mae_str(self) -> str:
        return fmt_mean_std(self.mae_mean, self.mae_std)

    @property
    def mse_str(self) -> str:
        return fmt_mean_std(self.mse_mean, self.mse_std)

    def to_json(self) -> str:
        doc = {
            "note": "std is the population standard deviation (ddof=0)",
            "region": self.region,
            "count": len(self.per_image),
            "mae": self.mae_str,
            "mse": self.mse_str,
            "mae_mean": self.mae_mean,
            "mae_std": self.mae_std,
            "mse_mean": self.mse_mean,
            "mse_std": self.mse_std,
            "per_image": [
                {"id": i, "mae_mm": a, "mse_mm": s, "max_thickness_mm": m} for i, a, s, m in self.per_image
            ],
        }
        return json.dumps(doc, indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["id", "mae_mm", "mse_mm", "max_thickness_mm"])
        for i, a, s, m in self.per_image:
            wr.writerow([i, f"{a:.6f}", f"{s:.6f}", f"{m:.6f}"])
        return buf.getvalue()


def _load_map(directory: Path, ident: str, role: str) -> np.ndarray:
    path = directory / f"{ident}.pfm"
    if not path.is_file():
        raise FileNotFoundError(f"{role} map missing for id {ident}: {path}")
    return read_pfm(path.read_bytes()).astype(float)


def _eval_one(args):
    ident, pred_dir, gt_dir, whole = args
    pred = _load_map(Path(pred_dir), ident, "prediction")
    gt = _load_map(Path(gt_dir), ident, "ground-truth")
    region = "whole" if whole else gt > 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmptyRegionWarning)
        return (ident, mae(pred, gt, region), mse(pred, gt, region), max_thickness(gt))


def eval_dataset(pred_dir, gt_dir, manifest, whole: bool = False, jobs: int = 1) -> EvalReport:
    """Per-image MAE/MSE of ``pred_dir/{id}.pfm`` against ``gt_dir/{id}.pfm``.

    ``manifest`` is a manifest CSV path or an iterable of ids / manifest
    entries.  The region is the ground-truth wall support unless ``whole``.
    """
    from .synth import read_manifest

    if isinstance(manifest, (str, Path)):
        ids = [e.id for e in read_manifest(manifest)]
    else:
        ids = [getattr(e, "id", e) for e in manifest]
    tasks = [(i, str(pred_dir), str(gt_dir), whole) for i in ids]
    if jobs > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_eval_one, tasks))
    else:
        rows = [_eval_one(t) for t in tasks]
    return EvalReport.from_rows(rows, "whole" if whole else "wall")
