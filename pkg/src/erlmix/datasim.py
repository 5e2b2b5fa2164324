"""Synthetic survival data from lognormal mixtures, exponential censoring
with a rate calibrated to a target censored fraction, and CSV ingestion."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtr

from erlmix.errors import ConfigError, DataError
from erlmix.mixture import GROUP_C, GROUP_T, GROUP_NAMES, SurvivalDataset
from erlmix.special import LogNormalParams

KAPPA_CAP = 1e9

_GROUP_TOKENS = {
    "c": GROUP_C,
    "control": GROUP_C,
    "t": GROUP_T,
    "treatment": GROUP_T,
}


@dataclass(frozen=True)
class GeneratorSpec:
    """Lognormal mixture sampler: components are (weight, LogNormalParams);
    censoring_target, when set, is the desired censored fraction g."""

    components: tuple[tuple[float, LogNormalParams], ...]
    n: int
    group: int | None = None
    censoring_target: float | None = None

    def __post_init__(self):
        comps = tuple((float(w), p) for w, p in self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise ConfigError("need at least one mixture component")
        weights = [w for w, _ in comps]
        if any(w <= 0 for w in weights):
            raise ConfigError("component weights must be positive")
        if abs(math.fsum(weights) - 1.0) > 1e-9:
            raise ConfigError("component weights must sum to 1")
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.group is not None and self.group not in (GROUP_C, GROUP_T):
            raise ConfigError("group must be C (0) or T (1)")
        if self.censoring_target is not None and not 0.0 <= self.censoring_target < 1.0:
            raise ConfigError("censoring_target must lie in [0, 1)")

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.components])

    def mixture_pdf(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for w, p in self.components:
            z = (np.log(t) - p.mu) / p.sigma
            out += w * np.exp(-0.5 * z * z) / (t * p.sigma * math.sqrt(2 * math.pi))
        return out

    def mixture_sf(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for w, p in self.components:
            out += w * ndtr(-(np.log(t) - p.mu) / p.sigma)
        return out

    def true_curves(self, grid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Analytic density, survival and hazard of the generating mixture."""
        f = self.mixture_pdf(grid)
        S = self.mixture_sf(grid)
        return f, S, f / S


def censored_fraction(spec: GeneratorSpec, kappa: float) -> float:
    """P(c < t) with c ~ Exp(mean kappa): 1 - E[e^{-t/kappa}] by quadrature."""
    total = 0.0
    for w, p in spec.components:
        val, _ = quad(
            lambda z: math.exp(-math.exp(p.mu + p.sigma * z) / kappa)
            * math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi),
            -9.0, 9.0, limit=200,
        )
        total += w * val
    return 1.0 - total


def calibrate_kappa(spec: GeneratorSpec) -> float:
    """Bisection on the exponential censoring mean so the censored fraction
    matches spec.censoring_target within 1e-3."""
    target = spec.censoring_target
    if target is None:
        raise ConfigError("spec has no censoring_target")
    if target < 1e-4:
        warnings.warn("censoring target below 1e-4; returning the kappa cap")
        return KAPPA_CAP
    lo, hi = 1e-9, KAPPA_CAP
    if censored_fraction(spec, hi) > target:
        return hi
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        g = censored_fraction(spec, mid)
        if abs(g - target) <= 1e-3:
            return mid
        if g > target:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


def generate(spec: GeneratorSpec, rng) -> SurvivalDataset:
    """Draw survival times from the mixture; with a censoring target set,
    apply independent exponential censoring (ties t = c count as observed)."""
    comp = rng.choice(len(spec.components), size=spec.n, p=spec.weights)
    mus = np.array([p.mu for _, p in spec.components])
    sigmas = np.array([p.sigma for _, p in spec.components])
    t = np.exp(mus[comp] + sigmas[comp] * rng.standard_normal(spec.n))
    if spec.censoring_target is not None and spec.censoring_target > 0.0:
        kappa = calibrate_kappa(spec)
        c = rng.exponential(kappa, size=spec.n)
        y = np.minimum(t, c)
        nu = (t <= c).astype(np.int8)
    else:
        y = t
        nu = np.ones(spec.n, dtype=np.int8)
    x = None if spec.group is None else np.full(spec.n, spec.group, dtype=np.int8)
    return SurvivalDataset(y=y, nu=nu, x=x)


def concat_datasets(parts: list[SurvivalDataset]) -> SurvivalDataset:
    y = np.concatenate([p.y for p in parts])
    nu = np.concatenate([p.nu for p in parts])
    if all(p.x is not None for p in parts):
        x = np.concatenate([p.x for p in parts])
    elif any(p.x is not None for p in parts):
        raise DataError("cannot mix grouped and ungrouped records")
    else:
        x = None
    return SurvivalDataset(y=y, nu=nu, x=x)


def load_csv(path) -> SurvivalDataset:
    """Parse `time,status[,group]` with status 1=event, 0=censored and group
    tokens C/T/control/treatment (case-insensitive). Errors carry the
    offending line number."""
    ys: list[float] = []
    nus: list[int] = []
    xs: list[int] = []
    try:
        fh_probe = open(path, newline="", encoding="utf-8")
        fh_probe.close()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        cols = [c.strip().lower() for c in header]
        if cols[:2] != ["time", "status"] or len(cols) > 3 or (len(cols) == 3 and cols[2] != "group"):
            raise DataError(f"{path}: header must be time,status[,group], got {header!r}")
        has_group = len(cols) == 3
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(cols):
                raise DataError(f"{path}:{lineno}: expected {len(cols)} fields, got {len(row)}")
            try:
                y = float(row[0])
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad time value {row[0]!r}") from None
            if not (y > 0 and math.isfinite(y)):
                raise DataError(f"{path}:{lineno}: time must be positive, got {row[0]!r}")
            status = row[1].strip()
            if status not in ("0", "1"):
                raise DataError(f"{path}:{lineno}: status must be 0 or 1, got {row[1]!r}")
            if has_group:
                token = row[2].strip().lower()
                if token not in _GROUP_TOKENS:
                    raise DataError(
                        f"{path}:{lineno}: unknown group {row[2]!r} "
                        "(accepted: C, T, control, treatment)"
                    )
                xs.append(_GROUP_TOKENS[token])
            ys.append(y)
            nus.append(int(status))
    if not ys:
        raise DataError(f"{path}: no data rows")
    return SurvivalDataset(
        y=np.array(ys),
        nu=np.array(nus, dtype=np.int8),
        x=np.array(xs, dtype=np.int8) if xs else None,
    )


def write_csv(data: SurvivalDataset, path) -> None:
    """Write a dataset at full float precision (repr round-trips exactly)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if data.x is not None:
            writer.writerow(["time", "status", "group"])
            for y, nu, x in zip(data.y, data.nu, data.x):
                writer.writerow([repr(float(y)), int(nu), GROUP_NAMES[int(x)]])
        else:
            writer.writerow(["time", "status"])
            for y, nu in zip(data.y, data.nu):
                writer.writerow([repr(float(y)), int(nu)])
