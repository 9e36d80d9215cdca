"""Posterior MDS embedding of terminal-node proximities.

Each retained iteration's proximity matrix is embedded with classical MDS
and rotated onto the target iteration's configuration (orthogonal
Procrustes, reflections allowed, no scaling). Every observation then has a
cloud of aligned positions summarized by a centroid and a 95% ellipse.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

CHI2_95_2DF = 5.991464547107979


class DegenerateEmbeddingWarning(UserWarning):
    pass


class AlignmentError(ValueError):
    pass


def proximity_to_distance(P) -> np.ndarray:
    D = 1.0 - np.asarray(P, dtype=float)
    np.fill_diagonal(D, 0.0)
    return D


def classical_mds(D, dims=2, *, tol=1e-10) -> np.ndarray:
    """Torgerson embedding of a distance matrix.

    Columns whose eigenvalue is not positive are returned as zeros (with a
    warning when the eigenvalue is materially negative, or when no positive
    eigenvalue exists at all). Each column is signed so that its
    largest-magnitude entry is positive.
    """
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError(f"distance matrix must be square, got {D.shape}")
    if not np.allclose(D, D.T, atol=1e-12, rtol=0):
        raise ValueError("distance matrix is not symmetric")
    if (D < 0).any():
        raise ValueError("distance matrix has negative entries")
    n = D.shape[0]
    J = np.eye(n) - 1.0 / n
    B = -0.5 * J @ (D * D) @ J
    B = (B + B.T) / 2
    evals, evecs = np.linalg.eigh(B)
    order = np.argsort(evals)[::-1][:dims]
    evals, evecs = evals[order], evecs[:, order]
    scale = max(abs(evals).max(initial=0.0), 1.0)
    positive = evals > tol * scale
    coords = np.zeros((n, dims))
    idx = np.flatnonzero(positive)
    coords[:, idx] = evecs[:, idx] * np.sqrt(evals[idx])
    if (evals < -tol * scale * 1e3).any() or not positive.any():
        warnings.warn(
            f"MDS: {int((~positive).sum())} of {dims} leading eigenvalues are not positive; "
            "those coordinates are zero",
            DegenerateEmbeddingWarning,
            stacklevel=2,
        )
    for c in range(dims):
        col = coords[:, c]
        i = np.argmax(np.abs(col))
        if col[i] < 0:
            coords[:, c] = -col
    return coords


def procrustes_align(source, target):
    """Orthogonal Q minimizing ||S_c Q - T_c||_F for centered configurations.

    Returns ``(Q, aligned, residual)`` where ``aligned = S_c Q + mean(target)``.
    """
    S = np.asarray(source, dtype=float)
    T = np.asarray(target, dtype=float)
    if S.shape != T.shape or S.ndim != 2 or S.shape[0] < 2:
        raise ValueError(f"need equal n x d shapes with n >= 2, got {S.shape} and {T.shape}")
    Sc = S - S.mean(axis=0)
    Tc = T - T.mean(axis=0)
    if np.allclose(Sc, 0.0, atol=1e-14):
        raise AlignmentError("all source points coincide; rotation is undefined")
    U, _, Vt = np.linalg.svd(Sc.T @ Tc)
    Q = U @ Vt
    aligned_c = Sc @ Q
    residual = float(np.linalg.norm(aligned_c - Tc))
    return Q, aligned_c + T.mean(axis=0), residual


@dataclass(frozen=True)
class Ellipse:
    center: tuple[float, float]
    cov: tuple[tuple[float, float], tuple[float, float]]
    semi_axes: tuple[float, float]  # major, minor
    angle: float  # radians, direction of the major axis

    @property
    def area(self):
        return float(np.pi * self.semi_axes[0] * self.semi_axes[1])

    def contains(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float) - np.asarray(self.center)
        c, s = np.cos(self.angle), np.sin(self.angle)
        u = pts[:, 0] * c + pts[:, 1] * s
        v = -pts[:, 0] * s + pts[:, 1] * c
        a, b = self.semi_axes
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(a > 0, (u / a) ** 2, np.where(u == 0, 0, np.inf)) + np.where(
                b > 0, (v / b) ** 2, np.where(v == 0, 0, np.inf))
        return r <= 1.0


def confidence_ellipse(points, chi2=CHI2_95_2DF) -> Ellipse:
    pts = np.asarray(points, dtype=float)
    center = pts.mean(axis=0)
    cov = np.cov(pts.T) if pts.shape[0] > 1 else np.zeros((2, 2))
    evals, evecs = np.linalg.eigh(cov)
    evals = np.clip(evals[::-1], 0.0, None)
    lead = evecs[:, -1]
    angle = float(np.arctan2(lead[1], lead[0]))
    axes = np.sqrt(chi2 * evals)
    return Ellipse((float(center[0]), float(center[1])),
                   ((float(cov[0, 0]), float(cov[0, 1])), (float(cov[1, 0]), float(cov[1, 1]))),
                   (float(axes[0]), float(axes[1])), angle)


@dataclass(frozen=True, eq=False)
class EmbeddingResult:
    per_iter: np.ndarray  # K' x n x 2 aligned coordinates
    iterations: list[int]
    target: int
    centroids: np.ndarray  # n x 2
    ellipses: list[Ellipse]
    labels: np.ndarray | None
    degenerate: list[int]  # iterations whose solution collapsed to a point

    def to_json(self, include_points=False):
        out = {
            "target": self.target,
            "iterations": list(self.iterations),
            "centroids": self.centroids.tolist(),
            "ellipses": [
                {"center": list(e.center), "cov": [list(r) for r in e.cov],
                 "semi_axes": list(e.semi_axes), "angle": e.angle}
                for e in self.ellipses
            ],
            "labels": None if self.labels is None else self.labels.tolist(),
            "degenerate": list(self.degenerate),
        }
        if include_points:
            out["per_iter"] = self.per_iter.tolist()
        return out


def build_embedding(prox_series, target_iteration: int, labels=None) -> EmbeddingResult:
    """MDS each proximity matrix and align every solution to the target's.

    ``prox_series`` is a :class:`~bartviz.analytics.ProximitySeries` or a
    sequence of matrices (then ``target_iteration`` indexes that sequence).
    """
    iterations = list(getattr(prox_series, "iterations", range(len(prox_series))))
    if not iterations:
        raise ValueError("empty proximity series")
    if target_iteration not in iterations:
        raise ValueError(f"target iteration {target_iteration} is not in the series")
    ti = iterations.index(target_iteration)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DegenerateEmbeddingWarning)
        target = classical_mds(proximity_to_distance(prox_series[ti]))
        sols, degenerate = [], []
        for i, k in enumerate(iterations):
            X = target if i == ti else classical_mds(proximity_to_distance(prox_series[i]))
            if i == ti:
                sols.append(X)
                continue
            try:
                sols.append(procrustes_align(X, target)[1])
            except AlignmentError:
                degenerate.append(k)
                sols.append(X - X.mean(axis=0) + target.mean(axis=0))
    if caught or degenerate:
        warnings.warn(
            f"degenerate MDS solutions in {len(set(degenerate)) or len(caught)} iteration(s)",
            DegenerateEmbeddingWarning,
            stacklevel=2,
        )
    pts = np.stack(sols)
    centroids = pts.mean(axis=0)
    ellipses = [confidence_ellipse(pts[:, i, :]) for i in range(pts.shape[1])]
    return EmbeddingResult(pts, iterations, target_iteration, centroids, ellipses,
                           None if labels is None else np.asarray(labels), degenerate)
