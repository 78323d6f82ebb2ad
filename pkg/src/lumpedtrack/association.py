"""Greedy feature association and the clipped observation likelihoods.

Every batched routine takes a leading particle axis so that one call scores
all particles against the same set of detections.
"""

from __future__ import annotations

import numpy as np

EPS_OBS = 1e-12


def point_costs(detected, projected, gamma_m):
    """``gamma_m * ||m_k - m_hat_i||^2``; shapes ``(K, 2)`` x ``(..., M, 2)`` -> ``(..., K, M)``."""
    detected = np.asarray(detected, dtype=float).reshape(-1, 2)
    projected = np.asarray(projected, dtype=float)
    diff = detected[:, None, :] - projected[..., None, :, :]
    return gamma_m * np.sum(diff * diff, axis=-1)


def edge_costs(detected, projected, gamma_rho, gamma_phi):
    """``gamma_rho |drho| + gamma_phi |dphi|`` with ``dphi`` wrapped modulo pi.

    When the raw angle difference exceeds pi/2 the projected line is
    re-expressed as ``(-rho, phi -+ pi)`` (the same point set) before
    comparing, so lines on either side of the ``phi = 0`` seam match.
    ``detected`` is ``(K, 2)`` of ``(rho, phi)``; ``projected`` is ``(..., M, 2)``.
    """
    detected = np.asarray(detected, dtype=float).reshape(-1, 2)
    projected = np.asarray(projected, dtype=float)
    rho_d = detected[:, 0][:, None]
    phi_d = detected[:, 1][:, None]
    rho_p = projected[..., None, :, 0]
    phi_p = projected[..., None, :, 1]
    dphi = np.abs(phi_d - phi_p)
    flip = dphi > np.pi / 2
    dphi = np.where(flip, np.pi - dphi, dphi)
    drho = np.where(flip, np.abs(rho_d + rho_p), np.abs(rho_d - rho_p))
    return gamma_rho * drho + gamma_phi * dphi


def greedy_match_batch(costs, c_max):
    """Greedy ascending-cost matching for a batch of cost matrices.

    ``costs`` has shape ``(N, K, M)``; NaN or infinite entries never match
    and only costs strictly below ``c_max`` are accepted.  Returns
    ``(det_idx, proj_idx, matched_cost)`` each of shape ``(N, min(K, M))``;
    unused slots hold ``-1`` / NaN.
    """
    C = np.array(costs, dtype=float)
    N, K, M = C.shape
    L = min(K, M)
    det_idx = np.full((N, L), -1, dtype=int)
    proj_idx = np.full((N, L), -1, dtype=int)
    matched = np.full((N, L), np.nan)
    if L == 0:
        return det_idx, proj_idx, matched
    C[~np.isfinite(C) | (C >= c_max)] = np.inf
    rows = np.arange(N)
    flat = C.reshape(N, K * M)
    for s in range(L):
        j = np.argmin(flat, axis=1)
        best = flat[rows, j]
        ok = np.isfinite(best)
        if not ok.any():
            break
        k, i = np.divmod(j, M)
        det_idx[ok, s] = k[ok]
        proj_idx[ok, s] = i[ok]
        matched[ok, s] = best[ok]
        r = rows[ok]
        C[r, k[ok], :] = np.inf
        C[r, :, i[ok]] = np.inf
    return det_idx, proj_idx, matched


def greedy_match(costs, c_max):
    """Greedy matching of a single ``(K, M)`` cost matrix.

    Returns ``(pairs, pair_costs)`` with pairs ``(detection, projection)`` in
    the order they were accepted.
    """
    costs = np.asarray(costs, dtype=float)
    if costs.size == 0:
        return [], []
    k, i, c = greedy_match_batch(costs[None], c_max)
    keep = k[0] >= 0
    pairs = [(int(a), int(b)) for a, b in zip(k[0][keep], i[0][keep])]
    return pairs, [float(x) for x in c[0][keep]]


def _as_uv(features):
    if len(features) == 0:
        return np.zeros((0, 2))
    first = features[0]
    if hasattr(first, "uv"):
        return np.array([f.uv for f in features], dtype=float)
    return np.asarray(features, dtype=float).reshape(-1, 2)


def _as_lines(features):
    if len(features) == 0:
        return np.zeros((0, 2))
    first = features[0]
    if hasattr(first, "rho"):
        return np.array([[f.rho, f.phi] for f in features], dtype=float)
    return np.asarray(features, dtype=float).reshape(-1, 2)


def associate_points(detected, projected, gamma_m, c_max):
    """Match detected to projected pixel points; returns ``(pairs, costs)``."""
    det = _as_uv(detected)
    proj = _as_uv(projected)
    if len(det) == 0 or len(proj) == 0:
        return [], []
    return greedy_match(point_costs(det, proj, gamma_m), c_max)


def associate_edges(detected, projected, gamma_rho, gamma_phi, c_max):
    """Match detected to projected Hough lines; returns ``(pairs, costs)``."""
    det = _as_lines(detected)
    proj = _as_lines(projected)
    if len(det) == 0 or len(proj) == 0:
        return [], []
    return greedy_match(edge_costs(det, proj, gamma_rho, gamma_phi), c_max)


def clipped_likelihood(matched_costs, n_features, c_max):
    """``(n - |A|) e^{-c_max} + sum_A e^{-C}``; unnormalised.

    ``matched_costs`` is a sequence of accepted costs, or an ``(N, L)`` array
    with NaN for unused slots (then the result has shape ``(N,)``).
    """
    c = np.asarray(matched_costs, dtype=float)
    if c.ndim <= 1:
        c = c.reshape(-1)
        used = np.isfinite(c)
        return float((n_features - used.sum()) * np.exp(-c_max) + np.exp(-c[used]).sum())
    used = np.isfinite(c)
    terms = np.where(used, np.exp(-np.where(used, c, 0.0)), 0.0)
    return (n_features - used.sum(axis=1)) * np.exp(-c_max) + terms.sum(axis=1)


def point_obs_likelihood(pair_costs, n_m, c_max_m):
    return clipped_likelihood(pair_costs, n_m, c_max_m)


def edge_obs_likelihood(pair_costs, n_l, c_max_l):
    return clipped_likelihood(pair_costs, n_l, c_max_l)


def confidence_point_likelihood(detected, landmark_ids, confidences, projected, gamma_m,
                                projected_valid=None):
    """Confidence-weighted likelihood for pre-associated point detections.

    ``sum_k eta_k exp(-gamma_m ||m_k - m_hat_{a_k}||) + EPS_OBS`` (the norm is
    not squared).  ``projected`` is ``(M, 2)`` or ``(N, M, 2)``; detections
    whose landmark projection is invalid contribute nothing.
    """
    det = np.asarray(detected, dtype=float).reshape(-1, 2)
    ids = np.asarray(landmark_ids, dtype=int).reshape(-1)
    eta = np.asarray(confidences, dtype=float).reshape(-1)
    proj = np.asarray(projected, dtype=float)
    single = proj.ndim == 2
    if single:
        proj = proj[None]
        if projected_valid is not None:
            projected_valid = np.asarray(projected_valid)[None]
    if len(det) == 0:
        out = np.full(proj.shape[0], EPS_OBS)
        return float(out[0]) if single else out
    sel = proj[:, ids, :]
    dist = np.linalg.norm(det[None] - sel, axis=-1)
    ok = np.isfinite(dist)
    if projected_valid is not None:
        ok &= np.asarray(projected_valid)[:, ids]
    terms = np.where(ok, eta * np.exp(-gamma_m * np.where(ok, dist, 0.0)), 0.0)
    out = terms.sum(axis=1) + EPS_OBS
    return float(out[0]) if single else out
