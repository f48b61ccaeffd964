"""Shared test helpers."""

import numpy as np


def replay_cm_shadow(trace, sigma_c, theta, p):
    """Dense O(p^3) shadow of one covariance-matching update.

    Rebuilds the crumb and proposal precisions densely from the recorded
    (alpha, direction) sequence and checks the factor path, the running
    weighted crumb sum, and the proposal mean against them. Returns the number
    of crumb events checked.
    """
    lam = np.eye(p) / sigma_c**2
    w = lam.copy()
    cstar = np.zeros(p)
    checked = 0
    for rec in trace:
        assert np.linalg.norm(
            rec.crumb_factor.T @ rec.crumb_factor - w
        ) <= 1e-8 * np.linalg.norm(w)
        assert np.linalg.norm(
            rec.proposal_factor.T @ rec.proposal_factor - lam
        ) <= 1e-8 * np.linalg.norm(lam)
        cstar = cstar + w @ rec.crumb
        cbar_dense = np.linalg.solve(lam, cstar)
        scale = max(1.0, np.linalg.norm(cbar_dense))
        assert np.linalg.norm(rec.cbar - cbar_dense) <= 1e-8 * scale
        checked += 1
        if rec.accepted:
            break
        alpha = rec.alpha if rec.alpha is not None else 0.0
        bump = (
            alpha * np.outer(rec.gradient_direction, rec.gradient_direction)
            if alpha > 0
            else 0.0
        )
        w = theta * lam + bump
        lam = (1 + theta) * lam + bump
    return checked
