"""Shared finite-difference Jacobian check used by the acceptance suite."""

import numpy as np

import afcsim as a


def _central_fd(model, params, x, rel=1e-6):
    params = np.asarray(params, dtype=float)
    cols = []
    for i in range(params.size):
        h = rel * max(abs(params[i]), 1e-30)
        up, dn = params.copy(), params.copy()
        up[i] += h
        dn[i] -= h
        cols.append((model.evaluate(up, x) - model.evaluate(dn, x)) / (2 * h))
    return np.stack(cols, axis=1)


def max_jacobian_error(n_points: int = 100, seed: int = 31) -> float:
    """Largest column-scaled deviation between analytic and central
    finite-difference Jacobians over random parameter points of all three
    model families."""
    rng = np.random.default_rng(seed)
    worst = 0.0

    dexp = a.model_double_exponential()
    for _ in range(n_points):
        params = np.array([rng.uniform(0.1, 2), rng.uniform(0.01, 0.2),
                           rng.uniform(0.1, 2), rng.uniform(0.5, 5)])
        x = np.geomspace(0.01, 5, 17)
        jac = dexp.jacobian(params, x)
        ref = _central_fd(dexp, params, x)
        scale = np.maximum(np.abs(ref).max(axis=0), 1e-30)
        worst = max(worst, float(np.max(np.abs(jac - ref) / scale)))

    dip = a.model_lorentzian_dip()
    for _ in range(n_points):
        params = np.array([rng.uniform(0.5, 3), rng.uniform(0.1, 2),
                           rng.uniform(-10, 10), rng.uniform(1, 8)])
        x = np.linspace(-30, 30, 41)
        jac = dip.jacobian(params, x)
        ref = _central_fd(dip, params, x)
        scale = np.maximum(np.abs(ref).max(axis=0), 1e-30)
        worst = max(worst, float(np.max(np.abs(jac - ref) / scale)))

    ff = a.model_flipflop_field()
    for _ in range(n_points):
        params = np.array([rng.uniform(0.1e9, 1e9), rng.uniform(1e9, 3e10)])
        x = np.linspace(0.01, 0.5, 13)
        jac = ff.jacobian(params, x)
        ref = _central_fd(ff, params, x)
        scale = np.maximum(np.abs(ref).max(axis=0), 1e-30)
        worst = max(worst, float(np.max(np.abs(jac - ref) / scale)))

    return worst
