"""Executable theory checks.

* Hankel-window construction and the LTI softmax/entropic-DeePC equivalence,
  including the nearest-neighbor (bandwidth -> 0) and uniform-averaging
  (bandwidth -> inf) limits.
* Pointwise consistency of the kernel regression estimate (MSE shrinks with
  dataset size under the standard bandwidth rule).
* Bias/variance scaling of the kernel estimate: squared bias ~ h^4,
  variance ~ 1/(N h^d).

All checks are seeded Monte-Carlo procedures returning plain-dict reports
with explicit pass/fail booleans, serializable to JSON/CSV by the CLI.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .numcore import RngStream, normalize_log_weights


# ---------------------------------------------------------------------------
# Hankel windows and entropic-DeePC equivalence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HankelWindows:
    """Overlapping windows of one long trajectory, split past/future.

    ``U_f`` has one column per window holding that window's last H inputs
    (stacked row-major over time).
    """

    U_p: np.ndarray
    U_f: np.ndarray
    X_p: np.ndarray
    X_f: np.ndarray
    t_ini: int
    horizon: int

    @property
    def n_windows(self) -> int:
        return self.U_f.shape[1]


def build_hankel(u_long: np.ndarray, x_long: np.ndarray, t_ini: int,
                 horizon: int) -> HankelWindows:
    """Cut L samples into L - t_ini - horizon + 1 overlapping windows."""
    u_long = np.atleast_2d(np.asarray(u_long, dtype=float).T).T
    x_long = np.atleast_2d(np.asarray(x_long, dtype=float).T).T
    L = u_long.shape[0]
    if x_long.shape[0] != L:
        raise DimensionError("input and state sequences must have equal length")
    win = t_ini + horizon
    if L < win:
        raise DimensionError(f"need L >= t_ini + horizon = {win}, got {L}")
    n = L - win + 1
    m, p = u_long.shape[1], x_long.shape[1]
    U = np.empty((win * m, n))
    X = np.empty((win * p, n))
    for k in range(n):
        U[:, k] = u_long[k:k + win].ravel()
        X[:, k] = x_long[k:k + win].ravel()
    return HankelWindows(U_p=U[: t_ini * m], U_f=U[t_ini * m:],
                         X_p=X[: t_ini * p], X_f=X[t_ini * p:],
                         t_ini=t_ini, horizon=horizon)


def _entropic_stationarity_residual(costs: np.ndarray, beta: float) -> float:
    """Gradient norm, in the unconstrained log-simplex parameterization, of

        F(a) = sum_j a_j * costs_j + 2 beta^2 * KL(a || 1/N)

    at the softmax point a_j ~ exp(-costs_j / (2 beta^2)). The log-weights
    are kept in the log domain throughout so tiny probabilities stay exact.
    """
    n = len(costs)
    logits = -costs / (2.0 * beta ** 2)
    shifted = logits - logits.max()
    log_z = np.log(np.sum(np.exp(shifted)))
    log_alpha = shifted - log_z
    alpha = np.exp(log_alpha)
    grad_alpha = costs + 2.0 * beta ** 2 * (np.log(n) + log_alpha + 1.0)
    grad_logit = alpha * (grad_alpha - np.dot(alpha, grad_alpha))
    return float(np.max(np.abs(grad_logit)))


def simulate_lti(A: np.ndarray, B: np.ndarray, L: int, rng: RngStream):
    """One persistently exciting (Gaussian-input) trajectory of length L."""
    gen = rng.generator()
    n = A.shape[0]
    m = B.shape[1] if B.ndim == 2 else 1
    B = B.reshape(n, m)
    u = gen.standard_normal((L, m))
    x = np.zeros((L, n))
    for t in range(L - 1):
        x[t + 1] = A @ x[t] + B @ u[t]
    return u, x


def deepc_equivalence_check(A, B, L: int = 200, t_ini: int = 4, horizon: int = 10,
                            beta_grid=(0.3, 1.0, 3.0), rng: RngStream | None = None,
                            n_queries: int = 100) -> dict:
    """Verify the softmax weights over Hankel columns against the entropic-
    regularized objective, its two bandwidth limits, and the column-span
    property of the resulting prediction."""
    rng = rng or RngStream(0)
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    u, x = simulate_lti(A, B, L, rng.child("sim"))
    hankel = build_hankel(u, x, t_ini, horizon)
    U_f = hankel.U_f
    n_win = hankel.n_windows

    full_rank = np.linalg.matrix_rank(np.vstack([hankel.U_p, hankel.U_f])) == (
        hankel.U_p.shape[0] + hankel.U_f.shape[0])

    gen = rng.child("queries").generator()
    col_scale = np.median(np.linalg.norm(
        U_f[:, gen.integers(n_win, size=200)]
        - U_f[:, gen.integers(n_win, size=200)], axis=0))
    queries = gen.standard_normal((n_queries, U_f.shape[0])) * col_scale

    max_residual = 0.0
    nn_hits = 0
    uniform_dev = 0.0
    max_span_residual = 0.0
    for q in queries:
        costs = np.sum((U_f - q[:, None]) ** 2, axis=0)
        for beta in beta_grid:
            b = beta * col_scale
            max_residual = max(max_residual,
                               _entropic_stationarity_residual(costs, b))
            alpha = normalize_log_weights(-costs / (2 * b ** 2)).normalized
            y_hat = U_f @ alpha
            sol, *_ = np.linalg.lstsq(U_f, y_hat, rcond=None)
            max_span_residual = max(max_span_residual,
                                    float(np.linalg.norm(U_f @ sol - y_hat)))
        # bandwidth limits
        b_small = 1e-4 * col_scale
        alpha_small = normalize_log_weights(-costs / (2 * b_small ** 2)).normalized
        nn_hits += int(np.argmax(alpha_small) == np.argmin(costs))
        b_big = 1e3 * col_scale
        alpha_big = normalize_log_weights(-costs / (2 * b_big ** 2)).normalized
        uniform_dev = max(uniform_dev,
                          float(np.max(np.abs(alpha_big - 1.0 / n_win))))

    return {
        "n_windows": n_win,
        "persistently_exciting": bool(full_rank),
        "stationarity_residual": max_residual,
        "stationarity_ok": max_residual < 1e-6,
        "nn_limit_hits": nn_hits,
        "nn_limit_ok": nn_hits == n_queries,
        "uniform_limit_deviation": uniform_dev,
        "uniform_limit_ok": uniform_dev < 1e-6,
        "span_residual": max_span_residual,
        "span_ok": max_span_residual < 1e-10,
        "n_queries": n_queries,
        "passed": bool(full_rank and max_residual < 1e-6
                       and nn_hits == n_queries and uniform_dev < 1e-6
                       and max_span_residual < 1e-10),
    }


# ---------------------------------------------------------------------------
# kernel regression consistency and MSE scaling
# ---------------------------------------------------------------------------

def nw_regress(z_query: np.ndarray, z_data: np.ndarray, v_data: np.ndarray,
               h: float) -> float:
    """Plain Gaussian-kernel regression estimate at one query point."""
    z_data = np.atleast_2d(z_data.T).T
    z_query = np.atleast_1d(z_query)
    sq = np.sum((z_data - z_query) ** 2, axis=1)
    w = np.exp(-sq / (2 * h ** 2))
    s = w.sum()
    if s == 0:
        return float("nan")
    return float(np.dot(w, v_data) / s)


def _default_target(z):
    return np.sin(np.pi * z[..., 0])


def nw_consistency_check(target_fn=None, noise: float = 0.1, d_z: int = 1,
                         n_grid=(100, 10000), n_seeds: int = 20,
                         rng: RngStream | None = None, query=None,
                         bandwidth_rule=None) -> dict:
    """Empirical pointwise consistency: squared error at an interior query
    shrinks along ``n_grid`` with the bandwidth rule h = N^(-1/(d+4))."""
    if d_z not in (1, 2):
        raise ConfigError("d_z must be 1 or 2 for the desk-scale check")
    if list(n_grid) != sorted(n_grid):
        raise ConfigError("n_grid must be increasing")
    rng = rng or RngStream(0)
    target_fn = target_fn or _default_target
    if bandwidth_rule is None:
        bandwidth_rule = lambda n: n ** (-1.0 / (d_z + 4))
    query = np.full(d_z, 0.125) if query is None else np.asarray(query, dtype=float)
    truth = float(target_fn(query[None])[0] if np.ndim(target_fn(query[None])) else target_fn(query[None]))

    grid = []
    mse_by_n = {}
    for n in n_grid:
        h = float(bandwidth_rule(n))
        errors = []
        for seed in range(n_seeds):
            gen = rng.child("draw", n, seed).generator()
            z = gen.uniform(-1.0, 1.0, size=(n, d_z))
            v = np.asarray(target_fn(z), dtype=float) + noise * gen.standard_normal(n)
            est = nw_regress(query, z, v, h)
            errors.append((est - truth) ** 2)
        med = float(np.median(errors))
        mse_by_n[n] = med
        grid.append({"n": int(n), "h": h, "mse": med})
    first, last = mse_by_n[n_grid[0]], mse_by_n[n_grid[-1]]
    return {
        "grid": grid,
        "mse_first": first,
        "mse_last": last,
        "shrink_factor": first / last if last > 0 else float("inf"),
        "passed": last < first / 4 or (last == 0.0 and first >= 0.0),
    }


def mse_scaling_check(n_bias_design: int = 4001,
                      h_grid=None, n_grid=None, h_fixed: float = 0.15,
                      noise: float = 0.5, n_seeds: int = 50, d_z: int = 1,
                      target_fn=None, rng: RngStream | None = None) -> dict:
    """Fit the textbook rates: log(bias^2) vs log(h) slope near 4 and
    log(variance) vs log(N) slope near -1.

    Bias uses a noiseless fixed uniform design (deterministic estimate);
    variance uses random designs with additive noise at a fixed bandwidth.
    """
    rng = rng or RngStream(0)
    h_grid = np.asarray(h_grid if h_grid is not None
                        else np.geomspace(0.01, 0.4, 10))
    n_grid = np.asarray(n_grid if n_grid is not None
                        else np.geomspace(100, 10000, 5).round().astype(int))
    for name, g in (("h_grid", h_grid), ("n_grid", n_grid)):
        span = np.log10(g.max() / g.min())
        if span < 1.5:
            raise ConfigError(f"{name} must span >= 1.5 decades, got {span:.2f}")
    if target_fn is None:
        target_fn = lambda z: z[..., 0] ** 2
    query = np.zeros(d_z)
    truth = float(np.asarray(target_fn(query[None])).ravel()[0])

    # bias regime: noiseless repeated design
    z_design = np.linspace(-1.0, 1.0, n_bias_design)[:, None]
    if d_z == 2:
        side = int(np.sqrt(n_bias_design))
        g1 = np.linspace(-1.0, 1.0, side)
        z_design = np.stack(np.meshgrid(g1, g1), axis=-1).reshape(-1, 2)
    v_design = np.asarray(target_fn(z_design), dtype=float)
    biases = np.array([nw_regress(query, z_design, v_design, h) - truth
                       for h in h_grid])
    bias_slope = float(np.polyfit(np.log(h_grid), np.log(biases ** 2), 1)[0]) \
        if np.all(biases != 0) else 0.0

    # variance regime: random designs, fixed bandwidth
    variances = []
    for n in n_grid:
        ests = []
        for seed in range(n_seeds):
            gen = rng.child("var", int(n), seed).generator()
            z = gen.uniform(-1.0, 1.0, size=(int(n), d_z))
            v = np.asarray(target_fn(z), dtype=float) + noise * gen.standard_normal(int(n))
            ests.append(nw_regress(query, z, v, h_fixed))
        variances.append(float(np.var(ests, ddof=1)))
    var_slope = float(np.polyfit(np.log(n_grid.astype(float)),
                                 np.log(variances), 1)[0])

    return {
        "bias_slope": bias_slope,
        "bias_slope_ok": abs(bias_slope - 4.0) <= 0.7,
        "variance_slope": var_slope,
        "variance_slope_ok": abs(var_slope + 1.0) <= 0.15,
        "h_grid": [float(h) for h in h_grid],
        "bias_sq": [float(b ** 2) for b in biases],
        "n_grid": [int(n) for n in n_grid],
        "variances": variances,
        "passed": abs(bias_slope - 4.0) <= 0.7 and abs(var_slope + 1.0) <= 0.15,
    }
