"""One-dimensional Gaussian mixtures fitted by EM, and mode-specific normalization.

A continuous value x is represented by the mixture mode k it is assigned to
plus a scaled offset ``alpha = (x - mu_k) / (4 sigma_k)`` clamped to [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VAR_FLOOR = 1e-6
ALPHA_SCALE = 4.0
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class Gmm:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        for name in ("weights", "means", "variances"):
            arr = np.array(getattr(self, name), dtype=np.float64).reshape(-1)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if not (self.weights.shape == self.means.shape == self.variances.shape):
            raise ValueError("mixture parameter vectors differ in length")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must form a probability vector")
        if np.any(self.variances <= 0):
            raise ValueError("mixture variances must be positive")

    @property
    def K(self) -> int:
        return self.weights.shape[0]

    @property
    def stds(self) -> np.ndarray:
        return np.sqrt(self.variances)

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Gmm":
        return cls(d["weights"], d["means"], d["variances"])


def _component_log_joint(weights, means, variances, x) -> np.ndarray:
    """log(pi_k) + log N(x | mu_k, var_k), shape (n, K)."""
    x = np.asarray(x, dtype=np.float64).reshape(-1, 1)
    with np.errstate(divide="ignore"):
        log_w = np.log(weights)
    return log_w - 0.5 * (_LOG_2PI + np.log(variances) + (x - means) ** 2 / variances)


def _logsumexp(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return (m + np.log(np.exp(a - m).sum(axis=1, keepdims=True)))[:, 0]


def log_pdf(g: Gmm, x) -> np.ndarray:
    return _logsumexp(_component_log_joint(g.weights, g.means, g.variances, x))


def pdf(g: Gmm, x):
    """Mixture density sum_k pi_k N(x | mu_k, var_k); scalar in, scalar out."""
    out = np.exp(log_pdf(g, x))
    return float(out[0]) if np.ndim(x) == 0 else out


def log_likelihood(g: Gmm, values) -> float:
    return float(log_pdf(g, values).sum())


def posterior(g: Gmm, x) -> np.ndarray:
    """Responsibilities r_k(x), computed in log space; shape (K,) for scalar x else (n, K)."""
    lj = _component_log_joint(g.weights, g.means, g.variances, x)
    r = np.exp(lj - _logsumexp(lj)[:, None])
    r /= r.sum(axis=1, keepdims=True)
    return r[0] if np.ndim(x) == 0 else r


def _spread_seeds(x: np.ndarray, K: int, rng) -> np.ndarray:
    """K distinct sample indices, each drawn with probability proportional to its
    squared distance from the ones already picked (k-means++ seeding)."""
    n = x.size
    picked = [int(rng.integers(n))]
    d2 = (x - x[picked[0]]) ** 2
    for _ in range(1, K):
        w = d2.copy()
        w[picked] = 0.0
        total = w.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=w / total))
        else:
            free = np.setdiff1d(np.arange(n), picked)
            nxt = int(rng.choice(free))
        picked.append(nxt)
        d2 = np.minimum(d2, (x - x[nxt]) ** 2)
    return np.asarray(picked)


def fit_gmm(values, K: int = 10, tol: float = 1e-6, max_iter: int = 200, seed=0,
            return_history: bool = False):
    """EM for a K-component 1-D mixture.

    Means start at K distinct random samples (spread out by distance weighting), variances at the global variance,
    weights uniform. Stops when the relative log-likelihood gain drops below
    ``tol``. Components that lose all responsibility keep their last mean and
    variance with weight zero.
    """
    x = np.asarray(values, dtype=np.float64).reshape(-1)
    n = x.size
    if K < 1:
        raise ValueError("K must be >= 1")
    if n < K:
        raise ValueError(f"need at least K={K} values, got {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("values must be finite")
    rng = np.random.default_rng(seed)
    means = x[_spread_seeds(x, K, rng)].copy()
    variances = np.full(K, max(x.var(), VAR_FLOOR))
    weights = np.full(K, 1.0 / K)

    lj = _component_log_joint(weights, means, variances, x)
    norm = _logsumexp(lj)
    ll = float(norm.sum())
    history = [ll]
    for _ in range(max_iter):
        resp = np.exp(lj - norm[:, None])
        nk = resp.sum(axis=0)
        alive = nk > 1e-12 * n
        weights = np.where(alive, nk / n, 0.0)
        weights /= weights.sum()
        safe_nk = np.where(alive, nk, 1.0)
        new_means = (resp * x[:, None]).sum(axis=0) / safe_nk
        means = np.where(alive, new_means, means)
        new_var = (resp * (x[:, None] - means) ** 2).sum(axis=0) / safe_nk
        variances = np.maximum(np.where(alive, new_var, variances), VAR_FLOOR)

        lj = _component_log_joint(weights, means, variances, x)
        norm = _logsumexp(lj)
        new_ll = float(norm.sum())
        history.append(new_ll)
        gain = new_ll - ll
        ll = new_ll
        if gain < tol * max(abs(ll), 1e-300):
            break
    g = Gmm(weights, means, variances)
    return (g, history) if return_history else g


@dataclass(frozen=True)
class ModeEncoding:
    mode: np.ndarray
    alpha: float


def encode_modes(g: Gmm, x, rng=None, argmax: bool = False):
    """Vectorized encoding: returns (mode index array, alpha array)."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    r = posterior(g, x).reshape(x.size, g.K)
    if argmax:
        k = r.argmax(axis=1)
    else:
        if rng is None:
            raise ValueError("posterior sampling needs an rng; pass argmax=True for the deterministic mode")
        u = rng.random(x.size)[:, None]
        k = (np.cumsum(r, axis=1) < u).sum(axis=1)
        k = np.minimum(k, g.K - 1)
        # Guard against round-off landing on a zero-weight component.
        bad = r[np.arange(x.size), k] == 0.0
        k[bad] = r[bad].argmax(axis=1)
    alpha = np.clip((x - g.means[k]) / (ALPHA_SCALE * g.stds[k]), -1.0, 1.0)
    return k, alpha


def decode_modes(g: Gmm, modes, alpha) -> np.ndarray:
    modes = np.asarray(modes, dtype=np.int64)
    return g.means[modes] + ALPHA_SCALE * g.stds[modes] * np.asarray(alpha, dtype=np.float64)


def encode_value(g: Gmm, x: float, rng=None, argmax: bool = False) -> ModeEncoding:
    k, alpha = encode_modes(g, [x], rng=rng, argmax=argmax)
    onehot = np.zeros(g.K)
    onehot[k[0]] = 1.0
    return ModeEncoding(onehot, float(alpha[0]))


def decode_value(g: Gmm, enc: ModeEncoding) -> float:
    return float(decode_modes(g, [int(np.argmax(enc.mode))], [enc.alpha])[0])
