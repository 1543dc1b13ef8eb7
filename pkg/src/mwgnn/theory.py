"""Monte Carlo check of the concentration bound for one-layer mean aggregation.

Setting: a k-regular neighborhood around an ego node with binary label y.
A homophily level P is drawn from D_P; each of the k neighbors keeps label y
with probability P. Features are clipped Gaussians, so every coordinate lies
in [-C_x, C_x]. The embedding is h = W * mean(x over ego + neighbors).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

CHUNK = 1000  # trials per independent seed stream

THRESHOLD_NOTE = (
    "the published bound writes its threshold as t2 while the event uses t; "
    "both are evaluated at the same t here, and the sqrt(d) factors are kept as printed"
)


def clipped_normal_moments(loc, scale, bound):
    """Mean and second moment of clip(N(loc, scale^2), -bound, bound), elementwise."""
    loc = np.asarray(loc, dtype=np.float64)
    if scale == 0:
        x = np.clip(loc, -bound, bound)
        return x, x * x
    a = (-bound - loc) / scale
    b = (bound - loc) / scale
    ca, cb = stats.norm.cdf(a), stats.norm.cdf(b)
    pa, pb = stats.norm.pdf(a), stats.norm.pdf(b)
    inside = cb - ca
    tails = ca + (1.0 - cb)
    mean = -bound * ca + bound * (1.0 - cb) + loc * inside + scale * (pa - pb)
    e_u2 = inside + a * pa - b * pb
    second = bound ** 2 * tails + loc ** 2 * inside + 2 * loc * scale * (pa - pb) + scale ** 2 * e_u2
    return mean, second


@dataclass
class HomophilyLaw:
    """Distribution of the local homophily level P on [0, 1]."""

    kind: str = "beta"  # beta | point | discrete
    mean: float = 0.5
    var: float = 0.0
    values: list = field(default_factory=list)
    probs: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind == "discrete":
            v = np.asarray(self.values, dtype=np.float64)
            p = np.asarray(self.probs, dtype=np.float64)
            if v.size == 0 or v.shape != p.shape:
                raise ValueError("discrete law needs matching values and probs")
            if (v < 0).any() or (v > 1).any() or (p < 0).any() or not np.isclose(p.sum(), 1.0):
                raise ValueError("discrete law needs values in [0, 1] and probs summing to 1")
            self.mean = float(p @ v)
            self.var = float(p @ (v - self.mean) ** 2)
            return
        if self.kind not in ("beta", "point"):
            raise ValueError(f"unknown homophily law {self.kind!r}")
        if not 0.0 <= self.mean <= 1.0:
            raise ValueError("homophily mean must lie in [0, 1]")
        if self.var < 0:
            raise ValueError("homophily variance must be non-negative")
        if self.kind == "point" or self.var == 0:
            self.kind, self.var = "point", 0.0
        elif self.var >= self.mean * (1.0 - self.mean):
            raise ValueError("beta law needs var < mean * (1 - mean)")

    def beta_params(self):
        common = self.mean * (1.0 - self.mean) / self.var - 1.0
        return self.mean * common, (1.0 - self.mean) * common

    def quantile(self, u):
        """Inverse CDF; sharing ``u`` across laws gives paired draws."""
        if self.kind == "point":
            return np.full_like(u, self.mean)
        if self.kind == "beta":
            a, b = self.beta_params()
            return stats.beta.ppf(u, a, b)
        v = np.asarray(self.values, dtype=np.float64)
        order = np.argsort(v)
        cdf = np.cumsum(np.asarray(self.probs, dtype=np.float64)[order])
        idx = np.minimum(np.searchsorted(cdf, u, side="right"), len(v) - 1)
        return v[order][idx]


@dataclass
class TheoremSetting:
    k: int
    loc_0: np.ndarray        # Gaussian centre for class 0 features
    loc_1: np.ndarray
    feature_scale: float      # Gaussian std before clipping
    c_x: float                # clipping bound
    law: HomophilyLaw
    w: np.ndarray | None = None
    ego_label: int = 0

    def __post_init__(self):
        self.loc_0 = np.asarray(self.loc_0, dtype=np.float64).reshape(-1)
        self.loc_1 = np.asarray(self.loc_1, dtype=np.float64).reshape(-1)
        d = self.loc_0.size
        self.w = np.eye(d) if self.w is None else np.asarray(self.w, dtype=np.float64)
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.loc_1.size != d or d == 0:
            raise ValueError("class centres must be nonempty and of equal length")
        if self.w.shape != (d, d):
            raise ValueError(f"W must be {d}x{d}")
        if self.c_x <= 0 or self.feature_scale < 0:
            raise ValueError("need c_x > 0 and feature_scale >= 0")
        if self.ego_label not in (0, 1):
            raise ValueError("ego_label must be 0 or 1")

    @property
    def d(self):
        return self.loc_0.size

    @property
    def moments(self):
        m0, t0 = clipped_normal_moments(self.loc_0, self.feature_scale, self.c_x)
        m1, t1 = clipped_normal_moments(self.loc_1, self.feature_scale, self.c_x)
        return np.stack([m0, m1]), np.stack([t0, t1])

    @property
    def c_mu(self):
        return float(np.abs(self.moments[0]).max())

    @property
    def c_tau(self):
        return float(np.abs(self.moments[1]).max())

    def to_dict(self):
        return {"k": self.k, "loc_0": self.loc_0.tolist(), "loc_1": self.loc_1.tolist(),
                "feature_scale": self.feature_scale, "c_x": self.c_x, "law": asdict(self.law),
                "w": self.w.tolist(), "ego_label": self.ego_label}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {"k", "loc_0", "loc_1", "feature_scale", "c_x", "law", "w", "ego_label"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown setting fields: {sorted(unknown)}")
        d["law"] = HomophilyLaw(**d.get("law", {}))
        return cls(**d)


def canonical_setting(var_p=0.05, k=10, d=4, c_x=2.0, mean_p=0.5, scale=1.0):
    """Class centres at +1 / -1 in every coordinate, W = I."""
    law = HomophilyLaw("beta", mean_p, var_p)
    return TheoremSetting(k, np.ones(d), -np.ones(d), scale, c_x, law)


def _draw(s: TheoremSetting, rng, n):
    """n embeddings from one seed stream; uniforms are drawn in a fixed order."""
    k, d = s.k, s.d
    p = s.law.quantile(rng.random(n))
    same = rng.random((n, k)) < p[:, None]
    y = s.ego_label
    labels = np.where(same, y, 1 - y)
    labels = np.concatenate([np.full((n, 1), y), labels], axis=1)
    locs = np.stack([s.loc_0, s.loc_1])[labels]
    x = np.clip(locs + s.feature_scale * rng.standard_normal((n, k + 1, d)), -s.c_x, s.c_x)
    return x.mean(axis=1) @ s.w.T


def sample_embeddings(s: TheoremSetting, trials: int, seed: int = 0):
    """``trials`` embeddings; chunk c uses stream c of SeedSequence(seed)."""
    if trials < 1:
        raise ValueError("trials must be positive")
    n_chunks = -(-trials // CHUNK)
    streams = np.random.SeedSequence(seed).spawn(n_chunks)
    out = []
    for c, ss in enumerate(streams):
        n = min(CHUNK, trials - c * CHUNK)
        out.append(_draw(s, np.random.default_rng(ss), n))
    return np.concatenate(out)


def sample_embedding(s: TheoremSetting, rng: np.random.Generator):
    """A single embedding h_i as a d-vector."""
    return _draw(s, rng, 1)[0]


def expected_embedding(s: TheoremSetting):
    """W (mu_y / (k+1) + k/(k+1) (E[P] mu_y + (1 - E[P]) mu_other))."""
    mu = s.moments[0]
    y = s.ego_label
    ep = s.law.mean
    neigh = ep * mu[y] + (1.0 - ep) * mu[1 - y]
    return s.w @ (mu[y] / (s.k + 1) + s.k / (s.k + 1) * neigh)


def spectral_norm(w, tol=1e-13, max_iter=10000, seed=0):
    """Largest singular value by power iteration on W^T W."""
    w = np.asarray(w, dtype=np.float64)
    if not w.any():
        return 0.0
    gram = w.T @ w
    v = np.random.default_rng(seed).standard_normal(gram.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        u = gram @ v
        norm = np.linalg.norm(u)
        if norm == 0:
            return 0.0
        u /= norm
        new = float(u @ gram @ u)
        if abs(new - lam) <= tol * max(new, 1.0) and np.linalg.norm(u - v) < 1e-7:
            lam = new
            break
        v, lam = u, new
    return float(np.sqrt(max(lam, 0.0)))


def bound_variance(s: TheoremSetting):
    """sigma^2 = 4 k C_mu^2 Var[P] + k C_tau."""
    return 4 * s.k * s.c_mu ** 2 * s.law.var + s.k * s.c_tau


def analytic_bound(s: TheoremSetting, t, rho=None):
    """Raw tail bound at deviation ``t`` (scalar or array); may exceed 1."""
    t = np.asarray(t, dtype=np.float64)
    if (t <= 0).any():
        raise ValueError("t must be positive")
    rho = spectral_norm(s.w) if rho is None else rho
    d, k = s.d, s.k
    sd = np.sqrt(d)
    shift = (k + 1) * t / rho + sd * s.c_x + sd * s.c_mu if rho > 0 else np.full_like(t, np.inf)
    denom = 2 * k * d * bound_variance(s) + 4.0 * sd * s.c_x * shift / 3.0
    with np.errstate(invalid="ignore"):
        out = 2 * d * np.exp(-shift ** 2 / denom)
    return np.where(np.isfinite(shift), out, 0.0)


@dataclass
class VerificationReport:
    t_grid: list
    empirical: list
    stderr: list
    bound_raw: list
    bound: list
    passed: list
    trials: int
    seed: int
    setting: dict
    notes: str = THRESHOLD_NOTE

    @property
    def all_passed(self):
        return all(self.passed)

    def midpoint_tail(self):
        return self.empirical[len(self.t_grid) // 2]

    def to_dict(self):
        d = asdict(self)
        d["all_passed"] = self.all_passed
        return d


def verify_concentration(s: TheoremSetting, t_grid, trials: int = 10000, seed: int = 0):
    """Empirical P(||h - E h|| >= t) per t against the clamped bound."""
    if trials < 1000:
        raise ValueError("trials must be at least 1000")
    t = np.asarray(t_grid, dtype=np.float64)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("t_grid must be a nonempty 1-d sequence")
    h = sample_embeddings(s, trials, seed)
    dev = np.linalg.norm(h - expected_embedding(s), axis=1)
    emp = (dev[:, None] >= t[None, :]).mean(axis=0)
    se = np.sqrt(emp * (1.0 - emp) / trials)
    raw = analytic_bound(s, t)
    clamped = np.minimum(1.0, raw)
    passed = emp <= clamped + 3 * se
    return VerificationReport(t.tolist(), emp.tolist(), se.tolist(), raw.tolist(),
                              clamped.tolist(), [bool(x) for x in passed], trials, seed,
                              s.to_dict())


def bernstein_bound(a, b, variance, n, t):
    """exp(-n t^2 / (2 sigma^2 + 2 t (b - a) / 3)) with sigma^2 = n * variance."""
    total = n * variance
    denom = 2 * total + 2 * t * (b - a) / 3.0
    if denom == 0:
        return 0.0
    return float(np.exp(-n * t * t / denom))


def bernstein_probe(a, b, n, t, trials=10000, sampler="uniform", seed=0):
    """Empirical P(mean - E mean >= t) for n i.i.d. bounded draws, and the bound.

    ``sampler`` is "uniform" on [a, b] or "point" (all mass at the midpoint).
    """
    if a > b:
        raise ValueError("need a <= b")
    if t <= 0:
        raise ValueError("t must be positive")
    if n < 1 or trials < 1:
        raise ValueError("n and trials must be positive")
    rng = np.random.default_rng(seed)
    if sampler == "uniform":
        x = rng.uniform(a, b, size=(trials, n))
        mean, var = (a + b) / 2.0, (b - a) ** 2 / 12.0
    elif sampler == "point":
        mid = (a + b) / 2.0
        x = np.full((trials, n), mid)
        mean, var = mid, 0.0
    else:
        raise ValueError(f"unknown sampler {sampler!r}")
    emp = float(np.mean(x.mean(axis=1) - mean >= t))
    return emp, bernstein_bound(a, b, var, n, t)
