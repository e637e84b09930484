"""Early-curve accuracy prediction: Bayesian ridge on (beta_eff, val acc)
observations, read off at beta_eff = 0; BIC window-start selection; last/
best-seen-value baselines; Spearman rank correlation.

The ridge fit maximizes the evidence by iterating the classic precision
updates: alpha (noise precision, 1/sigma^2) and gamma-weighted lam (prior
precision, 1/tau^2). The reported parameterization is the ridge strength
lambda = lam/alpha = sigma^2/tau^2, so sigma = tau*sqrt(lambda) always holds
at the solution.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

MSE_FLOOR = 1e-16
HYPER_TOL = 1e-6
MAX_ITER = 300
HYPER_PRIOR = 1e-6  # shape/rate of the uninformative Gamma hyper-priors


class ObservationSeries:
    """Per-epoch (epoch, beta_eff, val_accuracy) records for one model."""

    def __init__(self, model_id, metadata=None):
        self.model_id = model_id
        self.metadata = dict(metadata or {})
        self.records = []

    def append(self, epoch, beta_eff, val_accuracy, train_loss=None, train_acc=None):
        if self.records and epoch <= self.records[-1]["epoch"]:
            raise ValueError("epochs must be strictly increasing")
        if not 0.0 <= val_accuracy <= 1.0:
            raise ValueError("accuracy %r outside [0, 1]" % val_accuracy)
        self.records.append(
            {
                "epoch": int(epoch),
                "beta_eff": float(beta_eff),
                "val_acc": float(val_accuracy),
                "train_loss": None if train_loss is None else float(train_loss),
                "train_acc": None if train_acc is None else float(train_acc),
            }
        )

    @classmethod
    def from_curve(cls, model_id, curve, metadata=None):
        series = cls(model_id, metadata)
        for rec in curve.records:
            if rec["beta_eff"] is None:
                raise ValueError("curve record at epoch %d has no beta_eff" % rec["epoch"])
            series.append(
                rec["epoch"], rec["beta_eff"], rec["val_acc"], rec["train_loss"], rec["train_acc"]
            )
        return series

    def window(self, t0, t_end):
        """Design matrix [1, beta] and accuracy vector for epochs t0..t_end."""
        rows = [r for r in self.records if t0 <= r["epoch"] <= t_end]
        X = np.array([[1.0, r["beta_eff"]] for r in rows])
        y = np.array([r["val_acc"] for r in rows])
        return X, y

    def epochs(self):
        return [r["epoch"] for r in self.records]

    def accuracies(self, upto=None):
        return [r["val_acc"] for r in self.records if upto is None or r["epoch"] <= upto]

    def __len__(self):
        return len(self.records)


@dataclass
class RidgePosterior:
    theta: np.ndarray          # (intercept, slope)
    lam: float                 # ridge strength sigma^2/tau^2
    tau: float                 # prior scale
    sigma: float               # noise scale
    cov: np.ndarray            # posterior covariance of theta
    n_obs: int
    n_iter: int
    converged: bool
    degenerate: bool = False
    X: np.ndarray = field(default=None, repr=False)
    y: np.ndarray = field(default=None, repr=False)

    def rss(self):
        resid = self.y - self.X @ self.theta
        return float(resid @ resid)


@dataclass
class Prediction:
    i_star: float
    std: float
    t0_used: int = None
    n_points_used: int = None


def ridge_map(X, y, lam):
    """Closed-form ridge solution (X^T X + lam I)^-1 X^T y."""
    p = X.shape[1]
    return np.linalg.solve(X.T @ X + lam * np.eye(p), X.T @ y)


def _evidence_loop(X, y):
    """Evidence maximization; returns (coef, alpha, lam_prec, cov, it, converged).

    alpha is the noise precision, lam_prec the prior precision; both start
    at 1 so the initial ridge strength and prior scale are 1.
    """
    n, p = X.shape
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    eigen = s**2
    Uty = U.T @ y
    alpha = 1.0
    lam_prec = 1.0
    converged = False
    it = 0
    coef = Vt.T @ (Uty * s / (eigen + lam_prec / alpha))
    for it in range(1, MAX_ITER + 1):
        ridge = lam_prec / alpha
        coef = Vt.T @ (Uty * s / (eigen + ridge))
        resid = y - X @ coef
        rss = float(resid @ resid)
        gamma = float(np.sum(alpha * eigen / (lam_prec + alpha * eigen)))
        lam_new = (gamma + 2.0 * HYPER_PRIOR) / (float(coef @ coef) + 2.0 * HYPER_PRIOR)
        alpha_new = (n - gamma + 2.0 * HYPER_PRIOR) / (rss + 2.0 * HYPER_PRIOR)
        change = max(
            abs(lam_new - lam_prec) / abs(lam_prec),
            abs(alpha_new - alpha) / abs(alpha),
        )
        lam_prec, alpha = lam_new, alpha_new
        if change < HYPER_TOL:
            converged = True
            break
    ridge = lam_prec / alpha
    coef = Vt.T @ (Uty * s / (eigen + ridge))
    cov = (1.0 / alpha) * (Vt.T / (eigen + ridge)) @ Vt
    return coef, alpha, lam_prec, cov, it, converged


def fit_bayesian_ridge(X, y):
    """Fit y ~ X theta with evidence-maximized hyper-parameters.

    X must be the (n, 2) design [1, beta_eff]. A degenerate design (all
    beta_eff identical) falls back to an intercept-only fit with a warning.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != 2 or not np.all(X[:, 0] == 1.0):
        raise ValueError("design must be [1, beta_eff] columns")
    if len(X) != len(y):
        raise ValueError("X and y lengths differ")
    if len(y) < 3:
        raise ValueError("need at least 3 observations, got %d" % len(y))
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite observations")

    beta = X[:, 1]
    degenerate = float(np.ptp(beta)) <= 1e-15 * (1.0 + float(np.abs(beta).max()))
    if degenerate:
        warnings.warn(
            "all beta_eff observations identical; falling back to an intercept-only fit",
            RuntimeWarning,
        )
        coef1, alpha, lam_prec, cov1, it, conv = _evidence_loop(np.ones((len(y), 1)), y)
        theta = np.array([coef1[0], 0.0])
        cov = np.zeros((2, 2))
        cov[0, 0] = cov1[0, 0]
    else:
        theta, alpha, lam_prec, cov, it, conv = _evidence_loop(X, y)

    lam = lam_prec / alpha
    tau = 1.0 / np.sqrt(lam_prec)
    sigma = 1.0 / np.sqrt(alpha)
    return RidgePosterior(
        theta=theta,
        lam=float(lam),
        tau=float(tau),
        sigma=float(sigma),
        cov=cov,
        n_obs=len(y),
        n_iter=it,
        converged=conv,
        degenerate=degenerate,
        X=X,
        y=y,
    )


def predict_at_zero(posterior):
    """Accuracy estimate at beta_eff = 0: the intercept, with predictive std."""
    x0 = np.array([1.0, 0.0])
    var = float(x0 @ posterior.cov @ x0) + posterior.sigma**2
    return Prediction(
        i_star=float(posterior.theta[0]),
        std=float(np.sqrt(max(var, 0.0))),
        n_points_used=posterior.n_obs,
    )


def bic_select_t0(series, t0_candidates, t_end):
    """Fit every window [t0, t_end] and keep the BIC minimizer.

    BIC = n*ln(max(RSS/n, 1e-16)) + 2*ln(n); ties break toward smaller t0.
    Returns (t0_star, {t0: {"fit": posterior, "bic": float, "n": int}}).
    """
    fits = {}
    for t0 in sorted(set(int(t) for t in t0_candidates)):
        X, y = series.window(t0, t_end)
        if len(y) < 3:
            continue
        post = fit_bayesian_ridge(X, y)
        n = len(y)
        mse = max(post.rss() / n, MSE_FLOOR)
        bic = n * np.log(mse) + 2.0 * np.log(n)
        fits[t0] = {"fit": post, "bic": float(bic), "n": n}
    if not fits:
        raise ValueError(
            "no candidate window [t0, %d] with >= 3 points among %r" % (t_end, t0_candidates)
        )
    t0_star = min(fits, key=lambda t0: (fits[t0]["bic"], t0))
    return t0_star, fits


def predict_series(series, t0_candidates, t_end):
    """BIC-select t0, fit, and predict at beta_eff = 0 for one series."""
    t0_star, fits = bic_select_t0(series, t0_candidates, t_end)
    pred = predict_at_zero(fits[t0_star]["fit"])
    pred.t0_used = t0_star
    pred.n_points_used = fits[t0_star]["n"]
    return pred, fits


def baseline_lsv(accuracies):
    """Last seen value of an observed accuracy prefix."""
    if len(accuracies) == 0:
        raise ValueError("empty accuracy prefix")
    return float(accuracies[-1])


def baseline_bsv(accuracies):
    """Best seen value of an observed accuracy prefix."""
    if len(accuracies) == 0:
        raise ValueError("empty accuracy prefix")
    return float(np.max(accuracies))


def rank_average(values):
    """Ranks 1..n with ties sharing the mean rank of their block."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # mean of positions i..j, 1-based
        i = j + 1
    return ranks


def spearman_rho(a, b):
    """Pearson correlation of average-assigned ranks; in [-1, 1].

    Zero rank variance in either argument is defined as 0 with a warning.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("need two equal-length 1-D score arrays")
    if len(a) < 2:
        raise ValueError("need at least 2 scores")
    ra, rb = rank_average(a), rank_average(b)
    va = ra - ra.mean()
    vb = rb - rb.mean()
    denom = np.sqrt((va @ va) * (vb @ vb))
    if denom == 0.0:
        warnings.warn("zero rank variance; rank correlation undefined, returning 0", RuntimeWarning)
        return 0.0
    return float(np.clip((va @ vb) / denom, -1.0, 1.0))
