"""Ordinary least squares with named coefficients.

Small, deliberate OLS engine: QR solve, coefficient covariance from the
triangular factor, residual variance on n - p degrees of freedom. Every
model in the package (mediator, intermediate-confounder, outcome, reduced
outcome) goes through `ols_fit`, so grid sweeps and bootstrap replicates
share one numerical path.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import CollinearityError, NameLookupError

# Relative singular-value cutoff below which a design is treated as rank
# deficient. Catches duplicated dummy columns without rejecting merely
# ill-conditioned real data.
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class ModelFit:
    """Result of one least-squares fit.

    Attributes
    ----------
    coefficient_names : tuple of str
        Column labels of the design, in design order.
    coefficients : np.ndarray
        Estimated coefficients, same order as the names.
    coefficient_covariance : np.ndarray
        residual_variance * (X'X)^-1, symmetric PSD.
    residual_variance : float
        RSS / df.
    df : int
        Residual degrees of freedom, n - p.
    n : int
        Number of rows used in the fit.
    r_squared : float
        Centered R^2 (designs here always carry an intercept).
    """

    coefficient_names: tuple
    coefficients: np.ndarray
    coefficient_covariance: np.ndarray
    residual_variance: float
    df: int
    n: int
    r_squared: float

    def index(self, name):
        try:
            return self.coefficient_names.index(name)
        except ValueError:
            raise NameLookupError(
                f"no coefficient named {name!r}; have {list(self.coefficient_names)}"
            ) from None

    def coef(self, name):
        return float(self.coefficients[self.index(name)])

    def var(self, name):
        i = self.index(name)
        return float(self.coefficient_covariance[i, i])

    def se(self, name):
        return float(np.sqrt(self.var(name)))

    def cov_between(self, name_a, name_b):
        i, j = self.index(name_a), self.index(name_b)
        return float(self.coefficient_covariance[i, j])


def _rank_deficient_columns(design, names):
    """Identify columns responsible for rank deficiency via pivoted QR."""
    _, r, piv = scipy.linalg.qr(design, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    scale = diag.max() if diag.size and diag.max() > 0 else 1.0
    bad = [names[piv[k]] for k in range(len(diag)) if diag[k] / scale < RANK_RTOL]
    # All-zero trailing columns may not show in diag when p > rank
    if not bad:
        bad = [names[piv[-1]]]
    return bad


def ols_fit(response, design, names):
    """Fit response ~ design by least squares.

    Parameters
    ----------
    response : (n,) array
    design : (n, p) array
        Must have full column rank relative to RANK_RTOL.
    names : sequence of str, length p

    Returns
    -------
    ModelFit

    Raises
    ------
    CollinearityError
        If min(singular values) / max < RANK_RTOL, naming the columns
        implicated by a pivoted QR.
    ValueError
        On shape mismatch or df < 1.
    """
    y = np.asarray(response, dtype=np.float64).ravel()
    x = np.asarray(design, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"design must be 2-D, got shape {x.shape}")
    n, p = x.shape
    if y.shape[0] != n:
        raise ValueError(f"response has {y.shape[0]} rows, design has {n}")
    names = tuple(names)
    if len(names) != p:
        raise ValueError(f"{len(names)} names for {p} columns")
    if n - p < 1:
        raise ValueError(f"need n > p for residual df; n={n}, p={p}")

    sv = np.linalg.svd(x, compute_uv=False)
    if sv[0] == 0 or sv[-1] / sv[0] < RANK_RTOL:
        bad = _rank_deficient_columns(x, names)
        raise CollinearityError(
            f"design is rank deficient (singular value ratio "
            f"{0.0 if sv[0] == 0 else sv[-1] / sv[0]:.2e}); "
            f"offending columns: {bad}",
            columns=bad,
        )

    q, r = np.linalg.qr(x)
    beta = scipy.linalg.solve_triangular(r, q.T @ y)
    resid = y - x @ beta
    rss = float(resid @ resid)
    df = n - p
    sigma2 = rss / df

    r_inv = scipy.linalg.solve_triangular(r, np.eye(p))
    xtx_inv = r_inv @ r_inv.T
    cov = sigma2 * xtx_inv
    cov = 0.5 * (cov + cov.T)

    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 0.0 if tss == 0 else max(0.0, min(1.0, 1.0 - rss / tss))

    return ModelFit(
        coefficient_names=names,
        coefficients=beta,
        coefficient_covariance=cov,
        residual_variance=sigma2,
        df=df,
        n=n,
        r_squared=r2,
    )


def coef(fit, name):
    """Return (estimate, standard error) for a named coefficient."""
    return fit.coef(name), fit.se(name)


def residuals(response, design):
    """Least-squares residuals of response on design (no naming, no checks
    beyond the solver's). Used for partial-correlation computations."""
    y = np.asarray(response, dtype=np.float64).ravel()
    x = np.asarray(design, dtype=np.float64)
    beta, *_ = np.linalg.lstsq(x, y, rcond=None)
    return y - x @ beta
