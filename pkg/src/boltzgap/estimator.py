"""scikit-learn style front end for the truncated Galerkin system.

Rows of ``X`` are Hermite coefficient vectors in the graded ordering of
:class:`~boltzgap.basis.HermiteBasis`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .basis import HermiteBasis, StateVector
from .dynamics import integrate, time_grid
from .kernel import parse_kernel
from .operators import assemble

__all__ = ["GalerkinBoltzmann", "check_coefficients"]


def check_coefficients(X, basis: HermiteBasis) -> np.ndarray:
    """Validate a 2-D array of coefficient rows for ``basis``."""
    X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_all_finite=True)
    if X.shape[1] != basis.size:
        raise ValueError(f"expected {basis.size} coefficients per row for N={basis.N}, got {X.shape[1]}")
    return X


class GalerkinBoltzmann(TransformerMixin, BaseEstimator):
    """Assemble L and R for a kernel and evolve perturbations.

    Parameters
    ----------
    kernel : str
        Kernel spec understood by :func:`boltzgap.kernel.parse_kernel`.
    degree : int
        Total polynomial degree N of the basis.
    nonlinear : bool
        Include the quadratic term when evolving.
    dt : float
        Initial internal step of the integrator.
    tol : float
        Step-halving tolerance on theta.
    """

    def __init__(self, kernel="linear", degree=6, nonlinear=True, dt=1 / 16, tol=1e-8):
        self.kernel = kernel
        self.degree = degree
        self.nonlinear = nonlinear
        self.dt = dt
        self.tol = tol

    def fit(self, X=None, y=None):
        if not isinstance(self.degree, (int, np.integer)):
            raise TypeError("degree must be an integer")
        kern = parse_kernel(self.kernel)
        self.basis_ = HermiteBasis(int(self.degree))
        self.L_, self.T_ = assemble(kern, self.basis_)
        self.gap_ = kern.gap
        self.delta_ = kern.delta
        self.kernel_ = kern
        self.n_features_in_ = self.basis_.size
        if X is not None:
            check_coefficients(X, self.basis_)
        return self

    def transform(self, X):
        """Remove the collision-invariant components of each row."""
        check_is_fitted(self, "L_")
        X = check_coefficients(X, self.basis_)
        P = self.basis_.projector.vectors
        return X - (X @ P.T) @ P

    def predict(self, X, t=1.0):
        """Coefficients at time ``t`` of the solutions started from each row."""
        check_is_fitted(self, "L_")
        if t < 0:
            raise ValueError("t must be non-negative")
        X = self.transform(X)
        out = np.empty_like(X)
        grid = np.array([0.0, t]) if t > 0 else None
        for i, row in enumerate(X):
            if t == 0:
                out[i] = row
                continue
            traj = integrate(StateVector(self.basis_, row), self.L_, self.T_, t, dt0=self.dt,
                             grid=grid, tol=self.tol, nonlinear=self.nonlinear)
            out[i] = traj.states[-1]
        return out

    def trajectory(self, x, t_end, grid=None):
        check_is_fitted(self, "L_")
        x = self.transform(np.atleast_2d(x))[0]
        if grid is None:
            grid = time_grid(t_end)
        return integrate(StateVector(self.basis_, x), self.L_, self.T_, t_end, dt0=self.dt,
                         grid=grid, tol=self.tol, nonlinear=self.nonlinear)

    def score(self, X, y=None):
        """Mean Rayleigh quotient of the projected rows (closer to 0 is slower decay)."""
        X = self.transform(X)
        num = np.einsum("ij,jk,ik->i", X, self.L_.matrix, X)
        den = np.einsum("ij,ij->i", X, X)
        return float(np.mean(num / den))
