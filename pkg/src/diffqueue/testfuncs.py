"""Compactly supported test functions for the martingale diagnostics.

Each function has the form ``u(t, x) = p(x) * plateau(x) * psi(t)`` where
``p`` is a monomial of degree at most two, ``psi`` is 1 or ``t``, and the
plateau is a C^2 radial bump equal to 1 on ``|x| <= R0``, 0 on
``|x| >= 2*R0``, with a quintic smoothstep in the shell.  On the bulk of
a path (inside the plateau) the derivatives reduce to those of the bare
monomial, so the family probes the drift and each diagonal diffusion
entry separately while staying compactly supported.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["TestFunction", "plateau", "build_family"]

DEFAULT_RADIUS = 6.0


def _smoothstep(s: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quintic smoothstep and derivatives; C^2-flat at both ends."""
    v = s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
    dv = 30.0 * s * s * (s - 1.0) ** 2
    ddv = 60.0 * s * (2.0 * s - 1.0) * (s - 1.0)
    return v, dv, ddv


def plateau(x: np.ndarray, r0: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bump value, gradient, and Hessian diagonal at states ``x`` of shape (..., d)."""
    x = np.asarray(x, dtype=float)
    rho = np.sqrt(np.sum(x * x, axis=-1))
    val = np.ones(rho.shape)
    grad = np.zeros(x.shape)
    hdiag = np.zeros(x.shape)

    shell = (rho > r0) & (rho < 2.0 * r0)
    val[rho >= 2.0 * r0] = 0.0
    if np.any(shell):
        rs = rho[shell]
        s = (rs - r0) / r0
        sv, dsv, ddsv = _smoothstep(s)
        val[shell] = 1.0 - sv
        d_rho = -dsv / r0
        dd_rho = -ddsv / (r0 * r0)
        unit = x[shell] / rs[..., None]
        grad[shell] = d_rho[..., None] * unit
        hdiag[shell] = (dd_rho[..., None] * unit ** 2
                        + d_rho[..., None] * (1.0 - unit ** 2) / rs[..., None])
    return val, grad, hdiag


@dataclass(frozen=True)
class TestFunction:
    """``u = p * plateau * psi`` with ``p`` encoded by its exponent pair.

    ``powers`` is () for the constant, (i,) for ``x_i``, (i, j) for
    ``x_i * x_j``.  ``time_weighted`` selects ``psi(t) = t`` over 1.
    All evaluators take ``t`` broadcastable against ``x.shape[:-1]`` and
    ``x`` of shape (..., d); they return (...) or (..., d) arrays.
    """

    id: str
    dim: int
    powers: tuple[int, ...]
    time_weighted: bool
    radius: float = DEFAULT_RADIUS

    def _poly(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        base = x.shape[:-1]
        grad = np.zeros(x.shape)
        hdiag = np.zeros(x.shape)
        if len(self.powers) == 0:
            return np.ones(base), grad, hdiag
        if len(self.powers) == 1:
            (i,) = self.powers
            grad[..., i] = 1.0
            return x[..., i].copy(), grad, hdiag
        i, j = self.powers
        val = x[..., i] * x[..., j]
        if i == j:
            grad[..., i] = 2.0 * x[..., i]
            hdiag[..., i] = 2.0
        else:
            grad[..., i] = x[..., j]
            grad[..., j] = x[..., i]
        return val, grad, hdiag

    def _eval(self, x: np.ndarray):
        x = np.asarray(x, dtype=float)
        p, pg, ph = self._poly(x)
        b, bg, bh = plateau(x, self.radius)
        val = p * b
        grad = pg * b[..., None] + p[..., None] * bg
        hdiag = ph * b[..., None] + 2.0 * pg * bg + p[..., None] * bh
        return val, grad, hdiag

    def value(self, t, x) -> np.ndarray:
        val, _, _ = self._eval(x)
        return val * t if self.time_weighted else val

    def dt(self, t, x) -> np.ndarray:
        val, _, _ = self._eval(x)
        return val if self.time_weighted else np.zeros(val.shape)

    def grad(self, t, x) -> np.ndarray:
        _, grad, _ = self._eval(x)
        return grad * np.asarray(t)[..., None] if self.time_weighted else grad

    def hess_diag(self, t, x) -> np.ndarray:
        _, _, hdiag = self._eval(x)
        return hdiag * np.asarray(t)[..., None] if self.time_weighted else hdiag


def build_family(dim: int, radius: float = DEFAULT_RADIUS) -> list[TestFunction]:
    """Monomials of degree <= 2 times the plateau, each with psi in {1, t}."""
    polys: list[tuple[str, tuple[int, ...]]] = [("1", ())]
    polys += [(f"x{i}", (i,)) for i in range(dim)]
    polys += [(f"x{i}^2" if i == j else f"x{i}*x{j}", (i, j))
              for i in range(dim) for j in range(i, dim)]
    family = []
    for label, powers in polys:
        for time_weighted in (False, True):
            name = f"{label}*t" if time_weighted else label
            family.append(TestFunction(id=name, dim=dim, powers=powers,
                                       time_weighted=time_weighted, radius=radius))
    return family
