"""Dense two-phase tableau simplex with Bland's anti-cycling rule.

Solves ``max c @ x`` subject to ``A_ub @ x <= b_ub``, ``A_eq @ x == b_eq`` and
``x >= 0``.  Intended for the small programs in this package (tens of
variables), where clarity matters more than speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-11
FEAS_TOL = 1e-9


class LpError(RuntimeError):
    """Raised when a program is infeasible, unbounded or fails to converge."""


@dataclass(frozen=True)
class LpResult:
    x: np.ndarray
    objective: float
    iterations: int
    basis: tuple[int, ...]


def _pivot(tab: np.ndarray, row: int, col: int) -> None:
    tab[row] /= tab[row, col]
    column = tab[:, col].copy()
    column[row] = 0.0
    tab -= np.outer(column, tab[row])


def _run(tab: np.ndarray, basis: list[int], allowed: np.ndarray, max_iter: int) -> int:
    """Optimize the tableau in place; the last row holds reduced costs.

    Returns the number of pivots.  Columns outside ``allowed`` never enter.
    """
    m = tab.shape[0] - 1
    for it in range(max_iter):
        reduced = tab[-1, :-1]
        candidates = np.flatnonzero((reduced > PIVOT_TOL) & allowed)
        if candidates.size == 0:
            return it
        col = int(candidates[0])  # Bland: lowest index improving column
        colvals = tab[:m, col]
        positive = colvals > PIVOT_TOL
        if not positive.any():
            raise LpError("linear program is unbounded")
        ratios = np.full(m, np.inf)
        ratios[positive] = tab[:m, -1][positive] / colvals[positive]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + 1e-12 * max(1.0, abs(best)))
        row = int(min(ties, key=lambda r: basis[r]))  # Bland: lowest basic index
        _pivot(tab, row, col)
        basis[row] = col
    raise LpError("simplex iteration limit reached")


def simplex_max(
    c: np.ndarray,
    A_ub: np.ndarray | None = None,
    b_ub: np.ndarray | None = None,
    A_eq: np.ndarray | None = None,
    b_eq: np.ndarray | None = None,
    max_iter: int = 10_000,
) -> LpResult:
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq

    # Columns: original | slacks (one per inequality) | artificials (one per row).
    n_slack = m_ub
    n_art = m
    width = n + n_slack + n_art
    tab = np.zeros((m + 1, width + 1))
    tab[:m_ub, :n] = A_ub
    tab[:m_ub, n:n + n_slack] = np.eye(m_ub)
    tab[:m_ub, -1] = b_ub
    tab[m_ub:m, :n] = A_eq
    tab[m_ub:m, -1] = b_eq
    negative = tab[:m, -1] < 0
    tab[:m][negative] *= -1.0

    basis: list[int] = []
    art_start = n + n_slack
    for i in range(m):
        if i < m_ub and not negative[i]:
            basis.append(n + i)  # slack is a ready basic column
        else:
            tab[i, art_start + i] = 1.0
            basis.append(art_start + i)
    used_art = [b for b in basis if b >= art_start]

    iterations = 0
    if used_art:
        # Phase one: maximize minus the sum of artificials.
        tab[-1, :] = 0.0
        for i, bcol in enumerate(basis):
            if bcol >= art_start:
                tab[-1, :] += tab[i, :]
        tab[-1, art_start:-1] = 0.0
        allowed = np.ones(width, dtype=bool)
        allowed[art_start:] = False
        iterations += _run(tab, basis, allowed, max_iter)
        if tab[-1, -1] > FEAS_TOL * max(1.0, np.abs(tab[:m, -1]).max(initial=0.0)):
            raise LpError("linear program is infeasible")
        # Drive artificials out of the basis where possible; drop redundant rows.
        keep = []
        for i in range(m):
            if basis[i] >= art_start:
                row = tab[i, :art_start]
                nz = np.flatnonzero(np.abs(row) > 1e-9)
                if nz.size:
                    _pivot(tab, i, int(nz[0]))
                    basis[i] = int(nz[0])
                    keep.append(i)
            else:
                keep.append(i)
        tab = np.vstack([tab[keep], tab[-1:]])
        basis = [basis[i] for i in keep]
        m = len(keep)

    # Phase two on the original objective; artificial columns stay frozen.
    tab = np.delete(tab, np.s_[art_start:width], axis=1)
    width = art_start
    tab[-1, :] = 0.0
    tab[-1, :n] = c
    for i, bcol in enumerate(basis):
        if tab[-1, bcol] != 0.0:
            tab[-1, :] -= tab[-1, bcol] * tab[i, :]
    allowed = np.ones(width, dtype=bool)
    iterations += _run(tab, basis, allowed, max_iter)

    x_full = np.zeros(width)
    for i, bcol in enumerate(basis):
        x_full[bcol] = tab[i, -1]
    x = x_full[:n]
    return LpResult(x=x, objective=float(c @ x), iterations=iterations, basis=tuple(basis))
