"""Jukes-Cantor substitution model.

Branch lengths are measured in expected mutations per site. Base order is
fixed as A=0, C=1, G=2, T=3 everywhere in the package; JC is symmetric so
the ordering is unobservable, but a fixed convention keeps golden outputs
stable.
"""

from __future__ import annotations

import math

import numpy as np

BASES = "ACGT"
N_STATES = 4

_STATIONARY = np.full(N_STATES, 0.25)


def stationary() -> np.ndarray:
    """Stationary distribution of the JC chain: uniform over the 4 bases."""
    return _STATIONARY.copy()


def jc_transition(b: float) -> np.ndarray:
    """Transition probability matrix P(b) for branch length b.

    Entry (i, j) is the probability of base i mutating to base j along a
    branch of length b (expected mutations per site). Closed form:
    diagonal 1/4 + (3/4) exp(-4b/3), off-diagonal 1/4 - (1/4) exp(-4b/3).
    """
    if not math.isfinite(b) or b < 0:
        raise ValueError(f"branch length must be finite and >= 0, got {b!r}")
    e = math.exp(-4.0 * b / 3.0)
    off = 0.25 - 0.25 * e
    p = np.full((N_STATES, N_STATES), off)
    np.fill_diagonal(p, 0.25 + 0.75 * e)
    return p


def jc_transition_derivative(b: float) -> np.ndarray:
    """Entrywise d/db of jc_transition(b).

    Diagonal -exp(-4b/3), off-diagonal (1/3) exp(-4b/3); rows sum to 0.
    """
    if not math.isfinite(b) or b < 0:
        raise ValueError(f"branch length must be finite and >= 0, got {b!r}")
    e = math.exp(-4.0 * b / 3.0)
    d = np.full((N_STATES, N_STATES), e / 3.0)
    np.fill_diagonal(d, -e)
    return d


class JukesCantorModel:
    """The JC model behind a minimal substitution-model interface.

    The engine only ever needs the stationary distribution, the transition
    matrix and its branch-length derivative, so any reversible model
    exposing these three can be dropped in.
    """

    n_states = N_STATES

    def stationary(self) -> np.ndarray:
        return stationary()

    def transition(self, b: float) -> np.ndarray:
        return jc_transition(b)

    def transition_derivative(self, b: float) -> np.ndarray:
        return jc_transition_derivative(b)


JC = JukesCantorModel()
