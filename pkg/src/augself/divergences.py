"""Exact f-divergences on finite spaces and checks of the optimal-head theory.

Zero-mass conventions: a cell with ``p + q = 0`` contributes nothing. A cell
with ``q = 0 < p`` contributes ``p * lim_{t->inf} f(t)/t``, and one with
``p = 0 < q`` contributes ``q * f(0)``. When either limit is infinite (KL and
reverse KL) a :class:`DomainError` is raised instead of returning ``inf``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T

KINDS = ("KL", "rKL", "JS", "LC", "AHM")
_LN2 = float(np.log(2.0))
_ROUNDOFF = 1e-12


class DomainError(ValueError):
    """The divergence is infinite for these supports."""


class NonConvergenceError(RuntimeError):
    """Gradient descent stopped decreasing the loss."""


class TheoryViolation(AssertionError):
    """A bound that must hold for every valid input was violated."""


def _validate(p, atol: float = 1e-12) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    if np.any(p < 0):
        raise ValueError("probabilities must be non-negative")
    if abs(p.sum() - 1.0) > atol:
        raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
    return p


@dataclass(frozen=True)
class DiscreteDistribution:
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _validate(self.probs))


def _probs(d) -> np.ndarray:
    return d.probs if isinstance(d, DiscreteDistribution) else _validate(d)


# -- generator functions -------------------------------------------------------


def f_generator(kind: str, t):
    """The convex function f with f(1) = 0 defining each divergence."""
    t = np.asarray(t, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        if kind == "KL":
            return np.where(t > 0, t * np.log(np.where(t > 0, t, 1.0)), 0.0)
        if kind == "rKL":
            return -np.log(t)
        if kind == "JS":
            tlogt = np.where(t > 0, t * np.log(np.where(t > 0, t, 1.0)), 0.0)
            return -(t + 1) * np.log((t + 1) / 2) + tlogt
        if kind == "LC":
            return (t - 1) ** 2 / (t + 1)
        if kind == "AHM":
            return (1 - t) / (t + 1)
    raise ValueError(f"unknown divergence kind {kind!r}")


_F_AT_ZERO = {"KL": 0.0, "rKL": np.inf, "JS": _LN2, "LC": 1.0, "AHM": 1.0}
_SLOPE_AT_INF = {"KL": np.inf, "rKL": 0.0, "JS": _LN2, "LC": 1.0, "AHM": 0.0}


def f_div(p, q, kind: str) -> float:
    """sum_i q_i f(p_i / q_i) with the module's zero-mass conventions."""
    if kind not in KINDS:
        raise ValueError(f"unknown divergence kind {kind!r}")
    p, q = _probs(p), _probs(q)
    if p.shape != q.shape:
        raise ValueError(f"distributions differ in size: {p.size} vs {q.size}")
    both = (p > 0) & (q > 0)
    only_p = (p > 0) & (q == 0)
    only_q = (p == 0) & (q > 0)
    if only_p.any() and np.isinf(_SLOPE_AT_INF[kind]):
        raise DomainError(f"{kind}: p has mass where q has none")
    if only_q.any() and np.isinf(_F_AT_ZERO[kind]):
        raise DomainError(f"{kind}: q has mass where p has none")
    total = float(np.sum(q[both] * f_generator(kind, p[both] / q[both])))
    if only_p.any():
        total += _SLOPE_AT_INF[kind] * float(p[only_p].sum())
    if only_q.any():
        total += _F_AT_ZERO[kind] * float(q[only_q].sum())
    return total


def _cellwise(p, q, fn) -> float:
    p, q = _probs(p), _probs(q)
    s = p + q
    live = s > 0
    return float(np.sum(fn(p[live], q[live], s[live])))


def ahm(p, q) -> float:
    """Arithmetic minus harmonic mean divergence, sum q (q - p) / (p + q)."""
    value = _cellwise(p, q, lambda a, b, s: b * (b - a) / s)
    # totals that round to 1 can leave the sum a few ulps outside [0, 1]
    if -_ROUNDOFF <= value < 0.0:
        return 0.0
    if 1.0 < value <= 1.0 + _ROUNDOFF:
        return 1.0
    return value


def lecam(p, q) -> float:
    """Le Cam divergence, sum (p - q)^2 / (p + q)."""
    return _cellwise(p, q, lambda a, b, s: (a - b) ** 2 / s)


def harmonic_w(p, q) -> float:
    """Harmonic mean, sum 2 p q / (p + q); 1 for equal and 0 for disjoint inputs."""
    return _cellwise(p, q, lambda a, b, s: 2 * a * b / s)


def verify_cor1(p, q, tol: float = 1e-12) -> dict:
    """Residuals of the symmetrisation and harmonic-mean identities for AHM.

    Raises :class:`TheoryViolation` if the AHM value leaves [0, 1] by more
    than ``tol``.
    """
    m_pq, m_qp = ahm(p, q), ahm(q, p)
    value = {
        "residual_sym": abs(m_pq + m_qp - lecam(p, q)),
        "residual_w": abs(m_pq - (1.0 - harmonic_w(p, q))),
        "ahm": m_pq,
    }
    if not (-tol <= m_pq <= 1.0 + tol):
        raise TheoryViolation(f"AHM divergence {m_pq!r} outside [0, 1]")
    return value


# -- joints over (x, omega, x_hat) ---------------------------------------------


@dataclass(frozen=True)
class DiscreteJoint:
    """Probability table over (x, omega, x_hat) with one target vector per omega."""

    table: np.ndarray
    omega_values: np.ndarray

    def __post_init__(self):
        table = np.asarray(self.table, dtype=np.float64)
        omega = np.asarray(self.omega_values, dtype=np.float64)
        if omega.ndim == 1:
            omega = omega[:, None]
        if table.ndim != 3:
            raise ValueError(f"joint table must be 3-D (x, omega, x_hat), got {table.shape}")
        if omega.shape[0] != table.shape[1]:
            raise ValueError(f"{omega.shape[0]} omega values for {table.shape[1]} omega cells")
        _validate(table)
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "omega_values", omega)

    @property
    def pair_marginal(self) -> np.ndarray:
        """p(x, x_hat), shape (n_x, n_xhat)."""
        return self.table.sum(axis=1)

    def weighted_targets(self, sign: float = 1.0) -> np.ndarray:
        """sum_omega p(x, omega, x_hat) * sign * omega, shape (n_x, n_xhat, d)."""
        return sign * np.einsum("xwy,wd->xyd", self.table, self.omega_values)


def random_joint(rng: np.random.Generator, shape=(4, 3, 4), dim: int = 2, omega_values=None) -> DiscreteJoint:
    table = rng.random(shape)
    table /= table.sum()
    if omega_values is None:
        omega_values = rng.random((shape[1], dim))
    return DiscreteJoint(table, omega_values)


def optimal_selfsup_discriminator(joint_data: DiscreteJoint, joint_gen: DiscreteJoint) -> np.ndarray:
    """Closed-form optimal head, indexed ``[x, x_hat, :]``.

    Real targets are ``+omega`` and generated targets ``-omega``. Cells with no
    mass under either joint are NaN.
    """
    if joint_data.table.shape != joint_gen.table.shape:
        raise ValueError(f"joint tables differ: {joint_data.table.shape} vs {joint_gen.table.shape}")
    if joint_data.omega_values.shape != joint_gen.omega_values.shape:
        raise ValueError("joints use different omega target dimensions")
    num = joint_data.weighted_targets(+1.0) + joint_gen.weighted_targets(-1.0)
    den = joint_data.pair_marginal + joint_gen.pair_marginal
    out = np.full(num.shape, np.nan)
    live = den > 0
    out[live] = num[live] / den[live][:, None]
    return out


def generator_ss_loss_at(dhat: np.ndarray, joint_gen: DiscreteJoint, sign_fake: float = -1.0) -> float:
    """Generator self-supervised loss (combination variant) against a fixed head.

    sum over (x, omega, x_hat) of p_G [ |D - omega+|^2 - |D - omega-|^2 ].
    """
    omega = joint_gen.omega_values
    d = np.nan_to_num(dhat)[:, None, :, :]  # x, 1, x_hat, dim
    pos = omega[None, :, None, :]
    neg = sign_fake * pos
    gap = np.sum((d - pos) ** 2, axis=-1) - np.sum((d - neg) ** 2, axis=-1)
    return float(np.sum(joint_gen.table * gap))


def thm1_check(p_data_xhat, p_G_xhat, c_vector) -> dict:
    """Generator ss loss under the optimal head versus 4 |c|^2 AHM(p_data || p_G).

    Both inputs are distributions over flattened (x, x_hat) cells and the
    targets are the constant ``+c`` / ``-c``.
    """
    p = _probs(p_data_xhat)
    q = _probs(p_G_xhat)
    c = np.atleast_1d(np.asarray(c_vector, dtype=np.float64))
    s = p + q
    live = s > 0
    ratio = np.zeros_like(s)
    ratio[live] = (p[live] - q[live]) / s[live]
    dstar = ratio[:, None] * c[None, :]
    gap = np.sum((dstar - c) ** 2, axis=1) - np.sum((dstar + c) ** 2, axis=1)
    lhs = float(np.sum(q * gap))
    rhs = 4.0 * float(c @ c) * ahm(p, q)
    return {"lhs": lhs, "rhs": rhs, "residual": abs(lhs - rhs)}


def thm1_check_joint(joint_data: DiscreteJoint, joint_gen: DiscreteJoint) -> dict:
    """Same comparison starting from full joints with a single constant target."""
    c = joint_data.omega_values
    if not (np.allclose(c, c[0]) and np.array_equal(c, joint_gen.omega_values)):
        raise ValueError("the equivalence needs one constant target shared by both joints")
    dstar = optimal_selfsup_discriminator(joint_data, joint_gen)
    lhs = generator_ss_loss_at(dstar, joint_gen)
    rhs = 4.0 * float(c[0] @ c[0]) * ahm(joint_data.pair_marginal, joint_gen.pair_marginal)
    return {"lhs": lhs, "rhs": rhs, "residual": abs(lhs - rhs)}


# -- learned head vs closed form -----------------------------------------------


@dataclass
class TabularProblem:
    joint_data: DiscreteJoint
    joint_gen: DiscreteJoint


def trained_dhat_agreement(problem: TabularProblem, training_steps: int = 10_000, lr: float | None = None,
                           tol: float = 1e-12, patience: int = 100) -> float:
    """Fit a lookup-table head with the ss discriminator loss; return the sup-norm gap.

    The loss is the exact expectation over the finite joints, minimised by
    plain gradient descent through the autodiff engine. Cells with zero
    total mass are excluded from the comparison.
    """
    jd, jg = problem.joint_data, problem.joint_gen
    nx, nw, ny = jd.table.shape
    dim = jd.omega_values.shape[1]
    # one row per (x, omega, x_hat) cell, gathering the table entry of (x, x_hat)
    xi, wi, yi = np.meshgrid(np.arange(nx), np.arange(nw), np.arange(ny), indexing="ij")
    cell = (xi * ny + yi).reshape(-1)
    w_data = jd.table.reshape(-1)
    w_gen = jg.table.reshape(-1)
    targets_pos = jd.omega_values[wi.reshape(-1)]
    targets_neg = -jg.omega_values[wi.reshape(-1)]

    mass = (jd.pair_marginal + jg.pair_marginal).reshape(-1)
    if lr is None:
        lr = 0.5 / mass.max()
    table = T.Tensor(np.zeros((nx * ny, dim)), requires_grad=True)

    def loss_fn():
        rows = table[cell]
        real = T.square(rows - targets_pos).sum(axis=1)
        fake = T.square(rows - targets_neg).sum(axis=1)
        return (real * w_data).sum() + (fake * w_gen).sum()

    prev = np.inf
    rising = 0
    for _ in range(training_steps):
        table.zero_grad()
        loss = loss_fn()
        value = loss.item()
        if not np.isfinite(value):
            raise NonConvergenceError("loss became non-finite")
        rising = rising + 1 if value > prev else 0
        if rising >= patience:
            raise NonConvergenceError(f"loss increased for {patience} consecutive steps")
        prev = value
        loss.backward()
        if np.max(np.abs(table.grad)) < tol:
            break
        table.data = table.data - lr * table.grad

    learned = table.data.reshape(nx, ny, dim)
    closed = optimal_selfsup_discriminator(jd, jg)
    live = mass.reshape(nx, ny) > 0
    return float(np.max(np.abs(learned[live] - closed[live])))
