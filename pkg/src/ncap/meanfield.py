"""Networked dynamics dx_i/dt = f(x_i) + sum_j P_ij g(x_i, x_j), the L_P
averaging operator, and the 1-D mean-field reduction
dx_av/dt = f(x_av) + beta_eff * g(x_av, x_av).

Self-dynamics and couplings come from a small registered catalog so systems
stay serializable and the simulator stays deterministic (fixed-step RK4).
"""

import numpy as np

EPSILON = 1e-12

# catalog: name -> factory(params) -> vectorized callable
_SELF_DYNAMICS = {}
_COUPLINGS = {}


def register_self_dynamics(name, factory):
    _SELF_DYNAMICS[name] = factory


def register_coupling(name, factory):
    _COUPLINGS[name] = factory


register_self_dynamics("linear_decay", lambda a=1.0: (lambda x: -a * x))
register_self_dynamics("constant_force", lambda c=1.0: (lambda x: c * np.ones_like(x)))
register_self_dynamics("affine", lambda a=1.0, c=0.0: (lambda x: c - a * x))

# g(x_i, x_j); the offset x_star is an unknown constant that shifts the
# coupling but provably never enters beta_eff
register_coupling("linear_offset", lambda x_star=0.0: (lambda xi, xj: xj - x_star))
register_coupling("none", lambda: (lambda xi, xj: np.zeros(np.broadcast(xi, xj).shape)))


class NetworkedSystem:
    """Adjacency P (P[i, j] weights the influence of node j on node i) plus
    catalog-drawn self-dynamics f and coupling g."""

    def __init__(self, P, f_name, f_params=None, g_name="none", g_params=None):
        self.P = np.asarray(P, dtype=np.float64)
        if self.P.ndim != 2 or self.P.shape[0] != self.P.shape[1]:
            raise ValueError("adjacency must be a square matrix")
        if self.P.shape[0] < 1:
            raise ValueError("need at least one node")
        if f_name not in _SELF_DYNAMICS:
            raise KeyError("unknown self-dynamics %r (have %s)" % (f_name, sorted(_SELF_DYNAMICS)))
        if g_name not in _COUPLINGS:
            raise KeyError("unknown coupling %r (have %s)" % (g_name, sorted(_COUPLINGS)))
        self.f_name, self.f_params = f_name, dict(f_params or {})
        self.g_name, self.g_params = g_name, dict(g_params or {})
        self.f = _SELF_DYNAMICS[f_name](**self.f_params)
        self.g = _COUPLINGS[g_name](**self.g_params)

    @property
    def n(self):
        return self.P.shape[0]

    def velocity(self, x):
        """dx/dt at state x (length-n vector)."""
        gmat = self.g(x[:, None], x[None, :])  # gmat[i, j] = g(x_i, x_j)
        return self.f(x) + (self.P * gmat).sum(axis=1)

    def delta_in(self):
        return self.P.sum(axis=1)

    def delta_out(self):
        return self.P.sum(axis=0)


def lp_operator(P, z):
    """Weighted average (1^T P z) / (1^T P 1); the eps guard applies only
    when the total link weight is exactly zero."""
    P = np.asarray(P, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    delta_out = P.sum(axis=0)
    if delta_out.shape != z.shape:
        raise ValueError("z length %r does not match adjacency %r" % (z.shape, P.shape))
    den = float(P.sum())
    if den == 0.0:
        den = EPSILON
    return float(delta_out @ z) / den


def beta_from_adjacency(P):
    """beta_eff = L_P(delta_in) of a dense adjacency."""
    P = np.asarray(P, dtype=np.float64)
    return lp_operator(P, P.sum(axis=1))


class Trajectory:
    def __init__(self, times, states, converged, diverged=False):
        self.times = np.asarray(times, dtype=np.float64)
        self.states = np.asarray(states, dtype=np.float64)
        self.converged = bool(converged)
        self.diverged = bool(diverged)

    @property
    def x_final(self):
        return self.states[-1]


def _rk4_step(fun, x, dt):
    k1 = fun(x)
    k2 = fun(x + dt / 2.0 * k1)
    k3 = fun(x + dt / 2.0 * k2)
    k4 = fun(x + dt * k3)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _integrate(fun, x0, dt, t_max, tol):
    """Fixed-step RK4 until convergence (max |dx/dt| < tol) or t_max.

    On a non-finite state the run aborts and returns the last finite state
    with diverged=True.
    """
    if dt <= 0 or tol <= 0:
        raise ValueError("dt and tol must be positive")
    x = np.array(x0, dtype=np.float64)
    times = [0.0]
    states = [x.copy()]
    n_steps = int(np.ceil(t_max / dt))
    converged = bool(np.max(np.abs(fun(x))) < tol)
    diverged = False
    for step in range(1, n_steps + 1):
        if converged:
            break
        x_next = _rk4_step(fun, x, dt)
        if not np.all(np.isfinite(x_next)):
            diverged = True
            break
        x = x_next
        times.append(step * dt)
        states.append(x.copy())
        converged = bool(np.max(np.abs(fun(x))) < tol)
    return Trajectory(times, states, converged, diverged)


def simulate(system, x0, dt, t_max, tol):
    """Integrate the full coupled system from x0."""
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != (system.n,):
        raise ValueError("x0 shape %r does not match %d nodes" % (x0.shape, system.n))
    return _integrate(system.velocity, x0, dt, t_max, tol)


def reduce_mean_field(system, x0_av, dt, t_max, tol):
    """Collapse the system to dx_av/dt = f(x_av) + beta_eff g(x_av, x_av).

    Returns (beta_eff, trajectory of x_av, x_eff) where x_eff is the final
    state (a steady state when the trajectory converged).
    """
    beta = beta_from_adjacency(system.P)

    def reduced(x):
        return system.f(x) + beta * system.g(x, x)

    traj = _integrate(reduced, np.array([float(x0_av)]), dt, t_max, tol)
    flat = Trajectory(traj.times, traj.states[:, 0], traj.converged, traj.diverged)
    return beta, flat, float(flat.states[-1])


def make_k_regular(n, k, weight):
    """Directed circulant k-regular graph: node i receives from i+1..i+k."""
    if not (1 <= k < n):
        raise ValueError("need 1 <= k < n")
    P = np.zeros((n, n))
    for i in range(n):
        for step in range(1, k + 1):
            P[i, (i + step) % n] = weight
    return P
