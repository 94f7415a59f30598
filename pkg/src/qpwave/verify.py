"""Independent verification: direct integration of the truncated wave system,
Lyapunov-exponent estimation, conjugacy of reduced and full trajectories
through the transform chain, and the Fourier-multiplier decay profile.

The truncated system is the canonical flow of
H(q, p, t) = sum_k k (p_k^2 + q_k^2)/2 + eps <M(theta0 + omega t) q, q>,
M(theta)_{kl} = sum_j c_jlk v_j(theta) / (sqrt(k) sqrt(l)),
so qdot_k = k p_k and pdot_k = -k q_k - 2 eps (M q)_k. The integrator is a
4th-order symmetric splitting whose subflows (mode rotations / potential
kicks) are exact, hence it is exact to roundoff at eps = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .galerkin import CouplingTensor, WeightedSpace
from .potential import FrequencySpec, PotentialFourier

_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_W0 = 1.0 - 2.0 * _W1
# kick stage centers within one step (exact midpoints of the three substeps)
_STAGE_CENTERS = (0.5 * _W1, _W1 + 0.5 * _W0, 1.0 - 0.5 * _W1)


class StabilityError(RuntimeError):
    """Step size too large for the fastest mode."""


@dataclass
class TruncatedWaveSystem:
    """2*J_max real ODE system in (q, p) with quasi-periodic coupling."""

    pf: PotentialFourier
    ct: CouplingTensor
    freq: FrequencySpec
    eps: float
    J: int
    theta0: np.ndarray

    def __post_init__(self):
        self.theta0 = np.asarray(self.theta0, dtype=float)
        J, Jp = self.J, self.pf.J_max
        C = self.ct.dense()[:Jp, :J, :J]  # (j, l, k)
        s = np.sqrt(np.arange(1, J + 1, dtype=float))
        # T[j, k, l] = c_jlk / (sqrt(k) sqrt(l))
        self._T = np.transpose(C, (0, 2, 1)) / (s[None, :, None] * s[None, None, :])
        self._modes = np.arange(1, J + 1, dtype=float)

    def thetas(self, t: np.ndarray) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return self.theta0[None, :] + t[:, None] * self.freq.omega[None, :]

    def coupling_at(self, t: np.ndarray) -> np.ndarray:
        """M(theta(t)) for a batch of times, shape (T, J, J)."""
        v = self.pf.v_of_theta(self.thetas(t))
        M = np.tensordot(v, self._T, axes=(1, 0))
        return M.real

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        J = self.J
        q, p = y[:J], y[J:]
        M = self.coupling_at(np.array([t]))[0]
        dq = self._modes * p
        dp = -self._modes * q - 2.0 * self.eps * (M @ q)
        return np.concatenate([dq, dp])

    def hamiltonian(self, t: float, y: np.ndarray) -> float:
        J = self.J
        q, p = y[:J], y[J:]
        M = self.coupling_at(np.array([t]))[0]
        return float(np.sum(self._modes * (p**2 + q**2)) / 2.0
                     + self.eps * q @ (M @ q))

    def energy(self, y: np.ndarray) -> float:
        J = self.J
        q, p = y[:J], y[J:]
        return float(np.sum(self._modes * (p**2 + q**2)) / 2.0)

    def gradient_defect(self, rng: np.random.Generator, samples: int = 8,
                        h: float = 1e-6) -> float:
        """Central-difference check that rhs is the canonical gradient flow."""
        J = self.J
        worst = 0.0
        for _ in range(samples):
            t = float(rng.uniform(0.0, 10.0))
            y = rng.standard_normal(2 * J)
            f = self.rhs(t, y)
            grad = np.zeros(2 * J)
            for a in range(2 * J):
                e = np.zeros(2 * J)
                e[a] = h
                grad[a] = (self.hamiltonian(t, y + e) - self.hamiltonian(t, y - e)) / (2 * h)
            expected = np.concatenate([grad[J:], -grad[:J]])
            worst = max(worst, float(np.max(np.abs(f - expected))
                                     / max(1.0, np.max(np.abs(f)))))
        return worst


def integrate_full(
    sys: TruncatedWaveSystem,
    initial: np.ndarray,
    T: float,
    dt: float | None = None,
    record_every: int | None = None,
    chunk: int = 2048,
) -> tuple:
    """4th-order splitting integration; returns (times, states (S, 2J))."""
    J = sys.J
    dt_max = 0.1 / J
    if dt is None:
        dt = dt_max
    n_steps = int(math.ceil(T / dt - 1e-12))
    dt = T / n_steps
    if dt > dt_max * (1 + 1e-12):
        raise StabilityError(f"dt={dt:.3e} exceeds 0.1/J_max={dt_max:.3e}")
    if record_every is None:
        record_every = max(1, n_steps // 400)

    k = sys._modes
    substeps = (_W1, _W0, _W1)
    # merged drift angles: half of first substep, averages between kicks, half of last
    drift_sizes = (0.5 * _W1 * dt, 0.5 * (_W1 + _W0) * dt, 0.5 * (_W0 + _W1) * dt,
                   0.5 * _W1 * dt)
    rot = [(np.cos(k * a), np.sin(k * a)) for a in drift_sizes]
    kick_sizes = tuple(w * dt for w in substeps)

    q = initial[:J].astype(float).copy()
    p = initial[J:].astype(float).copy()
    times = [0.0]
    states = [np.concatenate([q, p])]

    coupled = sys.eps != 0.0
    step = 0
    while step < n_steps:
        block = min(chunk, n_steps - step)
        if coupled:
            stage_t = (step + np.arange(block)[:, None]) * dt + np.array(_STAGE_CENTERS) * dt
            Mblock = sys.coupling_at(stage_t.ravel()).reshape(block, 3, J, J)
        for b in range(block):
            for stage in range(3):
                c, s = rot[stage]
                q, p = c * q + s * p, -s * q + c * p
                if coupled:
                    p = p - (2.0 * sys.eps * kick_sizes[stage]) * (Mblock[b, stage] @ q)
            c, s = rot[3]
            q, p = c * q + s * p, -s * q + c * p
            step += 1
            if step % record_every == 0 or step == n_steps:
                times.append(step * dt)
                states.append(np.concatenate([q, p]))
    return np.asarray(times), np.asarray(states)


def integrate_reduced(lam: np.ndarray, initial_z: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Exact rotation z_j(t) = e^{+i lam_j t} z_j(0); no integrator error."""
    lam = np.asarray(lam, dtype=float)
    t = np.asarray(times, dtype=float)
    return np.exp(1j * t[:, None] * lam[None, :]) * np.asarray(initial_z)[None, :]


def qp_to_u(states: np.ndarray, J: int) -> np.ndarray:
    """(q, p) samples to doubled complex coordinates u = (z, conj z)."""
    q, p = states[..., :J], states[..., J:]
    z = (q - 1j * p) / math.sqrt(2.0)
    return np.concatenate([z, np.conj(z)], axis=-1)


def u_norm(u: np.ndarray, ws: WeightedSpace) -> np.ndarray:
    w = ws.metric_weights
    w2 = np.concatenate([w, w])
    return np.sqrt(np.sum((w2[None, :] * np.abs(u)) ** 2, axis=-1))


@dataclass
class ConjugacyReport:
    max_rel_deviation: float
    modulus_drift: float
    times: np.ndarray
    deviations: np.ndarray

    def as_dict(self) -> dict:
        return {
            "max_rel_deviation": self.max_rel_deviation,
            "modulus_drift": self.modulus_drift,
        }


def compare_through_chain(
    chain,
    full_times: np.ndarray,
    full_states: np.ndarray,
    lam: np.ndarray,
    theta0: np.ndarray,
    omega: np.ndarray,
    ws: WeightedSpace,
    subsample: int = 1,
) -> ConjugacyReport:
    """Map the reduced trajectory forward through the chain at theta(t) and
    return the sup-t relative weighted distance to the full trajectory."""
    J = ws.J_max
    times = np.asarray(full_times)[::subsample]
    u_full = qp_to_u(np.asarray(full_states)[::subsample], J)
    thetas = np.asarray(theta0)[None, :] + times[:, None] * np.asarray(omega)[None, :]

    if chain is not None and getattr(chain, "steps", None):
        mats = chain.matrices_at(thetas)
    else:
        mats = np.broadcast_to(np.eye(2 * J, dtype=complex),
                               (times.shape[0], 2 * J, 2 * J)).copy()

    u_red0 = np.linalg.solve(mats[0], u_full[0])
    phase = np.exp(1j * times[:, None] * np.asarray(lam)[None, :])
    u_red = np.concatenate([phase * u_red0[None, :J],
                            np.conj(phase) * u_red0[None, J:]], axis=-1)
    u_pred = np.einsum("tij,tj->ti", mats, u_red)

    dev = u_norm(u_pred - u_full, ws) / np.maximum(u_norm(u_full, ws), 1e-300)

    # reverse direction: reduced moduli recovered from the full trajectory
    u_back = np.linalg.solve(mats, u_full[..., None])[..., 0]
    moduli = np.abs(u_back[:, :J])
    drift = float(np.max(np.abs(moduli - moduli[0])) / max(np.max(moduli[0]), 1e-300))

    return ConjugacyReport(
        max_rel_deviation=float(np.max(dev)),
        modulus_drift=drift,
        times=times,
        deviations=dev,
    )


# ---------------------------------------------------------------------------
# Lyapunov exponents


@dataclass
class LyapunovEstimate:
    top_exponent: float
    times: np.ndarray
    growth: np.ndarray
    horizon: float
    renorm_dt: float

    def as_dict(self) -> dict:
        return {
            "top_exponent": self.top_exponent,
            "horizon": self.horizon,
            "renorm_dt": self.renorm_dt,
            "final_growth": float(self.growth[-1]) if self.growth.size else 0.0,
        }


class RenormIntervalError(RuntimeError):
    pass


def _tail_slope(times: np.ndarray, growth: np.ndarray) -> float:
    half = len(times) // 2
    t, g = times[half:], growth[half:]
    if len(t) < 2:
        return float(growth[-1] / times[-1]) if times[-1] else 0.0
    A = np.vstack([t, np.ones_like(t)]).T
    coef, *_ = np.linalg.lstsq(A, g, rcond=None)
    return float(coef[0])


def lyapunov_from_stepper(step_fn, w0: np.ndarray, T: float, renorm_dt: float,
                          norm_fn) -> LyapunovEstimate:
    """Generic single-vector growth-rate estimator with renormalization.

    step_fn(t, w, h) advances the linear system from t to t + h; the top
    exponent is the least-squares slope of the tail (last half) of the
    cumulative log-growth series.
    """
    if T < 10 * renorm_dt:
        raise ValueError("horizon too short relative to the renorm interval")
    w = np.asarray(w0).astype(complex if np.iscomplexobj(w0) else float).copy()
    n0 = norm_fn(w)
    if n0 == 0:
        raise ValueError("zero initial vector")
    w /= n0
    t = 0.0
    total = 0.0
    times, growth = [], []
    n_int = int(round(T / renorm_dt))
    for _ in range(n_int):
        w = step_fn(t, w, renorm_dt)
        t += renorm_dt
        nrm = norm_fn(w)
        if not np.isfinite(nrm) or nrm > 1e280:
            raise RenormIntervalError("overflow before renormalization; shrink interval")
        total += math.log(nrm)
        w /= nrm
        times.append(t)
        growth.append(total)
    times = np.asarray(times)
    growth = np.asarray(growth)
    return LyapunovEstimate(
        top_exponent=_tail_slope(times, growth),
        times=times, growth=growth, horizon=T, renorm_dt=renorm_dt,
    )


def lyapunov_exponent(
    sys: TruncatedWaveSystem,
    T: float,
    renorm_dt: float = 1.0,
    dt: float | None = None,
    ws: WeightedSpace | None = None,
    seed: int = 7,
) -> LyapunovEstimate:
    """Top Lyapunov exponent of the truncated wave flow (the system is linear,
    so the state itself evolves as a tangent vector)."""
    if T < 100 * renorm_dt:
        raise ValueError("horizon must cover at least 100 renormalization intervals")
    ws = ws or WeightedSpace(N=2, J_max=sys.J)
    rng = np.random.default_rng(seed)
    w0 = rng.standard_normal(2 * sys.J) * np.concatenate([1.0 / ws.metric_weights] * 2)

    wmetric = np.concatenate([ws.metric_weights, ws.metric_weights])

    def norm_fn(y):
        return float(np.sqrt(np.sum((wmetric * y) ** 2)))

    def step_fn(t0, y, h):
        base = sys.theta0.copy()
        sys_shift = TruncatedWaveSystem(sys.pf, sys.ct, sys.freq, sys.eps, sys.J,
                                        base + t0 * sys.freq.omega)
        _, states = integrate_full(sys_shift, y, h, dt=dt, record_every=10**9)
        return states[-1]

    return lyapunov_from_stepper(step_fn, w0, T, renorm_dt, norm_fn)


# ---------------------------------------------------------------------------
# Multiplier decay


@dataclass
class MultiplierEstimate:
    xi: np.ndarray
    decay_constant: float  # max_j |xi_j| * j
    max_abs: float

    def as_dict(self) -> dict:
        return {
            "xi": self.xi.tolist(),
            "decay_constant": self.decay_constant,
            "max_abs": self.max_abs,
            "abs_profile": np.abs(self.xi).tolist(),
            "weighted_profile": (np.abs(self.xi) * np.arange(1, len(self.xi) + 1)).tolist(),
        }


def multiplier_decay(nf) -> MultiplierEstimate:
    lam = nf.lambdas() if hasattr(nf, "lambdas") else np.asarray(nf, dtype=float)
    j = np.arange(1, lam.shape[0] + 1, dtype=float)
    xi = lam**2 - j**2
    return MultiplierEstimate(
        xi=xi,
        decay_constant=float(np.max(np.abs(xi) * j)),
        max_abs=float(np.max(np.abs(xi))),
    )
