"""Iterative reduction of the lattice Hamiltonian to constant coefficients.

State lives in doubled coordinates u = (z, zbar). A quadratic Hamiltonian
piece ``<A z, z> + <B z, zbar> + <C zbar, zbar>`` is carried either as a
QuadraticForm (window Fourier coefficients per block) or as its symmetric
u-form matrix Q = [[A, B^T/2], [B/2, C]] with H = <Q u, u>.

Conventions (fixed once, verified by the recomposition oracle):
  * flow of a Hamiltonian G:  du/dt = 2 * JSYM * Q_G * u, where
    JSYM = [[0, +i I], [-i I, 0]] (also the symplectic form matrix),
  * Poisson bracket {G, H} = dG(X_H) has u-form
    2 * (Q_G JSYM Q_H - Q_H JSYM Q_G),
  * each step's change of variables is the time-1 flow of eps_m * F at frozen
    angle, applied pointwise in theta; recomposition uses the transport rule
    L+ = Phi^-1 (L Phi - omega . d_theta Phi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import resonance
from .fourier import (
    grid_to_window,
    kdot,
    kinf,
    product_grid_size,
    project_window_grid,
    window_to_grid,
)
from .galerkin import QuadraticForm, WeightedSpace
from .potential import FrequencySpec


class InvalidParameterError(ValueError):
    pass


class ResonanceError(RuntimeError):
    """A small divisor fell below its admissibility threshold."""

    def __init__(self, kind, k, i, j, divisor, threshold):
        self.kind, self.k, self.i, self.j = kind, tuple(int(x) for x in k), int(i), int(j)
        self.divisor, self.threshold = float(divisor), float(threshold)
        super().__init__(
            f"near-resonance in {kind} block at k={self.k}, (i,j)=({self.i},{self.j}): "
            f"|divisor|={abs(divisor):.3e} < threshold {threshold:.3e}"
        )


class StepSizeError(RuntimeError):
    """A flow or remainder series failed to contract; reduce eps."""


class SelfAdjointnessError(ValueError):
    """Diagonal correction came out non-real."""


# ---------------------------------------------------------------------------
# Schedules


@dataclass
class Schedule:
    """Per-step sizes: eps_v = eps^{(4/3)^v}, strips s_v = eps_{v+1}^{1/N}
    (clamped to s_0 <= 1/2 with proportional rescale), cutoffs
    K_v = 100 s_v^{-1} 2^v |log eps|, gamma_v = gamma / 2^v."""

    eps0: float
    N: int
    gamma: float
    n: int
    M: int
    log_eps: np.ndarray
    eps: np.ndarray
    strip: np.ndarray
    strip_raw: np.ndarray
    cutoff: np.ndarray
    gamma_steps: np.ndarray
    clamped: bool

    @property
    def degenerate(self) -> bool:
        return self.eps0 == 0.0

    def as_dict(self) -> dict:
        return {
            "eps0": self.eps0, "N": self.N, "gamma": self.gamma, "n": self.n,
            "M": self.M, "eps": self.eps.tolist(), "strip": self.strip.tolist(),
            "strip_raw": self.strip_raw.tolist(), "cutoff": self.cutoff.tolist(),
            "gamma_steps": self.gamma_steps.tolist(), "clamped": self.clamped,
        }

    @classmethod
    def degenerate_schedule(cls, n: int, N: int, gamma: float) -> "Schedule":
        z = np.zeros(1)
        return cls(0.0, N, gamma, n, 0, z, z.copy(), z.copy(), z.copy(), z.copy(),
                   np.array([gamma]), False)


def build_schedule(eps0: float, N: int, gamma: float, n: int, M: int) -> Schedule:
    """All lists are computed in log space; length M+1 (indices 0..M)."""
    if not (0.0 < eps0 < 1.0):
        raise InvalidParameterError("eps0 must lie in (0, 1)")
    if M < 1 or N < 2:
        raise InvalidParameterError("need M >= 1 and N >= 2")
    v = np.arange(M + 2, dtype=float)
    log_eps = (4.0 / 3.0) ** v * math.log(eps0)  # indices 0..M+1
    eps = np.exp(log_eps)
    strip_raw = np.exp(log_eps[1 : M + 2] / N)  # s_v, v = 0..M
    clamped = bool(strip_raw[0] > 0.5)
    strip = strip_raw * (0.5 / strip_raw[0]) if clamped else strip_raw.copy()
    cutoff = 100.0 / strip * 2.0 ** np.arange(M + 1) * abs(math.log(eps0))
    gamma_steps = gamma / 2.0 ** np.arange(M + 1)
    return Schedule(
        eps0=eps0, N=N, gamma=gamma, n=n, M=M,
        log_eps=log_eps[: M + 1], eps=eps[: M + 1],
        strip=strip, strip_raw=strip_raw, cutoff=cutoff,
        gamma_steps=gamma_steps, clamped=clamped,
    )


# ---------------------------------------------------------------------------
# Normal form


@dataclass
class NormalForm:
    """Frequencies lam_j = j + sum_i eps_i mu_j^(i), rebuilt from history."""

    J: int
    mu_history: list = field(default_factory=list)  # [(eps_i, mu_i array)]

    @property
    def base(self) -> np.ndarray:
        return np.arange(1, self.J + 1, dtype=float)

    def lambdas(self) -> np.ndarray:
        lam = self.base.copy()
        for eps_i, mu_i in self.mu_history:
            lam = lam + eps_i * mu_i
        return lam

    def mu_decay_constants(self) -> list:
        """max_j j * |mu_j| per recorded step."""
        j = self.base
        return [float(np.max(j * np.abs(mu))) for _, mu in self.mu_history]

    def copy(self) -> "NormalForm":
        return NormalForm(self.J, [(e, m.copy()) for e, m in self.mu_history])


def update_normal_form(nf: NormalForm, diag_avg: np.ndarray, eps_m: float,
                       imag_tol: float = 1e-12) -> NormalForm:
    diag_avg = np.asarray(diag_avg)
    if diag_avg.shape != (nf.J,):
        raise InvalidParameterError("diagonal average has wrong length")
    imag = float(np.max(np.abs(diag_avg.imag))) if np.iscomplexobj(diag_avg) else 0.0
    if imag > imag_tol:
        raise SelfAdjointnessError(
            f"diagonal average has imaginary part {imag:.3e} > {imag_tol:.1e}"
        )
    out = nf.copy()
    out.mu_history.append((float(eps_m), np.real(diag_avg).astype(float)))
    return out


# ---------------------------------------------------------------------------
# u-form block algebra


def uform_from_blocks(zz: np.ndarray, zzbar: np.ndarray, zbzb: np.ndarray) -> np.ndarray:
    """Symmetric u-form [[A, B^T/2], [B/2, C]] for <Az,z>+<Bz,zb>+<Czb,zb>."""
    J = zz.shape[-1]
    shape = zz.shape[:-2] + (2 * J, 2 * J)
    Q = np.zeros(shape, dtype=complex)
    swap = tuple(range(zz.ndim - 2)) + (zz.ndim - 1, zz.ndim - 2)
    Q[..., :J, :J] = zz
    Q[..., :J, J:] = 0.5 * zzbar.transpose(swap)
    Q[..., J:, :J] = 0.5 * zzbar
    Q[..., J:, J:] = zbzb
    return Q


def blocks_from_uform(Q: np.ndarray) -> tuple:
    J = Q.shape[-1] // 2
    swap = tuple(range(Q.ndim - 2)) + (Q.ndim - 1, Q.ndim - 2)
    zz = 0.5 * (Q[..., :J, :J] + Q[..., :J, :J].transpose(swap))
    zbzb = 0.5 * (Q[..., J:, J:] + Q[..., J:, J:].transpose(swap))
    zzbar = Q[..., J:, :J] + Q[..., :J, J:].transpose(swap)
    return zz, zzbar, zbzb


def jsym_mul(Q: np.ndarray) -> np.ndarray:
    """JSYM @ Q with JSYM = [[0, +iI], [-iI, 0]]."""
    J = Q.shape[-2] // 2
    out = np.empty_like(Q)
    out[..., :J, :] = 1j * Q[..., J:, :]
    out[..., J:, :] = -1j * Q[..., :J, :]
    return out


def jsym_matrix(J: int) -> np.ndarray:
    JS = np.zeros((2 * J, 2 * J), dtype=complex)
    JS[:J, J:] = 1j * np.eye(J)
    JS[J:, :J] = -1j * np.eye(J)
    return JS


def bracket(QA: np.ndarray, QB: np.ndarray) -> np.ndarray:
    """u-form of the Poisson bracket of two quadratic Hamiltonians."""
    return 2.0 * (QA @ jsym_mul(QB) - QB @ jsym_mul(QA))


def bracket_sym(QA: np.ndarray, JS_QB: np.ndarray) -> np.ndarray:
    """bracket(QA, QB) for symmetric QA, QB, given JS_QB = jsym_mul(QB).

    For symmetric operands QB JSYM QA = -(QA JSYM QB)^T, so one product
    suffices: bracket = 2 (P + P^T) with P = QA @ JS_QB.
    """
    P = QA @ JS_QB
    swap = tuple(range(P.ndim - 2)) + (P.ndim - 1, P.ndim - 2)
    return 2.0 * (P + P.transpose(swap))


def generator_of(Q: np.ndarray) -> np.ndarray:
    """Linear vector field u' = L u generated by <Q u, u>."""
    return 2.0 * jsym_mul(Q)


def normal_uform(lam: np.ndarray) -> np.ndarray:
    J = lam.shape[0]
    Q = np.zeros((2 * J, 2 * J), dtype=complex)
    Q[:J, J:] = 0.5 * np.diag(lam)
    Q[J:, :J] = 0.5 * np.diag(lam)
    return Q


def doubled_weights(ws: WeightedSpace) -> np.ndarray:
    w = ws.metric_weights
    return np.concatenate([w, w])


def uform_opnorm(Q: np.ndarray, ws: WeightedSpace) -> float:
    """Weighted operator norm (doubled h_N metric) of (..., 2J, 2J) matrices."""
    w2 = doubled_weights(ws)
    weighted = Q * (w2[:, None] / w2[None, :])
    return float(np.max(np.linalg.norm(weighted, ord=2, axis=(-2, -1))))


def _uform_size(Q: np.ndarray, w2: np.ndarray, stride: int = 7) -> float:
    """Cheap weighted Frobenius bound used for series stopping decisions."""
    flat = Q.reshape(-1, Q.shape[-2], Q.shape[-1])[::stride]
    weighted = flat * (w2[:, None] / w2[None, :])
    return float(np.max(np.linalg.norm(weighted, axis=(-2, -1))))


# ---------------------------------------------------------------------------
# Homological solve


@dataclass
class HomologicalSolution:
    F: QuadraticForm
    diag_avg: np.ndarray
    divisor_min: float
    norm_report: dict
    K_m: int

    def generator_window(self) -> np.ndarray:
        """Window coefficients of the flow matrix B with u' = eps B u."""
        swap = tuple(range(self.F.zz.ndim - 2)) + (self.F.zz.ndim - 1, self.F.zz.ndim - 2)
        J = self.F.J
        shape = self.F.zz.shape[:-2] + (2 * J, 2 * J)
        B = np.zeros(shape, dtype=complex)
        B[..., :J, :J] = 1j * self.F.zzbar
        B[..., :J, J:] = 2j * self.F.zbzb
        B[..., J:, :J] = -2j * self.F.zz
        B[..., J:, J:] = -1j * self.F.zzbar.transpose(swap)
        return B


def _divisor_arrays(nf_lam: np.ndarray, omega: np.ndarray, n: int, K: int):
    kw = kdot(omega, n, K)[..., None, None]
    lam_i = nf_lam[:, None]
    lam_j = nf_lam[None, :]
    div_zz = kw + (lam_i + lam_j)
    div_zbzb = kw - (lam_i + lam_j)
    div_zzbar = kw - (lam_i - lam_j)
    return div_zz, div_zzbar, div_zbzb


def solve_homological(
    remainder_mm: QuadraticForm,
    nf: NormalForm,
    omega: np.ndarray,
    K_m: int,
    gamma_m: float,
    ws: WeightedSpace | None = None,
    check_thresholds: bool = True,
    norm_grid: int = 12,
) -> HomologicalSolution:
    """Solve the step's homological equations on the |k| <= K_m window.

    Fourier-coefficient division F_hat = -i R_hat / divisor with divisors
    <k,w> + lam_i + lam_j (zz), <k,w> - lam_i - lam_j (zbzb) and
    <k,w> - lam_i + lam_j (zzbar); the averaged zzbar diagonal is removed and
    returned for the normal-form update.
    """
    qf = remainder_mm
    n, K, J = qf.n, qf.K, qf.J
    lam = nf.lambdas()
    low, _ = qf.truncate(min(K_m, K))
    div_zz, div_zzbar, div_zbzb = _divisor_arrays(lam, np.asarray(omega, float), n, K)

    rings = kinf(n, K)
    in_support = (rings <= K_m)[..., None, None]
    A_k = rings.astype(float) ** (2 * n + 3) + 8.0
    i_idx = np.arange(1, J + 1)
    gap = np.abs(i_idx[:, None] - i_idx[None, :]).astype(float)
    thresholds = (gap + 1.0) * gamma_m / A_k[..., None, None]

    center = (K,) * n
    diag_sel = (np.arange(J), np.arange(J))

    divisor_min = np.inf
    for kind, div in (("zz", div_zz), ("zzbar", div_zzbar), ("zbzb", div_zbzb)):
        checked = np.abs(div) - thresholds
        mask = np.broadcast_to(in_support, checked.shape).copy()
        if kind == "zzbar":
            mask[center][diag_sel] = False  # k = 0 diagonal handled separately
        if check_thresholds and np.any((checked < 0) & mask):
            flat = np.argmin(np.where(mask, checked, np.inf))
            idx = np.unravel_index(flat, checked.shape)
            kvec = tuple(int(a) - K for a in idx[:n])
            raise ResonanceError(kind, kvec, idx[-2] + 1, idx[-1] + 1,
                                 div[idx], thresholds[idx])
        divisor_min = min(divisor_min, float(np.min(np.abs(div)[mask])))

    diag_avg = low.zzbar[center][diag_sel].copy()

    Fzz = -1j * low.zz / div_zz
    Fzbzb = -1j * low.zbzb / div_zbzb
    zzbar_num = low.zzbar.copy()
    zzbar_num[center][diag_sel] = 0.0  # removed average
    safe = div_zzbar.copy()
    safe[center][diag_sel] = 1.0  # excluded entry, numerator already zero
    Fzzbar = -1j * zzbar_num / safe

    F = QuadraticForm(n=n, K=K, J=J, zz=Fzz, zzbar=Fzzbar, zbzb=Fzbzb,
                      strip=qf.strip, meta={"K_m": K_m})
    ws = ws or WeightedSpace(N=2, J_max=J)
    G_norm = max(norm_grid, 2 * K + 1)
    report = {
        name: float(ws.opnorm_weighted(window_to_grid(b, n, K, G_norm)))
        for name, b in zip(("zz", "zzbar", "zbzb"), F.blocks())
    }
    return HomologicalSolution(F=F, diag_avg=diag_avg, divisor_min=divisor_min,
                               norm_report=report, K_m=K_m)


def homological_residual(
    sol: HomologicalSolution,
    remainder_mm: QuadraticForm,
    nf: NormalForm,
    omega: np.ndarray,
) -> float:
    """Relative plug-back residual of the component equations on the window."""
    qf = remainder_mm
    n, K, J = qf.n, qf.K, qf.J
    lam = nf.lambdas()
    low, _ = qf.truncate(min(sol.K_m, K))
    kw = kdot(np.asarray(omega, float), n, K)[..., None, None]
    lam_i, lam_j = lam[:, None], lam[None, :]
    center = (K,) * n
    diag_sel = (np.arange(J), np.arange(J))

    F = sol.F
    lhs_zz = 1j * kw * F.zz + 1j * (lam_i + lam_j) * F.zz
    lhs_zbzb = 1j * kw * F.zbzb - 1j * (lam_i + lam_j) * F.zbzb
    lhs_zzbar = 1j * kw * F.zzbar - 1j * (lam_i - lam_j) * F.zzbar
    rhs_zzbar = low.zzbar.copy()
    rhs_zzbar[center][diag_sel] -= sol.diag_avg

    num = 0.0
    den = 0.0
    for lhs, rhs in ((lhs_zz, low.zz), (lhs_zbzb, low.zbzb), (lhs_zzbar, rhs_zzbar)):
        num = max(num, float(np.max(np.abs(lhs - rhs))))
        den = max(den, float(np.max(np.abs(rhs))))
    return num / den if den > 0 else num


# ---------------------------------------------------------------------------
# Flow transform


@dataclass
class FlowResult:
    grid: int
    Phi: np.ndarray          # (G^n, 2J, 2J) values on the flat theta grid
    P_hat: np.ndarray        # window coefficients of Phi - id
    n: int
    K: int
    J: int
    eps_m: float
    P_norm: float
    symplectic_defect: float
    picard_terms: int
    generator_norm: float


def flow_transform(
    sol: HomologicalSolution,
    eps_m: float,
    ws: WeightedSpace,
    grid: int,
    picard_tol: float = 1e-12,
    max_terms: int = 80,
) -> FlowResult:
    """Time-1 map of the step generator at frozen angle, per theta grid point.

    Picard iteration on U(t) = I + eps * B(theta) * integral U; with the
    generator frozen the iterates are the exponential partial sums, and the
    stopping rule compares successive iterates in the weighted norm.
    """
    F = sol.F
    n, K, J = F.n, F.K, F.J
    B_hat = sol.generator_window()
    B = window_to_grid(B_hat.reshape(B_hat.shape[:n] + (-1,)), n, K, grid)
    B = B.reshape((grid,) * n + (2 * J, 2 * J)).reshape(-1, 2 * J, 2 * J)
    w2 = doubled_weights(ws)

    gen_norm = float(np.max(np.linalg.norm(B * (w2[:, None] / w2[None, :]),
                                           ord=2, axis=(-2, -1))))
    if eps_m * gen_norm >= 0.5:
        raise StepSizeError(
            f"flow generator too large: eps*|B| = {eps_m * gen_norm:.3e} >= 0.5"
        )

    npts = B.shape[0]
    eye = np.broadcast_to(np.eye(2 * J, dtype=complex), (npts, 2 * J, 2 * J))
    U = eye.copy()
    term = eye.copy()
    terms_used = 0
    for j in range(1, max_terms + 1):
        term = (eps_m / j) * (B @ term)
        U += term
        terms_used = j
        size = _uform_size(term, w2, stride=max(1, npts // 128))
        base = _uform_size(U, w2, stride=max(1, npts // 128))
        if size <= picard_tol * max(base, 1.0):
            break
    else:
        raise StepSizeError("Picard iteration did not converge; reduce eps")

    P = U - eye
    P_hat = grid_to_window(P.reshape((grid,) * n + (2 * J, 2 * J)), n, K)
    P_norm = uform_opnorm(P, ws)

    JS = jsym_matrix(J)
    form = np.matmul(U.transpose(0, 2, 1), jsym_mul(U))
    defect = float(np.max(np.abs(form - JS)))

    return FlowResult(grid=grid, Phi=U, P_hat=P_hat, n=n, K=K, J=J, eps_m=eps_m,
                      P_norm=P_norm, symplectic_defect=defect,
                      picard_terms=terms_used, generator_norm=gen_norm)


# ---------------------------------------------------------------------------
# Transform chain


@dataclass
class ChainStep:
    P_hat: np.ndarray
    n: int
    K: int
    J: int
    eps_m: float
    P_norm: float
    symplectic_defect: float


@dataclass
class TransformChain:
    steps: list = field(default_factory=list)
    composed_norm: float = 0.0

    def append(self, flow: FlowResult):
        self.steps.append(ChainStep(
            P_hat=flow.P_hat, n=flow.n, K=flow.K, J=flow.J, eps_m=flow.eps_m,
            P_norm=flow.P_norm, symplectic_defect=flow.symplectic_defect,
        ))

    def matrices_at(self, thetas: np.ndarray) -> np.ndarray:
        """Composed map Psi_0 Psi_1 ... Psi_{M-1} at each theta, (P, 2J, 2J)."""
        from .fourier import eval_at_points

        thetas = np.atleast_2d(thetas)
        if not self.steps:
            raise ValueError("empty chain")
        J = self.steps[0].J
        out = np.broadcast_to(np.eye(2 * J, dtype=complex),
                              (thetas.shape[0], 2 * J, 2 * J)).copy()
        for step in self.steps:
            P = eval_at_points(step.P_hat, step.n, step.K, thetas)
            out = out @ (np.eye(2 * J) + P)
        return out

    def step_matrices_at(self, m: int, thetas: np.ndarray) -> np.ndarray:
        from .fourier import eval_at_points

        step = self.steps[m]
        P = eval_at_points(step.P_hat, step.n, step.K, np.atleast_2d(thetas))
        return np.eye(2 * step.J) + P

    def measure_composed_norm(self, ws: WeightedSpace, grid: int = 12) -> float:
        if not self.steps:
            return 0.0
        n = self.steps[0].n
        from .fourier import theta_grid_points

        pts = theta_grid_points(n, grid)
        mats = self.matrices_at(pts)
        eye = np.eye(mats.shape[-1])
        self.composed_norm = uform_opnorm(mats - eye, ws)
        return self.composed_norm


# ---------------------------------------------------------------------------
# Remainder push


_FACT = [math.factorial(i) for i in range(80)]


def _lie_series(T0: np.ndarray, JS_S: np.ndarray, eps: float, coeff_offset: int,
                w2: np.ndarray, rtol: float, max_terms: int):
    """sum_j ad^j(T0) * eps^j / (j + coeff_offset)! for symmetric operands.

    Iterates on the product grid without intermediate window projection (the
    beyond-window content of the decayed operands is far below the series
    floor); the caller projects the accumulated stream once.
    Returns (accumulated grid array, per-term sizes).
    """
    term = T0
    acc = term / _FACT[coeff_offset]
    sizes = [_uform_size(term, w2) / _FACT[coeff_offset]]
    for j in range(1, max_terms):
        term = eps * bracket_sym(term, JS_S)
        coeff = 1.0 / _FACT[j + coeff_offset]
        size = _uform_size(term, w2) * coeff
        acc = acc + coeff * term
        sizes.append(size)
        if size <= rtol * max(sizes[0], 1e-300):
            return acc, sizes
        if j >= 3 and sizes[-1] > sizes[-2] > sizes[-3]:
            raise StepSizeError("remainder series is not decaying; reduce eps")
    raise StepSizeError("remainder series did not converge within the term cap")


@dataclass
class PushDiagnostics:
    series_terms: dict
    tail_norm: float
    spec_truncation_ok: bool
    new_piece_norms: list


def push_remainder(
    pieces: list,
    sol: HomologicalSolution,
    flow: FlowResult,
    eps_m: float,
    eps_next: float,
    strips_next: list,
    ws: WeightedSpace,
    grid: int,
    series_rtol: float = 1e-13,
    max_terms: int = 60,
) -> tuple:
    """Assemble the next remainder family from the four step contributions:
    the high-frequency tail, the double-bracket stream seeded by
    diag(mu) - Gamma R, the single-bracket stream seeded by R_mm, and the
    Lie-series transport of the higher pieces.
    """
    R_mm = pieces[0]
    n, K, J = R_mm.n, R_mm.K, R_mm.J
    w2 = doubled_weights(ws)
    gshape = (grid,) * n + (2 * J, 2 * J)

    low, tail = R_mm.truncate(min(sol.K_m, K))

    S_hat = uform_from_blocks(sol.F.zz, sol.F.zzbar, sol.F.zbzb)
    S_u = window_to_grid(S_hat.reshape(S_hat.shape[:n] + (-1,)), n, K, grid)
    S_u = S_u.reshape(gshape).reshape(-1, 2 * J, 2 * J)
    JS_S = jsym_mul(S_u)

    def to_grid_u(qf: QuadraticForm) -> np.ndarray:
        hat = uform_from_blocks(qf.zz, qf.zzbar, qf.zbzb)
        g = window_to_grid(hat.reshape(hat.shape[:n] + (-1,)), n, K, grid)
        return g.reshape(gshape).reshape(-1, 2 * J, 2 * J)

    # seed of the double-bracket stream: diag(mu) - truncated R_mm
    center = (K,) * n
    star = low.copy()
    star = star.scaled(-1.0)
    diag_sel = (np.arange(J), np.arange(J))
    star.zzbar[center][diag_sel] += sol.diag_avg
    star_u = to_grid_u(star)
    R_u = to_grid_u(R_mm)

    series_terms = {}
    acc_b, sizes_b = _lie_series(bracket_sym(star_u, JS_S), JS_S, eps_m, 2, w2,
                                 series_rtol, max_terms)
    series_terms["double_bracket"] = sizes_b

    acc_c, sizes_c = _lie_series(bracket_sym(R_u, JS_S), JS_S, eps_m, 1, w2,
                                 series_rtol, max_terms)
    series_terms["single_bracket"] = sizes_c

    def window_blocks(u_grid: np.ndarray) -> tuple:
        hat = grid_to_window(u_grid.reshape(gshape), n, K)
        return blocks_from_uform(hat)

    bc_blocks = window_blocks(acc_b + acc_c)

    new_pieces = []
    first = tail.scaled(eps_m / eps_next)
    first.zz = first.zz + (eps_m**2 / eps_next) * bc_blocks[0]
    first.zzbar = first.zzbar + (eps_m**2 / eps_next) * bc_blocks[1]
    first.zbzb = first.zbzb + (eps_m**2 / eps_next) * bc_blocks[2]
    new_pieces.append(first)

    for idx, piece in enumerate(pieces[1:]):
        p_u = to_grid_u(piece)
        acc_p, sizes_p = _lie_series(p_u, JS_S, eps_m, 0, w2, series_rtol, max_terms)
        series_terms[f"transport_{idx}"] = sizes_p
        blocks = window_blocks(acc_p)
        moved = QuadraticForm(n=n, K=K, J=J, zz=blocks[0], zzbar=blocks[1],
                              zbzb=blocks[2], strip=piece.strip, meta=dict(piece.meta))
        if idx == 0:
            new_pieces[0] = new_pieces[0] + moved
        else:
            new_pieces.append(moved)

    for i, piece in enumerate(new_pieces):
        piece.strip = strips_next[i] if i < len(strips_next) else (
            strips_next[-1] if strips_next else piece.strip)
        piece.symmetrize()

    tail_norm = max(ws.opnorm_weighted(v) for v in tail.grid_values(8))
    last_sizes = [s[-1] for s in series_terms.values() if s]
    spec_ok = all(s <= 1e-3 * eps_next for s in last_sizes)
    piece_norms = [
        float(max(ws.opnorm_weighted(v) for v in p.grid_values(8))) for p in new_pieces
    ]
    diag = PushDiagnostics(series_terms=series_terms, tail_norm=float(tail_norm),
                           spec_truncation_ok=bool(spec_ok), new_piece_norms=piece_norms)
    return new_pieces, diag


# ---------------------------------------------------------------------------
# Recomposition oracle


def recompose_generator(
    lam_old: np.ndarray,
    pieces_old: list,
    eps_weights_old: list,
    flow: FlowResult,
    omega: np.ndarray,
) -> np.ndarray:
    """Exact transported u-form on the flow grid:
    Q+ = 1/2 JSYM [ Phi^-1 (L Phi - omega . d_theta Phi) ].

    Independent of the series assembly; used to certify each step.
    """
    n, K, J, G = flow.n, flow.K, flow.J, flow.grid
    gshape = (G,) * n + (2 * J, 2 * J)

    L = np.zeros((G,) * n + (2 * J, 2 * J), dtype=complex)
    lamd = np.concatenate([1j * lam_old, -1j * lam_old])
    L[..., np.arange(2 * J), np.arange(2 * J)] = lamd
    for eps_l, piece in zip(eps_weights_old, pieces_old):
        Q_hat = uform_from_blocks(piece.zz, piece.zzbar, piece.zbzb)
        Qg = window_to_grid(Q_hat.reshape(Q_hat.shape[:n] + (-1,)), n, K, G)
        L += eps_l * generator_of(Qg.reshape(gshape))

    Phi = flow.Phi.reshape(gshape)
    hat = np.fft.fftn(Phi, axes=tuple(range(n)), norm="forward")
    freqs = np.fft.fftfreq(G, d=1.0 / G)  # integer modes in FFT layout
    kw = np.zeros((G,) * n)
    for ax in range(n):
        shape = [1] * n
        shape[ax] = G
        kw = kw + np.asarray(omega, float)[ax] * freqs.reshape(shape)
    dPhi = np.fft.ifftn(hat * (1j * kw)[..., None, None], axes=tuple(range(n)),
                        norm="forward")

    flatten = (-1, 2 * J, 2 * J)
    rhs = (L @ Phi).reshape(flatten) - dPhi.reshape(flatten)
    Lplus = np.linalg.solve(Phi.reshape(flatten), rhs)
    return 0.5 * jsym_mul(Lplus)


def consistency_defect(
    lam_old: np.ndarray,
    pieces_old: list,
    eps_old: list,
    lam_new: np.ndarray,
    pieces_new: list,
    eps_new: list,
    flow: FlowResult,
    omega: np.ndarray,
) -> float:
    """Relative gap between the recomposed and the assembled new Hamiltonian."""
    n, K, J, G = flow.n, flow.K, flow.J, flow.grid
    Q_target = recompose_generator(lam_old, pieces_old, eps_old, flow, omega)

    gshape = (G,) * n + (2 * J, 2 * J)
    Q_asm = np.zeros((G**n, 2 * J, 2 * J), dtype=complex)
    Q_asm += normal_uform(lam_new)
    for eps_l, piece in zip(eps_new, pieces_new):
        hat = uform_from_blocks(piece.zz, piece.zzbar, piece.zbzb)
        g = window_to_grid(hat.reshape(hat.shape[:n] + (-1,)), n, K, G)
        Q_asm = Q_asm + eps_l * g.reshape(gshape).reshape(-1, 2 * J, 2 * J)

    # compare inside the coefficient window only (the assembly lives there)
    diff = Q_target - Q_asm
    diff = project_window_grid(diff.reshape(gshape), n, K).reshape(-1, 2 * J, 2 * J)
    scale = float(np.max(np.abs(Q_asm)))
    return float(np.max(np.abs(diff))) / scale


# ---------------------------------------------------------------------------
# Iteration state and driver


@dataclass
class IterationState:
    m: int
    normal_form: NormalForm
    remainder: list
    schedule: Schedule
    tau: float
    diagnostics: list = field(default_factory=list)


@dataclass
class KamOptions:
    picard_tol: float = 1e-12
    residual_tol: float = 1e-10
    grid: int | None = None
    norm_grid: int = 12
    screen: bool = True
    check_consistency: bool = True
    series_rtol: float = 1e-13
    max_series_terms: int = 60


@dataclass
class KamResult:
    normal_form: NormalForm
    chain: TransformChain
    history: list
    pieces: list
    xi: np.ndarray
    composed_norm: float
    converged: bool
    final_weighted_size: float = 0.0   # eps_M * |R_MM| (next active piece)
    final_remainder_norm: float = 0.0  # sum_l eps_l * |R_{l,M}| over all pieces

    def multiplier(self) -> np.ndarray:
        return self.xi

    def contraction_exponents(self) -> list:
        """log(eps_{m+1} |R_{m+1}|) / log(eps_m |R_m|) for each completed step."""
        sizes = [rec["weighted_size"] for rec in self.history]
        if self.final_weighted_size > 0:
            sizes.append(self.final_weighted_size)
        return [float(np.log(b) / np.log(a)) for a, b in zip(sizes, sizes[1:])]


class KamEngine:
    """Stepper owning one reduction run (single writer of its state)."""

    def __init__(
        self,
        pieces: list,
        freq: FrequencySpec,
        schedule: Schedule,
        ws: WeightedSpace,
        K_theta: int,
        options: KamOptions | None = None,
        normal_form: NormalForm | None = None,
        chain: TransformChain | None = None,
        m_start: int = 0,
        diagnostics: list | None = None,
    ):
        self.opts = options or KamOptions()
        self.freq = freq
        self.schedule = schedule
        self.ws = ws
        self.K_theta = K_theta
        J = ws.J_max
        self.state = IterationState(
            m=m_start,
            normal_form=normal_form or NormalForm(J=J),
            remainder=pieces,
            schedule=schedule,
            tau=freq.tau,
            diagnostics=diagnostics or [],
        )
        self.chain = chain or TransformChain()
        self.grid = self.opts.grid or product_grid_size(K_theta)

    @property
    def finished(self) -> bool:
        return self.state.m >= self.schedule.M or self.schedule.degenerate

    def step(self) -> dict:
        if self.finished:
            raise RuntimeError("iteration already finished")
        st = self.state
        m = st.m
        sched = self.schedule
        eps_m = float(sched.eps[m])
        eps_next = float(np.exp(sched.log_eps[m] * (4.0 / 3.0)))
        gamma_m = float(sched.gamma_steps[m])
        K_raw = float(sched.cutoff[m])
        K_eff = int(min(math.ceil(K_raw), self.K_theta))
        omega = self.freq.omega

        lam = st.normal_form.lambdas()
        if self.opts.screen:
            screen = resonance.screen_tau(
                self.freq.tau, lam, np.asarray(self.freq.omega0), K_eff, gamma_m,
                self.ws.J_max,
            )
            if not screen.passed:
                q = screen.worst
                raise ResonanceError(q.kind, q.k, q.i, q.j, q.value, q.threshold)

        R_mm = st.remainder[0]
        active_norm = float(max(
            self.ws.opnorm_weighted(v) for v in R_mm.grid_values(self.opts.norm_grid)
        ))

        sol = solve_homological(R_mm, st.normal_form, omega, K_eff, gamma_m,
                                ws=self.ws, norm_grid=self.opts.norm_grid)
        residual = homological_residual(sol, R_mm, st.normal_form, omega)

        nf_new = update_normal_form(st.normal_form, sol.diag_avg, eps_m)

        flow = flow_transform(sol, eps_m, self.ws, self.grid,
                              picard_tol=self.opts.picard_tol)

        strips_next = [float(s) for s in sched.strip[m + 1:]]
        new_pieces, push_diag = push_remainder(
            st.remainder, sol, flow, eps_m, eps_next, strips_next, self.ws,
            self.grid, series_rtol=self.opts.series_rtol,
            max_terms=self.opts.max_series_terms,
        )

        consistency = None
        if self.opts.check_consistency:
            eps_old = [self._eps_at(m + i) for i in range(len(st.remainder))]
            eps_new_w = [self._eps_at(m + 1 + i) for i in range(len(new_pieces))]
            consistency = consistency_defect(
                st.normal_form.lambdas(), st.remainder, eps_old,
                nf_new.lambdas(), new_pieces, eps_new_w, flow, omega,
            )

        self.chain.append(flow)
        record = {
            "m": m,
            "eps_m": eps_m,
            "eps_next": eps_next,
            "gamma_m": gamma_m,
            "K_raw": K_raw,
            "K_eff": K_eff,
            "K_capped": bool(math.ceil(K_raw) > self.K_theta),
            "strip": float(sched.strip[m]),
            "divisor_min": sol.divisor_min,
            "homological_residual": float(residual),
            "solution_norms": sol.norm_report,
            "mu_max_times_j": float(np.max(np.arange(1, self.ws.J_max + 1)
                                           * np.abs(sol.diag_avg.real))),
            "P_norm": flow.P_norm,
            "P_bound": float(math.sqrt(eps_m)),
            "symplectic_defect": flow.symplectic_defect,
            "picard_terms": flow.picard_terms,
            "active_norm": active_norm,
            "weighted_size": eps_m * active_norm,
            "new_piece_norms": push_diag.new_piece_norms,
            "tail_norm": push_diag.tail_norm,
            "series_truncation_spec_ok": push_diag.spec_truncation_ok,
            "consistency_defect": consistency,
        }
        st.remainder = new_pieces
        st.normal_form = nf_new
        st.m = m + 1
        st.diagnostics.append(record)
        return record

    def _eps_at(self, level: int) -> float:
        return float(np.exp((4.0 / 3.0) ** level * math.log(self.schedule.eps0)))

    def run(self) -> KamResult:
        while not self.finished:
            self.step()
        return self.result()

    def result(self) -> KamResult:
        nf = self.state.normal_form
        lam = nf.lambdas()
        j = nf.base
        xi = lam**2 - j**2
        composed = (self.chain.measure_composed_norm(self.ws)
                    if self.chain.steps else 0.0)
        final_active = 0.0
        total = 0.0
        for i, piece in enumerate(self.state.remainder):
            norm = float(max(
                self.ws.opnorm_weighted(v)
                for v in piece.grid_values(self.opts.norm_grid)
            ))
            weight = self._eps_at(self.state.m + i)
            total += weight * norm
            if i == 0:
                final_active = weight * norm
        return KamResult(
            normal_form=nf,
            chain=self.chain,
            history=list(self.state.diagnostics),
            pieces=self.state.remainder,
            xi=xi,
            composed_norm=composed,
            converged=self.finished,
            final_weighted_size=final_active,
            final_remainder_norm=total,
        )


def seed_pieces(decomposition, eps0: float, schedule: Schedule) -> list:
    """Bookkeeping weights for the split remainder: level l enters with weight
    eps_l, so the stored piece is (eps0 / eps_l) * raw piece; the smoothing
    residual is folded into the last level."""
    pieces = []
    for l, piece in enumerate(decomposition.pieces):
        eps_l = float(np.exp((4.0 / 3.0) ** l * math.log(eps0)))
        pieces.append(piece.scaled(eps0 / eps_l))
    if pieces:
        last = len(pieces) - 1
        eps_last = float(np.exp((4.0 / 3.0) ** last * math.log(eps0)))
        pieces[last] = pieces[last] + decomposition.residual_form.scaled(eps0 / eps_last)
        for l, p in enumerate(pieces):
            p.strip = float(schedule.strip[l]) if l < len(schedule.strip) else p.strip
    return pieces


def kam_run(
    pf,
    decomposition,
    freq: FrequencySpec,
    schedule: Schedule,
    ws: WeightedSpace,
    options: KamOptions | None = None,
) -> KamResult:
    """Full reduction: truncate, solve, update, flow, push, for m = 0..M-1."""
    J = ws.J_max
    if schedule.degenerate:
        nf = NormalForm(J=J)
        return KamResult(normal_form=nf, chain=TransformChain(), history=[],
                         pieces=[], xi=np.zeros(J), composed_norm=0.0, converged=True)
    pieces = seed_pieces(decomposition, schedule.eps0, schedule)
    engine = KamEngine(pieces, freq, schedule, ws, K_theta=pf.K_theta, options=options)
    return engine.run()
