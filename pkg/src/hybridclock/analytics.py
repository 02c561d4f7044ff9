"""Closed-form stability of single-ensemble and cascaded Ramsey clocks.

Phase variances are the estimator variances E[(dtheta_est)^2]; the Allan
variance follows as ``sigma2 = phase_var / (omega0^2 tau T)``, which in
rescaled units is ``sigma2_tilde = phase_var / t_tilde``.

Cascades are generated by a recursion: a stage with squeezing ``s`` that
receives a residual phase of variance ``kappa2`` hands on
``s^2/N + kappa2 / (2 s^4 N^2)``, minimized at ``s = (kappa2/N)^(1/6)`` where
it equals ``(3/2) kappa2^(1/3) / N^(4/3)``.  Closed forms for any
stage count are kept as separate functions so the recursion can be checked
against them.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .spin_ensemble import EnsembleSpec

COHERENT_SEEDED = "coherent-seeded"
SQUEEZED_SEEDED = "squeezed-seeded"
MODES = (COHERENT_SEEDED, SQUEEZED_SEEDED)

FORMULA_HEADER = ["formula", "N", "t_tilde", "nu", "s_opt", "sigma2_tilde"]
HEISENBERG_PREFACTOR = 1.5**1.5

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


# -- single stage ---------------------------------------------------------------


def phase_variance_hybrid(s: float, kappa2: float, n_atoms: float, corrections: bool = False) -> float:
    """Estimator phase variance of a stage seeing a Gaussian phase of variance ``kappa2``.

    Without corrections this is the large-``s^2 N`` form ``s^2/N + kappa2/(2 s^4 N^2)``.
    With corrections the error-propagation expression
    ``(dJy^2 + dJx^2 kappa2) / <Jx>^2`` is evaluated with the full
    exponential moments of the Gaussian family.
    """
    if not (s > 0 and n_atoms > 0 and kappa2 >= 0):
        raise ValueError("s and n_atoms must be positive, kappa2 non-negative")
    if not corrections:
        return s * s / n_atoms + kappa2 / (2.0 * s**4 * n_atoms**2)
    m = _moments(s, n_atoms)
    return (m.jy_var + m.jx_var * kappa2) / m.jx_mean**2


def _moments(s: float, n_atoms: float):
    # EnsembleSpec insists on integer N; the formulas do not.
    n = float(n_atoms)
    s2n = s * s * n
    a = 1.0 / s2n
    jx_mean = 0.5 * n * math.exp(-0.5 * a)
    return _Moments(jx_mean=jx_mean, jy_var=0.25 * s2n, jx_var=n * n / 8.0 * math.expm1(-a) ** 2)


@dataclass(frozen=True)
class _Moments:
    jx_mean: float
    jy_var: float
    jx_var: float


def optimal_squeezing(kappa2: float, n_atoms: float) -> float:
    """Minimizer ``(kappa2/N)^(1/6)`` of the asymptotic stage variance."""
    if not (kappa2 > 0 and n_atoms > 0):
        raise ValueError("kappa2 and n_atoms must be positive")
    return (kappa2 / n_atoms) ** (1.0 / 6.0)


def optimize_squeezing_numeric(
    objective: Callable[[float], float],
    bracket: tuple[float, float],
    rtol: float = 1e-8,
    atol: float = 1e-14,
) -> float:
    """Golden-section minimization of a unimodal ``objective`` on ``bracket``.

    Stops when the bracket is narrower than ``rtol * |x| + atol``.
    """
    a, b = sorted(map(float, bracket))

    def f(x):
        v = objective(x)
        if not math.isfinite(v):
            raise ValueError(f"objective is not finite at s={x}")
        return v

    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > rtol * 0.5 * (abs(a) + abs(b)) + atol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def optimal_squeezing_corrected(kappa2: float, n_atoms: float) -> float:
    """Numerical minimizer of the exponentially corrected stage variance."""
    s0 = optimal_squeezing(kappa2, n_atoms)
    # the corrected objective diverges as s^2 N -> 0; keep the bracket where it is finite
    lo = max(s0 / 20.0, 1.0 / math.sqrt(50.0 * n_atoms))
    hi = max(20.0 * s0, 2.0 * lo)
    return optimize_squeezing_numeric(lambda s: phase_variance_hybrid(s, kappa2, n_atoms, True), (lo, hi))


# -- cascades -------------------------------------------------------------------


@dataclass(frozen=True)
class StagePlan:
    squeezing: float
    kappa2_in: float
    phase_var_out: float


@dataclass(frozen=True)
class CascadePlan:
    """Optimized cascade; ``stages[0]`` is the reference ensemble.

    ``nu`` counts the stages after the reference, so a plan has ``nu + 1``
    stages in both modes.
    """

    mode: str
    nu: int
    n_atoms: float
    t_tilde: float
    corrections: bool
    stages: tuple

    @property
    def squeezings(self) -> list[float]:
        return [st.squeezing for st in self.stages]

    @property
    def phase_variance(self) -> float:
        return self.stages[-1].phase_var_out

    @property
    def sigma2_tilde(self) -> float:
        return self.phase_variance / self.t_tilde

    def ensembles(self) -> list[EnsembleSpec]:
        n = int(round(self.n_atoms))
        return [EnsembleSpec(n, s) for s in self.squeezings]


def cascade_plan(
    mode: str, nu: int, n_atoms: float, t_tilde: float, corrections: bool = False
) -> CascadePlan:
    """Stage-by-stage optimal squeezing and variances of a cascade.

    Coherent-seeded: a coherent reference (s = 1) whose output variance is
    the quantum limit 1/N, then ``nu`` squeezed stages.  Squeezed-seeded: the
    reference is itself optimally squeezed against the free LO phase
    variance ``t_tilde**2``, then ``nu`` more squeezed stages.  Each stage is
    optimized greedily, which is globally optimal because every stage's
    output variance increases with its input variance.

    With ``corrections`` the full exponential moments are used and each
    squeezing is optimized numerically.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if nu < 0:
        raise ValueError("nu must be >= 0")
    if n_atoms < 1:
        raise ValueError("n_atoms must be >= 1")
    if not t_tilde > 0:
        raise ValueError("t_tilde must be positive")

    kappa2 = t_tilde**2
    stages = []
    if mode == COHERENT_SEEDED:
        out = phase_variance_hybrid(1.0, kappa2, n_atoms, True) if corrections else 1.0 / n_atoms
        stages.append(StagePlan(1.0, kappa2, out))
        kappa2 = out
        n_squeezed = nu
    else:
        n_squeezed = nu + 1
    for _ in range(n_squeezed):
        if corrections:
            s = optimal_squeezing_corrected(kappa2, n_atoms)
        else:
            s = optimal_squeezing(kappa2, n_atoms)
        out = phase_variance_hybrid(s, kappa2, n_atoms, corrections)
        stages.append(StagePlan(s, kappa2, out))
        kappa2 = out
    return CascadePlan(mode, nu, float(n_atoms), float(t_tilde), corrections, tuple(stages))


def cascade_recursion(kappa2: float, n_atoms: float) -> float:
    """One optimized stage: ``(3/2) kappa2^(1/3) / N^(4/3)``."""
    return 1.5 * kappa2 ** (1.0 / 3.0) / n_atoms ** (4.0 / 3.0)


# -- closed forms (phase variances; divide by t_tilde for sigma2_tilde) ---------


def s_opt_coherent_seeded(nu: int, n_atoms: float) -> float:
    """Squeezing of the nu-th squeezed stage behind a coherent reference (nu >= 1)."""
    return 1.5 ** (0.25 * (1.0 - 3.0 ** -(nu - 1))) / n_atoms ** (0.5 * (1.0 - 3.0**-nu))


def phase_var_coherent_seeded(nu: int, n_atoms: float) -> float:
    return 1.5 ** (1.5 * (1.0 - 3.0**-nu)) / n_atoms ** (2.0 - 3.0**-nu)


def s_opt_squeezed_seeded(nu: int, n_atoms: float, t_tilde: float) -> float:
    e = 3.0 ** -(nu + 1)
    return 1.5 ** (0.25 * (1.0 - 3.0**-nu)) * t_tilde**e / n_atoms ** (0.5 - e)


def phase_var_squeezed_seeded(nu: int, n_atoms: float, t_tilde: float) -> float:
    e = 3.0 ** -(nu + 1)
    return 1.5 ** (1.5 * (1.0 - e)) * t_tilde ** (2.0 * e) / n_atoms ** (2.0 - 2.0 * e)


def phase_var_hybrid_optimum(kappa2: float, n_atoms: float) -> float:
    """Optimized stage variance written as ``(3/2) (kappa2 / N^4)^(1/3)``."""
    return 1.5 * (kappa2 / n_atoms**4) ** (1.0 / 3.0)


FORMULAS = (
    "sql",
    "fringe_hop",
    "single_squeezed",
    "hybrid_opt",
    "cascade_opt",
    "cascade_sq_opt",
    "with_feedback_noise",
)


def sigma2_formula(
    which: str,
    *,
    n_atoms: float,
    t_tilde: float = 1.0,
    nu: int = 1,
    kappa_noise2: float = 0.0,
    literal_noise: bool = False,
    omega0: float = 1.0,
    tau: float = 1.0,
    gamma_lo: float = 1.0,
) -> tuple[float, float]:
    """Allan variance ``sigma2`` and rescaled ``sigma2_tilde`` of a named closed form.

    ``T`` is ``t_tilde / gamma_lo``.  ``with_feedback_noise`` adds the
    feedback dephasing to the coherent-seeded optimum: at phase level
    (``kappa_noise2 / (omega0^2 tau T)``, the default) or, with
    ``literal_noise``, as a bare ``kappa_noise2`` added to ``sigma2``.
    """
    if which not in FORMULAS:
        raise ValueError(f"unknown formula {which!r}; choose from {FORMULAS}")
    if not (n_atoms > 0 and t_tilde > 0 and omega0 > 0 and tau > 0 and gamma_lo > 0):
        raise ValueError("all parameters must be positive")
    T = t_tilde / gamma_lo
    scale = 1.0 / (omega0**2 * tau * T)

    if which == "fringe_hop":
        sigma2 = gamma_lo**2 * T / (omega0**2 * tau)
    elif which == "sql":
        sigma2 = scale / n_atoms
    elif which == "single_squeezed":
        sigma2 = 1.5 / (omega0**2 * tau) * (gamma_lo**2 / (T * n_atoms**4)) ** (1.0 / 3.0)
    elif which == "hybrid_opt":
        sigma2 = 1.5 * scale / n_atoms ** (5.0 / 3.0)
    elif which == "cascade_opt":
        sigma2 = scale * phase_var_coherent_seeded(nu, n_atoms)
    elif which == "cascade_sq_opt":
        sigma2 = scale * phase_var_squeezed_seeded(nu, n_atoms, t_tilde)
    else:
        base = scale * phase_var_coherent_seeded(nu, n_atoms)
        noise = kappa_noise2 if literal_noise else kappa_noise2 * scale
        sigma2 = base + noise
    return sigma2, sigma2 * omega0**2 * tau / gamma_lo


def cascade_phase_variance_with_dephasing(plan: CascadePlan, kappa_noise2: float) -> float:
    """Final phase variance of ``plan`` when every feedback rotation carries an
    independent Gaussian phase error of variance ``kappa_noise2``.

    Stage k >= 1 sees the previous stage's estimation error, minus the
    previous dephasing draw (already fed back), plus its own draw; the last
    draw stays in the residual.  Squeezings are kept at the plan's values.
    """
    if kappa_noise2 < 0:
        raise ValueError("kappa_noise2 must be >= 0")
    st = plan.stages
    var_out = st[0].phase_var_out
    for k in range(1, len(st)):
        seen = var_out + (kappa_noise2 if k == 1 else 2.0 * kappa_noise2)
        var_out = phase_variance_hybrid(st[k].squeezing, seen, plan.n_atoms, plan.corrections)
    return var_out + (kappa_noise2 if len(st) > 1 else 0.0)


def hybrid_beats_single(n_atoms: float, t_tilde: float) -> bool:
    """Asymptotic comparison of the coherent+squeezed optimum with the single
    optimally squeezed clock; equivalent to ``t_tilde >= 1/sqrt(N)``."""
    return phase_var_coherent_seeded(1, n_atoms) <= phase_var_squeezed_seeded(0, n_atoms, t_tilde)


def write_formula_csv(path, rows) -> None:
    """``rows`` are tuples in ``FORMULA_HEADER`` order."""
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FORMULA_HEADER)
        for r in rows:
            writer.writerow([r[0], repr(float(r[1])), repr(float(r[2])), int(r[3]), repr(float(r[4])), repr(float(r[5]))])
