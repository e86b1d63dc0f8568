"""
Analysis constants and feasibility conditions

Every constant of the perturbation analysis: perturbed net parameters, the
combinatorial bounds I, K, Gamma, the protection rate J (kept as log J since
J underflows any float for d >= 3), the shell volume and shell-hit bounds,
the thickness threshold theta_0, the output protection delta_star and the
full-cell caps. All functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from loguru import logger

from .errors import InfeasibleParametersError


def unit_ball_volume(d: int) -> float:
    """Volume U_d of the unit ball in R^d"""
    if d < 0:
        raise ValueError(f"Dimension must be non-negative, got {d}")
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def _check_mu_bar(mu_bar: float) -> None:
    if not 0 < mu_bar <= 2:
        raise InfeasibleParametersError(f"Sparsity ratio must lie in (0, 2], got {mu_bar}")


def perturbed_net_params(lambda_: float, mu_bar: float, rho_bar: float) -> Tuple[float, float]:
    """
    Net parameters of any perturbation of a (lambda, mu_bar)-net by at most rho = rho_bar * lambda.

    Returns:
        Tuple[float, float]: (lambda_prime, mu_bar_prime)

    Raises:
        InfeasibleParametersError: if 4 * rho_bar >= mu_bar
    """
    _check_mu_bar(mu_bar)
    if rho_bar < 0:
        raise InfeasibleParametersError(f"Relative picking radius must be non-negative, got {rho_bar}")
    if 4 * rho_bar >= mu_bar:
        raise InfeasibleParametersError(
            f"Perturbation too large: 4 * rho_bar = {4 * rho_bar} >= mu_bar = {mu_bar}"
        )
    lambda_prime = lambda_ * (1 + rho_bar)
    mu_bar_prime = (mu_bar - 2 * rho_bar) / (1 + rho_bar)
    if mu_bar_prime < mu_bar / 3:
        raise InfeasibleParametersError(f"mu_bar_prime={mu_bar_prime} fell below mu_bar/3")
    return lambda_prime, mu_bar_prime


@dataclass(frozen=True)
class LLLConstants:
    I: float
    K: float
    Gamma: float
    log_J: float

    @property
    def J(self) -> float:
        return _exp(self.log_J)

    def __iter__(self):
        return iter((self.I, self.K, self.Gamma, self.J))


def lll_constants(mu_bar: float, d: int) -> LLLConstants:
    """
    I = (14/mu_bar)^d, K = I^(d+1)/(d+1)!, Gamma = (27/mu_bar)^d and
    1/J = 2e * pi^(d-1) * I * K * (Gamma + 1), evaluated in log space.
    """
    _check_mu_bar(mu_bar)
    log_I = d * math.log(14 / mu_bar)
    log_K = (d + 1) * log_I - math.lgamma(d + 2)
    log_Gamma = d * math.log(27 / mu_bar)
    log_Gamma_plus_1 = log_Gamma + math.log1p(_exp(-log_Gamma))
    log_J_inv = math.log(2) + 1 + (d - 1) * math.log(math.pi) + log_I + log_K + log_Gamma_plus_1
    return LLLConstants(I=_exp(log_I), K=_exp(log_K), Gamma=_exp(log_Gamma), log_J=-log_J_inv)


def shell_cap_volume_bound(rho: float, delta: float, d: int) -> float:
    """Upper bound on the volume of a delta-thick spherical shell inside a rho-ball"""
    if rho < 0 or delta < 0:
        raise ValueError("rho and delta must be non-negative")
    return unit_ball_volume(d - 1) * (math.pi * rho / 2) ** (d - 1) * delta


def varpi3_bound(delta: float, rho: float, d: int) -> float:
    """Probability bound that a resampled point lands in a delta-shell of a simplex"""
    if rho <= 0:
        raise ValueError(f"Picking radius must be positive, got {rho}")
    return 2 * math.pi ** (d - 1) * delta / rho


def theta_0(delta: float, lambda_prime: float, mu_bar: float, d: int) -> float:
    return (delta / lambda_prime) * mu_bar / (24 * d)


def delta_star(delta: float, epsilon: float, theta0: float, mu_bar_prime: float, d: int) -> float:
    if theta0 <= 0:
        return -math.inf
    return delta - 34 * math.sqrt(d) * epsilon / (theta0 * mu_bar_prime)


def thickness_lower_bound(delta: float, lambda_: float, mu_bar: float, d: int) -> float:
    """Thickness guaranteed by delta-protection of every adjacent d-simplex"""
    delta_bar = delta / lambda_
    return delta_bar * (mu_bar + delta_bar) / (8 * d)


def output_thickness_bound(delta_star_value: float, lambda_: float, mu_bar: float, d: int) -> float:
    """Thickness of every d-simplex returned by the relaxed Delaunay loop"""
    delta_bar = max(delta_star_value, 0.0) / lambda_
    return delta_bar * (mu_bar / 3 + delta_bar) / (8 * d)


def full_cell_caps(theta: float, mu_bar_prime: float, lambda_prime: float, epsilon: float, d: int,
                   theta0: Optional[float] = None) -> Tuple[float, float]:
    """
    Caps on the number of full pyramid cells of a d-simplex.

    n_sigma = U_d * (4d / (theta * mu_bar_prime))^d * log2(5 sqrt(d) lambda_prime / epsilon),
    n0 is the same with theta0 in place of theta (theta when theta0 is None).
    """
    if theta <= 0:
        raise ValueError(f"Thickness must be positive, got {theta}")
    levels = 5 * math.sqrt(d) * lambda_prime / epsilon
    if levels < 1:
        raise ValueError(f"epsilon={epsilon} exceeds the pyramid root diameter {5 * math.sqrt(d) * lambda_prime}")
    log_levels = math.log2(levels)

    def cap(t: float) -> float:
        if t <= 0:
            return math.inf
        return unit_ball_volume(d) * (4 * d / (t * mu_bar_prime)) ** d * log_levels

    return cap(theta), cap(theta if theta0 is None else theta0)


@dataclass(frozen=True)
class Inequality:
    """A single condition lhs <= rhs, stored in log space"""

    name: str
    log_lhs: float
    log_rhs: float

    @property
    def satisfied(self) -> bool:
        return self.log_lhs <= self.log_rhs

    @property
    def log_margin(self) -> float:
        return self.log_rhs - self.log_lhs

    def to_json_dict(self) -> Dict:
        return {
            'name': self.name,
            'satisfied': self.satisfied,
            'log_lhs': _finite_or_none(self.log_lhs),
            'log_rhs': _finite_or_none(self.log_rhs),
            'log_margin': _finite_or_none(self.log_margin),
        }


@dataclass
class FeasibilityReport:
    mode: str
    theory_certified: bool
    checks: List[Inequality] = field(default_factory=list)
    delta: float = 0.0
    log_delta: float = -math.inf
    theta_0: float = 0.0
    delta_star: Optional[float] = None
    practical: Dict[str, float] = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return all(c.satisfied for c in self.checks)

    def failures(self) -> List[Inequality]:
        return [c for c in self.checks if not c.satisfied]

    def to_json_dict(self) -> Dict:
        return {
            'mode': self.mode,
            'theory_certified': self.theory_certified,
            'feasible': self.feasible,
            'checks': [c.to_json_dict() for c in self.checks],
            'delta': _finite_or_none(self.delta),
            'log_delta': _finite_or_none(self.log_delta),
            'theta_0': _finite_or_none(self.theta_0),
            'delta_star': _finite_or_none(self.delta_star),
            'practical': {k: _finite_or_none(v) for k, v in self.practical.items()},
        }


def practical_delta(lambda_: float, mu_bar: float, epsilon: float, rho: float, d: int) -> float:
    """
    Smallest protection target usable at desk scale: at least the identity
    threshold 8 d eps / mu_bar_prime and twice the value at which delta_star
    vanishes when theta_0 is derived from delta.
    """
    lambda_prime, mu_bar_prime = perturbed_net_params(lambda_, mu_bar, rho / lambda_)
    identity = 8 * d * epsilon / mu_bar_prime
    vanishing = math.sqrt(816 * d ** 1.5 * lambda_prime * epsilon / (mu_bar * mu_bar_prime))
    return max(identity, 2 * vanishing)


def feasibility(lambda_: float, mu_bar: float, epsilon: float, rho: float, d: int,
                mode: str = 'witness', delta: Optional[float] = None,
                theta0: Optional[float] = None) -> FeasibilityReport:
    """
    Check every inequality the analysis needs.

    With delta and theta0 left unset the run is theory mode (delta = J * rho,
    theta_0 derived from delta). Supplying either switches to practice mode,
    where the same inequalities are reported but the run is not theory-certified.

    Args:
        lambda_ (float): sampling radius
        mu_bar (float): sparsity ratio
        epsilon (float): witness grid cell diameter
        rho (float): picking radius
        d (int): dimension
        mode (str): 'witness' for the witness loop, 'rdc' for the relaxed loop
        delta (float, optional): practical protection target
        theta0 (float, optional): practical thickness threshold

    Returns:
        FeasibilityReport: per-inequality status and derived values
    """
    if mode not in ('witness', 'rdc'):
        raise ValueError(f"Unknown feasibility mode: {mode}")
    if min(lambda_, mu_bar, epsilon, rho) <= 0:
        raise InfeasibleParametersError("lambda, mu_bar, epsilon and rho must all be positive")

    lambda_prime, mu_bar_prime = perturbed_net_params(lambda_, mu_bar, rho / lambda_)
    constants = lll_constants(mu_bar, d)
    theory = delta is None and theta0 is None

    log_delta = constants.log_J + math.log(rho) if delta is None else _log(delta)
    delta_value = _exp(log_delta)
    log_theta0 = (log_delta - math.log(lambda_prime) + math.log(mu_bar) - math.log(24 * d)
                  if theta0 is None else _log(theta0))
    theta0_value = _exp(log_theta0)

    checks = [
        Inequality('rho <= mu_bar*lambda/4', math.log(rho), math.log(mu_bar * lambda_ / 4)),
        Inequality('24 d eps/(mu_bar J) <= rho',
                   math.log(24 * d * epsilon / mu_bar) - constants.log_J, math.log(rho)),
        Inequality('8 d eps/mu_bar_prime <= delta', math.log(8 * d * epsilon / mu_bar_prime), log_delta),
        Inequality('delta <= J rho', log_delta, constants.log_J + math.log(rho)),
    ]

    report = FeasibilityReport(mode=mode, theory_certified=theory, delta=delta_value,
                               log_delta=log_delta, theta_0=theta0_value)

    if mode == 'rdc':
        alpha = 2 * epsilon
        bound = 50 * d ** 0.75 / mu_bar * math.sqrt(epsilon / lambda_)
        checks.append(Inequality('50 d^(3/4)/mu_bar sqrt(eps/lambda) <= delta/lambda_prime',
                                 math.log(bound), log_delta - math.log(lambda_prime)))
        checks.append(Inequality('4 alpha + delta <= lambda_prime',
                                 _log(4 * alpha + delta_value), math.log(lambda_prime)))
        # delta_star > 0  <=>  34 sqrt(d) eps/(theta_0 mu_bar_prime) < delta
        checks.append(Inequality('34 sqrt(d) eps/(theta_0 mu_bar_prime) <= delta',
                                 math.log(34 * math.sqrt(d) * epsilon / mu_bar_prime) - log_theta0, log_delta))
        report.delta_star = delta_star(delta_value, epsilon, theta0_value, mu_bar_prime, d)

    report.checks = checks
    if not report.feasible:
        suggested = delta if delta is not None else practical_delta(lambda_, mu_bar, epsilon, rho, d)
        report.practical = {
            'delta': suggested,
            'theta_0': theta0 if theta0 is not None else theta_0(suggested, lambda_prime, mu_bar, d),
            'rho': rho,
        }
        for failure in report.failures():
            level = 'debug' if theory else 'warning'
            getattr(logger, level)(f"Feasibility ({mode}): '{failure.name}' violated, "
                                   f"log margin {failure.log_margin:.3g}")
    return report


def _finite_or_none(x: Optional[float]):
    if x is None:
        return None
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


@dataclass(frozen=True)
class AnalysisConstants:
    d: int
    lambda_: float
    mu_bar: float
    rho: float
    epsilon: float
    lambda_prime: float
    mu_bar_prime: float
    I: float
    K: float
    Gamma: float
    log_J: float
    alpha: float
    delta: float
    theta_0: float
    delta_star: float
    n0: float
    feasible_witness: bool
    feasible_rdc: bool
    U_d: float
    U_dm1: float

    @property
    def J(self) -> float:
        return _exp(self.log_J)

    def to_json_dict(self) -> Dict:
        """Fixed-key record; non-finite values become null"""
        values = {
            'd': self.d,
            'lambda': self.lambda_,
            'mu_bar': self.mu_bar,
            'rho': self.rho,
            'epsilon': self.epsilon,
            'lambda_prime': self.lambda_prime,
            'mu_bar_prime': self.mu_bar_prime,
            'I': self.I,
            'K': self.K,
            'Gamma': self.Gamma,
            'logJ': self.log_J,
            'alpha': self.alpha,
            'delta': self.delta,
            'theta_0': self.theta_0,
            'delta_star': self.delta_star,
            'n0': self.n0,
            'feasible_witness': self.feasible_witness,
            'feasible_rdc': self.feasible_rdc,
        }
        return {k: _finite_or_none(v) for k, v in values.items()}


def analysis_constants(lambda_: float, mu_bar: float, rho: float, epsilon: float, d: int,
                       delta: Optional[float] = None, theta0: Optional[float] = None) -> AnalysisConstants:
    """Every derived constant of a parameter choice (theory mode unless delta/theta0 are given)"""
    lambda_prime, mu_bar_prime = perturbed_net_params(lambda_, mu_bar, rho / lambda_)
    lll = lll_constants(mu_bar, d)
    witness_report = feasibility(lambda_, mu_bar, epsilon, rho, d, 'witness', delta, theta0)
    rdc_report = feasibility(lambda_, mu_bar, epsilon, rho, d, 'rdc', delta, theta0)
    theta = rdc_report.theta_0
    if theta > 0:
        _, n0 = full_cell_caps(theta, mu_bar_prime, lambda_prime, epsilon, d)
    else:
        n0 = math.inf
    return AnalysisConstants(
        d=d, lambda_=lambda_, mu_bar=mu_bar, rho=rho, epsilon=epsilon,
        lambda_prime=lambda_prime, mu_bar_prime=mu_bar_prime,
        I=lll.I, K=lll.K, Gamma=lll.Gamma, log_J=lll.log_J,
        alpha=2 * epsilon, delta=rdc_report.delta, theta_0=theta,
        delta_star=rdc_report.delta_star, n0=n0,
        feasible_witness=witness_report.feasible, feasible_rdc=rdc_report.feasible,
        U_d=unit_ball_volume(d), U_dm1=unit_ball_volume(d - 1),
    )
