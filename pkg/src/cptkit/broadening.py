"""D-transition linewidth decomposition.

The measured D linewidth is split into a lifetime-limited homogeneous
part, a power-broadening part, the spectral-diffusion width shared with
the C transition, and the phononic remainder; the orbital relaxation
time follows from the remainder through the Fourier relation
T- = 1/(2 pi Gamma_D_phon).

All linewidths are FWHM in Hz; powers in W; times in s.
"""

from dataclasses import dataclass, field
import math

from .constants import DEFAULT_BRANCH_RATIO, TWO_PI
from .errors import BadInput, NegativeComponent

GROUPINGS = ("partial-rate", "literal")


@dataclass(frozen=True)
class BroadeningInputs:
    """Everything needed for the decomposition.

    tau_se: excited-state lifetime. branch_ratio: C:D peak (partial-rate)
    ratio. p_c, p_d: resonant drive powers on C and D. p_sat: C-transition
    saturation power (the D saturation power is branch_ratio times it).
    gamma_c_measured, gamma_d_measured: measured FWHM linewidths.
    Optional 1-sigma uncertainties on any of these fields may be supplied
    for first-order error propagation.
    """

    tau_se: float
    p_c: float
    p_d: float
    p_sat: float
    gamma_c_measured: float
    gamma_d_measured: float
    branch_ratio: float = DEFAULT_BRANCH_RATIO
    uncertainties: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("tau_se", "p_c", "p_d", "p_sat", "gamma_c_measured",
                     "gamma_d_measured", "branch_ratio"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise BadInput(f"BroadeningInputs.{name} must be finite and > 0, got {v!r}")
        unknown = set(self.uncertainties) - {
            "tau_se", "p_c", "p_d", "p_sat", "gamma_c_measured",
            "gamma_d_measured", "branch_ratio",
        }
        if unknown:
            raise BadInput(f"unknown uncertainty keys: {sorted(unknown)}")


@dataclass(frozen=True)
class BroadeningReport:
    """All components in Hz plus the Fourier-relation relaxation time.

    By construction gamma_d_measured = gamma_d_hom + gamma_d_pow +
    gamma_diff + gamma_d_phon exactly, and t_minus_d = 1/(2 pi
    gamma_d_phon). gamma_diff is estimated on C and applied unchanged to
    D (equal-coupling assumption, flagged).
    """

    gamma_c_hom: float
    gamma_d_hom: float
    gamma_c_pow: float
    gamma_d_pow: float
    gamma_diff: float
    gamma_d_phon: float
    t_minus_d: float
    grouping: str = "partial-rate"
    assumptions: tuple = ("gamma_diff estimated on C applied unchanged to D",)
    uncertainties: dict = field(default_factory=dict)


def homogeneous_linewidths(
    tau_se: float,
    branch_ratio: float = DEFAULT_BRANCH_RATIO,
    grouping: str = "partial-rate",
) -> tuple[float, float]:
    """Lifetime-limited FWHM of the C and D transitions.

    "partial-rate" (default) splits the total 1/(2 pi tau_se) in the
    branching proportions: Gamma_C_hom = (r/(1+r))/(2 pi tau_se) and
    Gamma_D_hom = (1/(1+r))/(2 pi tau_se). "literal" is the alternative
    reading of the same expressions with the branching factor inside the
    denominator, i.e. Gamma = 1/(2 pi tau_se * fraction); it is provided
    for comparison only.
    """
    if not tau_se > 0:
        raise BadInput("tau_se must be > 0")
    if not branch_ratio > 0:
        raise BadInput("branch_ratio must be > 0")
    total = 1.0 / (TWO_PI * tau_se)
    frac_c = branch_ratio / (1.0 + branch_ratio)
    frac_d = 1.0 / (1.0 + branch_ratio)
    if grouping == "partial-rate":
        return frac_c * total, frac_d * total
    if grouping == "literal":
        return total / frac_c, total / frac_d
    raise BadInput(f"grouping must be one of {GROUPINGS}")


def power_broadening(gamma_hom: float, p: float, p_sat_transition: float) -> float:
    """Linewidth increase Gamma_hom * (sqrt(1 + P/P_sat) - 1); 0 at P=0."""
    if gamma_hom < 0 or p < 0 or not p_sat_transition > 0:
        raise BadInput("power_broadening inputs must be non-negative with p_sat > 0")
    return gamma_hom * (math.sqrt(1.0 + p / p_sat_transition) - 1.0)


def spectral_diffusion(
    gamma_c_measured: float, gamma_c_hom: float, gamma_c_pow: float
) -> float:
    """Spectral-diffusion width from the C-transition budget.

    Gamma_diff = Gamma_C_measured - Gamma_C_hom - Gamma_C_pow. Raises
    NegativeComponent when the subtraction goes negative; the value is
    reported in the message, never clamped.
    """
    diff = gamma_c_measured - gamma_c_hom - gamma_c_pow
    if diff < 0:
        raise NegativeComponent(
            f"spectral diffusion came out negative ({diff:.4g} Hz): measured C "
            "linewidth is below its homogeneous + power components"
        )
    return diff


def _decompose(inp: BroadeningInputs, grouping: str) -> dict:
    g_c_hom, g_d_hom = homogeneous_linewidths(inp.tau_se, inp.branch_ratio, grouping)
    g_c_pow = power_broadening(g_c_hom, inp.p_c, inp.p_sat)
    g_d_pow = power_broadening(g_d_hom, inp.p_d, inp.branch_ratio * inp.p_sat)
    g_diff = spectral_diffusion(inp.gamma_c_measured, g_c_hom, g_c_pow)
    g_phon = inp.gamma_d_measured - g_d_hom - g_d_pow - g_diff
    return {
        "gamma_c_hom": g_c_hom,
        "gamma_d_hom": g_d_hom,
        "gamma_c_pow": g_c_pow,
        "gamma_d_pow": g_d_pow,
        "gamma_diff": g_diff,
        "gamma_d_phon": g_phon,
    }


def phononic_component(
    inputs: BroadeningInputs, grouping: str = "partial-rate"
) -> BroadeningReport:
    """Full decomposition chain ending in Gamma_D_phon and T-.

    Raises NegativeComponent if the phononic remainder is not positive.
    When ``inputs.uncertainties`` is non-empty, first-order (linear)
    propagation through the chain fills the report's uncertainties for
    gamma_d_phon and t_minus_d.
    """
    parts = _decompose(inputs, grouping)
    g_phon = parts["gamma_d_phon"]
    if g_phon <= 0:
        raise NegativeComponent(
            f"phononic component came out non-positive ({g_phon:.4g} Hz)"
        )
    unc = {}
    if inputs.uncertainties:
        var = 0.0
        for name, sigma in inputs.uncertainties.items():
            if not sigma >= 0:
                raise BadInput(f"uncertainty on {name} must be >= 0")
            x0 = getattr(inputs, name)
            h = 1e-6 * x0
            kw = {
                k: getattr(inputs, k)
                for k in ("tau_se", "p_c", "p_d", "p_sat", "gamma_c_measured",
                          "gamma_d_measured", "branch_ratio")
            }
            kw[name] = x0 + h
            bumped = BroadeningInputs(**kw)
            dgdx = (_decompose(bumped, grouping)["gamma_d_phon"] - g_phon) / h
            var += (dgdx * sigma) ** 2
        sig_phon = math.sqrt(var)
        unc = {
            "gamma_d_phon": sig_phon,
            "t_minus_d": sig_phon / (TWO_PI * g_phon**2),
        }
    return BroadeningReport(
        gamma_c_hom=parts["gamma_c_hom"],
        gamma_d_hom=parts["gamma_d_hom"],
        gamma_c_pow=parts["gamma_c_pow"],
        gamma_d_pow=parts["gamma_d_pow"],
        gamma_diff=parts["gamma_diff"],
        gamma_d_phon=g_phon,
        t_minus_d=1.0 / (TWO_PI * g_phon),
        grouping=grouping,
        uncertainties=unc,
    )
