"""Exception taxonomy shared across the package."""


class PminkError(Exception):
    """Base class for all package-specific failures."""


class AmbiguousFootPoint(PminkError):
    """Two boundary points achieve the collar distance within tolerance."""


class DomainMismatch(PminkError):
    """A support field was evaluated outside the cap it is defined on."""


class UnboundedDual(PminkError):
    """Legendre sup attained on the mask boundary across a whole dual face."""


class ZeroSupport(PminkError):
    """|H| below tolerance where a power H^(p-1) with p != 1 is required."""


class QuadratureFailure(PminkError):
    """An integral did not meet its error target."""


class RegimeError(PminkError):
    """Exponent requested at the excluded value p = n+1."""


class VerificationFailed(PminkError):
    """A certified inequality failed on the verification sample."""


class NoAdmissibleA(PminkError):
    """Doubling search for the half-ball barrier offset exceeded its cap."""


class NoAdmissibleConstants(PminkError):
    """Doubling/halving search for barrier constants exceeded its cap."""


class GrowthMismatch(PminkError):
    """Curvature data does not match the required polynomial growth."""


class MissingBounds(PminkError):
    """Required collar envelope functions g, h were not supplied."""


class NewtonStalled(PminkError):
    """Line search fell below the minimal step without residual decrease."""


class ConvexityLoss(PminkError):
    """Discrete convexity failed beyond tolerance at solver exit."""


class ShootingBracketFailure(PminkError):
    """Radial shooting bracket does not change sign."""


class NonconvexDual(PminkError):
    """Dual grid function failed the discrete convexity test."""


class NoCauchyDecay(PminkError):
    """Nested-ball iterates stopped contracting."""


class TruncationSensitive(PminkError):
    """Cylinder truncation changed the solution beyond tolerance."""


class ConfigError(PminkError):
    """Configuration rejected; carries the offending location when known."""

    def __init__(self, message: str, line: int | None = None,
                 col: int | None = None, path: str = ""):
        self.line = line
        self.col = col
        self.path = path
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {col}" if col is not None else "") + ")"
        at = f" at {path}" if path else ""
        super().__init__(f"{message}{at}{loc}")


class NonexistentByLemma(PminkError):
    """Problem refused by a nonexistence result; carries the lemma tag."""

    def __init__(self, tag: str, detail: str = ""):
        self.tag = tag
        self.detail = detail
        super().__init__(f"no solution can exist ({tag}){': ' + detail if detail else ''}")


class ConditionFailed(PminkError):
    """An admissibility condition failed; carries the condition name."""

    def __init__(self, condition: str, detail: str = ""):
        self.condition = condition
        self.detail = detail
        super().__init__(f"condition {condition} failed{': ' + detail if detail else ''}")
