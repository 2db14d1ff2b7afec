"""Exception taxonomy shared across the toolkit."""


class VWShootError(Exception):
    """Base class for all toolkit errors."""


# --- integration ---

class StepSizeUnderflow(VWShootError):
    """Step control drove the step below the configured minimum.

    Usually means the trajectory escapes (stiffness or finite-time blow-up)
    before the requested end time.
    """

    def __init__(self, t, x, message=None):
        self.t = t
        self.x = x
        super().__init__(message or f"step size underflow at t={t!r}")


class NonFiniteState(VWShootError):
    def __init__(self, t, message=None):
        self.t = t
        super().__init__(message or f"field returned NaN at t={t!r}")


class MaxStepsExceeded(VWShootError):
    pass


class OutOfSpan(VWShootError):
    pass


class NonFiniteValue(VWShootError):
    pass


# --- scalar-field / pair checks ---

class EmptyRegion(VWShootError):
    """No sample satisfied the region predicates; the check is inconclusive."""


class LevelSetNotFound(VWShootError):
    pass


class WindowTooShort(VWShootError):
    pass


class TrajectoryLeftW(VWShootError):
    def __init__(self, t, w, message=None):
        self.t = t
        self.w = w
        super().__init__(message or f"trajectory left the guiding window at t={t!r} (W={w!r})")


# --- shooting ---

class NoInteriorCandidate(VWShootError):
    """Every sampled initial condition exits immediately (wrong window or set)."""


class AnchorsNotCauchy(VWShootError):
    def __init__(self, anchors, residuals, message=None):
        self.anchors = anchors
        self.residuals = residuals
        super().__init__(message or f"anchor sequence not Cauchy, residuals={residuals!r}")


# --- quadratic forms / pencils ---

class NearSingular(VWShootError):
    pass


class NotOnLevelSet(VWShootError):
    pass


class NonPositiveSPlus(VWShootError):
    pass


class InvalidConstants(VWShootError):
    pass


class BNotPositiveDefinite(VWShootError):
    pass


class ConditionGViolated(VWShootError):
    pass


class HypothesisViolated(VWShootError):
    pass


# --- Lagrangian ---

class SingularKinetic(VWShootError):
    pass


class ConstantsInvalid(VWShootError):
    pass


class UnboundedSublevel(VWShootError):
    pass


class SpanTooShort(VWShootError):
    pass


# --- reporting / CLI ---

class MalformedReport(VWShootError):
    pass


class ConfigError(VWShootError):
    pass
