class MvisError(Exception):
    """Base class for every error raised by the mvis library"""


class DomainError(MvisError, ValueError):
    """Input outside the domain of an operation"""


class PayoffVanishesError(DomainError):
    """Payoff is exactly zero where its log-gradient is needed"""

    def __init__(self, msg='payoff vanishes; adjoint undefined'):
        super().__init__(msg)


class ConfigurationError(MvisError, ValueError):
    """Inconsistent objects passed together (e.g. grid mismatch)"""


class SimulationError(MvisError, ArithmeticError):
    """Failure while stepping a particle system"""


class ExplosionError(SimulationError):
    """Non-finite state encountered during an Euler step"""

    def __init__(self, step):
        self.step = step
        super().__init__(f'explosion at step {step}')


class DegenerateLikelihoodError(SimulationError):
    """All likelihood weights underflowed"""

    def __init__(self, step):
        self.step = step
        super().__init__(f'degenerate likelihood at step {step}')


class SolverError(MvisError, ArithmeticError):
    """Failure of the boundary-value solver"""


class ShootingConvergenceError(SolverError):
    """Newton shooting did not reach the residual tolerance"""

    def __init__(self, best_residual, iterations):
        self.best_residual = best_residual
        self.iterations = iterations
        super().__init__(
            f'shooting did not converge after {iterations} iterations '
            f'(best residual {best_residual:.3e})'
        )


class SingularJacobianError(SolverError):
    """Newton step impossible: finite-difference Jacobian is singular"""

    def __init__(self, msg='singular shooting Jacobian'):
        super().__init__(msg)
