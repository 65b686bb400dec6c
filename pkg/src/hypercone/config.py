"""Numerical tolerances and verdict policies shared by every module."""

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Tolerances:
    symmetry: float = 1e-12            # relative, for symmetric-input checks
    orthogonality: float = 1e-10
    jacobi_sweeps: int = 60
    form_eigen_floor: float = 1e-10    # |eig(J)| > floor * ||J||
    degenerate_det: float = 1e-12      # |det J| below this * scale is degenerate
    interval_abs: float = 1e-10        # endpoint bracket width for delta intervals
    interval_scan: int = 201
    near_lo_fraction: float = 1e-3
    fd_step: float = 1e-5
    fd_tol: float = 1e-6
    liouville_step: float = 1e-4       # residual that flags an oversized RK4 step
    splitting_quality: float = 0.1     # radians
    splitting_gap: float = 0.5
    singular_speed: float = 1e-8
    degenerate_restriction: float = 1e-13


@dataclass(frozen=True)
class DominationPolicy:
    """Pass thresholds for fitted exponential rates.

    ``max_rate`` is the largest admissible fitted slope for domination (a
    negative number); sectional expansion uses ``-max_rate`` as its floor.
    """

    max_rate: float = -1e-2
    min_r2: float = 0.99
    max_K: float = 10.0
    marginal: float = 1e-3

    def scaled(self, k: int) -> "DominationPolicy":
        # the wedge-side ratio is the tangent ratio times k - 1 ratios of F
        # singular values, each carrying its own prefactor; rates do not change
        return replace(self, max_K=self.max_K ** max(1, k - 1))


@dataclass(frozen=True)
class TrichotomyPolicy:
    eps: float = 1e-3
    window: float = 5.0


TOL = Tolerances()
POLICY = DominationPolicy()
TRICHOTOMY = TrichotomyPolicy()
