"""Numerical laboratory for u_t - Lap u = u^p on model manifolds."""
import os

# FUJITALAB_THREADS caps BLAS/OpenMP threads; it must be applied before numpy loads
_threads = os.environ.get("FUJITALAB_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

from .geometry import (ModelManifold, ThresholdRadii, ball_volume, comparison_report,  # noqa: E402
                       fujita_exponent, geodesic_distance, laplacian_distance,
                       make_manifold, threshold_radii, volume_density)
from .heat_kernel import HeatKernel  # noqa: E402
from .cantor import CantorSet, cantor_levels  # noqa: E402
from .measures import (critical_profile, dirac, growth_classify, singular_profile,  # noqa: E402
                       sup_ball_mass, uniform_density)
from .solver import blowup_probe, picard_solve, threshold_bisect  # noqa: E402
from .maximal import ratio_curve  # noqa: E402
from .covering import besicovitch_partition, dis_greedy, pac_greedy  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "ModelManifold", "ThresholdRadii", "HeatKernel", "CantorSet", "ball_volume", "besicovitch_partition",
    "blowup_probe", "cantor_levels", "comparison_report", "critical_profile", "dirac", "dis_greedy",
    "fujita_exponent", "geodesic_distance", "growth_classify", "laplacian_distance", "make_manifold",
    "pac_greedy", "picard_solve", "ratio_curve", "singular_profile", "sup_ball_mass", "threshold_bisect",
    "threshold_radii", "uniform_density", "volume_density",
]
