"""Square-function estimates for integral operators on point-cloud approximations
of Ahlfors-David regular sets.
"""

from . import backend
from .dyadic import (DyadicCube, DyadicLattice, WhitneyCover, build_lattice, cone,
                     cone_incidence, tent, whitney_cover)
from .estimates import (BpsfeWitness, DistributionCurve, SfeReport, TbFamily,
                        atomic_hp_test, big_pieces_witness, bpsfe_pipeline, bq_from_bigpiece,
                        check_local_tb, comparability_split, estimate_sfe_constant, lp_sweep,
                        resolution_sweep, weak_lp_indicator_test)
from .geometry import GeometrySpec, generate
from .kernels import (HomogeneousKernel, KernelSpec, gradient_kernel, kernel_by_name,
                      riesz_kernel, verify_kernel_axioms)
from .operators import (EnergyBreakdown, SurfaceFunction, apply_T, apply_theta,
                        cone_functional, square_energy, tent_energy)
from .qm import AdrSet, QuasiMetricSpace, alpha_rho, check_adr, delta_E, diam, regularized_metric

__version__ = "0.1.0"
