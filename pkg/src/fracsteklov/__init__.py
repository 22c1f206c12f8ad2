"""Fractional Steklov-approximating eigenvalues on intervals."""

from .eigen import EigenResult, diagnostics, rayleigh_quotient, solve_first_p, solve_linear
from .estimators import FractionalSteklovEigen
from .forms import (
    GagliardoForm,
    IdentityReport,
    assemble,
    energy,
    identity_check,
    lp_mass,
    neumann_extend,
    neumann_value_at,
    pairing,
    picone_defect,
)
from .harness import (
    CheckTable,
    MeshPolicy,
    SweepRecord,
    bbm_limit_table,
    convergence_sweep,
    emit_report,
    extension_bbm_check,
    strip_limit_table,
    trace_constant,
    zero_infimum_demo,
)
from .kernel import (
    KernelSpec,
    QuadratureControl,
    QuadratureError,
    bbm_constant,
    kernel_tail_mass,
    singular_double_integral,
)
from .mesh import AlignmentError, CollarMesh1D, DofFunction, build_collar_mesh, interpolate, strip_cells
from .reference import SteklovRef, steklov_linear, steklov_p_fem, steklov_p_shooting

__version__ = "0.1.0"
