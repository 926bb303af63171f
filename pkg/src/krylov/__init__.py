from krylov.arnoldi import ArnoldiWorkspace, StepReport, arnoldi_exp, exp_hessenberg
from krylov.imaginary_time import ImaginaryTimeResult, propagate_imaginary

__all__ = [
    "ArnoldiWorkspace",
    "ImaginaryTimeResult",
    "StepReport",
    "arnoldi_exp",
    "exp_hessenberg",
    "propagate_imaginary",
]
