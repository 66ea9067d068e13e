"""Simulation and removal of banded (anisoplanatic) defocus blur."""
from .blur import BlurOperator, apply, apply_adjoint, synthesize_data
from .core import (ApertureSpec, DefocusModel, DimensionError, NoiseSpec, Orientation,
                   ZoneMask, add_noise, build_masks, relative_rms, threshold_data)
from .grad import GradientWorkspace, grad_fast, grad_naive, objective
from .psf import PsfStack, PsfTruncationWarning, build_psf_stack, make_psf, zernike_defocus
from .solve import (NumericalFailure, SolverConfig, SolverTrace, initial_guess, project_box,
                    restore_dr, restore_pg)

__version__ = "0.1.0"
