"""Continuous optimization of adaptive quadtree infill structures."""

from .fea import FEModel, SolveResult, assemble_and_solve, element_stiffness_unit
from .filters import (DesignField, FilterParams, exact_min_filter, filter_chain,
                      heaviside_project, smooth_min_filter)
from .greedy import BinaryQuadtree, GreedyResult, greedy_optimize
from .hierarchy import (DependencyTable, QuadtreeHierarchy,
                        build_dependency_table, parent_index)
from .mapping import TransformStack, apply_mapping, build_transforms
from .optimizer import OptimizerState, RunConfig, initialize_design, oc_update, run
from .problems import (ProblemSpec, make_bracket, make_cantilever, make_masked,
                       make_mbb, robustness_sweep, uniform_reference)
from .sensitivity import dc_drho, dxtilde_dx, full_gradients

__version__ = "0.1.0"
