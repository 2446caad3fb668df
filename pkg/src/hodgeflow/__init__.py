"""hodgeflow: graph Hodge projection of multi-agent update fields.

Split a sampled joint update field into its closest potential (gradient)
component and the cyclic residual on a k-NN sample graph, run raw/projected
dynamics, and check the associated geometric and convergence claims
numerically.
"""
from .metric import Metric
from .graph import (
    NodePotential,
    PoissonSolveError,
    SampleGraph,
    build_knn_graph,
    laplacian_apply,
    solve_poisson,
)
from .fields import (
    RPS,
    BilinearSkew2D,
    Field,
    JacobianSplit,
    Linear3D,
    Logistic2x2,
    PotentialPlusSkew,
    QuadraticPotential,
    Tabulated,
    eval_field,
    eval_field_batch,
    jacobian_fd,
    jacobian_split,
)
from .projection import (
    EdgeFlow,
    ProjectionResult,
    cycle_circulation,
    edge_flow,
    gradient_flow,
    lift_all_directions,
    lift_node_direction,
    lift_query_direction,
    nonpot_ratio,
    project_flow,
)
from .neural import (
    NeuralProjConfig,
    PotentialNet,
    net_grad_x,
    proj_loss,
    proj_loss_grad,
    train_potential,
)
from .dynamics import (
    DomainSpec,
    GraphProjParams,
    RunConfig,
    Trajectory,
    orbit_diameter,
    path_length,
    retract,
    rk4_trajectory,
    run_dynamics,
)
from .diagnostics import (
    GapBoundReport,
    TheoryBoundParams,
    check_gap_bound,
    gap_phi,
    orthogonality_report,
    params_for_box,
    stampacchia_gap,
)
from .ctde import LogitPolicyPair, MatrixGame, StackedGameField, ctde_train, stacked_field

__version__ = "0.1.0"

__all__ = [
    "Metric",
    "SampleGraph",
    "NodePotential",
    "PoissonSolveError",
    "build_knn_graph",
    "laplacian_apply",
    "solve_poisson",
    "Field",
    "RPS",
    "BilinearSkew2D",
    "Logistic2x2",
    "Linear3D",
    "QuadraticPotential",
    "PotentialPlusSkew",
    "Tabulated",
    "JacobianSplit",
    "eval_field",
    "eval_field_batch",
    "jacobian_fd",
    "jacobian_split",
    "EdgeFlow",
    "ProjectionResult",
    "edge_flow",
    "gradient_flow",
    "project_flow",
    "nonpot_ratio",
    "cycle_circulation",
    "lift_node_direction",
    "lift_query_direction",
    "lift_all_directions",
    "PotentialNet",
    "NeuralProjConfig",
    "net_grad_x",
    "proj_loss",
    "proj_loss_grad",
    "train_potential",
    "DomainSpec",
    "RunConfig",
    "GraphProjParams",
    "Trajectory",
    "retract",
    "run_dynamics",
    "orbit_diameter",
    "path_length",
    "rk4_trajectory",
    "TheoryBoundParams",
    "GapBoundReport",
    "stampacchia_gap",
    "gap_phi",
    "check_gap_bound",
    "orthogonality_report",
    "params_for_box",
    "MatrixGame",
    "LogitPolicyPair",
    "StackedGameField",
    "stacked_field",
    "ctde_train",
]
