use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parent links contain a cycle through node {0}")]
    CycleDetected(usize),
    #[error("node {0} has no parent and is not the root")]
    DisconnectedNode(usize),
    #[error("edge into node {child} has invalid weight {weight}")]
    NegativeWeight { child: usize, weight: f64 },
    #[error("node {0} appears as a child more than once")]
    DuplicateChild(usize),
    #[error("root {0} must not have a parent entry")]
    RootHasParent(usize),
    #[error("node {node} is out of range for a tree with {node_count} nodes")]
    InvalidNode { node: usize, node_count: usize },
    #[error("measure references node {node}, but the tree has {node_count} nodes")]
    TreeMismatch { node: usize, node_count: usize },
    #[error("edge vector has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("measure has no support")]
    EmptyMeasure,
    #[error("node {0} appears more than once in a measure")]
    DuplicateSupport(usize),
    #[error("mass {mass} at node {node} is not a positive finite value above 1e-15")]
    InvalidMass { node: usize, mass: f64 },
    #[error("total mass {0} differs from 1 by more than 1e-9")]
    NotNormalized(f64),

    #[error("beta at edge {edge} is {value}; must be finite and >= 0")]
    NegativeBeta { edge: usize, value: f64 },
    #[error("alpha at edge {edge} is {value}; must lie in [0, w_e]")]
    InvalidAlpha { edge: usize, value: f64 },
    #[error("exponent p = {0} is outside [1, inf]")]
    InvalidP(f64),
    #[error("radius lambda = {0} must be finite and >= 0")]
    InvalidRadius(f64),

    #[error("bandwidth t = {0} must be finite and > 0")]
    InvalidBandwidth(f64),
    #[error("kernel over rt_ball requires p >= 2, got p = {0}")]
    PLessThanTwoForKernel(f64),
    #[error("all off-diagonal distances are zero")]
    DegenerateDistances,
    #[error("quantile percent {0} is outside [0, 100]")]
    InvalidQuantile(f64),
    #[error("matrix is not of the expected kind")]
    WrongMatrixKind,

    #[error("instance too large for the oracle: {size} > {limit}")]
    InstanceTooLarge { size: usize, limit: usize },

    #[error("point cloud is empty or has inconsistent dimensions")]
    InvalidPointCloud,
    #[error("point cloud contains a non-finite coordinate")]
    NonFiniteCoordinate,
    #[error("branching factor must be >= 2, got {0}")]
    InvalidBranching(usize),
    #[error("noise bound delta = {0} must be finite and >= 0")]
    InvalidDelta(f64),
}
