use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no BHP-controlled well: the pressure system is singular")]
    Singular,
    #[error("pressure matrix is not positive definite at row {0}")]
    NotPositiveDefinite(usize),
    #[error("time step {dt} days violates the CFL limit; largest stable step is {max_dt} days")]
    Cfl { dt: f64, max_dt: f64 },
    #[error("permeability field has {got} cells, grid has {expected}")]
    FieldSize { expected: usize, got: usize },
    #[error("non-finite or non-positive permeability at cell {0}")]
    BadPermeability(usize),
    #[error("transport solve failed to converge in cell {0}")]
    Transport(usize),
    #[error("ensemble member {member}: {source}")]
    Member {
        member: usize,
        #[source]
        source: Box<FlowError>,
    },
}
