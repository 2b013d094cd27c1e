pub mod assembly;
pub mod cli;
pub mod config;
pub mod coupling;
pub mod exprfn;
pub mod field;
pub mod functions;
pub mod linsolve;
pub mod mesh;
pub mod pde;
pub mod rbd;
pub mod verify;
