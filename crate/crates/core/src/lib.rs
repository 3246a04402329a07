pub mod error;
pub mod estimators;
pub mod housing;
pub mod linalg;
pub mod losses;
pub mod model;
pub mod optim;
pub mod risk;
pub mod seed;
pub mod tasks;
