pub mod estimators;
pub mod gaussian_oracle;
pub mod harness;
pub mod maxent;
pub mod predictors;
pub mod processes;
pub mod rng;
pub mod special;
