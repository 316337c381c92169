//! Occupation-measure linear programming relaxations for variational
//! problems and optimal control on boxes.

pub mod dsl;
pub mod expr;
pub mod lp;
pub mod measure;
pub mod convexify;
pub mod mesh;
pub mod direct;
pub mod extraction;
pub mod oc;
pub mod experiments;
