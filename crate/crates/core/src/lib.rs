pub mod curvature;
pub mod error;
pub mod expr;
pub mod fields;
pub mod flow;
pub mod functionals;
pub mod grid_geometry;
pub mod identities;
pub mod oracle;
pub mod presets;
pub mod jet;
pub mod tensor;

pub use error::{Result, StarError};
pub use expr::{Expr, TrigKind, TrigPoly};
pub use jet::{Jet, Scalar};
