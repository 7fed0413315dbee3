//! Concrete model families: the magnetic-well normal form, the De Gennes
//! half-line operator, and small analytic 2x2 test families.

pub mod degennes;
pub mod magnetic_well;
pub mod poly2;
pub mod toy;
