pub mod gradcheck;
pub mod linalg;
pub mod suites;
