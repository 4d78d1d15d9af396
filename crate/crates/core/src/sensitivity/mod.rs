//! Linear sensitivity analysis: standardize, compress images with PCA, ridge
//! regress the parameters on `[image scores | scalars]` and flag parameters
//! whose held-out R² stays low.

mod pca;
mod report;
mod ridge;
mod standardize;

pub use pca::{pca_fit, pca_project, PcaModel};
pub use report::{
    build_report, build_report_from_matrices, dataset_matrices, SensitivityConfig,
    SensitivityReport,
};
pub use ridge::{r2_score, ridge_fit, RidgeModel};
pub use standardize::{standardize_fit_apply, StandardizationStats, CONSTANT_STD};
