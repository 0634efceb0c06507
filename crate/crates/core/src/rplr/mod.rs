//! Robust pseudo-label regularization: spherical class centers, cosine
//! distances, a Gaussian-uniform mixture over those distances fitted by EM,
//! and the posterior weights that decide which pseudo-labels are trusted.

mod em;
mod mixture;
mod pseudo;
mod sphere;

pub use em::{em_fit, fit_class, ClassFit, EmConfig, EmFit, EmMode};
pub use mixture::{
    gaussian_density, half_gaussian_density, mirrored_beta, mirrored_log_density, mixture_density,
    posterior_beta, uniform_density, weight, ClassMixture, MixtureFloors, MixtureParams,
};
pub use pseudo::{
    assign_weights, centers_from_labeled, generate_pseudo_labels, Chunk, PseudoLabelRecord,
    PseudoLabelTable,
};
pub use sphere::{
    class_centers, cosine_distance, normalize_to_sphere, CenterAccumulator, SphericalCenters, NORM_FLOOR,
};
