//! Client label distributions and the K-means family used to group clients.

mod kmeans;
mod labels;

pub use kmeans::{
    elbow_curve, elbow_select_k, kmeans, kmeans_balanced, wcss, ClusterAssignment, MAX_ITERATIONS,
    RESTARTS,
};
pub use labels::{
    infer_label_distribution, label_distribution, laplace_noise, sample_laplace, DistSource,
    LabelDistVector, LaplaceMechanism,
};
