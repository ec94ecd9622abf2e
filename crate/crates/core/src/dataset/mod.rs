//! Analytic datasets, grasp annotation, and image metrics.

pub mod analytic;
pub mod generate;
pub mod metrics;
pub mod oracle;
pub mod scoring;

pub use analytic::{smoothstep, AnalyticField, AnalyticObject, Shape};
pub use generate::{
    generate_dataset, DatasetConfig, SceneDataset, SceneRecord, Split, View, ViewRole,
};
pub use metrics::{mse, psnr, psnr_from_mse, ssim, Psnr};
pub use oracle::{oracle_ray, oracle_render, DEFAULT_ORACLE_SAMPLES};
pub use scoring::{
    annotate, sample_perturbation, score_grasp, AnnotationConfig, AntipodalOracle, ConstantOracle,
    GraspAnnotation, PerturbationBounds, StabilityOracle,
};
