//! Capturing teacher activations and fitting students to them.

mod dataset;
mod train;

pub use dataset::{
    capture_activations, capture_many, residual_identity_violations, student_dims, ActivationDataset,
    ActivationRecord, CaptureOptions, DatasetHeader, DATASET_FORMAT,
};
pub use train::{distill_students, train_replacement, DistillConfig};
