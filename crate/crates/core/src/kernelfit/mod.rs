//! Gaussian-mixture transition kernels fitted in the Fourier domain.

pub mod io;
pub mod loss;
pub mod metrics;
pub mod mixture;
pub mod optim;
pub mod sample;
pub mod train;

pub use io::{read_kernel, write_kernel, KernelFile};
pub use loss::{loss, loss_and_grad, Rescale};
pub use metrics::{fit_metrics, FitMetrics};
pub use mixture::{Component, MixtureBounds, MixtureParams, Reparam};
pub use optim::{Adam, AdamSettings};
pub use sample::{sample_frequencies, FreqSample};
pub use train::{train, train_on, TrainConfig, TrainReport};
