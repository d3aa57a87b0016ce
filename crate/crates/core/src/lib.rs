//! Binary kernel SVMs with lower semi-continuous, possibly nonconvex,
//! margin losses, trained by an ADMM splitting of
//!
//! ```text
//! min_c  (1/N) Σᵢ L(xᵢ, yᵢ, (Ac)ᵢ) + λ cᵀAc
//! ```
//!
//! where `A` is the Gram matrix of the training inputs. The α-block reduces
//! to N exact one-dimensional proximal steps ([`loss::prox`]), the c-block to
//! a symmetric positive definite linear system solved by conjugate
//! gradients ([`linalg::cg_solve`]), and the multiplier update has the
//! closed form `γ = 2λc`.
//!
//! ```no_run
//! use splitsvm::{data, kernel::KernelSpec, loss::MarginLoss, admm::AdmmConfig, model};
//!
//! let (train, test) = data::generate_synthetic(300, 120, 7).unwrap();
//! let cfg = AdmmConfig::new(0.5, 5.0, 1e-12);
//! let fit = model::train_multistart(&train, KernelSpec::gaussian(2.0).unwrap(),
//!                                   &MarginLoss::truncated_log(), &cfg, 20, 7).unwrap();
//! println!("test accuracy {}", fit.model.evaluate(&test).unwrap().percent());
//! ```

pub mod admm;
pub mod data;
pub mod error;
pub mod experiments;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod loss;
pub mod model;

pub use admm::{AdmmConfig, AdmmRun, AdmmState, IterationTrace, Problem, RhoPolicy, RunStatus};
pub use data::{Dataset, Label};
pub use error::{Error, Result};
pub use kernel::{GramMatrix, KernelFamily, KernelSpec};
pub use loss::{LossKind, MarginLoss};
pub use model::TrainedModel;
