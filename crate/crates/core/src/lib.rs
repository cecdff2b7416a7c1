//! Greedy sparse approximation on coherent dictionaries.
//!
//! The crate provides forward greedy selection with three scoring rules
//! (orthogonal matching pursuit, orthogonal least squares and single-ℓ1
//! selection), an exact LASSO homotopy solver, and a benchmark harness for
//! sparse deconvolution with an up-sampled convolution dictionary.
//!
//! ```
//! use sls::dictionary::Dictionary;
//! use sls::greedy::{run_forward_selection, GreedyConfig, Method};
//!
//! let d = Dictionary::identity(4);
//! let y = [1.0, -7.0, 0.0, 3.0];
//! let r = run_forward_selection(&d, &y, &GreedyConfig::new(Method::Sls, 2)).unwrap();
//! assert_eq!(r.support.indices(), &[1, 3]);
//! ```

pub mod bench;
pub mod dictionary;
pub mod greedy;
pub mod homotopy;
pub mod linalg;

pub use dictionary::Dictionary;
pub use greedy::{run_forward_selection, GreedyConfig, GreedyResult, Method, SupportSet};
pub use linalg::DenseMatrix;
