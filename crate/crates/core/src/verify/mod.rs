//! Numerical checks of the analytic lemmas behind the extension: the residue
//! identity, mean values, the support of `Delta f_delta`, the test-function
//! pairing and the strip-ball volume.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub mod laplace_support;
pub mod mean_value;
pub mod pairing;
pub mod residue;
pub mod volume;

pub use laplace_support::{laplacian_support_check, LaplacianSupportReport};
pub use mean_value::{ball_average_cauchy, mean_value_deviation};
pub use pairing::{pairing_test, pairing_test_with, singular_pairing_constant, LeadingOrder, PairingOperator, PairingReport};
pub use residue::{residue_check, residue_integral, ResidueKernel};
pub use volume::strip_ball_volume;

/// One verifier outcome, keyed by the identity it checks.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct VerifierRecord {
    pub key: String,
    pub metrics: BTreeMap<String, f64>,
    pub flags: BTreeMap<String, bool>,
}

impl VerifierRecord {
    pub fn new(key: &str) -> Self {
        Self {
            key: key.to_string(),
            ..Default::default()
        }
    }

    pub fn metric(mut self, name: &str, value: f64) -> Self {
        self.metrics.insert(name.to_string(), value);
        self
    }

    pub fn flag(mut self, name: &str, value: bool) -> Self {
        self.flags.insert(name.to_string(), value);
        self
    }
}
