//! Balanced truncation, its initial-condition-aware variants, and the
//! interpolatory fixed-point methods IRKA and ISRK.

mod bt;
mod interp;

pub use bt::{
    balanced_truncation, bt_aug, bt_aug_with, hankel_singular_values, split_reduce, split_reduce_with, SplitGramians,
    UncontrolledMethod,
};
pub use interp::{irka, isrk, InterpOptions};
pub(crate) use bt::fill_stability;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "BT")]
    Bt,
    #[serde(rename = "BT-aug")]
    BtAug,
    #[serde(rename = "BT-BT")]
    BtBt,
    #[serde(rename = "split-IRKA")]
    SplitIrka,
    #[serde(rename = "split-ISRK")]
    SplitIsrk,
    #[serde(rename = "IRKA")]
    Irka,
    #[serde(rename = "ISRK")]
    Isrk,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Bt => "BT",
            Method::BtAug => "BT-aug",
            Method::BtBt => "BT-BT",
            Method::SplitIrka => "split-IRKA",
            Method::SplitIsrk => "split-ISRK",
            Method::Irka => "IRKA",
            Method::Isrk => "ISRK",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Method {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        let all = [
            Method::Bt,
            Method::BtAug,
            Method::BtBt,
            Method::SplitIrka,
            Method::SplitIsrk,
            Method::Irka,
            Method::Isrk,
        ];
        all.into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| crate::Error::InvalidArgument(format!("unknown reduction method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub method: Method,
    pub order: usize,
    /// Descending; of the (augmented or auxiliary) system the bases were built from.
    pub hankel_values: Vec<f64>,
    /// `2 Σ_{i>n} σ_i` of the system the bases were built from.
    pub alpha: Option<f64>,
    /// Same quantity for the augmented system.
    pub aug_alpha: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// ISRK: `‖W − QV(VᵀQV)⁻¹‖_F / ‖W‖_F` after every iteration.
    pub constraint_residuals: Vec<f64>,
    /// Final interpolation points as `(re, im)`.
    pub shifts: Vec<(f64, f64)>,
    pub seed: Option<u64>,
    /// Number of training columns `N₀` of `X0`, when one was used.
    pub training_columns: Option<usize>,
    pub hurwitz: bool,
    pub max_real_eigenvalue: f64,
    pub controlled: Option<Box<ReductionReport>>,
    pub uncontrolled: Option<Box<ReductionReport>>,
}

impl ReductionReport {
    pub(crate) fn new(method: Method, order: usize) -> Self {
        ReductionReport {
            method,
            order,
            hankel_values: Vec::new(),
            alpha: None,
            aug_alpha: None,
            iterations: 0,
            converged: true,
            constraint_residuals: Vec::new(),
            shifts: Vec::new(),
            seed: None,
            training_columns: None,
            hurwitz: true,
            max_real_eigenvalue: f64::NEG_INFINITY,
            controlled: None,
            uncontrolled: None,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report fields are serializable")
    }
}
