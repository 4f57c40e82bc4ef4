//! Welfare measures over per-agent values.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, FairError, Result};

/// A welfare measure. Build Gini weights through [`WelfareSpec::gini`] so
/// they are validated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecRepr", into = "SpecRepr")]
pub enum WelfareSpec {
    /// Product of values.
    Nash,
    /// Smallest value.
    Min,
    /// Generalized Gini: sorted values ascending, dotted with non-increasing
    /// weights.
    Gini { weights: Vec<f64> },
    /// Sum of values.
    Utilitarian,
}

#[derive(Serialize, Deserialize)]
struct SpecRepr {
    measure: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

impl TryFrom<SpecRepr> for WelfareSpec {
    type Error = FairError;

    fn try_from(r: SpecRepr) -> Result<Self> {
        match (r.measure.as_str(), r.weights) {
            ("nash", None) => Ok(Self::Nash),
            ("min", None) => Ok(Self::Min),
            ("util", None) => Ok(Self::Utilitarian),
            ("gini", Some(w)) => Self::gini(w),
            ("gini", None) => Err(invalid("gini welfare requires weights")),
            ("nash" | "min" | "util", Some(_)) => Err(invalid(format!("measure {} takes no weights", r.measure))),
            (other, _) => Err(invalid(format!("unknown welfare measure {other:?}"))),
        }
    }
}

impl From<WelfareSpec> for SpecRepr {
    fn from(spec: WelfareSpec) -> Self {
        let weights = match &spec {
            WelfareSpec::Gini { weights } => Some(weights.clone()),
            _ => None,
        };
        SpecRepr { measure: spec.name().to_string(), weights }
    }
}

impl WelfareSpec {
    /// Gini weights must be nonnegative, sum to one and be non-increasing.
    pub fn gini(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("gini weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("gini weights sum to {total}, expected 1")));
        }
        if weights.windows(2).any(|w| w[1] > w[0]) {
            return Err(invalid("gini weights must be non-increasing"));
        }
        Ok(Self::Gini { weights })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Nash => "nash",
            Self::Min => "min",
            Self::Gini { .. } => "gini",
            Self::Utilitarian => "util",
        }
    }

    pub fn check_agents(&self, n: usize) -> Result<()> {
        match self {
            Self::Gini { weights } if weights.len() != n => Err(invalid(format!(
                "gini weights have length {} but there are {n} agents",
                weights.len()
            ))),
            _ => Ok(()),
        }
    }
}

/// Agent indices ordered by value ascending; ties keep the lower index
/// first.
pub fn ascending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
    order
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Evaluates `spec` on a value vector.
///
/// Every measure aggregates the values in sorted order, which makes the
/// result bitwise invariant under agent permutations.
pub fn welfare_of_values(spec: &WelfareSpec, values: &[f64]) -> Result<f64> {
    spec.check_agents(values.len())?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("welfare of a non-finite value vector"));
    }
    let v = sorted(values);
    Ok(match spec {
        WelfareSpec::Nash => nash(&v),
        WelfareSpec::Min => v.first().copied().unwrap_or(0.0),
        WelfareSpec::Gini { weights } => weights.iter().zip(&v).map(|(w, x)| w * x).sum(),
        WelfareSpec::Utilitarian => v.iter().sum(),
    })
}

// Plain product while it stays representable, log-space otherwise.
fn nash(sorted_values: &[f64]) -> f64 {
    if sorted_values.iter().any(|&v| v <= 0.0) {
        return if sorted_values.iter().any(|&v| v < 0.0) { f64::NAN } else { 0.0 };
    }
    let direct: f64 = sorted_values.iter().product();
    if direct.is_normal() {
        direct
    } else {
        sorted_values.iter().map(|v| v.ln()).sum::<f64>().exp()
    }
}

/// `sum_i ln v_i`; `-inf` when some value is zero.
pub fn log_nash(values: &[f64]) -> f64 {
    sorted(values).iter().map(|v| if *v > 0.0 { v.ln() } else { f64::NEG_INFINITY }).sum()
}

/// The coefficient vector `c` with `GGW_w(v) = <c, v>`: the `k`-th smallest
/// value receives weight `w_k`. It is a supergradient of the concave map
/// `v -> GGW_w(v)` and the minimizer of `<c, v>` over permutations of `w`.
pub fn ggw_supergradient(values: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    if values.len() != weights.len() {
        return Err(invalid("values and weights differ in length"));
    }
    let mut c = vec![0.0; values.len()];
    for (rank, agent) in ascending_order(values).into_iter().enumerate() {
        c[agent] = weights[rank];
    }
    Ok(c)
}
