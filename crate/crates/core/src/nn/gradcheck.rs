//! Central finite-difference gradient verification.

use super::params::{Grads, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    /// Flat index of the worst entry.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.max_rel_error <= self.tolerance)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares `analytic` against central differences of `loss` at every scalar
/// of every parameter in `store`. The store is restored before returning.
pub fn grad_check<F>(
    store: &mut ParamStore,
    analytic: &Grads,
    mut loss: F,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> f64,
{
    analytic.check_against(store)?;
    let mut params = Vec::with_capacity(store.len());
    for pi in 0..store.len() {
        let name = store.params()[pi].name.clone();
        let n = store.params()[pi].value.len();
        let mut worst = ParamCheck {
            name: name.clone(),
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for k in 0..n {
            let original = store.params()[pi].value.as_slice()[k];
            store.params_mut()[pi].value.as_mut_slice()[k] = original + cfg.step;
            let plus = loss(store);
            store.params_mut()[pi].value.as_mut_slice()[k] = original - cfg.step;
            let minus = loss(store);
            store.params_mut()[pi].value.as_mut_slice()[k] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss became non-finite while perturbing `{name}`[{k}]"
                )));
            }
            let numeric = (plus - minus) / (2.0 * cfg.step);
            let a = analytic.entries()[pi].1.as_slice()[k];
            let err = relative_error(a, numeric);
            if err > worst.max_rel_error || k == 0 {
                worst.max_rel_error = err;
                worst.worst_index = k;
                worst.analytic = a;
                worst.numeric = numeric;
            }
        }
        params.push(worst);
    }
    Ok(GradCheckReport {
        params,
        tolerance: cfg.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Matrix;

    fn quadratic_store() -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("x", Matrix::from_vec(1, 3, vec![0.3, -1.7, 2.5]).unwrap())
            .unwrap();
        s
    }

    fn half_square(s: &ParamStore) -> f64 {
        s.get("x").unwrap().as_slice().iter().map(|v| 0.5 * v * v).sum()
    }

    #[test]
    fn quadratic_is_exact() {
        let mut s = quadratic_store();
        let g = Grads::from_entries(vec![("x".into(), s.get("x").unwrap().clone())]);
        let report = grad_check(&mut s, &g, half_square, &GradCheckConfig::default()).unwrap();
        assert!(report.max_rel_error() < 1e-9, "{:?}", report);
        assert!(report.passed());
        assert_eq!(s, quadratic_store());
    }

    #[test]
    fn corrupted_gradient_fails() {
        let mut s = quadratic_store();
        let mut wrong = s.get("x").unwrap().clone();
        wrong.scale(1.1);
        let g = Grads::from_entries(vec![("x".into(), wrong)]);
        let report = grad_check(&mut s, &g, half_square, &GradCheckConfig::default()).unwrap();
        assert!(!report.passed());
        assert_eq!(report.worst().unwrap().name, "x");
    }

    #[test]
    fn non_finite_loss_names_parameter() {
        let mut s = quadratic_store();
        let g = s.zero_grads();
        let err = grad_check(&mut s, &g, |_| f64::NAN, &GradCheckConfig::default()).unwrap_err();
        assert!(err.to_string().contains("`x`"), "{err}");
    }
}
