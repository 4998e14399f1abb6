use crate::error::{Error, Result};
use crate::net::model::Model;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| b > 0.0 && b < 1.0;
        if !unit(self.beta1) || !unit(self.beta2) {
            return Err(Error::invalid("Adam betas must lie in (0, 1)"));
        }
        if !(self.learning_rate >= 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::invalid("learning rate must be >= 0 and epsilon > 0"));
        }
        Ok(())
    }
}

/// One bias-corrected Adam update in place. A non-finite gradient leaves
/// the model untouched.
pub fn adam_step(model: &mut Model, grad: &[f64], cfg: &AdamConfig) -> Result<()> {
    cfg.validate()?;
    if grad.len() != model.params.len() {
        return Err(Error::invalid(format!(
            "gradient length {} != parameter count {}",
            grad.len(),
            model.params.len()
        )));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::GradientOverflow);
    }
    let n = model.params.len();
    let st = &mut model.adam;
    if st.m.len() != n {
        st.m = vec![0.0; n];
        st.v = vec![0.0; n];
    }
    st.t += 1;
    let t = st.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((p, m), v), &g) in model.params.iter_mut().zip(&mut st.m).zip(&mut st.v).zip(grad) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let mh = *m / c1;
        let vh = *v / c2;
        *p -= cfg.learning_rate * mh / (vh.sqrt() + cfg.epsilon);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::arch::Architecture;

    fn scalar_model() -> Model {
        // 1^3 input, one dense layer of size 1: weight and bias
        Model::zeros(Architecture::new(1, vec![], vec![1]).unwrap()).unwrap()
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = AdamConfig::default();
        for g in [3.0, -0.25, 1e-3] {
            let mut m = scalar_model();
            adam_step(&mut m, &[g, 0.0], &cfg).unwrap();
            let d = m.params[0];
            assert_eq!(d.signum(), -g.signum());
            assert!(
                d.abs() <= cfg.learning_rate && d.abs() >= 0.9999 * cfg.learning_rate,
                "{d}"
            );
            assert_eq!(m.params[1], 0.0);
            assert_eq!(m.adam.t, 1);
        }
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut m = scalar_model();
        m.params = vec![0.5, -0.5];
        for k in 1..=5 {
            adam_step(&mut m, &[0.0, 0.0], &AdamConfig::default()).unwrap();
            assert_eq!(m.params, vec![0.5, -0.5]);
            assert_eq!(m.adam.t, k);
        }
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut m = scalar_model();
        let e = adam_step(&mut m, &[f64::NAN, 0.0], &AdamConfig::default()).unwrap_err();
        assert_eq!(e.to_string(), "gradient overflow");
        assert_eq!(m.adam.t, 0);
    }

    #[test]
    fn identical_inputs_give_identical_updates() {
        let mut a = scalar_model();
        let mut b = scalar_model();
        for g in [0.3, -1.2, 0.7] {
            adam_step(&mut a, &[g, g * 2.0], &AdamConfig::default()).unwrap();
            adam_step(&mut b, &[g, g * 2.0], &AdamConfig::default()).unwrap();
        }
        assert_eq!(a, b);
    }
}
