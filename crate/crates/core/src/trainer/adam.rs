/// Adam hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

/// One bias-corrected Adam update at step `t` (1-based).
pub fn adam_step(param: &mut [f64], grad: &[f64], state: &mut AdamState, lr: f64, cfg: &AdamConfig, t: u64) {
    assert!(t >= 1, "Adam steps are 1-based");
    assert_eq!(param.len(), grad.len());
    let exp = i32::try_from(t).unwrap_or(i32::MAX);
    let c1 = 1.0 - cfg.beta1.powi(exp);
    let c2 = 1.0 - cfg.beta2.powi(exp);
    for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(&mut state.m).zip(&mut state.v) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = vec![0.3, -1.2];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, 1e-3, &AdamConfig::default(), 1);
        assert_eq!(p, vec![0.3, -1.2]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut s, 1e-3, &AdamConfig::default(), 1);
        // m̂ = v̂ = 1 after bias correction, so Δ = −lr / (1 + ε).
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-18, "{}", p[0]);
        assert!((p[0] + 9.999_999_90e-4).abs() < 1e-12);
    }

    #[test]
    fn constant_gradient_steps_approach_lr() {
        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        let cfg = AdamConfig::default();
        let mut last = 0.0;
        for t in 1..=1000 {
            let before = p[0];
            adam_step(&mut p, &[0.37], &mut s, 1e-3, &cfg, t);
            last = before - p[0];
        }
        // With a constant gradient the corrected moments are exact: m̂ = g, v̂ = g².
        assert!((last - 1e-3).abs() < 1e-9, "step {last}");
    }
}
