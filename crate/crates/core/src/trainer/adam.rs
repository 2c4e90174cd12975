use crate::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Bias-corrected Adam moments for one parameter group list.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Zero moments mirroring the given parameter slices.
    pub fn new(shapes: &[usize]) -> Self {
        AdamState {
            beta1: BETA1,
            beta2: BETA2,
            eps: EPSILON,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One update. Fails without touching anything if a gradient is not finite.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::data("adam: parameter group count mismatch"));
        }
        for (gi, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[gi].len() || g.len() != p.len() {
                return Err(Error::data(format!("adam: shape mismatch in group {gi}")));
            }
            if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::numeric(format!(
                    "adam: non-finite gradient {} at group {gi} index {j} (step {})",
                    g[j],
                    self.step + 1
                )));
            }
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (gi, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.m[gi];
            let v = &mut self.v[gi];
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                p[j] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_leaves_params_and_advances_counter() {
        let mut st = AdamState::new(&[3]);
        let mut p = vec![1.0, -2.0, 0.5];
        st.step(&mut [&mut p], &[&[0.0; 3]], 0.1).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn constant_gradient_descends() {
        let mut st = AdamState::new(&[2]);
        let mut p = vec![0.0, 0.0];
        for _ in 0..100 {
            st.step(&mut [&mut p], &[&[0.3, -2.0]], 0.01).unwrap();
        }
        assert!(p[0] < 0.0 && p[1] > 0.0);
    }

    #[test]
    fn scalar_trace_matches_hand_steps() {
        // Hand-stepped reference for g = 2θ, θ0 = 1, lr = 0.1.
        let mut theta = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        let mut expect = Vec::new();
        for t in 1..=3 {
            let g = 2.0 * theta;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            theta -= 0.1 * mh / (vh.sqrt() + 1e-8);
            expect.push(theta);
        }
        let mut st = AdamState::new(&[1]);
        let mut p = vec![1.0];
        for e in expect {
            let g = [2.0 * p[0]];
            st.step(&mut [&mut p], &[&g], 0.1).unwrap();
            assert!((p[0] - e).abs() < 1e-15);
        }
        // The first Adam step has magnitude lr regardless of gradient scale.
        let mut st = AdamState::new(&[1]);
        let mut p = vec![0.0];
        st.step(&mut [&mut p], &[&[123.0]], 0.1).unwrap();
        assert!((p[0] + 0.1).abs() < 1e-9);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut st = AdamState::new(&[1]);
        let mut p = vec![1.0];
        let err = st.step(&mut [&mut p], &[&[f64::NAN]], 0.1).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert_eq!(p, vec![1.0]);
        assert_eq!(st.step, 0);
    }
}
