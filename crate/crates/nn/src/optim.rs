use crate::tensor::{Mat, Scalar};

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Mat<T>>,
    v: Vec<Mat<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &[Mat<T>], lr: f64, betas: [f64; 2], eps: f64) -> Self {
        let zeros = || params.iter().map(|p| Mat::zeros(p.rows, p.cols)).collect();
        Adam { lr, beta1: betas[0], beta2: betas[1], eps, t: 0, m: zeros(), v: zeros() }
    }

    pub fn step(&mut self, params: &mut [Mat<T>], grads: &[Mat<T>]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let (b1, b2) = (T::from_f64(self.beta1), T::from_f64(self.beta2));
        let (c1, c2) = (T::ONE - b1, T::ONE - b2);
        let bc1 = T::from_f64(1.0 - self.beta1.powi(self.t as i32));
        let bc2 = T::from_f64(1.0 - self.beta2.powi(self.t as i32));
        let lr = T::from_f64(self.lr);
        let eps = T::from_f64(self.eps);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            assert_eq!(p.shape(), g.shape());
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = b1 * m.data[i] + c1 * gi;
                v.data[i] = b2 * v.data[i] + c2 * gi * gi;
                let mh = m.data[i] / bc1;
                let vh = v.data[i] / bc2;
                p.data[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_moves_monotonically_to_minimum() {
        let mut w = vec![Mat::from_vec(1, 1, vec![0.0f64])];
        let mut adam = Adam::new(&w, 0.01, [0.9, 0.999], 1e-8);
        let mut prev = 0.0;
        for _ in 0..200 {
            let g = 2.0 * (w[0].data[0] - 3.0);
            adam.step(&mut w, &[Mat::from_vec(1, 1, vec![g])]);
            let now = w[0].data[0];
            assert!(now > prev && now < 3.0);
            prev = now;
        }
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let grads = vec![Mat::from_vec(1, 5, vec![3.0f64, -0.001, 1e4, -7.5, 0.2])];
        let mut w = vec![Mat::zeros(1, 5)];
        let mut adam = Adam::new(&w, 1e-4, [0.9, 0.999], 1e-8);
        adam.step(&mut w, &grads);
        for (p, g) in w[0].data.iter().zip(&grads[0].data) {
            assert!((p + 1e-4 * g.signum()).abs() < 1e-8, "{p} for gradient {g}");
        }
    }
}
