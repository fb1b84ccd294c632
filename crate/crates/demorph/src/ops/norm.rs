use crate::tensor::Tensor;

/// Per-channel batch normalization over (N, H, W).
///
/// Training mode normalizes with batch statistics and updates running
/// statistics (unbiased variance, momentum 0.1); evaluation mode uses the
/// running statistics.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub c: usize,
    pub eps: f64,
    pub momentum: f64,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub ggamma: Tensor,
    pub gbeta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
}

/// Forward-pass state needed by [`BatchNorm::backward`].
pub struct BnCache {
    pub xhat: Tensor,
    pub inv_std: Vec<f64>,
}

impl BatchNorm {
    pub fn new(c: usize) -> Self {
        BatchNorm {
            c,
            eps: 1e-5,
            momentum: 0.1,
            gamma: Tensor::full(&[c], 1.0),
            beta: Tensor::zeros(&[c]),
            ggamma: Tensor::zeros(&[c]),
            gbeta: Tensor::zeros(&[c]),
            running_mean: Tensor::zeros(&[c]),
            running_var: Tensor::full(&[c], 1.0),
        }
    }

    fn channel_ranges(x: &Tensor) -> (usize, usize, usize) {
        let (n, c, h, w) = x.dims4();
        (n, c, h * w)
    }

    pub fn forward_train(&mut self, x: &Tensor) -> (Tensor, BnCache) {
        let (n, c, hw) = Self::channel_ranges(x);
        assert_eq!(c, self.c);
        let m = (n * hw) as f64;
        let mut y = Tensor::zeros(x.shape());
        let mut xhat = Tensor::zeros(x.shape());
        let mut inv_std = vec![0.0; c];
        for ch in 0..c {
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for i in 0..n {
                let img = x.image(i);
                for &v in &img[ch * hw..(ch + 1) * hw] {
                    sum += v;
                    sumsq += v * v;
                }
            }
            let mean = sum / m;
            let var = (sumsq / m - mean * mean).max(0.0);
            let istd = 1.0 / (var + self.eps).sqrt();
            inv_std[ch] = istd;

            let unbiased = if m > 1.0 { var * m / (m - 1.0) } else { var };
            let rm = &mut self.running_mean.data_mut()[ch];
            *rm = (1.0 - self.momentum) * *rm + self.momentum * mean;
            let rv = &mut self.running_var.data_mut()[ch];
            *rv = (1.0 - self.momentum) * *rv + self.momentum * unbiased;

            let g = self.gamma.data()[ch];
            let b = self.beta.data()[ch];
            for i in 0..n {
                let xs = &x.image(i)[ch * hw..(ch + 1) * hw];
                let off = i * c * hw + ch * hw;
                for (j, &v) in xs.iter().enumerate() {
                    let xh = (v - mean) * istd;
                    xhat.data_mut()[off + j] = xh;
                    y.data_mut()[off + j] = g * xh + b;
                }
            }
        }
        (y, BnCache { xhat, inv_std })
    }

    pub fn forward_eval(&self, x: &Tensor) -> Tensor {
        let (n, c, hw) = Self::channel_ranges(x);
        assert_eq!(c, self.c);
        let mut y = Tensor::zeros(x.shape());
        for ch in 0..c {
            let mean = self.running_mean.data()[ch];
            let istd = 1.0 / (self.running_var.data()[ch] + self.eps).sqrt();
            let g = self.gamma.data()[ch];
            let b = self.beta.data()[ch];
            for i in 0..n {
                let xs = &x.image(i)[ch * hw..(ch + 1) * hw];
                let off = i * c * hw + ch * hw;
                for (j, &v) in xs.iter().enumerate() {
                    y.data_mut()[off + j] = g * (v - mean) * istd + b;
                }
            }
        }
        y
    }

    /// Backward through the training-mode forward. Accumulates dgamma/dbeta
    /// and returns dx.
    pub fn backward(&mut self, cache: &BnCache, dy: &Tensor) -> Tensor {
        let (n, c, hw) = Self::channel_ranges(dy);
        assert_eq!(c, self.c);
        let m = (n * hw) as f64;
        let mut dx = Tensor::zeros(dy.shape());
        for ch in 0..c {
            let mut sum_dy = 0.0;
            let mut sum_dy_xhat = 0.0;
            for i in 0..n {
                let off = i * c * hw + ch * hw;
                for j in 0..hw {
                    let d = dy.data()[off + j];
                    sum_dy += d;
                    sum_dy_xhat += d * cache.xhat.data()[off + j];
                }
            }
            self.gbeta.data_mut()[ch] += sum_dy;
            self.ggamma.data_mut()[ch] += sum_dy_xhat;

            let g = self.gamma.data()[ch];
            let istd = cache.inv_std[ch];
            let mean_dy = sum_dy / m;
            let mean_dy_xhat = sum_dy_xhat / m;
            for i in 0..n {
                let off = i * c * hw + ch * hw;
                for j in 0..hw {
                    let d = dy.data()[off + j];
                    let xh = cache.xhat.data()[off + j];
                    dx.data_mut()[off + j] = g * istd * (d - mean_dy - xh * mean_dy_xhat);
                }
            }
        }
        dx
    }
}
