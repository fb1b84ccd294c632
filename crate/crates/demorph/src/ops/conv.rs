use rand::Rng;

use crate::ops::{col2im, gemm, im2col};
use crate::par;
use crate::tensor::Tensor;

/// 2-D convolution, square kernel. Weight layout [cout, cin, k, k].
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub w: Tensor,
    pub b: Tensor,
    pub gw: Tensor,
    pub gb: Tensor,
}

fn fan_in_init(rng: &mut impl Rng, fan_in: usize, n: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

impl Conv2d {
    pub fn new(
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = cin * kernel * kernel;
        let w = Tensor::from_vec(
            &[cout, cin, kernel, kernel],
            fan_in_init(rng, fan_in, cout * fan_in),
        )
        .unwrap();
        Conv2d {
            cin,
            cout,
            kernel,
            stride,
            pad,
            b: Tensor::zeros(&[cout]),
            gw: Tensor::zeros(w.shape()),
            gb: Tensor::zeros(&[cout]),
            w,
        }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.kernel) / self.stride + 1,
            (w + 2 * self.pad - self.kernel) / self.stride + 1,
        )
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let (n, c, h, w) = x.dims4();
        assert_eq!(c, self.cin, "conv input channels");
        let (oh, ow) = self.out_hw(h, w);
        let mut y = Tensor::zeros(&[n, self.cout, oh, ow]);
        let kk = self.cin * self.kernel * self.kernel;
        let ostride = self.cout * oh * ow;
        par::par_chunks_mut(y.data_mut(), ostride, |i, yi| {
            let mut cols = vec![0.0; kk * oh * ow];
            im2col(
                x.image(i),
                self.cin,
                h,
                w,
                self.kernel,
                self.stride,
                self.pad,
                &mut cols,
            );
            gemm(self.cout, kk, oh * ow, self.w.data(), false, &cols, 0.0, yi);
            for co in 0..self.cout {
                let bias = self.b.data()[co];
                yi[co * oh * ow..(co + 1) * oh * ow]
                    .iter_mut()
                    .for_each(|v| *v += bias);
            }
        });
        y
    }

    /// Accumulates parameter gradients and returns dL/dx.
    pub fn backward(&mut self, x: &Tensor, dy: &Tensor) -> Tensor {
        let (n, _, h, w) = x.dims4();
        let (oh, ow) = self.out_hw(h, w);
        assert_eq!(dy.shape(), [n, self.cout, oh, ow]);
        let kk = self.cin * self.kernel * self.kernel;

        // Per-image partials, reduced in index order for determinism.
        let parts: Vec<(Vec<f64>, Vec<f64>)> = par::par_map(n, |i| {
            let mut cols = vec![0.0; kk * oh * ow];
            im2col(
                x.image(i),
                self.cin,
                h,
                w,
                self.kernel,
                self.stride,
                self.pad,
                &mut cols,
            );
            let dyi = dy.image(i);
            // dW_i = dy_i (cout x ohw) . cols^T (ohw x kk)
            let mut dw = vec![0.0; self.cout * kk];
            unsafe {
                matrixmultiply::dgemm(
                    self.cout,
                    oh * ow,
                    kk,
                    1.0,
                    dyi.as_ptr(),
                    (oh * ow) as isize,
                    1,
                    cols.as_ptr(),
                    1,
                    (oh * ow) as isize,
                    0.0,
                    dw.as_mut_ptr(),
                    kk as isize,
                    1,
                );
            }
            // dcols = w^T (kk x cout) . dy_i
            let mut dcols = vec![0.0; kk * oh * ow];
            gemm(kk, self.cout, oh * ow, self.w.data(), true, dyi, 0.0, &mut dcols);
            let mut dxi = vec![0.0; self.cin * h * w];
            col2im(
                &dcols,
                self.cin,
                h,
                w,
                self.kernel,
                self.stride,
                self.pad,
                &mut dxi,
            );
            (dw, dxi)
        });

        let mut dx = Tensor::zeros(x.shape());
        for (i, (dw, dxi)) in parts.into_iter().enumerate() {
            for (g, v) in self.gw.data_mut().iter_mut().zip(&dw) {
                *g += v;
            }
            dx.image_mut(i).copy_from_slice(&dxi);
        }
        for i in 0..n {
            let dyi = dy.image(i);
            for co in 0..self.cout {
                self.gb.data_mut()[co] += dyi[co * oh * ow..(co + 1) * oh * ow].iter().sum::<f64>();
            }
        }
        dx
    }
}

/// 2-D transpose convolution. Weight layout [cin, cout, k, k].
#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub w: Tensor,
    pub b: Tensor,
    pub gw: Tensor,
    pub gb: Tensor,
}

impl ConvTranspose2d {
    pub fn new(
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut impl Rng,
    ) -> Self {
        // Fan-in of the equivalent forward conv.
        let fan_in = cin * kernel * kernel;
        let w = Tensor::from_vec(
            &[cin, cout, kernel, kernel],
            fan_in_init(rng, fan_in, cin * cout * kernel * kernel),
        )
        .unwrap();
        ConvTranspose2d {
            cin,
            cout,
            kernel,
            stride,
            pad,
            b: Tensor::zeros(&[cout]),
            gw: Tensor::zeros(w.shape()),
            gb: Tensor::zeros(&[cout]),
            w,
        }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h - 1) * self.stride + self.kernel - 2 * self.pad,
            (w - 1) * self.stride + self.kernel - 2 * self.pad,
        )
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let (n, c, h, w) = x.dims4();
        assert_eq!(c, self.cin, "tconv input channels");
        let (oh, ow) = self.out_hw(h, w);
        let kk = self.cout * self.kernel * self.kernel;
        let mut y = Tensor::zeros(&[n, self.cout, oh, ow]);
        let ostride = self.cout * oh * ow;
        par::par_chunks_mut(y.data_mut(), ostride, |i, yi| {
            // cols = w^T (kk x cin) . x_i (cin x hw), then scatter to output.
            let mut cols = vec![0.0; kk * h * w];
            gemm(kk, self.cin, h * w, self.w.data(), true, x.image(i), 0.0, &mut cols);
            col2im(
                &cols,
                self.cout,
                oh,
                ow,
                self.kernel,
                self.stride,
                self.pad,
                yi,
            );
            for co in 0..self.cout {
                let bias = self.b.data()[co];
                yi[co * oh * ow..(co + 1) * oh * ow]
                    .iter_mut()
                    .for_each(|v| *v += bias);
            }
        });
        y
    }

    pub fn backward(&mut self, x: &Tensor, dy: &Tensor) -> Tensor {
        let (n, _, h, w) = x.dims4();
        let (oh, ow) = self.out_hw(h, w);
        assert_eq!(dy.shape(), [n, self.cout, oh, ow]);
        let kk = self.cout * self.kernel * self.kernel;

        let parts: Vec<(Vec<f64>, Vec<f64>)> = par::par_map(n, |i| {
            let mut cols = vec![0.0; kk * h * w];
            im2col(
                dy.image(i),
                self.cout,
                oh,
                ow,
                self.kernel,
                self.stride,
                self.pad,
                &mut cols,
            );
            // dx_i = w (cin x kk) . cols (kk x hw)
            let mut dxi = vec![0.0; self.cin * h * w];
            gemm(self.cin, kk, h * w, self.w.data(), false, &cols, 0.0, &mut dxi);
            // dW_i = x_i (cin x hw) . cols^T (hw x kk)
            let xi = x.image(i);
            let mut dw = vec![0.0; self.cin * kk];
            unsafe {
                matrixmultiply::dgemm(
                    self.cin,
                    h * w,
                    kk,
                    1.0,
                    xi.as_ptr(),
                    (h * w) as isize,
                    1,
                    cols.as_ptr(),
                    1,
                    (h * w) as isize,
                    0.0,
                    dw.as_mut_ptr(),
                    kk as isize,
                    1,
                );
            }
            (dw, dxi)
        });

        let mut dx = Tensor::zeros(x.shape());
        for (i, (dw, dxi)) in parts.into_iter().enumerate() {
            for (g, v) in self.gw.data_mut().iter_mut().zip(&dw) {
                *g += v;
            }
            dx.image_mut(i).copy_from_slice(&dxi);
        }
        for i in 0..n {
            let dyi = dy.image(i);
            for co in 0..self.cout {
                self.gb.data_mut()[co] += dyi[co * oh * ow..(co + 1) * oh * ow].iter().sum::<f64>();
            }
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sq_loss(y: &Tensor) -> f64 {
        y.data().iter().map(|v| v * v).sum::<f64>() * 0.5
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let conv = Conv2d::new(2, 3, 3, 2, 1, &mut rng);
        let x = Tensor::from_vec(
            &[2, 2, 5, 5],
            (0..100).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let mut c = conv.clone();
        let y = c.forward(&x);
        let dx = c.backward(&x, &y);
        let eps = 1e-5;

        for idx in [0usize, 5, 17, 30] {
            let mut up = conv.clone();
            up.w.data_mut()[idx] += eps;
            let mut dn = conv.clone();
            dn.w.data_mut()[idx] -= eps;
            let fd = (sq_loss(&up.forward(&x)) - sq_loss(&dn.forward(&x))) / (2.0 * eps);
            let an = c.gw.data()[idx];
            assert!((fd - an).abs() / fd.abs().max(1e-8) < 1e-5, "dW[{idx}]: fd {fd} an {an}");
        }
        for idx in [0usize, 33, 77, 99] {
            let mut up = x.clone();
            up.data_mut()[idx] += eps;
            let mut dn = x.clone();
            dn.data_mut()[idx] -= eps;
            let fd = (sq_loss(&conv.forward(&up)) - sq_loss(&conv.forward(&dn))) / (2.0 * eps);
            let an = dx.data()[idx];
            assert!((fd - an).abs() / fd.abs().max(1e-8) < 1e-5, "dx[{idx}]: fd {fd} an {an}");
        }
        for idx in 0..3 {
            let mut up = conv.clone();
            up.b.data_mut()[idx] += eps;
            let mut dn = conv.clone();
            dn.b.data_mut()[idx] -= eps;
            let fd = (sq_loss(&up.forward(&x)) - sq_loss(&dn.forward(&x))) / (2.0 * eps);
            let an = c.gb.data()[idx];
            assert!((fd - an).abs() / fd.abs().max(1e-8) < 1e-5, "db[{idx}]: fd {fd} an {an}");
        }
    }

    #[test]
    fn tconv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let tconv = ConvTranspose2d::new(3, 2, 2, 2, 0, &mut rng);
        let x = Tensor::from_vec(
            &[2, 3, 4, 4],
            (0..96).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let mut c = tconv.clone();
        let y = c.forward(&x);
        assert_eq!(y.shape(), [2, 2, 8, 8]);
        let dx = c.backward(&x, &y);
        let eps = 1e-5;

        for idx in [0usize, 7, 13, 23] {
            let mut up = tconv.clone();
            up.w.data_mut()[idx] += eps;
            let mut dn = tconv.clone();
            dn.w.data_mut()[idx] -= eps;
            let fd = (sq_loss(&up.forward(&x)) - sq_loss(&dn.forward(&x))) / (2.0 * eps);
            let an = c.gw.data()[idx];
            assert!((fd - an).abs() / fd.abs().max(1e-8) < 1e-5, "dW[{idx}]: fd {fd} an {an}");
        }
        for idx in [0usize, 40, 95] {
            let mut up = x.clone();
            up.data_mut()[idx] += eps;
            let mut dn = x.clone();
            dn.data_mut()[idx] -= eps;
            let fd = (sq_loss(&tconv.forward(&up)) - sq_loss(&tconv.forward(&dn))) / (2.0 * eps);
            let an = dx.data()[idx];
            assert!((fd - an).abs() / fd.abs().max(1e-8) < 1e-5, "dx[{idx}]: fd {fd} an {an}");
        }
    }

    #[test]
    fn tconv_upsamples_by_stride() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = ConvTranspose2d::new(4, 2, 2, 2, 0, &mut rng);
        assert_eq!(t.out_hw(7, 7), (14, 14));
        let t2 = ConvTranspose2d::new(4, 2, 3, 1, 1, &mut rng);
        assert_eq!(t2.out_hw(7, 7), (7, 7));
    }
}
