//! Ridge-regression objective with a dense closed-form oracle.
//!
//! Sample `k` (stored in `Sample::user`) contributes
//! `½(xₖ·w − yₖ)² + (λ/2)‖w‖²`.

#![allow(dead_code)]

use erasebench::math::ParamVector;
use erasebench::models::{Objective, Sample, SampleSet};
use erasebench::Result;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone)]
pub struct Ridge {
    pub params: ParamVector,
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<f64>,
    pub l2: f64,
}

impl Ridge {
    pub fn random(rng: &mut impl Rng, dim: usize, points: usize, l2: f64) -> Self {
        Self::with_layout(rng, &[("weights", dim)], points, l2)
    }

    pub fn with_layout(rng: &mut impl Rng, layout: &[(&str, usize)], points: usize, l2: f64) -> Self {
        let dim: usize = layout.iter().map(|(_, n)| n).sum();
        let normal = Normal::new(0.0, 1.0).unwrap();
        let truth: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        let xs: Vec<Vec<f64>> = (0..points).map(|_| (0..dim).map(|_| normal.sample(rng)).collect()).collect();
        let ys = xs
            .iter()
            .map(|x| x.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + 0.3 * normal.sample(rng))
            .collect();
        let mut params = ParamVector::zeros(layout).unwrap();
        for v in params.values_mut() {
            *v = 0.5 * normal.sample(rng);
        }
        Self { params, xs, ys, l2 }
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn samples(&self, idx: impl IntoIterator<Item = usize>) -> SampleSet {
        SampleSet::new(
            idx.into_iter()
                .map(|k| Sample {
                    user: k as u32,
                    positive: 0,
                    negative: None,
                })
                .collect(),
        )
        .unwrap()
    }

    fn x(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.xs[k])
    }

    pub fn w(&self) -> DVector<f64> {
        DVector::from_column_slice(self.params.values())
    }

    /// Dense gradient of `Σ cₖ ℓₖ`.
    pub fn dense_grad(&self, idx: &[usize], coeffs: &[f64]) -> DVector<f64> {
        let w = self.w();
        let mut g = DVector::zeros(self.dim());
        for (&k, &c) in idx.iter().zip(coeffs) {
            let x = self.x(k);
            g += c * ((x.dot(&w) - self.ys[k]) * &x + self.l2 * &w);
        }
        g
    }

    /// Dense Hessian of `Σ cₖ ℓₖ` plus `damping·I`.
    pub fn dense_hessian(&self, idx: &[usize], coeffs: &[f64], damping: f64) -> DMatrix<f64> {
        let n = self.dim();
        let mut h = DMatrix::identity(n, n) * damping;
        for (&k, &c) in idx.iter().zip(coeffs) {
            let x = self.x(k);
            h += c * (&x * x.transpose() + self.l2 * DMatrix::identity(n, n));
        }
        h
    }

    /// Minimiser of the summed loss over `idx`.
    pub fn optimum(&self, idx: &[usize]) -> DVector<f64> {
        let zero = Self {
            params: ParamVector::zeros(&[("weights", self.dim())]).unwrap(),
            ..self.clone()
        };
        let ones = vec![1.0; idx.len()];
        let h = zero.dense_hessian(idx, &ones, 0.0);
        let g = zero.dense_grad(idx, &ones);
        -h.lu().solve(&g).unwrap()
    }

    pub fn set_w(&mut self, w: &DVector<f64>) {
        self.params.values_mut().copy_from_slice(w.as_slice());
    }
}

impl Objective for Ridge {
    fn params(&self) -> &ParamVector {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    fn loss_grad(&self, samples: &SampleSet, coeffs: &[f64]) -> Result<(f64, Vec<f64>)> {
        let w = self.params.values();
        let mut grad = vec![0.0; w.len()];
        let mut loss = 0.0;
        let wn: f64 = w.iter().map(|v| v * v).sum();
        for (s, &c) in samples.iter().zip(coeffs) {
            let x = &self.xs[s.user as usize];
            let r = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() - self.ys[s.user as usize];
            loss += c * (0.5 * r * r + 0.5 * self.l2 * wn);
            for ((g, xk), wk) in grad.iter_mut().zip(x).zip(w) {
                *g += c * (r * xk + self.l2 * wk);
            }
        }
        Ok((loss, grad))
    }

    fn hvp(&self, samples: &SampleSet, coeffs: &[f64], v: &[f64], damping: f64) -> Result<Vec<f64>> {
        let mut out: Vec<f64> = v.iter().map(|x| damping * x).collect();
        for (s, &c) in samples.iter().zip(coeffs) {
            let x = &self.xs[s.user as usize];
            let a: f64 = x.iter().zip(v).map(|(p, q)| p * q).sum();
            for ((o, xk), vk) in out.iter_mut().zip(x).zip(v) {
                *o += c * (a * xk + self.l2 * vk);
            }
        }
        Ok(out)
    }
}
