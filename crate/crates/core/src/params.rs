//! Uniform access to the tensors of a parameter set. Gradients reuse the
//! parameter types, so a set and its gradient always visit tensors in the
//! same order.

use crate::error::{Error, Result};
use crate::math::Vector;

pub trait ParamSet {
    fn tensors(&self) -> Vec<(&'static str, &[f64])>;

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])>;

    /// Same structure and shapes, all entries zero.
    fn zeros_like(&self) -> Self
    where
        Self: Sized;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn flatten(&self) -> Vector {
        self.tensors()
            .into_iter()
            .flat_map(|(_, t)| t.iter().copied())
            .collect()
    }

    fn assign_flat(&mut self, theta: &[f64]) -> Result<()> {
        let n = self.num_params();
        if theta.len() != n {
            return Err(Error::shape("assign_flat", format!("[{n}]"), format!("[{}]", theta.len())));
        }
        let mut offset = 0;
        for (_, t) in self.tensors_mut() {
            t.copy_from_slice(&theta[offset..offset + t.len()]);
            offset += t.len();
        }
        Ok(())
    }

    fn norm_sq(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|x| x * x)
            .sum()
    }

    fn scale(&mut self, factor: f64) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// `self += alpha * other`; both sets must share a structure.
    fn add_scaled(&mut self, alpha: f64, other: &Self) -> Result<()>
    where
        Self: Sized,
    {
        let src = other.tensors();
        let mut dst = self.tensors_mut();
        if src.len() != dst.len() {
            return Err(Error::shape("add_scaled", dst.len(), src.len()));
        }
        for ((name, d), (_, s)) in dst.iter_mut().zip(&src) {
            if d.len() != s.len() {
                return Err(Error::shape("add_scaled", *name, format!("{} vs {}", d.len(), s.len())));
            }
            for (x, y) in d.iter_mut().zip(s.iter()) {
                *x += alpha * y;
            }
        }
        Ok(())
    }

    fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }
}
