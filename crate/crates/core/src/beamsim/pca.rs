//! Principal-component view of distribution shift between two image sets.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::image::ImageGrid;

/// Default histogram resolution for shift reports.
pub const DEFAULT_BINS: usize = 30;

/// Principal axes of a set of flattened images, by descending variance.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// One unit-norm loading vector per component; largest-magnitude entry positive.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    /// Fits on the covariance of the flattened, mean-centered `data`.
    pub fn fit(data: &[&[f64]], n_components: usize) -> Result<PcaModel> {
        let n = data.len();
        if n < 2 || n < n_components {
            return Err(Error::InsufficientData { needed: n_components.max(2), found: n });
        }
        let d = data[0].len();
        if let Some(bad) = data.iter().find(|v| v.len() != d) {
            return Err(Error::LengthMismatch { expected: d, found: bad.len() });
        }
        if n_components > d {
            return Err(Error::InsufficientData { needed: n_components, found: d });
        }
        let mut mean = vec![0.0; d];
        for v in data {
            for (m, x) in mean.iter_mut().zip(v.iter()) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let centered = DMatrix::from_fn(n, d, |i, j| data[i][j] - mean[j]);
        let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut components = Vec::with_capacity(n_components);
        let mut eigenvalues = Vec::with_capacity(n_components);
        for &k in order.iter().take(n_components) {
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            let lead = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            if lead < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            components.push(v);
            eigenvalues.push(eig.eigenvalues[k].max(0.0));
        }
        Ok(PcaModel { mean, components, eigenvalues })
    }

    pub fn fit_images(images: &[ImageGrid], n_components: usize) -> Result<PcaModel> {
        check_images(images)?;
        let rows: Vec<&[f64]> = images.iter().map(|g| g.pixels()).collect();
        PcaModel::fit(&rows, n_components)
    }

    /// Scores of `v` on every fitted component.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(v).zip(&self.mean).map(|((ci, x), m)| ci * (x - m)).sum())
            .collect()
    }

    /// Histograms of component scores for two sets and their overlap.
    pub fn shift_report(&self, train: &[ImageGrid], test: &[ImageGrid], bins: usize) -> Result<Vec<ComponentShift>> {
        check_images(train)?;
        check_images(test)?;
        let a: Vec<&[f64]> = train.iter().map(|g| g.pixels()).collect();
        let b: Vec<&[f64]> = test.iter().map(|g| g.pixels()).collect();
        self.shift_report_rows(&a, &b, bins)
    }

    /// [`PcaModel::shift_report`] on flattened vectors, which need not be
    /// valid images.
    pub fn shift_report_rows(&self, train: &[&[f64]], test: &[&[f64]], bins: usize) -> Result<Vec<ComponentShift>> {
        if let Some(bad) = train.iter().chain(test).find(|v| v.len() != self.mean.len()) {
            return Err(Error::LengthMismatch { expected: self.mean.len(), found: bad.len() });
        }
        if train.is_empty() || test.is_empty() {
            return Err(Error::InsufficientData { needed: 1, found: 0 });
        }
        let train_scores: Vec<Vec<f64>> = train.iter().map(|v| self.project(v)).collect();
        let test_scores: Vec<Vec<f64>> = test.iter().map(|v| self.project(v)).collect();
        Ok((0..self.components.len())
            .map(|k| {
                let a: Vec<f64> = train_scores.iter().map(|s| s[k]).collect();
                let b: Vec<f64> = test_scores.iter().map(|s| s[k]).collect();
                ComponentShift::from_scores(k, self.eigenvalues[k], &a, &b, bins)
            })
            .collect())
    }
}

fn check_images(images: &[ImageGrid]) -> Result<()> {
    if images.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, found: images.len() });
    }
    let first = &images[0];
    for g in images {
        if !g.same_shape(first) {
            return Err(Error::DimensionMismatch {
                left_width: first.width(),
                left_height: first.height(),
                right_width: g.width(),
                right_height: g.height(),
            });
        }
    }
    Ok(())
}

/// Paired score histograms on one principal component.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ComponentShift {
    pub component: usize,
    pub eigenvalue: f64,
    /// `bins + 1` shared bin edges spanning both score sets.
    pub edges: Vec<f64>,
    /// Probability mass per bin.
    pub train: Vec<f64>,
    pub test: Vec<f64>,
    /// `Σ min(train_i, test_i)`: 1 for identical histograms, 0 for disjoint.
    pub overlap: f64,
}

impl ComponentShift {
    fn from_scores(component: usize, eigenvalue: f64, a: &[f64], b: &[f64], bins: usize) -> ComponentShift {
        let bins = bins.max(1);
        let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
        let mut hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo {
            hi = lo + 1.0;
        }
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
        let hist = |xs: &[f64]| {
            let mut h = vec![0.0; bins];
            for &x in xs {
                let idx = (((x - lo) / width) as usize).min(bins - 1);
                h[idx] += 1.0;
            }
            h.iter_mut().for_each(|c| *c /= xs.len() as f64);
            h
        };
        let train = hist(a);
        let test = hist(b);
        let overlap = train.iter().zip(&test).map(|(p, q)| p.min(*q)).sum();
        ComponentShift { component, eigenvalue, edges, train, test, overlap }
    }
}

/// Fits components on `train` and compares `train` with `test` on the first
/// `n_components` of them.
pub fn pca_shift_report(
    train: &[ImageGrid],
    test: &[ImageGrid],
    n_components: usize,
    bins: usize,
) -> Result<Vec<ComponentShift>> {
    check_images(test)?;
    let model = PcaModel::fit_images(train, n_components)?;
    model.shift_report(train, test, bins)
}
