//! ARD-RBF kernel families over (treatment, covariates, confounder) rows,
//! the linear kernel special case, and kernel-matrix builders.
//!
//! Each squared difference is divided by its dimension's lengthscale
//! directly (no factor of 2), and exogenous noise enters only on the
//! diagonal of a same-row-set matrix.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// One kernel input row. Which fields are present depends on which kernel
/// consumes it: the outcome kernel sees all three, the treatment kernel
/// sees covariates and confounder, the covariate kernels see only the
/// confounder.
#[derive(Debug, Clone, PartialEq)]
pub struct InputRow {
    pub treatment: Option<f64>,
    pub covariates: Option<Vec<f64>>,
    pub confounder: Vec<f64>,
}

impl InputRow {
    pub fn confounder_only(confounder: Vec<f64>) -> Self {
        InputRow {
            treatment: None,
            covariates: None,
            confounder,
        }
    }
}

/// Squared-exponential kernel with one lengthscale per input dimension
/// plus a scale factor and an exogenous noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct ArdRbfKernel {
    pub scale_sq: f64,
    pub noise_sq: f64,
    pub u_lengthscales: Vec<f64>,
    pub x_lengthscales: Vec<f64>,
    pub t_lengthscale: Option<f64>,
}

impl ArdRbfKernel {
    pub fn new(
        scale_sq: f64,
        noise_sq: f64,
        u_lengthscales: Vec<f64>,
        x_lengthscales: Vec<f64>,
        t_lengthscale: Option<f64>,
    ) -> Result<Self> {
        for (what, v) in [("scale_sq", scale_sq), ("noise_sq", noise_sq)] {
            if v <= 0.0 {
                return Err(Error::NonPositiveInput { what, value: v });
            }
        }
        for l in u_lengthscales
            .iter()
            .chain(x_lengthscales.iter())
            .chain(t_lengthscale.iter())
        {
            if *l <= 0.0 {
                return Err(Error::NonPositiveInput {
                    what: "lengthscale",
                    value: *l,
                });
            }
        }
        Ok(ArdRbfKernel {
            scale_sq,
            noise_sq,
            u_lengthscales,
            x_lengthscales,
            t_lengthscale,
        })
    }

    fn scaled_sq_dist(&self, a: &InputRow, b: &InputRow) -> Result<f64> {
        let nu = self.u_lengthscales.len();
        if a.confounder.len() != nu || b.confounder.len() != nu {
            return Err(Error::ShapeMismatch {
                what: "confounder dimension",
                expected: nu,
                got: a.confounder.len().max(b.confounder.len()),
            });
        }
        let mut d2 = 0.0;
        for j in 0..nu {
            let d = a.confounder[j] - b.confounder[j];
            d2 += d * d / self.u_lengthscales[j];
        }
        if !self.x_lengthscales.is_empty() {
            let ax = a
                .covariates
                .as_ref()
                .ok_or(Error::MissingField { field: "covariates" })?;
            let bx = b
                .covariates
                .as_ref()
                .ok_or(Error::MissingField { field: "covariates" })?;
            let nx = self.x_lengthscales.len();
            if ax.len() != nx || bx.len() != nx {
                return Err(Error::ShapeMismatch {
                    what: "covariate dimension",
                    expected: nx,
                    got: ax.len().max(bx.len()),
                });
            }
            for k in 0..nx {
                let d = ax[k] - bx[k];
                d2 += d * d / self.x_lengthscales[k];
            }
        }
        if let Some(lt) = self.t_lengthscale {
            let at = a.treatment.ok_or(Error::MissingField { field: "treatment" })?;
            let bt = b.treatment.ok_or(Error::MissingField { field: "treatment" })?;
            let d = at - bt;
            d2 += d * d / lt;
        }
        Ok(d2)
    }
}

/// Dot-product kernel over the concatenated present fields, used when the
/// RBF kernels are swapped out for the linear special case.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearKernel {
    pub noise_sq: f64,
    pub with_treatment: bool,
    pub with_covariates: bool,
}

impl LinearKernel {
    pub fn new(noise_sq: f64, with_treatment: bool, with_covariates: bool) -> Result<Self> {
        if noise_sq <= 0.0 {
            return Err(Error::NonPositiveInput {
                what: "noise_sq",
                value: noise_sq,
            });
        }
        Ok(LinearKernel {
            noise_sq,
            with_treatment,
            with_covariates,
        })
    }

    pub(crate) fn features(&self, row: &InputRow) -> Result<Vec<f64>> {
        let mut f = Vec::with_capacity(
            row.confounder.len() + usize::from(self.with_treatment) + 4,
        );
        if self.with_treatment {
            f.push(row.treatment.ok_or(Error::MissingField { field: "treatment" })?);
        }
        if self.with_covariates {
            let x = row
                .covariates
                .as_ref()
                .ok_or(Error::MissingField { field: "covariates" })?;
            f.extend_from_slice(x);
        }
        f.extend_from_slice(&row.confounder);
        Ok(f)
    }
}

/// The kernel families the model supports.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    ArdRbf(ArdRbfKernel),
    Linear(LinearKernel),
}

impl Kernel {
    pub fn noise_sq(&self) -> f64 {
        match self {
            Kernel::ArdRbf(k) => k.noise_sq,
            Kernel::Linear(k) => k.noise_sq,
        }
    }
}

/// Noise-free kernel value.
pub fn k_noise_free(kernel: &Kernel, a: &InputRow, b: &InputRow) -> Result<f64> {
    match kernel {
        Kernel::ArdRbf(k) => Ok(k.scale_sq * (-k.scaled_sq_dist(a, b)?).exp()),
        Kernel::Linear(k) => linear_kernel(&k.features(a)?, &k.features(b)?),
    }
}

/// Kernel value with exogenous noise added iff the two rows are the same
/// instance.
pub fn k_full(kernel: &Kernel, a: &InputRow, b: &InputRow, same_instance: bool) -> Result<f64> {
    let base = k_noise_free(kernel, a, b)?;
    Ok(if same_instance {
        base + kernel.noise_sq()
    } else {
        base
    })
}

/// Kernel matrix over `rows_a` x `rows_b`. `diagonal_noise` adds the
/// exogenous noise variance at i = j and is only valid when both row sets
/// are the same list.
pub fn kernel_matrix(
    kernel: &Kernel,
    rows_a: &[InputRow],
    rows_b: &[InputRow],
    diagonal_noise: bool,
) -> Result<DMatrix<f64>> {
    let same = rows_a == rows_b;
    if diagonal_noise && !same {
        return Err(Error::NoiseOnRectangular);
    }
    let (na, nb) = (rows_a.len(), rows_b.len());
    let mut m = DMatrix::zeros(na, nb);
    if same {
        for i in 0..na {
            for j in i..nb {
                let v = k_noise_free(kernel, &rows_a[i], &rows_b[j])?;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
            if diagonal_noise {
                m[(i, i)] += kernel.noise_sq();
            }
        }
    } else {
        for i in 0..na {
            for j in 0..nb {
                m[(i, j)] = k_noise_free(kernel, &rows_a[i], &rows_b[j])?;
            }
        }
    }
    Ok(m)
}

/// Plain dot product, `k(a, b) = a . b`.
pub fn linear_kernel(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            what: "linear kernel input length",
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}
