//! The hierarchical generative model: dataset and confounder containers,
//! the hyperparameter set with inverse-gamma priors, and the joint log
//! density over (Y, T, X, U, Theta) for the RBF model, its
//! binary-treatment variant, and the linear-kernel special case.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::gaussian::{grouped_mvn_logpdf, lowrank_mvn_logpdf, CovMatrix};
use crate::kernels::{kernel_matrix, ArdRbfKernel, InputRow, Kernel, LinearKernel};

const LN_2PI: f64 = 1.8378770664093453;

/// Instance-level data with an object assignment per instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    object_labels: Vec<String>,
    pa: Vec<usize>,
    x: DMatrix<f64>,
    t: DVector<f64>,
    y: DVector<f64>,
}

impl Dataset {
    pub fn new(
        object_labels: Vec<String>,
        pa: Vec<usize>,
        x: DMatrix<f64>,
        t: DVector<f64>,
        y: DVector<f64>,
    ) -> Result<Self> {
        let n_i = pa.len();
        let n_o = object_labels.len();
        if n_o == 0 || n_i < n_o {
            return Err(Error::Config(format!(
                "need n_instances >= n_objects >= 1, got {n_i} instances, {n_o} objects"
            )));
        }
        if x.nrows() != n_i || t.len() != n_i || y.len() != n_i {
            return Err(Error::ShapeMismatch {
                what: "dataset column length",
                expected: n_i,
                got: x.nrows().min(t.len()).min(y.len()),
            });
        }
        if let Some(&bad) = pa.iter().find(|&&o| o >= n_o) {
            return Err(Error::Config(format!(
                "parent object index {bad} out of range (n_objects = {n_o})"
            )));
        }
        let finite = x.iter().all(|v| v.is_finite())
            && t.iter().all(|v| v.is_finite())
            && y.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("dataset contains non-finite values".into()));
        }
        Ok(Dataset {
            object_labels,
            pa,
            x,
            t,
            y,
        })
    }

    pub fn n_instances(&self) -> usize {
        self.pa.len()
    }

    pub fn n_objects(&self) -> usize {
        self.object_labels.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.x.ncols()
    }

    pub fn treatment(&self) -> &DVector<f64> {
        &self.t
    }

    pub fn outcome(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn covariate_col(&self, k: usize) -> DVector<f64> {
        self.x.column(k).into_owned()
    }

    pub fn pa(&self) -> &[usize] {
        &self.pa
    }

    pub fn object_labels(&self) -> &[String] {
        &self.object_labels
    }

    pub fn object_counts(&self) -> Vec<usize> {
        let mut c = vec![0usize; self.n_objects()];
        for &o in &self.pa {
            c[o] += 1;
        }
        c
    }

    /// Instance indices belonging to object `o`, in dataset order.
    pub fn instances_of(&self, o: usize) -> Vec<usize> {
        (0..self.n_instances()).filter(|&i| self.pa[i] == o).collect()
    }

    pub fn is_binary_treatment(&self) -> bool {
        self.t.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn validate_binary(&self) -> Result<()> {
        for (i, &v) in self.t.iter().enumerate() {
            if v != 0.0 && v != 1.0 {
                return Err(Error::NonBinaryTreatment { index: i, value: v });
            }
        }
        Ok(())
    }

    /// Reassign every instance to its own fresh object (the no-object
    /// ablation's data transform).
    pub fn one_object_per_instance(&self) -> Dataset {
        let n = self.n_instances();
        Dataset {
            object_labels: (0..n).map(|i| format!("inst_{i}")).collect(),
            pa: (0..n).collect(),
            x: self.x.clone(),
            t: self.t.clone(),
            y: self.y.clone(),
        }
    }

    /// The sub-dataset of one object (single-object hierarchy), plus the
    /// original instance indices in order.
    pub fn restrict_to_object(&self, o: usize) -> (Dataset, Vec<usize>) {
        let idx = self.instances_of(o);
        let n = idx.len();
        let x = DMatrix::from_fn(n, self.n_covariates(), |r, c| self.x[(idx[r], c)]);
        let t = DVector::from_fn(n, |r, _| self.t[idx[r]]);
        let y = DVector::from_fn(n, |r, _| self.y[idx[r]]);
        (
            Dataset {
                object_labels: vec![self.object_labels[o].clone()],
                pa: vec![0; n],
                x,
                t,
                y,
            },
            idx,
        )
    }

    /// Same instances, new parent assignment and object labels.
    pub fn with_parents(&self, object_labels: Vec<String>, pa: Vec<usize>) -> Result<Dataset> {
        Dataset::new(
            object_labels,
            pa,
            self.x.clone(),
            self.t.clone(),
            self.y.clone(),
        )
    }
}

/// Object-level latent confounders, one row per object.
#[derive(Debug, Clone, PartialEq)]
pub struct Confounders {
    m: DMatrix<f64>,
}

impl Confounders {
    pub fn new(m: DMatrix<f64>) -> Self {
        Confounders { m }
    }

    pub fn zeros(n_objects: usize, n_u: usize) -> Self {
        Confounders {
            m: DMatrix::zeros(n_objects, n_u),
        }
    }

    pub fn n_objects(&self) -> usize {
        self.m.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.m.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn as_matrix_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.m
    }

    pub fn object_row(&self, o: usize) -> Vec<f64> {
        self.m.row(o).iter().copied().collect()
    }
}

/// Latent treatment logits for the binary-treatment variant.
pub type TreatmentLatents = DVector<f64>;

/// Kernel scale, noise, and confounder lengthscales for one covariate
/// output dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct XKernelParams {
    pub scale_sq: f64,
    pub noise_sq: f64,
    pub u_lengthscales: Vec<f64>,
}

/// The full hyperparameter set for the RBF model: per covariate dimension,
/// treatment, and outcome kernels, plus the fixed confounder prior
/// variance. `u_noise_sq` is held fixed during inference; the confounder
/// scale is not identifiable against the lengthscales.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub x: Vec<XKernelParams>,
    pub t_scale_sq: f64,
    pub t_noise_sq: f64,
    pub ut_lengthscales: Vec<f64>,
    pub xt_lengthscales: Vec<f64>,
    pub y_scale_sq: f64,
    pub y_noise_sq: f64,
    pub uy_lengthscales: Vec<f64>,
    pub xy_lengthscales: Vec<f64>,
    pub ty_lengthscale: f64,
    pub u_noise_sq: f64,
}

impl HyperParams {
    /// All sampled entries set to `value` (handy starting point for tests
    /// and matched-parameter comparisons).
    pub fn constant(n_u: usize, n_x: usize, value: f64) -> Self {
        HyperParams {
            x: (0..n_x)
                .map(|_| XKernelParams {
                    scale_sq: value,
                    noise_sq: value,
                    u_lengthscales: vec![value; n_u],
                })
                .collect(),
            t_scale_sq: value,
            t_noise_sq: value,
            ut_lengthscales: vec![value; n_u],
            xt_lengthscales: vec![value; n_x],
            y_scale_sq: value,
            y_noise_sq: value,
            uy_lengthscales: vec![value; n_u],
            xy_lengthscales: vec![value; n_x],
            ty_lengthscale: value,
            u_noise_sq: 1.0,
        }
    }

    pub fn n_u(&self) -> usize {
        self.ut_lengthscales.len()
    }

    pub fn n_x(&self) -> usize {
        self.x.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n_u = self.n_u();
        let n_x = self.n_x();
        let mut all = vec![
            ("t_scale_sq", self.t_scale_sq),
            ("t_noise_sq", self.t_noise_sq),
            ("y_scale_sq", self.y_scale_sq),
            ("y_noise_sq", self.y_noise_sq),
            ("ty_lengthscale", self.ty_lengthscale),
            ("u_noise_sq", self.u_noise_sq),
        ];
        for xk in &self.x {
            all.push(("x scale_sq", xk.scale_sq));
            all.push(("x noise_sq", xk.noise_sq));
            if xk.u_lengthscales.len() != n_u {
                return Err(Error::ShapeMismatch {
                    what: "x kernel confounder lengthscales",
                    expected: n_u,
                    got: xk.u_lengthscales.len(),
                });
            }
            for &l in &xk.u_lengthscales {
                all.push(("x lengthscale", l));
            }
        }
        for &l in self
            .ut_lengthscales
            .iter()
            .chain(self.uy_lengthscales.iter())
        {
            all.push(("confounder lengthscale", l));
        }
        for &l in self
            .xt_lengthscales
            .iter()
            .chain(self.xy_lengthscales.iter())
        {
            all.push(("covariate lengthscale", l));
        }
        if self.uy_lengthscales.len() != n_u {
            return Err(Error::ShapeMismatch {
                what: "uy lengthscales",
                expected: n_u,
                got: self.uy_lengthscales.len(),
            });
        }
        if self.xt_lengthscales.len() != n_x || self.xy_lengthscales.len() != n_x {
            return Err(Error::ShapeMismatch {
                what: "covariate lengthscale vectors",
                expected: n_x,
                got: self.xt_lengthscales.len().min(self.xy_lengthscales.len()),
            });
        }
        for (what, v) in all {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::NonPositiveInput { what, value: v });
            }
        }
        Ok(())
    }

    pub fn y_kernel(&self) -> Kernel {
        Kernel::ArdRbf(ArdRbfKernel {
            scale_sq: self.y_scale_sq,
            noise_sq: self.y_noise_sq,
            u_lengthscales: self.uy_lengthscales.clone(),
            x_lengthscales: self.xy_lengthscales.clone(),
            t_lengthscale: Some(self.ty_lengthscale),
        })
    }

    pub fn t_kernel(&self) -> Kernel {
        Kernel::ArdRbf(ArdRbfKernel {
            scale_sq: self.t_scale_sq,
            noise_sq: self.t_noise_sq,
            u_lengthscales: self.ut_lengthscales.clone(),
            x_lengthscales: self.xt_lengthscales.clone(),
            t_lengthscale: None,
        })
    }

    pub fn x_kernel(&self, k: usize) -> Kernel {
        Kernel::ArdRbf(ArdRbfKernel {
            scale_sq: self.x[k].scale_sq,
            noise_sq: self.x[k].noise_sq,
            u_lengthscales: self.x[k].u_lengthscales.clone(),
            x_lengthscales: vec![],
            t_lengthscale: None,
        })
    }
}

/// Parameters of the linear-kernel special case: the kernels carry no
/// scales or lengthscales, only exogenous noise variances.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearScmParams {
    pub t_noise_sq: f64,
    pub y_noise_sq: f64,
    pub u_noise_sq: f64,
}

/// Which kernel family the structural functions use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    ArdRbf,
    Linear,
}

/// Treatment likelihood mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Continuous,
    Binary,
}

/// One point in hyperparameter space for whichever family is in use.
#[derive(Debug, Clone, PartialEq)]
pub enum SampledParams {
    Rbf(HyperParams),
    Linear(LinearScmParams),
}

impl SampledParams {
    /// Number of parameters updated by Metropolis-Hastings. The confounder
    /// prior variance is excluded.
    pub fn n_params(&self) -> usize {
        match self {
            SampledParams::Rbf(h) => {
                let (n_u, n_x) = (h.n_u(), h.n_x());
                n_x * (2 + n_u) + (2 + n_u + n_x) + (3 + n_u + n_x)
            }
            SampledParams::Linear(_) => 2,
        }
    }

    pub fn get(&self, idx: usize) -> f64 {
        match self {
            SampledParams::Rbf(h) => rbf_param(h, idx).0,
            SampledParams::Linear(p) => match idx {
                0 => p.t_noise_sq,
                1 => p.y_noise_sq,
                _ => panic!("parameter index {idx} out of range"),
            },
        }
    }

    pub fn set(&mut self, idx: usize, value: f64) {
        match self {
            SampledParams::Rbf(h) => *rbf_param_mut(h, idx) = value,
            SampledParams::Linear(p) => match idx {
                0 => p.t_noise_sq = value,
                1 => p.y_noise_sq = value,
                _ => panic!("parameter index {idx} out of range"),
            },
        }
    }

    pub fn label(&self, idx: usize) -> String {
        match self {
            SampledParams::Rbf(h) => rbf_param(h, idx).1,
            SampledParams::Linear(_) => match idx {
                0 => "t_noise_sq".into(),
                1 => "y_noise_sq".into(),
                _ => panic!("parameter index {idx} out of range"),
            },
        }
    }

    pub fn u_noise_sq(&self) -> f64 {
        match self {
            SampledParams::Rbf(h) => h.u_noise_sq,
            SampledParams::Linear(p) => p.u_noise_sq,
        }
    }

    pub fn y_noise_sq(&self) -> f64 {
        match self {
            SampledParams::Rbf(h) => h.y_noise_sq,
            SampledParams::Linear(p) => p.y_noise_sq,
        }
    }

    /// Outcome kernel for counterfactual prediction.
    pub fn y_kernel(&self, n_x: usize) -> Kernel {
        match self {
            SampledParams::Rbf(h) => h.y_kernel(),
            SampledParams::Linear(p) => Kernel::Linear(LinearKernel {
                noise_sq: p.y_noise_sq,
                with_treatment: true,
                with_covariates: n_x > 0,
            }),
        }
    }

    pub(crate) fn component_of(&self, idx: usize) -> Component {
        match self {
            SampledParams::Rbf(h) => {
                let (n_u, n_x) = (h.n_u(), h.n_x());
                let x_block = 2 + n_u;
                if idx < n_x * x_block {
                    Component::X(idx / x_block)
                } else if idx < n_x * x_block + 2 + n_u + n_x {
                    Component::T
                } else {
                    Component::Y
                }
            }
            SampledParams::Linear(_) => {
                if idx == 0 {
                    Component::T
                } else {
                    Component::Y
                }
            }
        }
    }
}

/// Flat index into the RBF hyperparameters: per covariate dimension
/// `[scale, noise, u lengthscales..]`, then the treatment kernel
/// `[scale, noise, u.., x..]`, then the outcome kernel
/// `[scale, noise, u.., x.., t]`. This is the fixed sweep order.
fn rbf_param(h: &HyperParams, idx: usize) -> (f64, String) {
    let n_u = h.n_u();
    let n_x = h.n_x();
    let x_block = 2 + n_u;
    let mut i = idx;
    if i < n_x * x_block {
        let k = i / x_block;
        let within = i % x_block;
        return match within {
            0 => (h.x[k].scale_sq, format!("x{k}_scale_sq")),
            1 => (h.x[k].noise_sq, format!("x{k}_noise_sq")),
            j => (
                h.x[k].u_lengthscales[j - 2],
                format!("x{k}_u{}_lengthscale", j - 2),
            ),
        };
    }
    i -= n_x * x_block;
    let t_block = 2 + n_u + n_x;
    if i < t_block {
        return match i {
            0 => (h.t_scale_sq, "t_scale_sq".into()),
            1 => (h.t_noise_sq, "t_noise_sq".into()),
            j if j < 2 + n_u => (
                h.ut_lengthscales[j - 2],
                format!("ut{}_lengthscale", j - 2),
            ),
            j => (
                h.xt_lengthscales[j - 2 - n_u],
                format!("xt{}_lengthscale", j - 2 - n_u),
            ),
        };
    }
    i -= t_block;
    match i {
        0 => (h.y_scale_sq, "y_scale_sq".into()),
        1 => (h.y_noise_sq, "y_noise_sq".into()),
        j if j < 2 + n_u => (
            h.uy_lengthscales[j - 2],
            format!("uy{}_lengthscale", j - 2),
        ),
        j if j < 2 + n_u + n_x => (
            h.xy_lengthscales[j - 2 - n_u],
            format!("xy{}_lengthscale", j - 2 - n_u),
        ),
        j if j == 2 + n_u + n_x => (h.ty_lengthscale, "ty_lengthscale".into()),
        _ => panic!("parameter index {idx} out of range"),
    }
}

fn rbf_param_mut(h: &mut HyperParams, idx: usize) -> &mut f64 {
    let n_u = h.n_u();
    let n_x = h.n_x();
    let x_block = 2 + n_u;
    let mut i = idx;
    if i < n_x * x_block {
        let k = i / x_block;
        let within = i % x_block;
        return match within {
            0 => &mut h.x[k].scale_sq,
            1 => &mut h.x[k].noise_sq,
            j => &mut h.x[k].u_lengthscales[j - 2],
        };
    }
    i -= n_x * x_block;
    let t_block = 2 + n_u + n_x;
    if i < t_block {
        return match i {
            0 => &mut h.t_scale_sq,
            1 => &mut h.t_noise_sq,
            j if j < 2 + n_u => &mut h.ut_lengthscales[j - 2],
            j => &mut h.xt_lengthscales[j - 2 - n_u],
        };
    }
    i -= t_block;
    match i {
        0 => &mut h.y_scale_sq,
        1 => &mut h.y_noise_sq,
        j if j < 2 + n_u => &mut h.uy_lengthscales[j - 2],
        j if j < 2 + n_u + n_x => &mut h.xy_lengthscales[j - 2 - n_u],
        j if j == 2 + n_u + n_x => &mut h.ty_lengthscale,
        _ => panic!("parameter index {idx} out of range"),
    }
}

/// Inverse-gamma shape and rate shared by every hyperparameter prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            alpha: 4.0,
            beta: 4.0,
        }
    }
}

impl PriorSpec {
    pub fn log_pdf(&self, x: f64) -> Result<f64> {
        inv_gamma_logpdf(x, self.alpha, self.beta)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        inv_gamma_sample(self.alpha, self.beta, rng)
    }
}

/// log gamma^-1(x; alpha, beta) = alpha ln beta - ln G(alpha)
/// - (alpha+1) ln x - beta/x.
pub fn inv_gamma_logpdf(x: f64, alpha: f64, beta: f64) -> Result<f64> {
    if x <= 0.0 {
        return Err(Error::NonPositiveInput { what: "x", value: x });
    }
    if alpha <= 0.0 {
        return Err(Error::NonPositiveInput {
            what: "alpha",
            value: alpha,
        });
    }
    if beta <= 0.0 {
        return Err(Error::NonPositiveInput {
            what: "beta",
            value: beta,
        });
    }
    Ok(alpha * beta.ln() - statrs::function::gamma::ln_gamma(alpha) - (alpha + 1.0) * x.ln()
        - beta / x)
}

/// Draw from gamma^-1(alpha, beta) as the reciprocal of a Gamma(alpha,
/// rate = beta) draw.
pub fn inv_gamma_sample<R: Rng + ?Sized>(alpha: f64, beta: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(alpha, 1.0 / beta).expect("positive shape and scale");
    1.0 / g.sample(rng)
}

/// Which factor of the joint density a parameter or update touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Component {
    Y,
    /// Continuous mode: the treatment GP term. Binary mode: the Gaussian
    /// term of the latent logits.
    T,
    X(usize),
    /// Binary mode only: the Bernoulli treatment term.
    Bern,
}

/// Model structure: kernel family, treatment mode, and latent dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub family: KernelFamily,
    pub mode: Mode,
    pub n_u: usize,
    pub n_x: usize,
    pub u_noise_sq: f64,
}

impl ModelSpec {
    pub fn rbf(mode: Mode, n_u: usize, n_x: usize) -> Self {
        ModelSpec {
            family: KernelFamily::ArdRbf,
            mode,
            n_u,
            n_x,
            u_noise_sq: 1.0,
        }
    }

    pub fn linear(n_u: usize, n_x: usize) -> Self {
        ModelSpec {
            family: KernelFamily::Linear,
            mode: Mode::Continuous,
            n_u,
            n_x,
            u_noise_sq: 1.0,
        }
    }

    pub(crate) fn components(&self) -> Vec<Component> {
        let mut c = vec![Component::Y, Component::T];
        match self.family {
            KernelFamily::ArdRbf => {
                for k in 0..self.n_x {
                    c.push(Component::X(k));
                }
            }
            KernelFamily::Linear => {}
        }
        if self.mode == Mode::Binary {
            c.push(Component::Bern);
        }
        c
    }

    /// Components whose value depends on the confounders.
    pub(crate) fn u_dependent(&self) -> Vec<Component> {
        self.components()
            .into_iter()
            .filter(|c| !matches!(c, Component::Bern))
            .collect()
    }

    pub(crate) fn prior_params<R: Rng + ?Sized>(
        &self,
        priors: &PriorSpec,
        rng: &mut R,
    ) -> SampledParams {
        match self.family {
            KernelFamily::ArdRbf => {
                let mut h = HyperParams::constant(self.n_u, self.n_x, 1.0);
                h.u_noise_sq = self.u_noise_sq;
                let mut p = SampledParams::Rbf(h);
                for i in 0..p.n_params() {
                    p.set(i, priors.sample(rng));
                }
                p
            }
            KernelFamily::Linear => SampledParams::Linear(LinearScmParams {
                t_noise_sq: priors.sample(rng),
                y_noise_sq: priors.sample(rng),
                u_noise_sq: self.u_noise_sq,
            }),
        }
    }
}

/// Rows `[T_i, X_i, U_pa(i)]` for the outcome kernel; `t_override`
/// replaces every treatment with an intervention value.
pub fn y_input_rows(data: &Dataset, u: &Confounders, t_override: Option<f64>) -> Vec<InputRow> {
    let with_x = data.n_covariates() > 0;
    (0..data.n_instances())
        .map(|i| InputRow {
            treatment: Some(t_override.unwrap_or(data.treatment()[i])),
            covariates: with_x.then(|| data.covariates().row(i).iter().copied().collect()),
            confounder: u.object_row(data.pa()[i]),
        })
        .collect()
}

/// Rows `[X_i, U_pa(i)]` for the treatment kernel.
pub fn t_input_rows(data: &Dataset, u: &Confounders) -> Vec<InputRow> {
    let with_x = data.n_covariates() > 0;
    (0..data.n_instances())
        .map(|i| InputRow {
            treatment: None,
            covariates: with_x.then(|| data.covariates().row(i).iter().copied().collect()),
            confounder: u.object_row(data.pa()[i]),
        })
        .collect()
}

fn check_shapes(data: &Dataset, u: &Confounders, theta: &HyperParams) -> Result<()> {
    theta.validate()?;
    if u.n_objects() != data.n_objects() {
        return Err(Error::ShapeMismatch {
            what: "confounder rows",
            expected: data.n_objects(),
            got: u.n_objects(),
        });
    }
    if theta.n_x() != data.n_covariates() {
        return Err(Error::ShapeMismatch {
            what: "covariate kernel count",
            expected: data.n_covariates(),
            got: theta.n_x(),
        });
    }
    if theta.n_u() != u.n_u() {
        return Err(Error::ShapeMismatch {
            what: "confounder lengthscale count",
            expected: u.n_u(),
            got: theta.n_u(),
        });
    }
    Ok(())
}

fn mvn_zero_mean_logpdf(v: &DVector<f64>, cov: DMatrix<f64>) -> Result<f64> {
    let cov = CovMatrix::new(cov)?;
    let quad = cov.quad_form(v);
    Ok(-0.5 * (v.len() as f64 * LN_2PI + cov.log_det() + quad))
}

pub(crate) fn comp_y_loglik(data: &Dataset, u: &Confounders, theta: &HyperParams) -> Result<f64> {
    let rows = y_input_rows(data, u, None);
    let k = kernel_matrix(&theta.y_kernel(), &rows, &rows, true)?;
    mvn_zero_mean_logpdf(data.outcome(), k)
}

pub(crate) fn comp_t_loglik(
    data: &Dataset,
    u: &Confounders,
    theta: &HyperParams,
    value: &DVector<f64>,
) -> Result<f64> {
    let rows = t_input_rows(data, u);
    let k = kernel_matrix(&theta.t_kernel(), &rows, &rows, true)?;
    mvn_zero_mean_logpdf(value, k)
}

/// Covariate-dimension likelihood. Instances sharing an object share a
/// confounder row, so the instance-level kernel matrix factors through the
/// object level; use the grouped identity when that is cheaper.
pub(crate) fn comp_x_loglik(
    k: usize,
    data: &Dataset,
    u: &Confounders,
    theta: &HyperParams,
) -> Result<f64> {
    let col = data.covariate_col(k);
    let kernel = theta.x_kernel(k);
    let n_o = data.n_objects();
    if 2 * n_o <= data.n_instances() {
        let object_rows: Vec<InputRow> = (0..n_o)
            .map(|o| InputRow::confounder_only(u.object_row(o)))
            .collect();
        let a = kernel_matrix(&kernel, &object_rows, &object_rows, false)?;
        grouped_mvn_logpdf(&col, &a, data.pa(), theta.x[k].noise_sq)
    } else {
        let rows: Vec<InputRow> = (0..data.n_instances())
            .map(|i| InputRow::confounder_only(u.object_row(data.pa()[i])))
            .collect();
        let m = kernel_matrix(&kernel, &rows, &rows, true)?;
        mvn_zero_mean_logpdf(&col, m)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Bernoulli log likelihood of binary treatments given latent logits.
pub(crate) fn comp_bern_loglik(t: &DVector<f64>, t_hat: &DVector<f64>) -> Result<f64> {
    if t.len() != t_hat.len() {
        return Err(Error::ShapeMismatch {
            what: "latent logit length",
            expected: t.len(),
            got: t_hat.len(),
        });
    }
    let mut total = 0.0;
    for i in 0..t.len() {
        let h = t_hat[i];
        total -= if t[i] == 1.0 { softplus(-h) } else { softplus(h) };
    }
    Ok(total)
}

/// Gaussian prior of the confounder matrix, N(0, u_noise_sq I) per row.
pub(crate) fn u_prior_loglik(u: &Confounders, u_noise_sq: f64) -> f64 {
    let n = (u.n_objects() * u.n_u()) as f64;
    let ss: f64 = u.as_matrix().iter().map(|v| v * v).sum();
    -0.5 * (n * (LN_2PI + u_noise_sq.ln()) + ss / u_noise_sq)
}

pub(crate) fn theta_prior_loglik(params: &SampledParams, priors: &PriorSpec) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..params.n_params() {
        total += priors.log_pdf(params.get(i))?;
    }
    Ok(total)
}

/// Linear-family feature matrices: the treatment kernel sees `[X, U]`
/// grounded per instance, the outcome kernel sees `[T, X, U]`.
pub(crate) fn linear_features(
    data: &Dataset,
    u: &Confounders,
    comp: Component,
) -> DMatrix<f64> {
    let n = data.n_instances();
    let n_x = data.n_covariates();
    let n_u = u.n_u();
    let with_t = matches!(comp, Component::Y);
    let cols = usize::from(with_t) + n_x + n_u;
    DMatrix::from_fn(n, cols, |i, c| {
        let mut c = c;
        if with_t {
            if c == 0 {
                return data.treatment()[i];
            }
            c -= 1;
        }
        if c < n_x {
            return data.covariates()[(i, c)];
        }
        u.as_matrix()[(data.pa()[i], c - n_x)]
    })
}

pub(crate) fn component_loglik(
    model: &ModelSpec,
    comp: Component,
    data: &Dataset,
    u: &Confounders,
    params: &SampledParams,
    t_hat: Option<&TreatmentLatents>,
) -> Result<f64> {
    match (params, comp) {
        (SampledParams::Rbf(h), Component::Y) => comp_y_loglik(data, u, h),
        (SampledParams::Rbf(h), Component::T) => match model.mode {
            Mode::Continuous => comp_t_loglik(data, u, h, data.treatment()),
            Mode::Binary => {
                let latents = t_hat.expect("binary mode carries treatment latents");
                comp_t_loglik(data, u, h, latents)
            }
        },
        (SampledParams::Rbf(h), Component::X(k)) => comp_x_loglik(k, data, u, h),
        (SampledParams::Rbf(_), Component::Bern) => {
            let latents = t_hat.expect("binary mode carries treatment latents");
            comp_bern_loglik(data.treatment(), latents)
        }
        (SampledParams::Linear(p), Component::T) => {
            let f = linear_features(data, u, Component::T);
            lowrank_mvn_logpdf(data.treatment(), &f, p.t_noise_sq)
        }
        (SampledParams::Linear(p), Component::Y) => {
            let f = linear_features(data, u, Component::Y);
            lowrank_mvn_logpdf(data.outcome(), &f, p.y_noise_sq)
        }
        (SampledParams::Linear(_), _) => unreachable!("linear model has only Y and T components"),
    }
}

/// Full joint log density for the continuous-treatment RBF model.
pub fn joint_log_density(
    data: &Dataset,
    u: &Confounders,
    theta: &HyperParams,
    priors: &PriorSpec,
) -> Result<f64> {
    check_shapes(data, u, theta)?;
    let params = SampledParams::Rbf(theta.clone());
    let mut total = comp_y_loglik(data, u, theta)?;
    total += comp_t_loglik(data, u, theta, data.treatment())?;
    for k in 0..data.n_covariates() {
        total += comp_x_loglik(k, data, u, theta)?;
    }
    total += u_prior_loglik(u, theta.u_noise_sq);
    total += theta_prior_loglik(&params, priors)?;
    Ok(total)
}

/// Joint log density for the binary-treatment variant: the treatment GP
/// term moves onto the latent logits and a Bernoulli term links logits to
/// the observed assignments.
pub fn joint_log_density_binary(
    data: &Dataset,
    u: &Confounders,
    t_hat: &TreatmentLatents,
    theta: &HyperParams,
    priors: &PriorSpec,
) -> Result<f64> {
    check_shapes(data, u, theta)?;
    data.validate_binary()?;
    let params = SampledParams::Rbf(theta.clone());
    let mut total = comp_y_loglik(data, u, theta)?;
    total += comp_t_loglik(data, u, theta, t_hat)?;
    total += comp_bern_loglik(data.treatment(), t_hat)?;
    for k in 0..data.n_covariates() {
        total += comp_x_loglik(k, data, u, theta)?;
    }
    total += u_prior_loglik(u, theta.u_noise_sq);
    total += theta_prior_loglik(&params, priors)?;
    Ok(total)
}

/// Joint log density for the linear-kernel special case.
pub fn joint_log_density_linear(
    data: &Dataset,
    u: &Confounders,
    params: &LinearScmParams,
    priors: &PriorSpec,
) -> Result<f64> {
    if u.n_objects() != data.n_objects() {
        return Err(Error::ShapeMismatch {
            what: "confounder rows",
            expected: data.n_objects(),
            got: u.n_objects(),
        });
    }
    let sp = SampledParams::Linear(params.clone());
    let model = ModelSpec::linear(u.n_u(), data.n_covariates());
    let mut total = component_loglik(&model, Component::Y, data, u, &sp, None)?;
    total += component_loglik(&model, Component::T, data, u, &sp, None)?;
    total += u_prior_loglik(u, params.u_noise_sq);
    total += theta_prior_loglik(&sp, priors)?;
    Ok(total)
}

/// Draw hyperparameters from their inverse-gamma priors and confounders
/// from N(0, u_noise_sq I). Deterministic under a seeded rng.
pub fn prior_sample<R: Rng + ?Sized>(
    priors: &PriorSpec,
    n_objects: usize,
    n_u: usize,
    n_x: usize,
    rng: &mut R,
) -> (HyperParams, Confounders) {
    let model = ModelSpec::rbf(Mode::Continuous, n_u, n_x);
    let params = model.prior_params(priors, rng);
    let u = sample_confounders(n_objects, n_u, model.u_noise_sq, rng);
    match params {
        SampledParams::Rbf(h) => (h, u),
        SampledParams::Linear(_) => unreachable!(),
    }
}

pub(crate) fn sample_confounders<R: Rng + ?Sized>(
    n_objects: usize,
    n_u: usize,
    u_noise_sq: f64,
    rng: &mut R,
) -> Confounders {
    let sd = u_noise_sq.sqrt();
    Confounders::new(DMatrix::from_fn(n_objects, n_u, |_, _| {
        sd * rng.sample::<f64, _>(StandardNormal)
    }))
}
