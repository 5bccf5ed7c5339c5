//! Multivariate Gaussian primitives: jittered Cholesky factorization,
//! log densities, conditioning, block subtraction, and sampling.
//!
//! Every covariance that enters a density or a draw goes through
//! [`CovMatrix`], which symmetrizes, applies the smallest jitter from a
//! fixed ladder that makes factorization succeed, and caches the lower
//! Cholesky factor. All densities are computed in log space.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.8378770664093453;

/// Relative symmetry tolerance for covariance inputs.
const SYMMETRY_TOL: f64 = 1e-10;

/// A positive-definite (after jitter) covariance matrix with its cached
/// lower Cholesky factor.
#[derive(Debug, Clone)]
pub struct CovMatrix {
    entries: DMatrix<f64>,
    lower: DMatrix<f64>,
    jitter_applied: f64,
}

impl CovMatrix {
    /// Symmetrize, factor with the jitter ladder, and cache the factor.
    ///
    /// The ladder tries jitter 0 first, then `1e-10 * mean(diag)` growing
    /// by a factor of 10 up to `1e-4 * mean(diag)`. For matrices with a
    /// non-positive diagonal mean (the zero-covariance limit) the ladder
    /// is absolute.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n == 0 || m.ncols() != n {
            return Err(Error::ShapeMismatch {
                what: "covariance matrix",
                expected: n.max(1),
                got: m.ncols(),
            });
        }

        let mut max_abs = 0.0f64;
        let mut max_asym = 0.0f64;
        for i in 0..n {
            for j in i..n {
                let a = m[(i, j)];
                let b = m[(j, i)];
                max_abs = max_abs.max(a.abs()).max(b.abs());
                max_asym = max_asym.max((a - b).abs());
            }
        }
        if max_asym > SYMMETRY_TOL * max_abs.max(1.0) {
            return Err(Error::NotSymmetric {
                max_asymmetry: max_asym,
            });
        }

        // (M + M')/2: block algebra upstream produces roundoff asymmetry.
        let mut sym = m;
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (sym[(i, j)] + sym[(j, i)]);
                sym[(i, j)] = avg;
                sym[(j, i)] = avg;
            }
        }

        let mean_diag = sym.diagonal().mean();
        let scale = if mean_diag > 0.0 { mean_diag } else { 1.0 };
        let mut jitter = 0.0;
        let mut rung = 1e-10 * scale;
        let max_jitter = 1e-4 * scale;
        loop {
            let mut attempt = sym.clone();
            for i in 0..n {
                attempt[(i, i)] += jitter;
            }
            if let Some(chol) = nalgebra::Cholesky::new(attempt) {
                return Ok(CovMatrix {
                    entries: sym,
                    lower: chol.unpack(),
                    jitter_applied: jitter,
                });
            }
            if jitter >= max_jitter {
                return Err(Error::NotPositiveDefinite {
                    dim: n,
                    max_jitter,
                });
            }
            jitter = rung;
            rung *= 10.0;
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// The symmetrized input, without jitter.
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Lower Cholesky factor of `entries + jitter_applied * I`.
    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn jitter_applied(&self) -> f64 {
        self.jitter_applied
    }

    /// log det of the factored (jittered) matrix.
    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// `L^-1 v`.
    pub fn whiten(&self, v: &DVector<f64>) -> DVector<f64> {
        self.lower
            .solve_lower_triangular(v)
            .expect("Cholesky factor has positive diagonal")
    }

    /// `K^-1 v` via two triangular solves.
    pub fn solve_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        let half = self.whiten(v);
        self.lower
            .tr_solve_lower_triangular(&half)
            .expect("Cholesky factor has positive diagonal")
    }

    /// `K^-1 B` column-wise.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let half = self
            .lower
            .solve_lower_triangular(b)
            .expect("Cholesky factor has positive diagonal");
        self.lower
            .tr_solve_lower_triangular(&half)
            .expect("Cholesky factor has positive diagonal")
    }

    /// `v' K^-1 v`.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        self.whiten(v).norm_squared()
    }
}

/// Lower-triangular factor plus the jitter that made factorization succeed.
pub fn cholesky(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let cov = CovMatrix::new(m.clone())?;
    Ok((cov.lower.clone(), cov.jitter_applied))
}

/// A multivariate Gaussian with a factored covariance.
#[derive(Debug, Clone)]
pub struct GaussianDist {
    pub mean: DVector<f64>,
    pub cov: CovMatrix,
}

impl GaussianDist {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let cov = CovMatrix::new(cov)?;
        Self::from_parts(mean, cov)
    }

    pub fn from_parts(mean: DVector<f64>, cov: CovMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::ShapeMismatch {
                what: "Gaussian mean length",
                expected: cov.dim(),
                got: mean.len(),
            });
        }
        Ok(GaussianDist { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Log density of `x` under `dist`, computed through the Cholesky factor.
pub fn mvn_logpdf(x: &DVector<f64>, dist: &GaussianDist) -> Result<f64> {
    if x.len() != dist.dim() {
        return Err(Error::ShapeMismatch {
            what: "mvn_logpdf input length",
            expected: dist.dim(),
            got: x.len(),
        });
    }
    let centered = x - &dist.mean;
    let quad = dist.cov.quad_form(&centered);
    let n = x.len() as f64;
    Ok(-0.5 * (n * LN_2PI + dist.cov.log_det() + quad))
}

/// Condition a joint Gaussian over blocks `(A, B)` on `B = observed_b`,
/// returning the conditional distribution of `A`.
pub fn condition(
    joint: &GaussianDist,
    keep: usize,
    observed_b: &DVector<f64>,
) -> Result<GaussianDist> {
    let n = joint.dim();
    if keep + observed_b.len() != n {
        return Err(Error::ShapeMismatch {
            what: "condition block partition",
            expected: n,
            got: keep + observed_b.len(),
        });
    }
    let nb = observed_b.len();
    let cov = joint.cov.entries();
    let sigma_aa = cov.view((0, 0), (keep, keep)).into_owned();
    let sigma_ab = cov.view((0, keep), (keep, nb)).into_owned();
    let sigma_bb = cov.view((keep, keep), (nb, nb)).into_owned();

    let bb = CovMatrix::new(sigma_bb)?;
    let mean_a = joint.mean.rows(0, keep).into_owned();
    let mean_b = joint.mean.rows(keep, nb).into_owned();

    let resid = observed_b - mean_b;
    let mean = mean_a + &sigma_ab * bb.solve_vec(&resid);
    let cov = sigma_aa - &sigma_ab * bb.solve_mat(&sigma_ab.transpose());
    GaussianDist::new(mean, cov)
}

/// Distribution of `A - B` for a joint Gaussian over equal-size blocks
/// `(A, B)`.
pub fn subtract_blocks(joint: &GaussianDist) -> Result<GaussianDist> {
    let n = joint.dim();
    if n % 2 != 0 {
        return Err(Error::ShapeMismatch {
            what: "subtract_blocks joint dimension (must be even)",
            expected: n + 1,
            got: n,
        });
    }
    let h = n / 2;
    let cov = joint.cov.entries();
    let aa = cov.view((0, 0), (h, h));
    let ab = cov.view((0, h), (h, h));
    let ba = cov.view((h, 0), (h, h));
    let bb = cov.view((h, h), (h, h));
    let diff_cov = aa - ab - ba + bb;
    let mean = joint.mean.rows(0, h) - joint.mean.rows(h, h);
    GaussianDist::new(mean.into_owned(), diff_cov.into_owned())
}

/// Draw `mean + L z` with standard-normal `z`; deterministic given the rng.
pub fn mvn_sample<R: Rng + ?Sized>(dist: &GaussianDist, rng: &mut R) -> DVector<f64> {
    let z = DVector::from_fn(dist.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
    &dist.mean + dist.cov.lower() * z
}

/// Log density of `N(0, F F' + noise_sq I)` evaluated at `x`, where `F` is
/// n-by-r with small r. Uses the rank-r identity so cost is O(n r^2).
pub(crate) fn lowrank_mvn_logpdf(
    x: &DVector<f64>,
    feats: &DMatrix<f64>,
    noise_sq: f64,
) -> Result<f64> {
    let n = x.len();
    if feats.nrows() != n {
        return Err(Error::ShapeMismatch {
            what: "lowrank feature rows",
            expected: n,
            got: feats.nrows(),
        });
    }
    if noise_sq <= 0.0 {
        return Err(Error::NonPositiveInput {
            what: "noise variance",
            value: noise_sq,
        });
    }
    let r = feats.ncols();
    let xtx = x.norm_squared();
    let (log_det, quad) = if r == 0 {
        (n as f64 * noise_sq.ln(), xtx / noise_sq)
    } else {
        let mut gram = feats.transpose() * feats;
        for i in 0..r {
            gram[(i, i)] += noise_sq;
        }
        let chol = nalgebra::Cholesky::new(gram).ok_or(Error::NotPositiveDefinite {
            dim: r,
            max_jitter: 0.0,
        })?;
        let v = feats.transpose() * x;
        let solved = chol.solve(&v);
        let log_det_small = 2.0
            * chol
                .l_dirty()
                .diagonal()
                .iter()
                .map(|d| d.ln())
                .sum::<f64>();
        let log_det = (n - r) as f64 * noise_sq.ln() + log_det_small;
        let quad = (xtx - v.dot(&solved)) / noise_sq;
        (log_det, quad)
    };
    Ok(-0.5 * (n as f64 * LN_2PI + log_det + quad))
}

/// Log density of `N(0, P A P' + noise_sq I)` at `x`, where `P` is the
/// instance-to-group indicator given by `group` and `A` is the group-level
/// noise-free kernel matrix. Cost is O(n + m^3) for m groups.
pub(crate) fn grouped_mvn_logpdf(
    x: &DVector<f64>,
    group_kernel: &DMatrix<f64>,
    group: &[usize],
    noise_sq: f64,
) -> Result<f64> {
    let n = x.len();
    let m = group_kernel.nrows();
    if group.len() != n {
        return Err(Error::ShapeMismatch {
            what: "group assignment length",
            expected: n,
            got: group.len(),
        });
    }
    if noise_sq <= 0.0 {
        return Err(Error::NonPositiveInput {
            what: "noise variance",
            value: noise_sq,
        });
    }

    let mut counts = vec![0usize; m];
    let mut sums = DVector::<f64>::zeros(m);
    for (i, &g) in group.iter().enumerate() {
        counts[g] += 1;
        sums[g] += x[i];
    }
    let sqrt_counts: Vec<f64> = counts.iter().map(|&c| (c as f64).sqrt()).collect();

    // T = G A G with G = diag(sqrt counts); S = T + noise I shares
    // eigenvectors with T, so (S^-1 T) is symmetric.
    let mut t = group_kernel.clone();
    for i in 0..m {
        for j in 0..m {
            t[(i, j)] *= sqrt_counts[i] * sqrt_counts[j];
        }
    }
    let mut s = t.clone();
    for i in 0..m {
        s[(i, i)] += noise_sq;
    }
    let chol = nalgebra::Cholesky::new(s).ok_or(Error::NotPositiveDefinite {
        dim: m,
        max_jitter: 0.0,
    })?;

    let w = DVector::from_fn(m, |i, _| {
        if counts[i] > 0 {
            sums[i] / sqrt_counts[i]
        } else {
            0.0
        }
    });
    let tw = &t * &w;
    let inner = w.dot(&chol.solve(&tw));
    let quad = (x.norm_squared() - inner) / noise_sq;
    let log_det_small = 2.0
        * chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>();
    let log_det = (n as f64 - m as f64) * noise_sq.ln() + log_det_small;
    Ok(-0.5 * (n as f64 * LN_2PI + log_det + quad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seeded(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        &a * a.transpose() + DMatrix::identity(n, n) * 0.5
    }

    /// Dense-inverse log density, the brute-force oracle.
    fn dense_logpdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
        let n = x.len() as f64;
        let inv = cov.clone().try_inverse().unwrap();
        let det = cov.determinant();
        let c = x - mean;
        -0.5 * (n * LN_2PI + det.ln() + (c.transpose() * inv * c)[(0, 0)])
    }

    #[test]
    fn cholesky_identity_is_identity_with_zero_jitter() {
        let (l, jitter) = cholesky(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(jitter, 0.0);
        assert_relative_eq!(l, DMatrix::identity(3, 3), epsilon = 1e-14);
    }

    #[test]
    fn cholesky_hand_checked_2x2() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let (l, jitter) = cholesky(&m).unwrap();
        assert_eq!(jitter, 0.0);
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 2.0f64.sqrt()]);
        assert_relative_eq!(l, expected, epsilon = 1e-12);
    }

    #[test]
    fn cholesky_reconstructs_seeded_wishart() {
        let mut rng = seeded(7);
        let m = random_spd(20, &mut rng);
        let cov = CovMatrix::new(m.clone()).unwrap();
        let rebuilt = cov.lower() * cov.lower().transpose();
        let mut target = m;
        for i in 0..20 {
            target[(i, i)] += cov.jitter_applied();
        }
        let rel = (&rebuilt - &target).norm() / target.norm();
        assert!(rel < 1e-8, "reconstruction error {rel}");
    }

    #[test]
    fn cholesky_rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.2, 1.0]);
        assert!(matches!(
            CovMatrix::new(m),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn cholesky_rejects_negative_definite() {
        let m = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            CovMatrix::new(m),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn near_singular_matrix_gets_smallest_working_jitter() {
        // rank-1 plus nothing: needs jitter, and the ladder should stop as
        // soon as factorization succeeds.
        let v = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        let m = &v * v.transpose();
        let cov = CovMatrix::new(m).unwrap();
        assert!(cov.jitter_applied() > 0.0);
        assert!(cov.jitter_applied() <= 1e-4);
    }

    #[test]
    fn logpdf_standard_normal_at_mode() {
        let d = GaussianDist::new(DVector::zeros(1), DMatrix::identity(1, 1)).unwrap();
        let lp = mvn_logpdf(&DVector::zeros(1), &d).unwrap();
        assert_relative_eq!(lp, -0.9189385332046727, epsilon = 1e-9);
    }

    #[test]
    fn logpdf_independent_coordinates() {
        let d = GaussianDist::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        let lp = mvn_logpdf(&DVector::from_vec(vec![1.0, 1.0]), &d).unwrap();
        assert_relative_eq!(lp, -LN_2PI - 1.0, epsilon = 1e-9);
    }

    #[test]
    fn logpdf_matches_dense_inverse_formula() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let d = GaussianDist::new(DVector::zeros(2), cov.clone()).unwrap();
        let lp = mvn_logpdf(&x, &d).unwrap();
        assert_relative_eq!(lp, dense_logpdf(&x, &DVector::zeros(2), &cov), epsilon = 1e-10);
    }

    #[test]
    fn logpdf_matches_dense_on_seeded_matrices() {
        let mut rng = seeded(11);
        for n in [3usize, 8, 15] {
            let cov = random_spd(n, &mut rng);
            let mean = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let d = GaussianDist::new(mean.clone(), cov.clone()).unwrap();
            assert_relative_eq!(
                mvn_logpdf(&x, &d).unwrap(),
                dense_logpdf(&x, &mean, &cov),
                epsilon = 1e-8
            );
        }
    }

    #[test]
    fn logpdf_normalizes_on_grids() {
        // 1-D
        let d = GaussianDist::new(
            DVector::from_vec(vec![0.3]),
            DMatrix::from_vec(1, 1, vec![0.7]),
        )
        .unwrap();
        let h = 0.001;
        let total: f64 = (-12000..12000)
            .map(|i| {
                let x = DVector::from_vec(vec![i as f64 * h]);
                mvn_logpdf(&x, &d).unwrap().exp() * h
            })
            .sum();
        assert!((0.999..=1.001).contains(&total), "1d integral {total}");

        // 2-D
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 0.8]);
        let d = GaussianDist::new(DVector::zeros(2), cov).unwrap();
        let h = 0.02;
        let lim = 400;
        let mut total = 0.0;
        for i in -lim..lim {
            for j in -lim..lim {
                let x = DVector::from_vec(vec![i as f64 * h, j as f64 * h]);
                total += mvn_logpdf(&x, &d).unwrap().exp() * h * h;
            }
        }
        assert!((0.999..=1.001).contains(&total), "2d integral {total}");
    }

    #[test]
    fn condition_textbook_bivariate() {
        let joint = GaussianDist::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]),
        )
        .unwrap();
        let post = condition(&joint, 1, &DVector::from_vec(vec![1.0])).unwrap();
        assert_relative_eq!(post.mean[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(post.cov.entries()[(0, 0)], 0.75, epsilon = 1e-12);
    }

    #[test]
    fn condition_independent_blocks_returns_prior_marginal() {
        let mut cov = DMatrix::identity(4, 4);
        cov[(0, 1)] = 0.3;
        cov[(1, 0)] = 0.3;
        let mean = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let joint = GaussianDist::new(mean, cov).unwrap();
        let post = condition(&joint, 2, &DVector::from_vec(vec![9.0, -4.0])).unwrap();
        assert_relative_eq!(post.mean, DVector::from_vec(vec![1.0, 2.0]), epsilon = 1e-12);
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        assert_relative_eq!(post.cov.entries(), &expect, epsilon = 1e-12);
    }

    #[test]
    fn condition_matches_monte_carlo_regression() {
        // Sample the seeded 5-dim joint, keep draws whose B coordinate lands
        // near b, and compare the empirical moments of A against the
        // closed-form conditional.
        let mut rng = seeded(23);
        let cov = random_spd(5, &mut rng);
        let mean = DVector::from_fn(5, |_, _| rng.sample::<f64, _>(StandardNormal));
        let joint = GaussianDist::new(mean, cov).unwrap();
        let b = 0.4;
        let post = condition(&joint, 4, &DVector::from_vec(vec![b])).unwrap();

        let window = 0.05 * joint.cov.entries()[(4, 4)].sqrt();
        let mut kept: Vec<DVector<f64>> = Vec::new();
        for _ in 0..1_000_000 {
            let draw = mvn_sample(&joint, &mut rng);
            if (draw[4] - b).abs() < window {
                kept.push(draw.rows(0, 4).into_owned());
            }
        }
        assert!(kept.len() > 5_000, "only {} draws in window", kept.len());
        let m = kept.len() as f64;
        let emp_mean = kept.iter().fold(DVector::zeros(4), |acc, v| acc + v) / m;
        for i in 0..4 {
            let sd = post.cov.entries()[(i, i)].sqrt();
            let se = sd / m.sqrt();
            assert!(
                (emp_mean[i] - post.mean[i]).abs() < 5.0 * se + 0.02 * sd,
                "coord {i}: mc {} vs analytic {}",
                emp_mean[i],
                post.mean[i]
            );
        }
    }

    #[test]
    fn subtract_identical_blocks_is_zero() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let mut cov = DMatrix::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                cov[(i, j)] = s[(i, j)];
                cov[(i + 2, j)] = s[(i, j)];
                cov[(i, j + 2)] = s[(i, j)];
                cov[(i + 2, j + 2)] = s[(i, j)];
            }
        }
        let mean = DVector::from_vec(vec![1.0, 2.0, 1.0, 2.0]);
        let diff = subtract_blocks(&GaussianDist::new(mean, cov).unwrap()).unwrap();
        assert_relative_eq!(diff.mean.norm(), 0.0, epsilon = 1e-12);
        assert!(diff.cov.entries().norm() < 1e-12);
    }

    #[test]
    fn subtract_independent_blocks_adds_variances() {
        let mut cov = DMatrix::zeros(2, 2);
        cov[(0, 0)] = 1.5;
        cov[(1, 1)] = 2.5;
        let joint = GaussianDist::new(DVector::from_vec(vec![3.0, 1.0]), cov).unwrap();
        let diff = subtract_blocks(&joint).unwrap();
        assert_relative_eq!(diff.mean[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(diff.cov.entries()[(0, 0)], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn subtract_matches_empirical_covariance_of_differences() {
        let mut rng = seeded(31);
        let cov = random_spd(8, &mut rng);
        let mean = DVector::from_fn(8, |_, _| rng.sample::<f64, _>(StandardNormal));
        let joint = GaussianDist::new(mean, cov).unwrap();
        let diff = subtract_blocks(&joint).unwrap();

        let n = 1_000_000usize;
        let mut sum = DVector::<f64>::zeros(4);
        let mut sum_sq = DMatrix::<f64>::zeros(4, 4);
        for _ in 0..n {
            let draw = mvn_sample(&joint, &mut rng);
            let d = draw.rows(0, 4) - draw.rows(4, 4);
            sum += &d;
            sum_sq += &d * d.transpose();
        }
        let m = n as f64;
        let emp_mean = &sum / m;
        let emp_cov = sum_sq / m - &emp_mean * emp_mean.transpose();
        for i in 0..4 {
            assert!((emp_mean[i] - diff.mean[i]).abs() < 0.02);
            for j in 0..4 {
                assert!(
                    (emp_cov[(i, j)] - diff.cov.entries()[(i, j)]).abs() < 0.05,
                    "cov ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn sample_degenerate_covariance_returns_mean() {
        let d = GaussianDist::new(
            DVector::from_vec(vec![2.0, -1.0]),
            DMatrix::zeros(2, 2),
        )
        .unwrap();
        let mut rng = seeded(3);
        let draw = mvn_sample(&d, &mut rng);
        assert!((draw - d.mean.clone()).norm() < 1e-3);
    }

    #[test]
    fn sample_moments_match_standard_normal() {
        let d = GaussianDist::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        let mut rng = seeded(5);
        let n = 100_000usize;
        let mut sum = DVector::<f64>::zeros(2);
        let mut sum_sq = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..n {
            let z = mvn_sample(&d, &mut rng);
            sum += &z;
            sum_sq += &z * z.transpose();
        }
        let m = n as f64;
        let mean = &sum / m;
        let cov = sum_sq / m - &mean * mean.transpose();
        assert!(mean.norm() < 0.02);
        assert!((cov - DMatrix::identity(2, 2)).norm() < 0.02);
    }

    #[test]
    fn sample_is_deterministic_under_seed() {
        let mut rng = seeded(17);
        let cov = random_spd(4, &mut rng);
        let d = GaussianDist::new(DVector::zeros(4), cov).unwrap();
        let a = mvn_sample(&d, &mut seeded(99));
        let b = mvn_sample(&d, &mut seeded(99));
        assert_eq!(a, b);
    }

    #[test]
    fn lowrank_logpdf_matches_dense() {
        let mut rng = seeded(41);
        for (n, r) in [(12usize, 2usize), (30, 4), (9, 0)] {
            let f = DMatrix::from_fn(n, r, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let s = 0.37;
            let dense_cov = &f * f.transpose() + DMatrix::identity(n, n) * s;
            let d = GaussianDist::new(DVector::zeros(n), dense_cov).unwrap();
            assert_relative_eq!(
                lowrank_mvn_logpdf(&x, &f, s).unwrap(),
                mvn_logpdf(&x, &d).unwrap(),
                epsilon = 1e-8
            );
        }
    }

    #[test]
    fn grouped_logpdf_matches_dense() {
        let mut rng = seeded(43);
        let m = 4usize;
        let n = 17usize;
        let group: Vec<usize> = (0..n).map(|i| i % m).collect();
        let a = random_spd(m, &mut rng);
        let x = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = 0.42;
        let mut dense = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                dense[(i, j)] = a[(group[i], group[j])];
            }
            dense[(i, i)] += s;
        }
        let d = GaussianDist::new(DVector::zeros(n), dense).unwrap();
        assert_relative_eq!(
            grouped_mvn_logpdf(&x, &a, &group, s).unwrap(),
            mvn_logpdf(&x, &d).unwrap(),
            epsilon = 1e-8
        );
    }
}
