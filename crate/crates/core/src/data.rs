//! Synthetic Gaussian data for regression and classification, plus the
//! decomposition of an estimator against the ground-truth direction.
//!
//! All randomness is drawn from ChaCha12 streams keyed by
//! SHA-256(base_seed, purpose, indices), so any quantity can be regenerated
//! exactly and sweep scheduling cannot change the data.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Name of the generator recorded in every output row.
pub const RNG_ALGO: &str = "chacha12";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationNorm {
    L2,
    Linf,
}

/// Full description of one experiment point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub d: usize,
    pub n: usize,
    pub task: Task,
    /// Regression noise variance sigma^2.
    #[serde(default)]
    pub sigma2: f64,
    /// Classification label flip probability, in [0, 0.5).
    #[serde(default)]
    pub label_flip_prob: f64,
    #[serde(default)]
    pub eps_train: f64,
    #[serde(default)]
    pub eps_test: f64,
    pub perturbation_norm: PerturbationNorm,
    /// Perturbations restricted to the hyperplane orthogonal to the ground
    /// truth.
    pub consistent: bool,
    #[serde(default)]
    pub lambda: f64,
    pub seed: u64,
}

impl ProblemConfig {
    pub fn gamma(&self) -> f64 {
        self.d as f64 / self.n as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n == 0 {
            return Err(Error::Config("d and n must be >= 1".into()));
        }
        if self.eps_train < 0.0 || self.eps_test < 0.0 || self.sigma2 < 0.0 {
            return Err(Error::Config("eps and sigma2 must be nonnegative".into()));
        }
        if !(0.0..0.5).contains(&self.label_flip_prob) {
            return Err(Error::Config("label_flip_prob must lie in [0, 0.5)".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::Config("lambda must be nonnegative".into()));
        }
        Ok(())
    }
}

/// One draw of training data together with its ground truth.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// n x d, rows are samples.
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub theta_star: Array1<f64>,
    /// Pre-noise targets (regression: X theta*; classification: +-1 signs).
    pub clean_y: Array1<f64>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    /// Debug dump: header row, columns x_1..x_d, y.
    pub fn dump_csv(&self, path: &Path) -> Result<()> {
        let io_err = |source| Error::Io {
            path: path.display().to_string(),
            source,
        };
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
        let mut write = |s: String| out.write_all(s.as_bytes()).map_err(io_err);
        let header: Vec<String> = (1..=self.d()).map(|j| format!("x_{j}")).collect();
        write(format!("{},y\n", header.join(",")))?;
        for i in 0..self.n() {
            let row: Vec<String> = self.x.row(i).iter().map(|v| format!("{v:e}")).collect();
            write(format!("{},{:e}\n", row.join(","), self.y[i]))?;
        }
        Ok(())
    }
}

/// A parameter vector with its cached decomposition against the (unit-norm)
/// ground truth: the parallel coefficient and the l2/l1 masses of the
/// orthogonal part.
#[derive(Debug, Clone)]
pub struct Estimator {
    pub theta: Array1<f64>,
    /// <theta, theta*>.
    pub nu_par: f64,
    /// ||P_perp theta||_2.
    pub perp_l2: f64,
    /// ||P_perp theta||_1.
    pub perp_l1: f64,
}

impl Estimator {
    pub fn norm_l2(&self) -> f64 {
        (self.nu_par * self.nu_par + self.perp_l2 * self.perp_l2).sqrt()
    }
}

/// Seed a ChaCha12 stream from (base_seed, purpose, indices).
pub fn seeded_rng(base_seed: u64, purpose: &str, indices: &[u64]) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(base_seed.to_le_bytes());
    hasher.update(purpose.as_bytes());
    for ix in indices {
        hasher.update(ix.to_le_bytes());
    }
    ChaCha12Rng::from_seed(hasher.finalize().into())
}

/// Unit vector e_1, the default ground truth for both tasks.
pub fn default_theta_star(d: usize) -> Array1<f64> {
    let mut t = Array1::zeros(d);
    t[0] = 1.0;
    t
}

/// Draw a dataset: iid standard normal rows, targets from the ground truth,
/// then noise (additive Gaussian for regression, independent label flips for
/// classification). Deterministic given the config seed.
pub fn generate_dataset(config: &ProblemConfig, theta_star: &Array1<f64>) -> Result<Dataset> {
    config.validate()?;
    let (n, d) = (config.n, config.d);
    if theta_star.len() != d {
        return Err(Error::Config(format!(
            "theta_star has length {}, expected {d}",
            theta_star.len()
        )));
    }
    let norm = theta_star.dot(theta_star).sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!("theta_star norm {norm} != 1")));
    }

    let mut rng = seeded_rng(config.seed, "data.x", &[n as u64, d as u64]);
    let mut x = Array2::zeros((n, d));
    for v in x.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    let scores = x.dot(theta_star);

    let (clean_y, y) = match config.task {
        Task::Regression => {
            let clean = scores;
            let mut y = clean.clone();
            if config.sigma2 > 0.0 {
                let sd = config.sigma2.sqrt();
                let mut noise_rng = seeded_rng(config.seed, "data.noise", &[n as u64]);
                for v in y.iter_mut() {
                    let z: f64 = noise_rng.sample(StandardNormal);
                    *v += sd * z;
                }
            }
            (clean, y)
        }
        Task::Classification => {
            let clean = scores.mapv(|s| if s >= 0.0 { 1.0 } else { -1.0 });
            let mut y = clean.clone();
            if config.label_flip_prob > 0.0 {
                let mut flip_rng = seeded_rng(config.seed, "data.flip", &[n as u64]);
                for v in y.iter_mut() {
                    if flip_rng.gen::<f64>() < config.label_flip_prob {
                        *v = -*v;
                    }
                }
            }
            (clean, y)
        }
    };

    Ok(Dataset {
        x,
        y,
        theta_star: theta_star.clone(),
        clean_y,
    })
}

/// Decompose `theta` against the unit ground truth.
pub fn decompose(theta: &Array1<f64>, theta_star: &Array1<f64>) -> Estimator {
    let nu_par = theta.dot(theta_star);
    let mut perp_sq = 0.0;
    let mut perp_l1 = 0.0;
    for (t, s) in theta.iter().zip(theta_star.iter()) {
        let p = t - nu_par * s;
        perp_sq += p * p;
        perp_l1 += p.abs();
    }
    Estimator {
        theta: theta.clone(),
        nu_par,
        perp_l2: perp_sq.sqrt(),
        perp_l1,
    }
}

/// Sanity diagnostics: norm of the column mean and the worst deviation of
/// the nonzero extreme eigenvalues of X^T X / n from the Marchenko–Pastur
/// bulk edges (1 +- sqrt(gamma))^2.
pub fn sample_moments_check(dataset: &Dataset) -> (f64, f64) {
    let n = dataset.n();
    let d = dataset.d();
    let gamma = d as f64 / n as f64;

    let mean = dataset.x.mean_axis(ndarray::Axis(0)).unwrap();
    let mean_norm = mean.dot(&mean).sqrt();

    // eigenvalues of the smaller Gram carry the nonzero spectrum
    let k = n.min(d);
    let gram = if d <= n {
        let g = dataset.x.t().dot(&dataset.x);
        g.mapv(|v| v / n as f64)
    } else {
        let g = dataset.x.dot(&dataset.x.t());
        g.mapv(|v| v / n as f64)
    };
    let m = nalgebra::DMatrix::from_fn(k, k, |i, j| gram[(i, j)]);
    let eig = m.symmetric_eigenvalues();
    let lam_max = eig.iter().cloned().fold(f64::MIN, f64::max);
    let lam_min = eig.iter().cloned().fold(f64::MAX, f64::min);

    let hi = (1.0 + gamma.sqrt()).powi(2);
    let lo = (1.0 - gamma.sqrt()).powi(2);
    let gap = (lam_max - hi).abs().max((lam_min - lo).abs());
    (mean_norm, gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn config(task: Task) -> ProblemConfig {
        ProblemConfig {
            d: 40,
            n: 60,
            task,
            sigma2: 0.0,
            label_flip_prob: 0.0,
            eps_train: 0.0,
            eps_test: 0.0,
            perturbation_norm: PerturbationNorm::L2,
            consistent: true,
            lambda: 0.0,
            seed: 11,
        }
    }

    #[test]
    fn noiseless_regression_targets() {
        let cfg = config(Task::Regression);
        let ds = generate_dataset(&cfg, &default_theta_star(cfg.d)).unwrap();
        for i in 0..ds.n() {
            assert_eq!(ds.y[i], ds.clean_y[i]);
            assert_abs_diff_eq!(ds.y[i], ds.x.row(i).dot(&ds.theta_star), epsilon = 1e-14);
        }
    }

    #[test]
    fn clean_classification_labels() {
        let cfg = config(Task::Classification);
        let ds = generate_dataset(&cfg, &default_theta_star(cfg.d)).unwrap();
        for i in 0..ds.n() {
            let s = ds.x.row(i).dot(&ds.theta_star);
            assert_eq!(ds.y[i], if s >= 0.0 { 1.0 } else { -1.0 });
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = config(Task::Regression);
        let a = generate_dataset(&cfg, &default_theta_star(cfg.d)).unwrap();
        let b = generate_dataset(&cfg, &default_theta_star(cfg.d)).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);

        let mut cfg2 = cfg.clone();
        cfg2.seed = 12;
        let c = generate_dataset(&cfg2, &default_theta_star(cfg.d)).unwrap();
        assert_ne!(a.x, c.x);
    }

    #[test]
    fn noise_streams_do_not_disturb_features() {
        let mut cfg = config(Task::Regression);
        let clean = generate_dataset(&cfg, &default_theta_star(cfg.d)).unwrap();
        cfg.sigma2 = 0.3;
        let noisy = generate_dataset(&cfg, &default_theta_star(cfg.d)).unwrap();
        assert_eq!(clean.x, noisy.x);
        assert_ne!(clean.y, noisy.y);
    }

    #[test]
    fn flip_fraction_in_binomial_band() {
        let mut cfg = config(Task::Classification);
        cfg.n = 4000;
        cfg.d = 10;
        cfg.label_flip_prob = 0.1;
        let ds = generate_dataset(&cfg, &default_theta_star(cfg.d)).unwrap();
        let flipped = ds
            .y
            .iter()
            .zip(ds.clean_y.iter())
            .filter(|(a, b)| a != b)
            .count() as f64;
        let p = cfg.label_flip_prob;
        let sd = (cfg.n as f64 * p * (1.0 - p)).sqrt();
        assert!((flipped - cfg.n as f64 * p).abs() <= 3.0 * sd);
    }

    #[test]
    fn decompose_examples() {
        let d = 5;
        let ts = default_theta_star(d);
        let e = decompose(&ts, &ts);
        assert_abs_diff_eq!(e.nu_par, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.perp_l2, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.perp_l1, 0.0, epsilon = 1e-15);

        let mut e2 = Array1::zeros(d);
        e2[1] = 1.0;
        let e = decompose(&e2, &ts);
        assert_eq!((e.nu_par, e.perp_l2, e.perp_l1), (0.0, 1.0, 1.0));
    }

    #[test]
    fn decompose_pythagoras() {
        let d = 50;
        let ts = default_theta_star(d);
        let mut rng = seeded_rng(3, "test", &[]);
        let theta = Array1::from_iter((0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let e = decompose(&theta, &ts);
        let norm_sq = theta.dot(&theta);
        assert_abs_diff_eq!(
            e.nu_par * e.nu_par + e.perp_l2 * e.perp_l2,
            norm_sq,
            epsilon = 1e-9
        );
    }

    #[test]
    fn moments_check_tracks_bulk_edges() {
        let mut cfg = config(Task::Regression);
        cfg.n = 4000;
        cfg.d = 1000;
        let ds = generate_dataset(&cfg, &default_theta_star(cfg.d)).unwrap();
        let (mean_norm, gap) = sample_moments_check(&ds);
        assert!(mean_norm.is_finite());
        // lambda_max within 10% of (1 + sqrt(0.25))^2 = 2.25
        assert!(gap <= 0.1 * 2.25, "edge gap {gap}");
    }

    #[test]
    fn zero_matrix_mean_norm() {
        let ds = Dataset {
            x: Array2::zeros((4, 3)),
            y: Array1::zeros(4),
            theta_star: default_theta_star(3),
            clean_y: Array1::zeros(4),
        };
        let (mean_norm, _) = sample_moments_check(&ds);
        assert_eq!(mean_norm, 0.0);
    }
}
