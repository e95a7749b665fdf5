//! Nature and Noise sources: synthetic supervised data, evaluable-density
//! generative targets, and an analytic bandit/MDP, each with ground truth for
//! verification. Sources are immutable; sampling draws from a caller-owned
//! stream, so fixed seeds give fixed data.

use crate::kernels::Activation;
use crate::rng::{gaussian_log_density, Rng};
use crate::tensor::{Tensor, TensorError, TensorResult};

/// Teacher-generated labeled pairs: x ~ N(0, I), y = teacher(x) + noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedSource {
    pub teacher: Tensor,
    pub nonlinearity: Option<Activation>,
    pub noise_stddev: f64,
}

impl SupervisedSource {
    pub fn linear(teacher: Tensor, noise_stddev: f64) -> Self {
        assert!(teacher.is_matrix(), "teacher must be a matrix");
        assert!(noise_stddev >= 0.0);
        Self {
            teacher,
            nonlinearity: None,
            noise_stddev,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.teacher.shape()[1]
    }

    pub fn output_dim(&self) -> usize {
        self.teacher.shape()[0]
    }

    pub fn sample(&self, rng: &mut Rng) -> TensorResult<(Tensor, Tensor)> {
        let x = Tensor::vector(rng.normal_vec(self.input_dim()));
        let mut y = self.teacher.matvec(&x)?;
        if let Some(act) = self.nonlinearity {
            y = match act {
                Activation::Identity => y,
                Activation::Relu => y.relu(),
                Activation::Sigmoid => y.map(|v| 1.0 / (1.0 + (-v).exp())),
            };
        }
        if self.noise_stddev > 0.0 {
            y = crate::rng::gaussian_sample(rng, &y, self.noise_stddev)?;
        }
        Ok((x, y))
    }
}

/// Batch sampler for supervised sources.
pub fn sample_supervised(
    src: &SupervisedSource,
    rng: &mut Rng,
    batch: usize,
) -> TensorResult<(Vec<Tensor>, Vec<Tensor>)> {
    let mut xs = Vec::with_capacity(batch);
    let mut ys = Vec::with_capacity(batch);
    for _ in 0..batch {
        let (x, y) = src.sample(rng)?;
        xs.push(x);
        ys.push(y);
    }
    Ok((xs, ys))
}

/// A pregenerated finite dataset; batches draw uniformly from it, so descent
/// targets the dataset's own optimum rather than the population's.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedDataset {
    pub xs: Vec<Tensor>,
    pub ys: Vec<Tensor>,
}

impl FixedDataset {
    pub fn generate(src: &SupervisedSource, n: usize, seed: u64) -> TensorResult<Self> {
        let mut rng = Rng::new(seed);
        let (xs, ys) = sample_supervised(src, &mut rng, n)?;
        Ok(Self { xs, ys })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn draw(&self, rng: &mut Rng) -> (&Tensor, &Tensor) {
        let i = rng.index(self.xs.len());
        (&self.xs[i], &self.ys[i])
    }
}

/// Nature with an evaluable density: a finite support or a 1-D Gaussian
/// mixture.
#[derive(Debug, Clone, PartialEq)]
pub enum DensitySource {
    Finite {
        points: Vec<Tensor>,
        probs: Vec<f64>,
    },
    Mixture {
        weights: Vec<f64>,
        means: Vec<f64>,
        stddevs: Vec<f64>,
    },
}

impl DensitySource {
    pub fn finite(points: Vec<Tensor>, probs: Vec<f64>) -> TensorResult<Self> {
        if points.len() != probs.len() || points.is_empty() {
            return Err(TensorError::Domain {
                op: "density_source",
                detail: "points and probabilities must be non-empty and equal-length".into(),
            });
        }
        if probs.iter().any(|p| *p < 0.0) {
            return Err(TensorError::Domain {
                op: "density_source",
                detail: "probabilities must be non-negative".into(),
            });
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(TensorError::Domain {
                op: "density_source",
                detail: format!("probabilities sum to {total}, expected 1"),
            });
        }
        Ok(Self::Finite { points, probs })
    }

    pub fn mixture(weights: Vec<f64>, means: Vec<f64>, stddevs: Vec<f64>) -> TensorResult<Self> {
        if weights.len() != means.len() || weights.len() != stddevs.len() || weights.is_empty() {
            return Err(TensorError::Domain {
                op: "density_source",
                detail: "mixture component lists must be non-empty and equal-length".into(),
            });
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| *w < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(TensorError::Domain {
                op: "density_source",
                detail: format!("weights must be non-negative and sum to 1, got {total}"),
            });
        }
        if stddevs.iter().any(|s| *s <= 0.0) {
            return Err(TensorError::Domain {
                op: "density_source",
                detail: "component stddevs must be positive".into(),
            });
        }
        Ok(Self::Mixture {
            weights,
            means,
            stddevs,
        })
    }

    pub fn sample(&self, rng: &mut Rng) -> Tensor {
        match self {
            Self::Finite { points, probs } => {
                let u = rng.uniform();
                let mut acc = 0.0;
                for (p, prob) in points.iter().zip(probs) {
                    acc += prob;
                    if u < acc {
                        return p.clone();
                    }
                }
                points.last().unwrap().clone()
            }
            Self::Mixture {
                weights,
                means,
                stddevs,
            } => {
                let u = rng.uniform();
                let mut acc = 0.0;
                let mut idx = weights.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        idx = i;
                        break;
                    }
                }
                Tensor::scalar(means[idx] + stddevs[idx] * rng.normal())
            }
        }
    }

    /// Index of a finite-support point, when `x` matches one.
    pub fn support_index(&self, x: &Tensor) -> Option<usize> {
        match self {
            Self::Finite { points, .. } => points
                .iter()
                .position(|p| p.shape() == x.shape() && p.sub(x).map(|d| d.norm_max()).unwrap_or(1.0) < 1e-12),
            Self::Mixture { .. } => None,
        }
    }

    /// Exact pmf/pdf at `x`. Unsupported points of a finite source evaluate
    /// to zero rather than erroring.
    pub fn density(&self, x: &Tensor) -> f64 {
        match self {
            Self::Finite { probs, .. } => match self.support_index(x) {
                Some(i) => probs[i],
                None => 0.0,
            },
            Self::Mixture {
                weights,
                means,
                stddevs,
            } => weights
                .iter()
                .zip(means)
                .zip(stddevs)
                .map(|((w, m), s)| {
                    w * gaussian_log_density(x, &Tensor::scalar(*m), *s)
                        .map(f64::exp)
                        .unwrap_or(0.0)
                })
                .sum(),
        }
    }

    pub fn support_len(&self) -> usize {
        match self {
            Self::Finite { points, .. } => points.len(),
            Self::Mixture { weights, .. } => weights.len(),
        }
    }
}

pub fn sample_density(src: &DensitySource, rng: &mut Rng, batch: usize) -> Vec<Tensor> {
    (0..batch).map(|_| src.sample(rng)).collect()
}

pub fn eval_density(src: &DensitySource, x: &Tensor) -> f64 {
    src.density(x)
}

/// Quadratic-reward environment: r(s, a) = −‖a − W*·s‖² with hidden W*.
/// γ = 0 is a contextual bandit with fresh states each step; with γ > 0 an
/// optional linear transition s′ = A·s + B·a applies.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditMdp {
    pub w_star: Tensor,
    pub gamma: f64,
    pub transition: Option<(Tensor, Tensor)>,
}

impl BanditMdp {
    pub fn bandit(w_star: Tensor) -> Self {
        assert!(w_star.is_matrix());
        Self {
            w_star,
            gamma: 0.0,
            transition: None,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.w_star.shape()[1]
    }

    pub fn action_dim(&self) -> usize {
        self.w_star.shape()[0]
    }

    pub fn sample_state(&self, rng: &mut Rng) -> Tensor {
        Tensor::vector(rng.normal_vec(self.state_dim()))
    }

    pub fn reward(&self, s: &Tensor, a: &Tensor) -> TensorResult<f64> {
        let d = a.sub(&self.w_star.matvec(s)?)?;
        Ok(-d.dot(&d)?)
    }
}

/// One environment step: reward as declared; the next state is resampled in
/// bandit mode or follows the linear transition.
pub fn bandit_step(
    mdp: &BanditMdp,
    s: &Tensor,
    a: &Tensor,
    rng: &mut Rng,
) -> TensorResult<(f64, Tensor)> {
    let r = mdp.reward(s, a)?;
    let next = match &mdp.transition {
        Some((amat, bmat)) => amat.matvec(s)?.add(&bmat.matvec(a)?)?,
        None => mdp.sample_state(rng),
    };
    Ok((r, next))
}

/// Analytic oracle: ∇_a r = −2(a − W*·s).
pub fn true_action_gradient(mdp: &BanditMdp, s: &Tensor, a: &Tensor) -> TensorResult<Tensor> {
    a.sub(&mdp.w_star.matvec(s)?)?.scale(-2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_teacher_no_noise() {
        let src = SupervisedSource::linear(Tensor::identity(3), 0.0);
        let mut rng = Rng::new(4);
        let (x, y) = src.sample(&mut rng).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn fixed_seed_identical_batches() {
        let src = SupervisedSource::linear(Tensor::matrix(&[vec![1.0, -0.5]]).unwrap(), 0.01);
        let a = sample_supervised(&src, &mut Rng::new(11), 8).unwrap();
        let b = sample_supervised(&src, &mut Rng::new(11), 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn finite_density_uniform_two_points() {
        let src = DensitySource::finite(
            vec![Tensor::scalar(0.0), Tensor::scalar(1.0)],
            vec![0.5, 0.5],
        )
        .unwrap();
        assert_eq!(src.density(&Tensor::scalar(0.0)), 0.5);
        assert_eq!(src.density(&Tensor::scalar(1.0)), 0.5);
        // Unsupported point evaluates to zero, not an error.
        assert_eq!(src.density(&Tensor::scalar(0.3)), 0.0);
    }

    // Frequency oracle: 1e5 draws from a (0.3, 0.7) source.
    #[test]
    fn finite_density_empirical_frequencies() {
        let src = DensitySource::finite(
            vec![Tensor::scalar(0.0), Tensor::scalar(1.0)],
            vec![0.3, 0.7],
        )
        .unwrap();
        let mut rng = Rng::new(77);
        let n = 100_000;
        let mut count0 = 0usize;
        for _ in 0..n {
            if src.sample(&mut rng).data()[0] == 0.0 {
                count0 += 1;
            }
        }
        let f0 = count0 as f64 / n as f64;
        assert!((f0 - 0.3).abs() < 0.01, "{f0}");
    }

    // A one-component mixture reduces to the Gaussian density.
    #[test]
    fn mixture_single_component_matches_gaussian() {
        let src = DensitySource::mixture(vec![1.0], vec![0.4], vec![0.8]).unwrap();
        let x = Tensor::scalar(1.1);
        let want = gaussian_log_density(&x, &Tensor::scalar(0.4), 0.8)
            .unwrap()
            .exp();
        assert!((src.density(&x) - want).abs() < 1e-14);
    }

    #[test]
    fn density_source_validation() {
        assert!(DensitySource::finite(vec![Tensor::scalar(0.0)], vec![0.9]).is_err());
        assert!(DensitySource::mixture(vec![0.5, 0.5], vec![0.0, 1.0], vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn bandit_reward_and_gradient() {
        let mdp = BanditMdp::bandit(Tensor::matrix(&[vec![2.0]]).unwrap());
        let s = Tensor::vector(vec![1.0]);
        // Optimal action: zero reward, zero gradient.
        let a_opt = Tensor::vector(vec![2.0]);
        assert_eq!(mdp.reward(&s, &a_opt).unwrap(), 0.0);
        assert_eq!(
            true_action_gradient(&mdp, &s, &a_opt).unwrap(),
            Tensor::zeros(&[1])
        );
        // a = 0: r = -4, gradient = [4].
        let a = Tensor::vector(vec![0.0]);
        assert_eq!(mdp.reward(&s, &a).unwrap(), -4.0);
        assert_eq!(
            true_action_gradient(&mdp, &s, &a).unwrap(),
            Tensor::vector(vec![4.0])
        );
    }

    // ∇_a r against central finite differences.
    #[test]
    fn action_gradient_matches_finite_differences() {
        let mut rng = Rng::new(15);
        let mdp = BanditMdp::bandit(Tensor::new(vec![2, 3], rng.normal_vec(6)).unwrap());
        let s = Tensor::vector(rng.normal_vec(3));
        let a = Tensor::vector(rng.normal_vec(2));
        let grad = true_action_gradient(&mdp, &s, &a).unwrap();
        let h = 1e-6;
        for k in 0..2 {
            let mut plus = a.data().to_vec();
            let mut minus = a.data().to_vec();
            plus[k] += h;
            minus[k] -= h;
            let fp = mdp.reward(&s, &Tensor::vector(plus)).unwrap();
            let fm = mdp.reward(&s, &Tensor::vector(minus)).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            assert!((grad.data()[k] - fd).abs() < 1e-6);
        }
    }

    #[test]
    fn mdp_mode_uses_linear_transition() {
        let mut mdp = BanditMdp::bandit(Tensor::identity(2));
        mdp.gamma = 0.9;
        mdp.transition = Some((Tensor::identity(2).scale(0.5).unwrap(), Tensor::identity(2)));
        let s = Tensor::vector(vec![2.0, 0.0]);
        let a = Tensor::vector(vec![1.0, 1.0]);
        let (_, next) = bandit_step(&mdp, &s, &a, &mut Rng::new(0)).unwrap();
        assert_eq!(next, Tensor::vector(vec![2.0, 1.0]));
    }
}
