//! Plug-and-play first-order optimizers.
//!
//! A player owns one parameter tensor and updates it from the response
//! delivered by the protocol — nothing else. Optimizer steps see only
//! `(state, δ)`; the protocol is the sole information channel.

use crate::tensor::{Tensor, TensorError, TensorResult};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerTag {
    Sgd,
    SgdMomentum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSpec {
    pub tag: OptimizerTag,
    pub lr: f64,
    pub momentum: f64,
}

impl OptimizerSpec {
    pub fn sgd(lr: f64) -> Self {
        Self {
            tag: OptimizerTag::Sgd,
            lr,
            momentum: 0.0,
        }
    }

    pub fn sgd_momentum(lr: f64, momentum: f64) -> Self {
        Self {
            tag: OptimizerTag::SgdMomentum,
            lr,
            momentum,
        }
    }

    pub fn check(&self) -> TensorResult<()> {
        if self.lr < 0.0 {
            return Err(TensorError::Domain {
                op: "optimizer",
                detail: format!("learning rate must be non-negative, got {}", self.lr),
            });
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TensorError::Domain {
                op: "optimizer",
                detail: format!("momentum must lie in [0,1), got {}", self.momentum),
            });
        }
        Ok(())
    }
}

/// How a player's parameter tensor is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitSpec {
    /// Gaussian with stddev `scale / sqrt(fan_in)`. The default.
    GaussianFanIn { scale: f64 },
    /// Uniform in `(0, scale / sqrt(fan_in))`; satisfies the kickback
    /// coherence precondition (positive weights).
    UniformPositiveFanIn { scale: f64 },
    Zeros,
    Constant(f64),
}

impl InitSpec {
    pub fn sample(&self, shape: &[usize], rng: &mut crate::rng::Rng) -> Tensor {
        let n: usize = shape.iter().product();
        let fan_in = if shape.len() == 2 { shape[1] } else { n }.max(1) as f64;
        let data = match self {
            InitSpec::GaussianFanIn { scale } => {
                let s = scale / fan_in.sqrt();
                (0..n).map(|_| s * rng.normal()).collect()
            }
            InitSpec::UniformPositiveFanIn { scale } => {
                let s = scale / fan_in.sqrt();
                // Bounded away from zero so every unit starts strictly coherent.
                (0..n).map(|_| rng.uniform_in(0.05 * s, s)).collect()
            }
            InitSpec::Zeros => vec![0.0; n],
            InitSpec::Constant(c) => vec![*c; n],
        };
        Tensor::new(shape.to_vec(), data).expect("init shape")
    }
}

/// One player's parameters plus optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerState {
    pub params: Tensor,
    pub velocity: Tensor,
    pub optimizer: OptimizerSpec,
}

impl PlayerState {
    pub fn new(params: Tensor, optimizer: OptimizerSpec) -> Self {
        let velocity = Tensor::zeros(params.shape());
        Self {
            params,
            velocity,
            optimizer,
        }
    }
}

/// One descent step: `velocity ← momentum·velocity + δ; params ← params − lr·velocity`.
///
/// With zero momentum the velocity buffer is left at zero and the step is
/// applied directly.
pub fn sgd_step(state: &mut PlayerState, delta: &Tensor) -> TensorResult<()> {
    if state.params.shape() != delta.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "sgd_step",
            lhs: state.params.shape().to_vec(),
            rhs: delta.shape().to_vec(),
        });
    }
    let lr = state.optimizer.lr;
    if state.optimizer.momentum == 0.0 {
        state.params = state.params.sub(&delta.scale(lr)?)?;
    } else {
        state.velocity = state.velocity.scale(state.optimizer.momentum)?.add(delta)?;
        state.params = state.params.sub(&state.velocity.scale(lr)?)?;
    }
    Ok(())
}

/// Stopping rule for `arglocopt`: a round budget plus a tolerance on the
/// gradient norm smoothed over a trailing window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub max_rounds: usize,
    pub grad_tolerance: f64,
}

impl StopRule {
    pub const SMOOTHING_WINDOW: usize = 20;

    pub fn new(max_rounds: usize, grad_tolerance: f64) -> Self {
        assert!(max_rounds >= 1, "max rounds must be at least 1");
        Self {
            max_rounds,
            grad_tolerance,
        }
    }

    pub fn rounds_only(max_rounds: usize) -> Self {
        Self::new(max_rounds, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_step_leaves_params_unchanged() {
        let mut st = PlayerState::new(Tensor::vector(vec![1.0, 2.0]), OptimizerSpec::sgd(0.1));
        sgd_step(&mut st, &Tensor::zeros(&[2])).unwrap();
        assert_eq!(st.params, Tensor::vector(vec![1.0, 2.0]));
        assert_eq!(st.velocity, Tensor::zeros(&[2]));
        // Learning rate zero is a valid frozen player.
        let mut st = PlayerState::new(Tensor::vector(vec![1.0]), OptimizerSpec::sgd(0.0));
        sgd_step(&mut st, &Tensor::vector(vec![5.0])).unwrap();
        assert_eq!(st.params, Tensor::vector(vec![1.0]));
    }

    #[test]
    fn sgd_direct_arithmetic() {
        let mut st = PlayerState::new(Tensor::vector(vec![1.0]), OptimizerSpec::sgd(0.1));
        sgd_step(&mut st, &Tensor::vector(vec![2.0])).unwrap();
        assert!((st.params.data()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn sgd_shape_mismatch() {
        let mut st = PlayerState::new(Tensor::vector(vec![1.0]), OptimizerSpec::sgd(0.1));
        assert!(sgd_step(&mut st, &Tensor::zeros(&[2])).is_err());
    }

    // Closed-form minimizer oracle: (θ-3)² has gradient 2(θ-3); plain descent
    // with lr 0.1 contracts toward 3.
    #[test]
    fn sgd_converges_on_quadratic() {
        let mut st = PlayerState::new(Tensor::vector(vec![-5.0]), OptimizerSpec::sgd(0.1));
        for _ in 0..200 {
            let g = st.params.data()[0] * 2.0 - 6.0;
            sgd_step(&mut st, &Tensor::vector(vec![g])).unwrap();
        }
        assert!((st.params.data()[0] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn momentum_accumulates_velocity() {
        let mut st = PlayerState::new(
            Tensor::vector(vec![0.0]),
            OptimizerSpec::sgd_momentum(0.1, 0.5),
        );
        sgd_step(&mut st, &Tensor::vector(vec![1.0])).unwrap();
        sgd_step(&mut st, &Tensor::vector(vec![1.0])).unwrap();
        // velocity: 1, then 1.5; params: -0.1, then -0.25.
        assert!((st.velocity.data()[0] - 1.5).abs() < 1e-15);
        assert!((st.params.data()[0] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn positive_init_is_positive() {
        let mut rng = crate::rng::Rng::new(3);
        let t = InitSpec::UniformPositiveFanIn { scale: 0.2 }.sample(&[4, 3], &mut rng);
        assert!(t.data().iter().all(|v| *v > 0.0));
    }
}
