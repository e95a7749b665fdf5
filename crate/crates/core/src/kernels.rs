//! The kernel library: forward functions and their partials, registered by
//! tag for use as graph operators.
//!
//! Every kernel is a pure function from input tensors to output tensors plus
//! a vector-Jacobian product per input slot. Slots holding cloned values are
//! declared non-differentiable and always receive a zero adjoint.

use crate::tensor::{Tensor, TensorError, TensorResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "identity" => Some(Self::Identity),
            "relu" => Some(Self::Relu),
            "sigmoid" => Some(Self::Sigmoid),
            _ => None,
        }
    }
}

/// Probability outputs are clamped away from the boundary before log terms.
pub const PROB_CLAMP: f64 = 1e-7;

fn sigmoid(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElemOp {
    Relu,
    Heaviside,
    Ln,
    Exp,
    Sigmoid,
}

/// An operator kernel: tag plus static parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    /// `(θ[m×(n+bias)], s[n]) -> act(θ·[s;1])`; the affine map of the layer
    /// couplings. `affine` is `Layer { Identity, bias: false }`.
    Layer { activation: Activation, bias: bool },
    /// `(θ[m×n], s[n]) -> (S, τ)` with `S = relu(θ·s)` and `τ = θᵀ·1_{θ·s}`.
    RectifierLayer,
    /// `(ŷ, y) -> mean((ŷ-y)²)`
    MseLoss,
    /// `(p, y) -> -mean(y·ln p + (1-y)·ln(1-p))`
    LogisticLoss,
    /// `(q) -> -ln q` for a positive scalar density value.
    NegLogLikelihood,
    /// `(mean[d], x[d]) -> N(x; mean, stddev²·I)` as a positive scalar.
    GaussDensity { stddev: f64 },
    /// `(ε[k], x, z[k], q) -> (ℒ1, ℒ2)` where `ℒ1 = ln P_noise(ε) - ln P_prior(z)`
    /// against a standard-normal prior and `ℒ2 = -ln q`.
    VlbTerms { noise_stddev: f64 },
    /// `(d_real, d_fake) -> (ln d_real, ln(1 - d_fake))`, both inputs strictly
    /// inside (0,1).
    GanLosses,
    /// `(r, q̃, q) -> (r + γ·q̃ - q)²`; the cloned `q̃` slot is constant.
    BellmanError { gamma: f64 },
    /// `(r, q̃, q, g[d], ε[d]) -> (r + γ·q̃ - q - ⟨g,ε⟩)²`; `q̃` constant.
    BellmanGradError { gamma: f64 },
    /// `(u[m], v[n]) -> [u;v]`
    Concat2,
    Add,
    Negate,
    Scale(f64),
    Hadamard,
    Map(ElemOp),
}

impl Kernel {
    pub fn tag(&self) -> &'static str {
        match self {
            Kernel::Layer { .. } => "layer",
            Kernel::RectifierLayer => "rectifier_layer",
            Kernel::MseLoss => "mse_loss",
            Kernel::LogisticLoss => "logistic_loss",
            Kernel::NegLogLikelihood => "neg_log_likelihood",
            Kernel::GaussDensity { .. } => "gauss_density",
            Kernel::VlbTerms { .. } => "vlb_terms",
            Kernel::GanLosses => "gan_losses",
            Kernel::BellmanError { .. } => "bellman_error",
            Kernel::BellmanGradError { .. } => "bellman_gradient_error",
            Kernel::Concat2 => "concat2",
            Kernel::Add => "add",
            Kernel::Negate => "negate",
            Kernel::Scale(_) => "scale",
            Kernel::Hadamard => "hadamard",
            Kernel::Map(op) => match op {
                ElemOp::Relu => "relu",
                ElemOp::Heaviside => "heaviside",
                ElemOp::Ln => "ln",
                ElemOp::Exp => "exp",
                ElemOp::Sigmoid => "sigmoid",
            },
        }
    }

    /// Loss kernel for a config tag.
    pub fn loss_from_tag(tag: &str) -> Option<Kernel> {
        match tag {
            "mse" => Some(Kernel::MseLoss),
            "logistic" => Some(Kernel::LogisticLoss),
            _ => None,
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            Kernel::NegLogLikelihood | Kernel::Negate | Kernel::Scale(_) | Kernel::Map(_) => 1,
            Kernel::Layer { .. }
            | Kernel::RectifierLayer
            | Kernel::MseLoss
            | Kernel::LogisticLoss
            | Kernel::GaussDensity { .. }
            | Kernel::GanLosses
            | Kernel::Concat2
            | Kernel::Add
            | Kernel::Hadamard => 2,
            Kernel::BellmanError { .. } => 3,
            Kernel::VlbTerms { .. } => 4,
            Kernel::BellmanGradError { .. } => 5,
        }
    }

    pub fn out_ports(&self) -> usize {
        match self {
            Kernel::RectifierLayer | Kernel::VlbTerms { .. } | Kernel::GanLosses => 2,
            _ => 1,
        }
    }

    /// Differentiable input slots. Cloned bootstrap values are constants.
    pub fn diff_mask(&self) -> Vec<bool> {
        match self {
            Kernel::BellmanError { .. } => vec![true, false, true],
            Kernel::BellmanGradError { .. } => vec![true, false, true, true, true],
            _ => vec![true; self.arity()],
        }
    }

    fn check_gamma(gamma: f64) -> TensorResult<()> {
        if (0.0..1.0).contains(&gamma) {
            Ok(())
        } else {
            Err(TensorError::Domain {
                op: "bellman",
                detail: format!("discount γ must lie in [0,1), got {gamma}"),
            })
        }
    }

    /// Output shapes for the given input shapes.
    pub fn infer(&self, ins: &[Vec<usize>]) -> TensorResult<Vec<Vec<usize>>> {
        let op = self.tag();
        if ins.len() != self.arity() {
            return Err(TensorError::Domain {
                op: "arity",
                detail: format!("{op} takes {} inputs, got {}", self.arity(), ins.len()),
            });
        }
        let scalar = |s: &Vec<usize>| s == &vec![1];
        match self {
            Kernel::Layer { bias, .. } => match (&ins[0][..], &ins[1][..]) {
                (&[m, k], &[n]) if k == n + usize::from(*bias) => Ok(vec![vec![m]]),
                _ => Err(TensorError::ShapeMismatch {
                    op: "layer",
                    lhs: ins[0].clone(),
                    rhs: ins[1].clone(),
                }),
            },
            Kernel::RectifierLayer => match (&ins[0][..], &ins[1][..]) {
                (&[m, k], &[n]) if k == n => Ok(vec![vec![m], vec![n]]),
                _ => Err(TensorError::ShapeMismatch {
                    op: "rectifier_layer",
                    lhs: ins[0].clone(),
                    rhs: ins[1].clone(),
                }),
            },
            Kernel::MseLoss | Kernel::LogisticLoss => {
                if ins[0] == ins[1] && ins[0].len() == 1 {
                    Ok(vec![vec![1]])
                } else {
                    Err(TensorError::ShapeMismatch {
                        op,
                        lhs: ins[0].clone(),
                        rhs: ins[1].clone(),
                    })
                }
            }
            Kernel::NegLogLikelihood => {
                if scalar(&ins[0]) {
                    Ok(vec![vec![1]])
                } else {
                    Err(TensorError::BadShape {
                        op,
                        expected: "a scalar density value",
                        got: ins[0].clone(),
                    })
                }
            }
            Kernel::GaussDensity { stddev } => {
                if *stddev <= 0.0 {
                    return Err(TensorError::Domain {
                        op,
                        detail: format!("stddev must be positive, got {stddev}"),
                    });
                }
                if ins[0] == ins[1] && ins[0].len() == 1 {
                    Ok(vec![vec![1]])
                } else {
                    Err(TensorError::ShapeMismatch {
                        op,
                        lhs: ins[0].clone(),
                        rhs: ins[1].clone(),
                    })
                }
            }
            Kernel::VlbTerms { noise_stddev } => {
                if *noise_stddev <= 0.0 {
                    return Err(TensorError::Domain {
                        op,
                        detail: format!("noise stddev must be positive, got {noise_stddev}"),
                    });
                }
                if ins[0] == ins[2] && ins[0].len() == 1 && scalar(&ins[3]) {
                    Ok(vec![vec![1], vec![1]])
                } else {
                    Err(TensorError::ShapeMismatch {
                        op,
                        lhs: ins[0].clone(),
                        rhs: ins[2].clone(),
                    })
                }
            }
            Kernel::GanLosses => {
                if scalar(&ins[0]) && scalar(&ins[1]) {
                    Ok(vec![vec![1], vec![1]])
                } else {
                    Err(TensorError::ShapeMismatch {
                        op,
                        lhs: ins[0].clone(),
                        rhs: ins[1].clone(),
                    })
                }
            }
            Kernel::BellmanError { gamma } => {
                Self::check_gamma(*gamma)?;
                if ins.iter().all(scalar) {
                    Ok(vec![vec![1]])
                } else {
                    Err(TensorError::BadShape {
                        op,
                        expected: "scalar inputs",
                        got: ins.iter().find(|s| !scalar(s)).unwrap().clone(),
                    })
                }
            }
            Kernel::BellmanGradError { gamma } => {
                Self::check_gamma(*gamma)?;
                if ins[..3].iter().all(scalar) && ins[3] == ins[4] && ins[3].len() == 1 {
                    Ok(vec![vec![1]])
                } else {
                    Err(TensorError::ShapeMismatch {
                        op,
                        lhs: ins[3].clone(),
                        rhs: ins[4].clone(),
                    })
                }
            }
            Kernel::Concat2 => match (&ins[0][..], &ins[1][..]) {
                (&[m], &[n]) => Ok(vec![vec![m + n]]),
                _ => Err(TensorError::BadShape {
                    op,
                    expected: "vectors",
                    got: ins[0].clone(),
                }),
            },
            Kernel::Add | Kernel::Hadamard => {
                if ins[0] == ins[1] {
                    Ok(vec![ins[0].clone()])
                } else {
                    Err(TensorError::ShapeMismatch {
                        op,
                        lhs: ins[0].clone(),
                        rhs: ins[1].clone(),
                    })
                }
            }
            Kernel::Negate | Kernel::Scale(_) | Kernel::Map(_) => Ok(vec![ins[0].clone()]),
        }
    }

    pub fn forward(&self, ins: &[&Tensor]) -> TensorResult<Vec<Tensor>> {
        match self {
            Kernel::Layer { activation, bias } => {
                let pre = layer_preactivation(ins[0], ins[1], *bias)?;
                let out = match activation {
                    Activation::Identity => pre,
                    Activation::Relu => pre.relu(),
                    Activation::Sigmoid => pre.map(sigmoid),
                };
                Ok(vec![out])
            }
            Kernel::RectifierLayer => {
                let pre = ins[0].matvec(ins[1])?;
                let s = pre.relu();
                let tau = ins[0].tmatvec(&pre.heaviside())?;
                Ok(vec![s, tau])
            }
            Kernel::MseLoss => {
                let d = ins[0].sub(ins[1])?;
                let n = d.len() as f64;
                Ok(vec![Tensor::scalar(d.dot(&d)? / n)])
            }
            Kernel::LogisticLoss => {
                let (p, y) = (ins[0], ins[1]);
                let mut total = 0.0;
                for (pi, yi) in p.data().iter().zip(y.data()) {
                    if *pi <= 0.0 || *pi >= 1.0 {
                        return Err(TensorError::Domain {
                            op: "logistic_loss",
                            detail: format!("probability {pi} outside (0,1)"),
                        });
                    }
                    total -= yi * pi.ln() + (1.0 - yi) * (1.0 - pi).ln();
                }
                Ok(vec![Tensor::scalar(total / p.len() as f64)])
            }
            Kernel::NegLogLikelihood => {
                let q = ins[0].item()?;
                if q <= 0.0 {
                    return Err(TensorError::Domain {
                        op: "neg_log_likelihood",
                        detail: format!("density value must be positive, got {q}"),
                    });
                }
                Ok(vec![Tensor::scalar(-q.ln())])
            }
            Kernel::GaussDensity { stddev } => {
                let logq = crate::rng::gaussian_log_density(ins[1], ins[0], *stddev)?;
                Ok(vec![Tensor::scalar(logq.exp())])
            }
            Kernel::VlbTerms { noise_stddev } => {
                let (eps, z, q) = (ins[0], ins[2], ins[3].item()?);
                if q <= 0.0 {
                    return Err(TensorError::Domain {
                        op: "vlb_terms",
                        detail: format!("decoder density must be positive, got {q}"),
                    });
                }
                let zero = Tensor::zeros(eps.shape());
                let l1 = crate::rng::gaussian_log_density(eps, &zero, *noise_stddev)?
                    - crate::rng::gaussian_log_density(z, &zero, 1.0)?;
                Ok(vec![Tensor::scalar(l1), Tensor::scalar(-q.ln())])
            }
            Kernel::GanLosses => {
                let (dr, df) = (ins[0].item()?, ins[1].item()?);
                if !(0.0 < dr && dr < 1.0 && 0.0 < df && df < 1.0) {
                    return Err(TensorError::Domain {
                        op: "gan_losses",
                        detail: format!("curator outputs saturated: d_real={dr}, d_fake={df}"),
                    });
                }
                Ok(vec![Tensor::scalar(dr.ln()), Tensor::scalar((1.0 - df).ln())])
            }
            Kernel::BellmanError { gamma } => {
                let resid = ins[0].item()? + gamma * ins[1].item()? - ins[2].item()?;
                Ok(vec![Tensor::scalar(resid * resid)])
            }
            Kernel::BellmanGradError { gamma } => {
                let resid = ins[0].item()? + gamma * ins[1].item()? - ins[2].item()?
                    - ins[3].dot(ins[4])?;
                Ok(vec![Tensor::scalar(resid * resid)])
            }
            Kernel::Concat2 => Ok(vec![ins[0].concat(ins[1])?]),
            Kernel::Add => Ok(vec![ins[0].add(ins[1])?]),
            Kernel::Negate => Ok(vec![ins[0].negate()]),
            Kernel::Scale(c) => Ok(vec![ins[0].scale(*c)?]),
            Kernel::Hadamard => Ok(vec![ins[0].hadamard(ins[1])?]),
            Kernel::Map(op) => Ok(vec![match op {
                ElemOp::Relu => ins[0].relu(),
                ElemOp::Heaviside => ins[0].heaviside(),
                ElemOp::Ln => ins[0].ln()?,
                ElemOp::Exp => ins[0].exp()?,
                ElemOp::Sigmoid => ins[0].map(sigmoid),
            }]),
        }
    }

    /// Vector-Jacobian products: one adjoint per input slot, given the traced
    /// inputs/outputs and the adjoint of each output port. Non-differentiable
    /// slots receive zeros.
    pub fn vjp(&self, ins: &[&Tensor], outs: &[Tensor], douts: &[&Tensor]) -> TensorResult<Vec<Tensor>> {
        match self {
            Kernel::Layer { activation, bias } => {
                let pre = layer_preactivation(ins[0], ins[1], *bias)?;
                let gate = match activation {
                    Activation::Identity => Tensor::ones(pre.shape()),
                    Activation::Relu => pre.heaviside(),
                    Activation::Sigmoid => pre.map(|x| {
                        let s = sigmoid(x);
                        s * (1.0 - s)
                    }),
                };
                let dpre = douts[0].hadamard(&gate)?;
                let aug = augment(ins[1], *bias);
                let dtheta = dpre.outer_product(&aug)?;
                let dfull = ins[0].tmatvec(&dpre)?;
                let ds = Tensor::vector(dfull.data()[..ins[1].len()].to_vec());
                Ok(vec![dtheta, ds])
            }
            Kernel::RectifierLayer => {
                let pre = ins[0].matvec(ins[1])?;
                let ind = pre.heaviside();
                let gated = douts[0].hadamard(&ind)?;
                let dtheta = gated
                    .outer_product(ins[1])?
                    .add(&ind.outer_product(douts[1])?)?;
                let ds = ins[0].tmatvec(&gated)?;
                Ok(vec![dtheta, ds])
            }
            Kernel::MseLoss => {
                let n = ins[0].len() as f64;
                let g = ins[0].sub(ins[1])?.scale(2.0 / n * douts[0].item()?)?;
                Ok(vec![g.clone(), g.negate()])
            }
            Kernel::LogisticLoss => {
                let (p, y) = (ins[0], ins[1]);
                let n = p.len() as f64;
                let c = douts[0].item()? / n;
                let dp = Tensor::new(
                    p.shape().to_vec(),
                    p.data()
                        .iter()
                        .zip(y.data())
                        .map(|(pi, yi)| c * (-yi / pi + (1.0 - yi) / (1.0 - pi)))
                        .collect(),
                )?;
                let dy = Tensor::new(
                    p.shape().to_vec(),
                    p.data().iter().map(|pi| c * ((1.0 - pi).ln() - pi.ln())).collect(),
                )?;
                Ok(vec![dp, dy])
            }
            Kernel::NegLogLikelihood => {
                let q = ins[0].item()?;
                Ok(vec![Tensor::scalar(-douts[0].item()? / q)])
            }
            Kernel::GaussDensity { stddev } => {
                let q = outs[0].item()?;
                let c = douts[0].item()? * q / (stddev * stddev);
                let dmean = ins[1].sub(ins[0])?.scale(c)?;
                Ok(vec![dmean.clone(), dmean.negate()])
            }
            Kernel::VlbTerms { noise_stddev } => {
                let d1 = douts[0].item()?;
                let deps = ins[0].scale(-d1 / (noise_stddev * noise_stddev))?;
                let dz = ins[2].scale(d1)?;
                let dq = Tensor::scalar(-douts[1].item()? / ins[3].item()?);
                Ok(vec![deps, Tensor::zeros(ins[1].shape()), dz, dq])
            }
            Kernel::GanLosses => {
                let (dr, df) = (ins[0].item()?, ins[1].item()?);
                Ok(vec![
                    Tensor::scalar(douts[0].item()? / dr),
                    Tensor::scalar(-douts[1].item()? / (1.0 - df)),
                ])
            }
            Kernel::BellmanError { gamma } => {
                let resid = ins[0].item()? + gamma * ins[1].item()? - ins[2].item()?;
                let c = 2.0 * resid * douts[0].item()?;
                Ok(vec![
                    Tensor::scalar(c),
                    Tensor::zeros(&[1]),
                    Tensor::scalar(-c),
                ])
            }
            Kernel::BellmanGradError { gamma } => {
                let resid = ins[0].item()? + gamma * ins[1].item()? - ins[2].item()?
                    - ins[3].dot(ins[4])?;
                let c = 2.0 * resid * douts[0].item()?;
                Ok(vec![
                    Tensor::scalar(c),
                    Tensor::zeros(&[1]),
                    Tensor::scalar(-c),
                    ins[4].scale(-c)?,
                    ins[3].scale(-c)?,
                ])
            }
            Kernel::Concat2 => {
                let m = ins[0].len();
                let du = Tensor::vector(douts[0].data()[..m].to_vec());
                let dv = Tensor::vector(douts[0].data()[m..].to_vec());
                Ok(vec![du, dv])
            }
            Kernel::Add => Ok(vec![douts[0].clone(), douts[0].clone()]),
            Kernel::Negate => Ok(vec![douts[0].negate()]),
            Kernel::Scale(c) => Ok(vec![douts[0].scale(*c)?]),
            Kernel::Hadamard => Ok(vec![
                douts[0].hadamard(ins[1])?,
                douts[0].hadamard(ins[0])?,
            ]),
            Kernel::Map(op) => {
                let gate = match op {
                    ElemOp::Relu => ins[0].heaviside(),
                    ElemOp::Heaviside => Tensor::zeros(ins[0].shape()),
                    ElemOp::Ln => ins[0].map(|x| 1.0 / x),
                    ElemOp::Exp => outs[0].clone(),
                    ElemOp::Sigmoid => ins[0].map(|x| {
                        let s = sigmoid(x);
                        s * (1.0 - s)
                    }),
                };
                Ok(vec![douts[0].hadamard(&gate)?])
            }
        }
    }

    /// Distance of the nearest input to a non-differentiability kink, when
    /// the kernel has one. Gradient checks resample below a margin.
    pub fn kink_margin(&self, ins: &[&Tensor]) -> TensorResult<Option<f64>> {
        let min_abs = |t: &Tensor| t.data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        match self {
            Kernel::Layer {
                activation: Activation::Relu,
                bias,
            } => Ok(Some(min_abs(&layer_preactivation(ins[0], ins[1], *bias)?))),
            Kernel::RectifierLayer => Ok(Some(min_abs(&ins[0].matvec(ins[1])?))),
            Kernel::Map(ElemOp::Relu) | Kernel::Map(ElemOp::Heaviside) => Ok(Some(min_abs(ins[0]))),
            _ => Ok(None),
        }
    }
}

fn augment(s: &Tensor, bias: bool) -> Tensor {
    if bias {
        let mut data = s.data().to_vec();
        data.push(1.0);
        Tensor::vector(data)
    } else {
        s.clone()
    }
}

fn layer_preactivation(theta: &Tensor, s: &Tensor, bias: bool) -> TensorResult<Tensor> {
    theta.matvec(&augment(s, bias))
}

/// The "*" building block: given a kernel, its traced inputs/outputs and the
/// adjoint arriving at each output, produce the adjoint for every input slot.
pub fn chain_combine(
    kernel: &Kernel,
    ins: &[&Tensor],
    outs: &[Tensor],
    douts: &[&Tensor],
) -> TensorResult<Vec<Tensor>> {
    if douts.len() != kernel.out_ports() {
        return Err(TensorError::Domain {
            op: "chain_combine",
            detail: format!(
                "{} has {} output ports, got {} adjoints",
                kernel.tag(),
                kernel.out_ports(),
                douts.len()
            ),
        });
    }
    for (o, d) in outs.iter().zip(douts) {
        if o.shape() != d.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "chain_combine",
                lhs: o.shape().to_vec(),
                rhs: d.shape().to_vec(),
            });
        }
    }
    kernel.vjp(ins, outs, douts)
}

/// Locally computed gradient estimate term: `s_prev ⊗ (ind_curr ⊙ τ_next)`.
///
/// At the last layer `τ_next` is the all-ones vector; at the first layer
/// `s_prev` is Nature's input.
pub fn kick_compute(s_prev: &Tensor, ind_curr: &Tensor, tau_next: &Tensor) -> TensorResult<Tensor> {
    s_prev.outer_product(&ind_curr.hadamard(tau_next)?)
}
