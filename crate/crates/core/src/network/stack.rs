use ndarray::{Array1, Array2, ArrayView2, Zip};
use rand::Rng;

use super::layers::{softmax_rows, BatchNorm, BnCache, Linear};
use super::Real;
use crate::error::{Error, Result};

/// Output nonlinearity of a stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Linear,
    Softmax,
}

/// `linear → [batch-norm] → ReLU → [dropout]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenLayer<F> {
    pub linear: Linear<F>,
    /// `None` replaces batch normalization with the identity.
    pub bn: Option<BatchNorm<F>>,
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenTrace<F> {
    pub input: Array2<F>,
    /// Activations after normalization, before the ReLU.
    pub pre_activation: Array2<F>,
    pub bn: Option<BnCache<F>>,
    /// Inverted-dropout multipliers (0 or 1/(1-p)).
    pub mask: Option<Array2<F>>,
}

/// Everything a train-mode forward pass caches for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct StackTrace<F> {
    pub hidden: Vec<HiddenTrace<F>>,
    pub head_input: Array2<F>,
    /// Head output: softmax probabilities or the linear regression output.
    pub output: Array2<F>,
}

impl<F> StackTrace<F> {
    pub fn batch_size(&self) -> usize {
        self.head_input.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
    pub gamma: Option<Array1<F>>,
    pub beta: Option<Array1<F>>,
}

/// Gradients for every trainable tensor of a [`Stack`], in the same order as
/// [`Stack::tensors`].
#[derive(Debug, Clone, PartialEq)]
pub struct StackGrads<F> {
    pub hidden: Vec<LayerGrads<F>>,
    pub out_weight: Array2<F>,
    pub out_bias: Array1<F>,
}

impl<F: Real> StackGrads<F> {
    pub fn tensors(&self) -> Vec<&[F]> {
        let mut out = Vec::new();
        for l in &self.hidden {
            out.push(l.weight.as_slice().unwrap());
            out.push(l.bias.as_slice().unwrap());
            if let (Some(g), Some(b)) = (&l.gamma, &l.beta) {
                out.push(g.as_slice().unwrap());
                out.push(b.as_slice().unwrap());
            }
        }
        out.push(self.out_weight.as_slice().unwrap());
        out.push(self.out_bias.as_slice().unwrap());
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> F {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .fold(F::zero(), |m, v| m.max(v.abs()))
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v.to_f64().unwrap().powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Options shared by every hidden layer of a stack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerOptions {
    pub batchnorm: bool,
    pub gamma_init: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    pub dropout: f64,
}

/// A feed-forward stack of hidden layers and an output head.
#[derive(Debug, Clone, PartialEq)]
pub struct Stack<F> {
    pub name: String,
    pub hidden: Vec<HiddenLayer<F>>,
    pub output: Linear<F>,
    pub head: Head,
}

fn check_finite<F: Real>(a: &Array2<F>, location: impl FnOnce() -> String) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::numeric(location(), "non-finite activation"))
    }
}

impl<F: Real> Stack<F> {
    pub fn new<R: Rng + ?Sized>(
        name: impl Into<String>,
        input_dim: usize,
        hidden_dims: &[usize],
        output_dim: usize,
        head: Head,
        opts: LayerOptions,
        rng: &mut R,
    ) -> Self {
        let mut fan_in = input_dim;
        let hidden = hidden_dims
            .iter()
            .map(|&width| {
                let linear = Linear::new(fan_in, width, rng);
                fan_in = width;
                HiddenLayer {
                    linear,
                    bn: opts
                        .batchnorm
                        .then(|| BatchNorm::new(width, opts.gamma_init, opts.bn_momentum, opts.bn_eps)),
                    dropout: opts.dropout,
                }
            })
            .collect();
        Stack {
            name: name.into(),
            hidden,
            output: Linear::new(fan_in, output_dim, rng),
            head,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden
            .first()
            .map(|h| h.linear.in_dim())
            .unwrap_or_else(|| self.output.in_dim())
    }

    pub fn output_dim(&self) -> usize {
        self.output.out_dim()
    }

    fn apply_head(&self, z: Array2<F>) -> Array2<F> {
        match self.head {
            Head::Linear => z,
            Head::Softmax => softmax_rows(z.view()),
        }
    }

    fn check_input(&self, x: ArrayView2<F>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::invalid(format!(
                "{}: input has {} columns, expected {}",
                self.name,
                x.ncols(),
                self.input_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("{}: non-finite input", self.name)));
        }
        Ok(())
    }

    /// Train-mode pass: batch statistics, running-stat updates, fresh
    /// dropout masks drawn from `rng`.
    pub fn forward_train<R: Rng + ?Sized>(
        &mut self,
        x: ArrayView2<F>,
        rng: &mut R,
    ) -> Result<(Array2<F>, StackTrace<F>)> {
        self.check_input(x)?;
        let name = self.name.clone();
        let mut traces = Vec::with_capacity(self.hidden.len());
        let mut cur = x.to_owned();
        for (i, layer) in self.hidden.iter_mut().enumerate() {
            let z = layer.linear.forward(cur.view());
            let (pre, cache) = match layer.bn.as_mut() {
                Some(bn) => {
                    let (y, c) = bn.forward_train(z.view())?;
                    (y, Some(c))
                }
                None => (z, None),
            };
            check_finite(&pre, || format!("{name}.hidden[{i}]"))?;
            let mut act = pre.mapv(|v| v.max(F::zero()));
            let mask = (layer.dropout > 0.0).then(|| {
                let p = layer.dropout;
                let keep = F::from_f64_lossy(1.0 / (1.0 - p));
                Array2::from_shape_simple_fn(act.dim(), || {
                    if rng.random::<f64>() < p {
                        F::zero()
                    } else {
                        keep
                    }
                })
            });
            if let Some(m) = &mask {
                act *= m;
            }
            traces.push(HiddenTrace {
                input: std::mem::replace(&mut cur, act),
                pre_activation: pre,
                bn: cache,
                mask,
            });
        }
        let z = self.output.forward(cur.view());
        check_finite(&z, || format!("{name}.output"))?;
        let out = self.apply_head(z);
        Ok((
            out.clone(),
            StackTrace {
                hidden: traces,
                head_input: cur,
                output: out,
            },
        ))
    }

    /// Inference-mode pass: running statistics, no dropout, no state change.
    pub fn forward_inference(&self, x: ArrayView2<F>) -> Result<Array2<F>> {
        self.check_input(x)?;
        let mut cur = x.to_owned();
        for (i, layer) in self.hidden.iter().enumerate() {
            let z = layer.linear.forward(cur.view());
            let mut pre = match &layer.bn {
                Some(bn) => bn.forward_inference(z.view()),
                None => z,
            };
            check_finite(&pre, || format!("{}.hidden[{i}]", self.name))?;
            pre.mapv_inplace(|v| v.max(F::zero()));
            cur = pre;
        }
        let z = self.output.forward(cur.view());
        check_finite(&z, || format!("{}.output", self.name))?;
        Ok(self.apply_head(z))
    }

    /// Back-propagate `d_head`, the loss gradient with respect to the head's
    /// pre-activation (the regression output for a linear head, the logits
    /// for a softmax head). Returns parameter gradients and, if requested,
    /// the gradient with respect to the stack input.
    pub fn backward(
        &self,
        trace: &StackTrace<F>,
        d_head: ArrayView2<F>,
        need_input_grad: bool,
    ) -> Result<(StackGrads<F>, Option<Array2<F>>)> {
        if trace.hidden.len() != self.hidden.len()
            || d_head.dim() != (trace.batch_size(), self.output_dim())
        {
            return Err(Error::invalid(format!(
                "{}: trace does not match this stack",
                self.name
            )));
        }
        let need_dx_out = need_input_grad || !self.hidden.is_empty();
        let (out_weight, out_bias, mut delta) =
            self.output
                .backward(trace.head_input.view(), d_head, need_dx_out);
        let mut hidden = Vec::with_capacity(self.hidden.len());
        for (i, (layer, t)) in self.hidden.iter().zip(&trace.hidden).enumerate().rev() {
            let mut d = delta.take().expect("requested above");
            if let Some(m) = &t.mask {
                d *= m;
            }
            Zip::from(&mut d)
                .and(&t.pre_activation)
                .for_each(|g, &p| {
                    if p <= F::zero() {
                        *g = F::zero()
                    }
                });
            let (d, gamma, beta) = match (&layer.bn, &t.bn) {
                (Some(bn), Some(cache)) => {
                    let (dx, dg, db) = bn.backward(d.view(), cache)?;
                    (dx, Some(dg), Some(db))
                }
                (None, None) => (d, None, None),
                _ => {
                    return Err(Error::invalid(format!(
                        "{}.hidden[{i}]: batch-norm trace mismatch",
                        self.name
                    )))
                }
            };
            let (weight, bias, dx) = layer
                .linear
                .backward(t.input.view(), d.view(), need_input_grad || i > 0);
            delta = dx;
            hidden.push(LayerGrads {
                weight,
                bias,
                gamma,
                beta,
            });
        }
        hidden.reverse();
        Ok((
            StackGrads {
                hidden,
                out_weight,
                out_bias,
            },
            delta,
        ))
    }

    /// Trainable tensors in a fixed order: per hidden layer `W, b, [γ, β]`,
    /// then the output `W, b`.
    pub fn tensors(&self) -> Vec<&[F]> {
        let mut out = Vec::new();
        for l in &self.hidden {
            out.push(l.linear.weight.as_slice().unwrap());
            out.push(l.linear.bias.as_slice().unwrap());
            if let Some(bn) = &l.bn {
                out.push(bn.gamma.as_slice().unwrap());
                out.push(bn.beta.as_slice().unwrap());
            }
        }
        out.push(self.output.weight.as_slice().unwrap());
        out.push(self.output.bias.as_slice().unwrap());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut out = Vec::new();
        for l in &mut self.hidden {
            out.push(l.linear.weight.as_slice_mut().unwrap());
            out.push(l.linear.bias.as_slice_mut().unwrap());
            if let Some(bn) = &mut l.bn {
                out.push(bn.gamma.as_slice_mut().unwrap());
                out.push(bn.beta.as_slice_mut().unwrap());
            }
        }
        out.push(self.output.weight.as_slice_mut().unwrap());
        out.push(self.output.bias.as_slice_mut().unwrap());
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `θ ← θ − lr · (g + λ·g_extra)`; with no extra term, `θ ← θ − lr · g`.
    pub fn sgd_update(&mut self, lr: F, grads: &StackGrads<F>, extra: Option<(F, &StackGrads<F>)>) {
        let g = grads.tensors();
        match extra {
            Some((lambda, e)) => {
                let e = e.tensors();
                for ((p, g), e) in self.tensors_mut().into_iter().zip(g).zip(e) {
                    for ((p, &g), &e) in p.iter_mut().zip(g).zip(e) {
                        *p = *p - lr * (g + lambda * e);
                    }
                }
            }
            None => {
                for (p, g) in self.tensors_mut().into_iter().zip(g) {
                    for (p, &g) in p.iter_mut().zip(g) {
                        *p = *p - lr * g;
                    }
                }
            }
        }
    }

    /// Running batch-norm statistics, concatenated.
    pub fn running_stats(&self) -> Vec<F> {
        self.hidden
            .iter()
            .filter_map(|l| l.bn.as_ref())
            .flat_map(|bn| bn.running_mean.iter().chain(bn.running_var.iter()).copied())
            .collect()
    }

    pub fn has_batchnorm(&self) -> bool {
        self.hidden.iter().any(|l| l.bn.is_some())
    }

    pub fn cast<G: Real>(&self) -> Stack<G> {
        let c1 = |a: &Array1<F>| a.mapv(|v| G::from_f64_lossy(v.to_f64().unwrap()));
        let c2 = |a: &Array2<F>| a.mapv(|v| G::from_f64_lossy(v.to_f64().unwrap()));
        let lin = |l: &Linear<F>| Linear {
            weight: c2(&l.weight),
            bias: c1(&l.bias),
        };
        Stack {
            name: self.name.clone(),
            hidden: self
                .hidden
                .iter()
                .map(|h| HiddenLayer {
                    linear: lin(&h.linear),
                    bn: h.bn.as_ref().map(|bn| BatchNorm {
                        gamma: c1(&bn.gamma),
                        beta: c1(&bn.beta),
                        running_mean: c1(&bn.running_mean),
                        running_var: c1(&bn.running_var),
                        momentum: G::from_f64_lossy(bn.momentum.to_f64().unwrap()),
                        eps: G::from_f64_lossy(bn.eps.to_f64().unwrap()),
                    }),
                    dropout: h.dropout,
                })
                .collect(),
            output: lin(&self.output),
            head: self.head,
        }
    }
}
