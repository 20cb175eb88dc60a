use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{mse_grad, nll_grad_logits};
use super::stack::{Head, LayerOptions, Stack, StackGrads, StackTrace};
use super::{Mode, Real};
use crate::error::{Error, Result};
use crate::{INPUT_DIM, TARGET_DIM};

/// Topology and layer options of the networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub input_dim: usize,
    pub enhanced_dim: usize,
    pub num_classes: usize,
    pub se_hidden: Vec<usize>,
    pub sr_hidden: Vec<usize>,
    /// Hidden widths of the single classification network; defaults to the
    /// enhancement widths followed by the recognition widths.
    pub single_hidden: Option<Vec<usize>>,
    pub batchnorm: bool,
    pub gamma_init: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    pub dropout: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            input_dim: INPUT_DIM,
            enhanced_dim: TARGET_DIM,
            num_classes: 20,
            se_hidden: vec![256; 3],
            sr_hidden: vec![256; 3],
            single_hidden: None,
            batchnorm: true,
            gamma_init: 0.1,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
            dropout: 0.15,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.enhanced_dim == 0 || self.num_classes < 2 {
            return Err(Error::Config("network dimensions must be positive, classes >= 2".into()));
        }
        if self.se_hidden.iter().chain(&self.sr_hidden).any(|&w| w == 0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        if !(self.bn_eps > 0.0) || !(self.bn_momentum > 0.0 && self.bn_momentum < 1.0) {
            return Err(Error::Config("bn_eps must be > 0 and bn_momentum in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn layer_options(&self) -> LayerOptions {
        LayerOptions {
            batchnorm: self.batchnorm,
            gamma_init: self.gamma_init,
            bn_momentum: self.bn_momentum,
            bn_eps: self.bn_eps,
            dropout: self.dropout,
        }
    }

    pub fn single_hidden(&self) -> Vec<usize> {
        self.single_hidden
            .clone()
            .unwrap_or_else(|| self.se_hidden.iter().chain(&self.sr_hidden).copied().collect())
    }

    pub fn build_se<F: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> Stack<F> {
        Stack::new(
            "se",
            self.input_dim,
            &self.se_hidden,
            self.enhanced_dim,
            Head::Linear,
            self.layer_options(),
            rng,
        )
    }

    pub fn build_sr<F: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> Stack<F> {
        Stack::new(
            "sr",
            self.enhanced_dim,
            &self.sr_hidden,
            self.num_classes,
            Head::Softmax,
            self.layer_options(),
            rng,
        )
    }

    pub fn build_single<F: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> Stack<F> {
        Stack::new(
            "single",
            self.input_dim,
            &self.single_hidden(),
            self.num_classes,
            Head::Softmax,
            self.layer_options(),
            rng,
        )
    }
}

/// Enhancement stack feeding a recognition stack.
#[derive(Debug, Clone, PartialEq)]
pub struct JointNetwork<F> {
    pub se: Stack<F>,
    pub sr: Stack<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointTrace<F> {
    pub se: StackTrace<F>,
    pub sr: StackTrace<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointForward<F> {
    pub x_enh: Array2<F>,
    pub y_pred: Array2<F>,
    /// Present only for train-mode passes.
    pub trace: Option<JointTrace<F>>,
}

/// Per-parameter gradients of one minibatch, kept separate so the loss
/// weighting can be chosen at update time.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet<F> {
    /// MSE gradient of the enhancement parameters.
    pub se_from_mse: StackGrads<F>,
    /// NLL gradient of the enhancement parameters, back-propagated through
    /// the recognition stack.
    pub se_from_nll: StackGrads<F>,
    /// NLL gradient of the recognition parameters.
    pub sr: StackGrads<F>,
}

impl<F: Real> GradientSet<F> {
    pub fn is_finite(&self) -> bool {
        self.se_from_mse.is_finite() && self.se_from_nll.is_finite() && self.sr.is_finite()
    }
}

impl<F: Real> JointNetwork<F> {
    pub fn new<R: Rng + ?Sized>(cfg: &NetConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let se = cfg.build_se(rng);
        let sr = cfg.build_sr(rng);
        Self::from_parts(se, sr)
    }

    pub fn from_parts(se: Stack<F>, sr: Stack<F>) -> Result<Self> {
        if se.head != Head::Linear || sr.head != Head::Softmax {
            return Err(Error::invalid("joint network needs a linear SE head and a softmax SR head"));
        }
        if se.output_dim() != sr.input_dim() {
            return Err(Error::invalid(format!(
                "SE output width {} does not match SR input width {}",
                se.output_dim(),
                sr.input_dim()
            )));
        }
        Ok(JointNetwork { se, sr })
    }

    pub fn forward_train<R: Rng + ?Sized>(
        &mut self,
        x_noise: ArrayView2<F>,
        rng: &mut R,
    ) -> Result<(Array2<F>, Array2<F>, JointTrace<F>)> {
        let (x_enh, se) = self.se.forward_train(x_noise, rng)?;
        let (y_pred, sr) = self.sr.forward_train(x_enh.view(), rng)?;
        Ok((x_enh, y_pred, JointTrace { se, sr }))
    }

    pub fn forward_inference(&self, x_noise: ArrayView2<F>) -> Result<(Array2<F>, Array2<F>)> {
        let x_enh = self.se.forward_inference(x_noise)?;
        let y_pred = self.sr.forward_inference(x_enh.view())?;
        Ok((x_enh, y_pred))
    }

    pub fn forward<R: Rng + ?Sized>(
        &mut self,
        x_noise: ArrayView2<F>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<JointForward<F>> {
        match mode {
            Mode::Train => {
                let (x_enh, y_pred, trace) = self.forward_train(x_noise, rng)?;
                Ok(JointForward {
                    x_enh,
                    y_pred,
                    trace: Some(trace),
                })
            }
            Mode::Inference => {
                let (x_enh, y_pred) = self.forward_inference(x_noise)?;
                Ok(JointForward {
                    x_enh,
                    y_pred,
                    trace: None,
                })
            }
        }
    }

    /// One forward trace, two backward sweeps: the MSE gradient through the
    /// enhancement stack, and the NLL gradient through the recognition stack
    /// and on through the enhancement stack. Dropout masks and batch
    /// statistics come from the shared trace.
    pub fn backward(
        &self,
        trace: &JointTrace<F>,
        x_clean: ArrayView2<F>,
        labels: &[usize],
    ) -> Result<GradientSet<F>> {
        if x_clean.dim() != trace.se.output.dim() {
            return Err(Error::invalid(format!(
                "clean target shape {:?} does not match enhanced output {:?}",
                x_clean.dim(),
                trace.se.output.dim()
            )));
        }
        let d_enh = mse_grad(trace.se.output.view(), x_clean);
        let (se_from_mse, _) = self.se.backward(&trace.se, d_enh.view(), false)?;
        let d_logits = nll_grad_logits(trace.sr.output.view(), labels)?;
        let (sr, d_seam) = self.sr.backward(&trace.sr, d_logits.view(), true)?;
        let d_seam = d_seam.expect("requested input gradient");
        let (se_from_nll, _) = self.se.backward(&trace.se, d_seam.view(), false)?;
        Ok(GradientSet {
            se_from_mse,
            se_from_nll,
            sr,
        })
    }
}

/// A trained model of any system mode.
#[derive(Debug, Clone, PartialEq)]
pub enum Model<F> {
    /// Enhancement + recognition cascade (joint, or either staged baseline).
    Joint(JointNetwork<F>),
    /// One classification stack on noisy input.
    Single(Stack<F>),
}

impl<F: Real> Model<F> {
    /// Inference-mode forward: `(x_enh, y_pred)`; `x_enh` is `None` for the
    /// single network.
    pub fn predict(&self, x_noise: ArrayView2<F>) -> Result<(Option<Array2<F>>, Array2<F>)> {
        match self {
            Model::Joint(net) => {
                let (e, p) = net.forward_inference(x_noise)?;
                Ok((Some(e), p))
            }
            Model::Single(s) => Ok((None, s.forward_inference(x_noise)?)),
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            Model::Joint(n) => n.sr.output_dim(),
            Model::Single(s) => s.output_dim(),
        }
    }

    pub fn stacks(&self) -> Vec<&Stack<F>> {
        match self {
            Model::Joint(n) => vec![&n.se, &n.sr],
            Model::Single(s) => vec![s],
        }
    }

    pub fn num_params(&self) -> usize {
        self.stacks().iter().map(|s| s.num_params()).sum()
    }

    /// FNV-1a over every parameter and running statistic.
    pub fn checksum(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for s in self.stacks() {
            let running = s.running_stats();
            for t in s.tensors().into_iter().chain(std::iter::once(running.as_slice())) {
                for v in t {
                    for b in v.to_f64().unwrap().to_le_bytes() {
                        h ^= b as u64;
                        h = h.wrapping_mul(0x0100_0000_01b3);
                    }
                }
            }
        }
        h
    }
}
