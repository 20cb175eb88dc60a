//! Versioned binary checkpoint container.
//!
//! Layout (all little-endian): `"JBCK"`, `u32` version, then the model
//! (kind tag and stacks with topology, parameters and running statistics),
//! optional input/target normalization statistics, the training RNG state
//! and the scheduler state. Parameters are stored as `f64`, so an `f32`
//! model round-trips exactly.

use std::path::Path;

use ndarray::{Array1, Array2};

use super::joint::{JointNetwork, Model};
use super::layers::{BatchNorm, Linear};
use super::stack::{Head, HiddenLayer, Stack};
use super::Real;
use crate::error::{Error, Result};
use crate::features::NormStats;
use crate::io::{read_file, write_atomic};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"JBCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Position of a ChaCha stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &rand_chacha::ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> rand_chacha::ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Learning-rate scheduler and early-stopping state after `epochs_done`
/// epochs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainerState {
    pub epochs_done: usize,
    pub lr: f64,
    pub best_metric: f64,
    pub best_epoch: usize,
    pub prev_metric: f64,
    pub stalled_epochs: usize,
    pub stopped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<F> {
    pub model: Model<F>,
    pub input_norm: Option<NormStats>,
    pub target_norm: Option<NormStats>,
    pub rng: RngState,
    pub trainer: TrainerState,
}

struct Enc(Vec<u8>);

impl Enc {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn vals<'a, F: Real>(&mut self, v: impl IntoIterator<Item = &'a F>) {
        for x in v {
            self.f64(x.to_f64().unwrap());
        }
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u32(v.len() as u32);
        v.iter().for_each(|&x| self.f64(x));
    }
}

struct Dec<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Dec<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::format(self.path, "truncated checkpoint"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn size(&mut self) -> Result<usize> {
        let n = self.u32()? as usize;
        if n > self.buf.len() {
            return Err(Error::format(self.path, "implausible length field"));
        }
        Ok(n)
    }
    fn str(&mut self) -> Result<String> {
        let n = self.size()?;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::format(self.path, "non-utf8 string"))
    }
    fn vec<F: Real>(&mut self, n: usize) -> Result<Vec<F>> {
        (0..n).map(|_| Ok(F::from_f64_lossy(self.f64()?))).collect()
    }
    fn arr1<F: Real>(&mut self, n: usize) -> Result<Array1<F>> {
        Ok(Array1::from(self.vec(n)?))
    }
    fn arr2<F: Real>(&mut self, rows: usize, cols: usize) -> Result<Array2<F>> {
        Ok(Array2::from_shape_vec((rows, cols), self.vec(rows * cols)?).unwrap())
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.size()?;
        (0..n).map(|_| self.f64()).collect()
    }
}

fn put_stack<F: Real>(e: &mut Enc, s: &Stack<F>) {
    e.str(&s.name);
    e.u8(match s.head {
        Head::Linear => 0,
        Head::Softmax => 1,
    });
    e.u32(s.input_dim() as u32);
    e.u32(s.hidden.len() as u32);
    for h in &s.hidden {
        e.u32(h.linear.out_dim() as u32);
        e.f64(h.dropout);
        e.vals(h.linear.weight.iter());
        e.vals(h.linear.bias.iter());
        match &h.bn {
            Some(bn) => {
                e.u8(1);
                e.f64(bn.momentum.to_f64().unwrap());
                e.f64(bn.eps.to_f64().unwrap());
                e.vals(bn.gamma.iter());
                e.vals(bn.beta.iter());
                e.vals(bn.running_mean.iter());
                e.vals(bn.running_var.iter());
            }
            None => e.u8(0),
        }
    }
    e.u32(s.output_dim() as u32);
    e.vals(s.output.weight.iter());
    e.vals(s.output.bias.iter());
}

fn get_stack<F: Real>(d: &mut Dec) -> Result<Stack<F>> {
    let name = d.str()?;
    let head = match d.u8()? {
        0 => Head::Linear,
        1 => Head::Softmax,
        t => return Err(Error::format(d.path, format!("unknown head tag {t}"))),
    };
    let mut fan_in = d.size()?;
    let layers = d.size()?;
    let mut hidden = Vec::with_capacity(layers);
    for _ in 0..layers {
        let width = d.size()?;
        let dropout = d.f64()?;
        let weight = d.arr2(width, fan_in)?;
        let bias = d.arr1(width)?;
        let bn = match d.u8()? {
            0 => None,
            1 => {
                let momentum = F::from_f64_lossy(d.f64()?);
                let eps = F::from_f64_lossy(d.f64()?);
                Some(BatchNorm {
                    gamma: d.arr1(width)?,
                    beta: d.arr1(width)?,
                    running_mean: d.arr1(width)?,
                    running_var: d.arr1(width)?,
                    momentum,
                    eps,
                })
            }
            t => return Err(Error::format(d.path, format!("bad batch-norm flag {t}"))),
        };
        hidden.push(HiddenLayer {
            linear: Linear { weight, bias },
            bn,
            dropout,
        });
        fan_in = width;
    }
    let out = d.size()?;
    let output = Linear {
        weight: d.arr2(out, fan_in)?,
        bias: d.arr1(out)?,
    };
    Ok(Stack {
        name,
        hidden,
        output,
        head,
    })
}

fn put_norm(e: &mut Enc, n: &Option<NormStats>) {
    match n {
        Some(n) => {
            e.u8(1);
            e.f64s(&n.mean);
            e.f64s(&n.std);
        }
        None => e.u8(0),
    }
}

fn get_norm(d: &mut Dec) -> Result<Option<NormStats>> {
    Ok(match d.u8()? {
        0 => None,
        _ => Some(NormStats {
            mean: d.f64s()?,
            std: d.f64s()?,
        }),
    })
}

impl<F: Real> Checkpoint<F> {
    pub fn new(model: Model<F>) -> Self {
        Checkpoint {
            model,
            input_norm: None,
            target_norm: None,
            rng: RngState::default(),
            trainer: TrainerState::default(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Enc(Vec::new());
        e.0.extend_from_slice(&CHECKPOINT_MAGIC);
        e.u32(CHECKPOINT_VERSION);
        e.u8(std::mem::size_of::<F>() as u8);
        match &self.model {
            Model::Joint(n) => {
                e.u8(0);
                put_stack(&mut e, &n.se);
                put_stack(&mut e, &n.sr);
            }
            Model::Single(s) => {
                e.u8(1);
                put_stack(&mut e, s);
            }
        }
        put_norm(&mut e, &self.input_norm);
        put_norm(&mut e, &self.target_norm);
        e.0.extend_from_slice(&self.rng.seed);
        e.u64(self.rng.stream);
        e.u64(self.rng.word_pos as u64);
        e.u64((self.rng.word_pos >> 64) as u64);
        let t = &self.trainer;
        e.u64(t.epochs_done as u64);
        e.f64(t.lr);
        e.f64(t.best_metric);
        e.u64(t.best_epoch as u64);
        e.f64(t.prev_metric);
        e.u64(t.stalled_epochs as u64);
        e.u8(t.stopped as u8);
        e.0
    }

    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self> {
        let mut d = Dec {
            buf: bytes,
            pos: 0,
            path,
        };
        if d.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::format(path, "not a checkpoint"));
        }
        let version = d.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
        }
        let _elem = d.u8()?;
        let model = match d.u8()? {
            0 => {
                let se = get_stack(&mut d)?;
                let sr = get_stack(&mut d)?;
                Model::Joint(JointNetwork::from_parts(se, sr)?)
            }
            1 => Model::Single(get_stack(&mut d)?),
            t => return Err(Error::format(path, format!("unknown model tag {t}"))),
        };
        let input_norm = get_norm(&mut d)?;
        let target_norm = get_norm(&mut d)?;
        let seed: [u8; 32] = d.take(32)?.try_into().unwrap();
        let stream = d.u64()?;
        let word_pos = d.u64()? as u128 | ((d.u64()? as u128) << 64);
        let trainer = TrainerState {
            epochs_done: d.u64()? as usize,
            lr: d.f64()?,
            best_metric: d.f64()?,
            best_epoch: d.u64()? as usize,
            prev_metric: d.f64()?,
            stalled_epochs: d.u64()? as usize,
            stopped: d.u8()? != 0,
        };
        if d.pos != bytes.len() {
            return Err(Error::format(path, "trailing bytes after checkpoint"));
        }
        Ok(Checkpoint {
            model,
            input_norm,
            target_norm,
            rng: RngState {
                seed,
                stream,
                word_pos,
            },
            trainer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(path, &read_file(path)?)
    }
}
