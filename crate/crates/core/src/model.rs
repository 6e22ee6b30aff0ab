//! Recurrent generator and critic over node sequences.
//!
//! The generator maps a latent code `z` through two `tanh` streams to the
//! initial LSTM state `(C₀, h₀)`. At each step the LSTM output is
//! up-projected to one logit per node, a node is drawn with the Gumbel
//! straight-through estimator, and its one-hot encoding is down-projected
//! and fed back as the next input. The critic runs its own LSTM over the
//! (down-projected) sequence and reads a single unbounded score off the
//! final hidden state.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::{concatenate, s, Array2, Axis};
use rand::distr::{Distribution, Open01, Uniform};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, Dim, Tape, Var};
use crate::error::{Error, Result};
use crate::walker::WalkBatch;

/// A named parameter tensor. Only `decay` parameters receive the L2 penalty.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Array2<f64>,
    pub decay: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    /// Appends a parameter and returns its index.
    pub fn push(&mut self, name: &str, value: Array2<f64>, decay: bool) -> usize {
        self.params.push(Param {
            name: name.to_owned(),
            value,
            decay,
        });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn get(&self, i: usize) -> &Param {
        &self.params[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Param {
        &mut self.params[i]
    }

    /// Records every parameter as a differentiable leaf.
    pub fn track(&self, tape: &Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.var(p.value.clone())).collect()
    }

    /// Records every parameter as a constant.
    pub fn freeze(&self, tape: &Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.constant(p.value.clone())).collect()
    }

    /// Sum of squares of the decayed parameters.
    pub fn l2_norm_sq(&self) -> f64 {
        self.params
            .iter()
            .filter(|p| p.decay)
            .map(|p| p.value.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    pub fn total_len(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

fn uniform_init<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, fan_in: usize) -> Array2<f64> {
    let s = 1.0 / (fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-s, s).expect("finite bound");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

/// Weight/bias indices of one LSTM cell inside a [`ParamSet`].
///
/// The gate weight has shape `(input + hidden) x 4·hidden` with column
/// blocks ordered input, forget, candidate, output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmCell {
    pub weight: usize,
    pub bias: usize,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    fn init<R: Rng + ?Sized>(params: &mut ParamSet, prefix: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let weight = params.push(
            &format!("{prefix}.weight"),
            uniform_init(rng, input + hidden, 4 * hidden, input + hidden),
            true,
        );
        let mut b = Array2::zeros((1, 4 * hidden));
        b.slice_mut(s![.., hidden..2 * hidden]).fill(1.0);
        let bias = params.push(&format!("{prefix}.bias"), b, false);
        LstmCell {
            weight,
            bias,
            input,
            hidden,
        }
    }

    /// One step on the tape; returns the new `(cell, hidden)`.
    pub fn step(&self, tape: &Tape, vars: &[Var], x: Var, cell: Var, hidden: Var) -> (Var, Var) {
        let h = self.hidden;
        let xh = tape.concat(&[x, hidden], Dim::Cols);
        let pre = tape.matmul(xh, vars[self.weight]);
        let pre = tape.add(pre, tape.broadcast(vars[self.bias], tape.shape(pre)));
        let i = tape.sigmoid(tape.slice(pre, Dim::Cols, 0, h));
        let f = tape.sigmoid(tape.slice(pre, Dim::Cols, h, 2 * h));
        let g = tape.tanh(tape.slice(pre, Dim::Cols, 2 * h, 3 * h));
        let o = tape.sigmoid(tape.slice(pre, Dim::Cols, 3 * h, 4 * h));
        let c = tape.add(tape.mul(f, cell), tape.mul(i, g));
        let hn = tape.mul(o, tape.tanh(c));
        (c, hn)
    }

    /// The same step on plain arrays, for sampling without a tape.
    fn step_plain(&self, params: &ParamSet, x: &Array2<f64>, cell: &mut Array2<f64>, hidden: &mut Array2<f64>) {
        let h = self.hidden;
        let xh = concatenate(Axis(1), &[x.view(), hidden.view()]).expect("row counts agree");
        let mut pre = xh.dot(&params.get(self.weight).value);
        pre += &params.get(self.bias).value;
        let i = pre.slice(s![.., 0..h]).mapv(sigmoid);
        let f = pre.slice(s![.., h..2 * h]).mapv(sigmoid);
        let g = pre.slice(s![.., 2 * h..3 * h]).mapv(f64::tanh);
        let o = pre.slice(s![.., 3 * h..4 * h]).mapv(sigmoid);
        let c = &f * &*cell + &i * &g;
        *hidden = &o * &c.mapv(f64::tanh);
        *cell = c;
    }
}

/// An affine layer `x · W + b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dense {
    pub weight: usize,
    pub bias: usize,
}

impl Dense {
    fn init<R: Rng + ?Sized>(params: &mut ParamSet, prefix: &str, input: usize, output: usize, rng: &mut R) -> Self {
        let weight = params.push(&format!("{prefix}.weight"), uniform_init(rng, input, output, input), true);
        let bias = params.push(&format!("{prefix}.bias"), Array2::zeros((1, output)), false);
        Dense { weight, bias }
    }

    pub fn forward(&self, tape: &Tape, vars: &[Var], x: Var) -> Var {
        let y = tape.matmul(x, vars[self.weight]);
        tape.add(y, tape.broadcast(vars[self.bias], tape.shape(y)))
    }

    fn forward_plain(&self, params: &ParamSet, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&params.get(self.weight).value) + &params.get(self.bias).value
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorDims {
    /// Number of nodes.
    pub n: usize,
    pub latent_dim: usize,
    /// Width of the LSTM and of its output `o_t`.
    pub hidden: usize,
    /// Width of the down-projected node embedding fed to the LSTM.
    pub down_dim: usize,
    /// Width of the first layer of each initialization stream.
    pub init_width: usize,
}

impl GeneratorDims {
    pub fn new(n: usize) -> Self {
        GeneratorDims {
            n,
            latent_dim: 16,
            hidden: 40,
            down_dim: 64,
            init_width: 40,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub dims: GeneratorDims,
    pub params: ParamSet,
    init_cell: [Dense; 2],
    init_hidden: [Dense; 2],
    lstm: LstmCell,
    w_up: usize,
    w_down: usize,
}

/// Output of one unrolled generator pass on a tape.
pub struct Unrolled {
    /// Straight-through inputs `v + (v* − detach(v*))`, one `B x N` per step.
    pub inputs: Vec<Var>,
    /// Relaxed samples `v*`.
    pub soft: Vec<Var>,
    /// Discrete one-hot samples `v`.
    pub hard: Vec<Array2<f64>>,
}

impl Generator {
    pub fn new<R: Rng + ?Sized>(dims: GeneratorDims, rng: &mut R) -> Self {
        let mut params = ParamSet::default();
        let init_cell = [
            Dense::init(&mut params, "init_cell.0", dims.latent_dim, dims.init_width, rng),
            Dense::init(&mut params, "init_cell.1", dims.init_width, dims.hidden, rng),
        ];
        let init_hidden = [
            Dense::init(&mut params, "init_hidden.0", dims.latent_dim, dims.init_width, rng),
            Dense::init(&mut params, "init_hidden.1", dims.init_width, dims.hidden, rng),
        ];
        let lstm = LstmCell::init(&mut params, "lstm", dims.down_dim, dims.hidden, rng);
        let w_up = params.push("w_up", uniform_init(rng, dims.hidden, dims.n, dims.hidden), true);
        let w_down = params.push("w_down", uniform_init(rng, dims.n, dims.down_dim, dims.n), true);
        Generator {
            dims,
            params,
            init_cell,
            init_hidden,
            lstm,
            w_up,
            w_down,
        }
    }

    /// Rebuilds a generator from stored parameter values (in declaration order).
    pub fn from_values(dims: GeneratorDims, values: Vec<Array2<f64>>) -> Result<Self> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut g = Generator::new(dims, &mut rng);
        assign_values(&mut g.params, values)?;
        Ok(g)
    }

    /// Standard normal latent codes, one row per walk.
    pub fn sample_latent<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Array2<f64> {
        Array2::from_shape_simple_fn((batch, self.dims.latent_dim), || StandardNormal.sample(rng))
    }

    fn initial_state(&self, tape: &Tape, vars: &[Var], z: Var) -> (Var, Var) {
        let stream = |layers: &[Dense; 2]| {
            let a = tape.tanh(layers[0].forward(tape, vars, z));
            tape.tanh(layers[1].forward(tape, vars, a))
        };
        (stream(&self.init_cell), stream(&self.init_hidden))
    }

    /// Unrolls `walk_len` steps on the tape from latent codes `z`.
    ///
    /// Gumbel noise is drawn from `noise` in row-major order, one `B x N`
    /// block per step; passing `None` disables the noise.
    pub fn unroll<R: Rng + ?Sized>(
        &self,
        tape: &Tape,
        vars: &[Var],
        z: &Array2<f64>,
        walk_len: usize,
        tau: f64,
        mut noise: Option<&mut R>,
    ) -> Result<Unrolled> {
        let batch = z.nrows();
        let z = tape.constant(z.clone());
        let (mut cell, mut hidden) = self.initial_state(tape, vars, z);
        let mut x = tape.constant(Array2::zeros((batch, self.dims.down_dim)));
        let mut out = Unrolled {
            inputs: Vec::with_capacity(walk_len),
            soft: Vec::with_capacity(walk_len),
            hard: Vec::with_capacity(walk_len),
        };
        for _ in 0..walk_len {
            (cell, hidden) = self.lstm.step(tape, vars, x, cell, hidden);
            let logits = tape.matmul(hidden, vars[self.w_up]);
            let st = gumbel_straight_through(tape, logits, tau, noise.as_deref_mut())?;
            x = tape.matmul(st.input, vars[self.w_down]);
            out.inputs.push(st.input);
            out.soft.push(st.soft);
            out.hard.push(st.hard);
        }
        tape.ensure_finite()?;
        Ok(out)
    }

    /// Samples walks from the given latent codes without recording a tape.
    ///
    /// Each node is drawn from `softmax(logits)` by inverting its CDF with one
    /// uniform, which has the same law as the argmax of Gumbel-perturbed
    /// logits used by [`Generator::unroll`] at a fraction of the cost.
    pub fn sample_from<R: Rng + ?Sized>(&self, z: &Array2<f64>, walk_len: usize, rng: &mut R) -> Result<WalkBatch> {
        let mut cdf = Vec::with_capacity(self.dims.n);
        self.sample_with(z, walk_len, |logits| {
            let max = logits.iter().fold(f64::NEG_INFINITY, |m, &l| m.max(l));
            cdf.clear();
            let mut total = 0.0;
            for &l in logits {
                total += (l - max).exp();
                cdf.push(total);
            }
            let u = rng.random::<f64>() * total;
            cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
        })
    }

    /// Runs the generator without a tape, choosing each node from its row of
    /// logits with `pick`.
    fn sample_with(
        &self,
        z: &Array2<f64>,
        walk_len: usize,
        mut pick: impl FnMut(&[f64]) -> usize,
    ) -> Result<WalkBatch> {
        let batch = z.nrows();
        let p = &self.params;
        let stream = |layers: &[Dense; 2]| {
            let a = layers[0].forward_plain(p, z).mapv(f64::tanh);
            layers[1].forward_plain(p, &a).mapv(f64::tanh)
        };
        let mut cell = stream(&self.init_cell);
        let mut hidden = stream(&self.init_hidden);
        let mut x = Array2::zeros((batch, self.dims.down_dim));
        let w_up = &p.get(self.w_up).value;
        let w_down = &p.get(self.w_down).value;
        let mut nodes = vec![0usize; batch * walk_len];
        for t in 0..walk_len {
            self.lstm.step_plain(p, &x, &mut cell, &mut hidden);
            let logits = hidden.dot(w_up);
            if !logits.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { op: "logits", node: t });
            }
            for (b, row) in logits.rows().into_iter().enumerate() {
                let k = pick(row.as_slice().expect("rows of a fresh product are contiguous"));
                nodes[b * walk_len + t] = k;
                x.row_mut(b).assign(&w_down.row(k));
            }
        }
        Ok(WalkBatch::new(nodes, walk_len))
    }

    /// Draws `batch` latent codes and samples walks from them.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, walk_len: usize, rng: &mut R) -> Result<WalkBatch> {
        let z = self.sample_latent(batch, rng);
        self.sample_from(&z, walk_len, rng)
    }
}

/// One straight-through sample from a `B x N` block of logits.
pub struct StraightThrough {
    pub input: Var,
    pub soft: Var,
    pub hard: Array2<f64>,
}

/// `v* = softmax((p + g)/τ)`, `v = onehot(argmax(p + g))`, and the
/// straight-through combination `v + (v* − detach(v*))` whose value is `v`
/// and whose gradient is that of `v*`. Ties go to the lowest index.
pub fn gumbel_straight_through<R: Rng + ?Sized>(
    tape: &Tape,
    logits: Var,
    tau: f64,
    noise: Option<&mut R>,
) -> Result<StraightThrough> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    let (rows, cols) = tape.shape(logits);
    let perturbed = match noise {
        Some(rng) => {
            let g = Array2::from_shape_simple_fn((rows, cols), || gumbel(rng));
            tape.add(logits, tape.constant(g))
        }
        None => logits,
    };
    let soft = tape.softmax(tape.scale(perturbed, 1.0 / tau));
    let mut hard = Array2::zeros((rows, cols));
    tape.with_value(perturbed, |p| {
        for (b, row) in p.rows().into_iter().enumerate() {
            hard[[b, argmax(row.iter().copied())]] = 1.0;
        }
    });
    let input = tape.add(tape.constant(hard.clone()), tape.sub(soft, tape.detach(soft)));
    tape.ensure_finite()?;
    Ok(StraightThrough { input, soft, hard })
}

/// Standard Gumbel draw `−ln(−ln u)`.
pub fn gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = Open01.sample(rng);
    -(-u.ln()).ln()
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Something that scores batches of node sequences.
///
/// A critic may start with a linear map `x ↦ xW` of every step's input. It
/// then reports `WᵀW` from [`Critic::embed_metric`], so input gradients can
/// be measured in the embedded space: `‖∂f/∂x‖² = g WᵀW gᵀ` with
/// `g = ∂f/∂(xW)`.
pub trait Critic {
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;

    /// One `B x 1` score column for `B` sequences given as one `B x N`
    /// tensor per step.
    fn score(&self, tape: &Tape, vars: &[Var], inputs: &[Var]) -> Var {
        let embedded: Vec<Var> = inputs.iter().map(|&x| self.embed(tape, vars, x)).collect();
        self.score_embedded(tape, vars, &embedded)
    }

    /// The linear input map; identity by default.
    fn embed(&self, _tape: &Tape, _vars: &[Var], x: Var) -> Var {
        x
    }

    /// `WᵀW` for the input map, `None` for the identity.
    fn embed_metric(&self, _tape: &Tape, _vars: &[Var]) -> Option<Var> {
        None
    }

    /// Score from already embedded inputs.
    fn score_embedded(&self, tape: &Tape, vars: &[Var], embedded: &[Var]) -> Var;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorDims {
    pub n: usize,
    pub hidden: usize,
    pub down_dim: usize,
}

impl DiscriminatorDims {
    pub fn new(n: usize) -> Self {
        DiscriminatorDims {
            n,
            hidden: 30,
            down_dim: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub dims: DiscriminatorDims,
    pub params: ParamSet,
    w_down: usize,
    lstm: LstmCell,
    readout: Dense,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(dims: DiscriminatorDims, rng: &mut R) -> Self {
        let mut params = ParamSet::default();
        let w_down = params.push("w_down", uniform_init(rng, dims.n, dims.down_dim, dims.n), true);
        let lstm = LstmCell::init(&mut params, "lstm", dims.down_dim, dims.hidden, rng);
        let readout = Dense::init(&mut params, "readout", dims.hidden, 1, rng);
        Discriminator {
            dims,
            params,
            w_down,
            lstm,
            readout,
        }
    }

    pub fn from_values(dims: DiscriminatorDims, values: Vec<Array2<f64>>) -> Result<Self> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut d = Discriminator::new(dims, &mut rng);
        assign_values(&mut d.params, values)?;
        Ok(d)
    }

    /// Scores as a plain vector.
    pub fn discriminate(&self, walks: &[Array2<f64>]) -> Result<Vec<f64>> {
        let tape = Tape::new();
        let vars = self.params.freeze(&tape);
        let inputs: Vec<Var> = walks.iter().map(|w| tape.constant(w.clone())).collect();
        let scores = self.score(&tape, &vars, &inputs);
        tape.ensure_finite()?;
        Ok(tape.value(scores).column(0).to_vec())
    }
}

impl Critic for Discriminator {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn embed(&self, tape: &Tape, vars: &[Var], x: Var) -> Var {
        tape.matmul(x, vars[self.w_down])
    }

    fn embed_metric(&self, tape: &Tape, vars: &[Var]) -> Option<Var> {
        let w = vars[self.w_down];
        Some(tape.matmul_t(w, w, true, false))
    }

    fn score_embedded(&self, tape: &Tape, vars: &[Var], embedded: &[Var]) -> Var {
        let batch = tape.shape(embedded[0]).0;
        let mut cell = tape.constant(Array2::zeros((batch, self.dims.hidden)));
        let mut hidden = cell;
        for &e in embedded {
            (cell, hidden) = self.lstm.step(tape, vars, e, cell, hidden);
        }
        self.readout.forward(tape, vars, hidden)
    }
}

/// One-hot encoding of a walk batch: one `B x N` matrix per step.
pub fn one_hot(walks: &WalkBatch, n: usize) -> Vec<Array2<f64>> {
    (0..walks.walk_len())
        .map(|t| {
            let mut m = Array2::zeros((walks.len(), n));
            for (b, node) in walks.column(t).enumerate() {
                m[[b, node]] = 1.0;
            }
            m
        })
        .collect()
}

fn assign_values(params: &mut ParamSet, values: Vec<Array2<f64>>) -> Result<()> {
    if values.len() != params.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} arrays, found {}",
            params.len(),
            values.len()
        )));
    }
    for (p, v) in params.iter_mut().zip(values) {
        if p.value.dim() != v.dim() {
            return Err(Error::Checkpoint(format!(
                "{}: expected shape {:?}, found {:?}",
                p.name,
                p.value.dim(),
                v.dim()
            )));
        }
        p.value = v;
    }
    Ok(())
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayInfo {
    pub name: String,
    pub shape: [usize; 2],
}

/// JSON header of a checkpoint file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T")]
    pub walk_len: usize,
    pub d: usize,
    #[serde(rename = "H_g")]
    pub h_g: usize,
    #[serde(rename = "H_d")]
    pub h_d: usize,
    pub generator: GeneratorDims,
    pub discriminator: DiscriminatorDims,
    pub tau: f64,
    pub iteration: u64,
    pub arrays: Vec<ArrayInfo>,
}

/// Trained model state.
///
/// On disk: one line of JSON header, then every array of the header's
/// `arrays` list (generator first, then discriminator) as row-major
/// little-endian `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub walk_len: usize,
    pub tau: f64,
    pub iteration: u64,
}

impl Checkpoint {
    pub fn header(&self) -> CheckpointHeader {
        let arrays = self
            .generator
            .params
            .iter()
            .map(|p| ("generator", p))
            .chain(self.discriminator.params.iter().map(|p| ("discriminator", p)))
            .map(|(owner, p)| ArrayInfo {
                name: format!("{owner}.{}", p.name),
                shape: [p.value.nrows(), p.value.ncols()],
            })
            .collect();
        let g = self.generator.dims;
        CheckpointHeader {
            version: CHECKPOINT_VERSION,
            n: g.n,
            walk_len: self.walk_len,
            d: g.latent_dim,
            h_g: g.down_dim,
            h_d: self.discriminator.dims.down_dim,
            generator: g,
            discriminator: self.discriminator.dims,
            tau: self.tau,
            iteration: self.iteration,
            arrays,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec(&self.header())?;
        out.push(b'\n');
        for p in self.generator.params.iter().chain(self.discriminator.params.iter()) {
            for v in p.value.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut reader = BufReader::new(reader);
        let mut line = Vec::new();
        reader
            .read_until(b'\n', &mut line)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let header: CheckpointHeader = serde_json::from_slice(&line)?;
        if header.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", header.version)));
        }
        let mut arrays = Vec::with_capacity(header.arrays.len());
        let mut buf = [0u8; 8];
        for info in &header.arrays {
            let [r, c] = info.shape;
            let mut data = Vec::with_capacity(r * c);
            for _ in 0..r * c {
                reader
                    .read_exact(&mut buf)
                    .map_err(|_| Error::Checkpoint(format!("truncated while reading {}", info.name)))?;
                data.push(f64::from_le_bytes(buf));
            }
            arrays.push(Array2::from_shape_vec((r, c), data).expect("length matches shape"));
        }
        let mut trailing = [0u8; 1];
        if reader.read(&mut trailing).map_err(|e| Error::Checkpoint(e.to_string()))? != 0 {
            return Err(Error::Checkpoint("trailing bytes after last array".into()));
        }
        let g_len = header
            .arrays
            .iter()
            .take_while(|a| a.name.starts_with("generator."))
            .count();
        let d_values = arrays.split_off(g_len);
        Ok(Checkpoint {
            generator: Generator::from_values(header.generator, arrays)?,
            discriminator: Discriminator::from_values(header.discriminator, d_values)?,
            walk_len: header.walk_len,
            tau: header.tau,
            iteration: header.iteration,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(f)
    }
}
