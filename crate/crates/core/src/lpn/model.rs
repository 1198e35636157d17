//! Transformer autoencoder with a deformation-basis bottleneck.
//!
//! Encoder: per-frame landmark tokens -> causal transformer -> basis weights
//! `W` (T x k). Decoder: `x_D = W B` -> causal transformer -> landmarks.
//! Landmarks enter centered on 0.5 and leave with the offset restored.

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::config::LpnConfig;
use super::loss::{rec_value_and_grad, reg_grad, reg_value, total_loss, LossBreakdown};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::geometry::{LandmarkSequence, Point};

const INPUT_CENTER: f64 = 0.5;

/// Basis weights predicted by the encoder, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix(Array2<f64>);

impl WeightMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("weight matrix has non-finite entries"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn steps(&self) -> usize {
        self.0.nrows()
    }

    pub fn bases(&self) -> usize {
        self.0.ncols()
    }
}

#[derive(Debug, Clone)]
struct BlockParams {
    ln1_g: usize,
    ln1_b: usize,
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    ln2_g: usize,
    ln2_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    in_w: usize,
    in_b: usize,
    encoder: Vec<BlockParams>,
    enc_ln_g: usize,
    enc_ln_b: usize,
    head_w: usize,
    head_b: usize,
    bases: usize,
    decoder: Vec<BlockParams>,
    dec_ln_g: usize,
    dec_ln_b: usize,
    out_w: usize,
    out_b: usize,
}

enum Init {
    Uniform,
    Zeros,
    Ones,
    Gaussian(f64),
}

struct Builder<'r> {
    rng: &'r mut ChaCha8Rng,
    names: Vec<String>,
    values: Vec<Array2<f64>>,
}

impl Builder<'_> {
    fn add(&mut self, name: String, shape: (usize, usize), init: Init) -> usize {
        let value = match init {
            Init::Zeros => Array2::zeros(shape),
            Init::Ones => Array2::ones(shape),
            Init::Uniform => {
                let bound = 1.0 / (shape.0 as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).unwrap();
                Array2::from_shape_simple_fn(shape, || dist.sample(self.rng))
            }
            Init::Gaussian(std) => {
                let dist = Normal::new(0.0, std).unwrap();
                Array2::from_shape_simple_fn(shape, || dist.sample(self.rng))
            }
        };
        self.names.push(name);
        self.values.push(value);
        self.values.len() - 1
    }

    fn block(&mut self, prefix: &str, d: usize, ff: usize) -> BlockParams {
        let mut p = |name: &str, shape, init| self.add(format!("{prefix}.{name}"), shape, init);
        BlockParams {
            ln1_g: p("ln1.gamma", (1, d), Init::Ones),
            ln1_b: p("ln1.beta", (1, d), Init::Zeros),
            wq: p("attn.wq", (d, d), Init::Uniform),
            bq: p("attn.bq", (1, d), Init::Zeros),
            wk: p("attn.wk", (d, d), Init::Uniform),
            bk: p("attn.bk", (1, d), Init::Zeros),
            wv: p("attn.wv", (d, d), Init::Uniform),
            bv: p("attn.bv", (1, d), Init::Zeros),
            wo: p("attn.wo", (d, d), Init::Uniform),
            bo: p("attn.bo", (1, d), Init::Zeros),
            ln2_g: p("ln2.gamma", (1, d), Init::Ones),
            ln2_b: p("ln2.beta", (1, d), Init::Zeros),
            w1: p("ff.w1", (d, ff), Init::Uniform),
            b1: p("ff.b1", (1, ff), Init::Zeros),
            w2: p("ff.w2", (ff, d), Init::Uniform),
            b2: p("ff.b2", (1, d), Init::Zeros),
        }
    }
}

fn build_layout(config: &LpnConfig, rng: &mut ChaCha8Rng) -> (Layout, Vec<String>, Vec<Array2<f64>>) {
    let (d, k, ff, width) = (config.d, config.k, config.ff_dim, config.token_width());
    let mut b = Builder {
        rng,
        names: Vec::new(),
        values: Vec::new(),
    };
    let in_w = b.add("input.weight".into(), (width, d), Init::Uniform);
    let in_b = b.add("input.bias".into(), (1, d), Init::Zeros);
    let encoder = (0..config.encoder_layers)
        .map(|i| b.block(&format!("encoder.{i}"), d, ff))
        .collect();
    let enc_ln_g = b.add("encoder.ln.gamma".into(), (1, d), Init::Ones);
    let enc_ln_b = b.add("encoder.ln.beta".into(), (1, d), Init::Zeros);
    let head_w = b.add("weight_head.weight".into(), (d, k), Init::Uniform);
    let head_b = b.add("weight_head.bias".into(), (1, k), Init::Zeros);
    let bases = b.add(
        "bases".into(),
        (k, d),
        Init::Gaussian(1.0 / (d as f64).sqrt()),
    );
    let decoder = (0..config.decoder_layers)
        .map(|i| b.block(&format!("decoder.{i}"), d, ff))
        .collect();
    let dec_ln_g = b.add("decoder.ln.gamma".into(), (1, d), Init::Ones);
    let dec_ln_b = b.add("decoder.ln.beta".into(), (1, d), Init::Zeros);
    let out_w = b.add("output.weight".into(), (d, width), Init::Uniform);
    let out_b = b.add("output.bias".into(), (1, width), Init::Zeros);
    let layout = Layout {
        in_w,
        in_b,
        encoder,
        enc_ln_g,
        enc_ln_b,
        head_w,
        head_b,
        bases,
        decoder,
        dec_ln_g,
        dec_ln_b,
        out_w,
        out_b,
    };
    (layout, b.names, b.values)
}

/// Fixed sinusoidal position code, `t x d`.
pub fn positional_encoding(t: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((t, d), |(pos, i)| {
        let freq = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
        let angle = pos as f64 * freq;
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// The landmark perturbation network.
#[derive(Debug, Clone)]
pub struct LpnModel {
    config: LpnConfig,
    weights: Vec<f64>,
    layout: Layout,
    names: Vec<String>,
    params: Vec<Array2<f64>>,
    pos: Array2<f64>,
}

struct Forward {
    w: Var,
    out: Var,
}

impl LpnModel {
    /// Fresh model with seeded initialization.
    pub fn new(config: LpnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (layout, names, params) = build_layout(&config, &mut rng);
        let pos = positional_encoding(config.t, config.d);
        Ok(Self {
            weights: config.weights(),
            config,
            layout,
            names,
            params,
            pos,
        })
    }

    /// Rebuilds a model from named tensors, checking names and shapes.
    pub fn from_named(config: LpnConfig, tensors: Vec<(String, Array2<f64>)>) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        if tensors.len() != model.params.len() {
            return Err(Error::CorruptCheckpoint(format!(
                "expected {} tensors, found {}",
                model.params.len(),
                tensors.len()
            )));
        }
        for (i, (name, value)) in tensors.into_iter().enumerate() {
            if name != model.names[i] {
                return Err(Error::CorruptCheckpoint(format!(
                    "tensor {i} is {name:?}, expected {:?}",
                    model.names[i]
                )));
            }
            if value.dim() != model.params[i].dim() {
                return Err(Error::CorruptCheckpoint(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    value.dim(),
                    model.params[i].dim()
                )));
            }
            model.params[i] = value;
        }
        Ok(model)
    }

    pub fn config(&self) -> &LpnConfig {
        &self.config
    }

    pub fn landmark_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn parameters(&self) -> &[Array2<f64>] {
        &self.params
    }

    pub fn parameter_names(&self) -> &[String] {
        &self.names
    }

    pub fn parameter_mut(&mut self, name: &str) -> Option<&mut Array2<f64>> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(&mut self.params[i])
    }

    pub(crate) fn parameters_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(Array2::len).sum()
    }

    pub fn zero_gradients(&self) -> Vec<Array2<f64>> {
        self.params.iter().map(|p| Array2::zeros(p.dim())).collect()
    }

    fn check_sequence(&self, seq: &LandmarkSequence) -> Result<()> {
        if seq.len() != self.config.t || seq.num_points() != self.config.n_landmarks {
            return Err(Error::invalid(format!(
                "model expects {}x{} landmarks, got {}x{}",
                self.config.t,
                self.config.n_landmarks,
                seq.len(),
                seq.num_points()
            )));
        }
        Ok(())
    }

    fn check_weights(&self, w: &WeightMatrix) -> Result<()> {
        if w.steps() != self.config.t || w.bases() != self.config.k {
            return Err(Error::invalid(format!(
                "weight matrix must be {}x{}, got {}x{}",
                self.config.t,
                self.config.k,
                w.steps(),
                w.bases()
            )));
        }
        Ok(())
    }

    /// `T x 2N` token matrix, centered.
    fn tokens(&self, seq: &LandmarkSequence) -> Array2<f64> {
        let width = self.config.token_width();
        let flat = seq.as_flat();
        Array2::from_shape_fn((seq.len(), width), |(t, c)| {
            flat[t * self.config.n_landmarks + c / 2][c % 2] - INPUT_CENTER
        })
    }

    fn to_sequence(&self, out: ArrayView2<'_, f64>, scheme_of: &LandmarkSequence) -> Result<LandmarkSequence> {
        self.output_to_sequence(out, scheme_of.scheme())
    }

    fn output_to_sequence(
        &self,
        out: ArrayView2<'_, f64>,
        scheme: crate::geometry::LandmarkScheme,
    ) -> Result<LandmarkSequence> {
        let n = self.config.n_landmarks;
        let points: Vec<Point> = (0..out.nrows() * n)
            .map(|i| {
                let (t, j) = (i / n, i % n);
                [
                    out[[t, 2 * j]] + INPUT_CENTER,
                    out[[t, 2 * j + 1]] + INPUT_CENTER,
                ]
            })
            .collect();
        LandmarkSequence::from_flat(scheme, out.nrows(), n, points)
    }

    fn block(&self, tape: &mut Tape, h: Var, p: &BlockParams) -> Var {
        let (g1, b1) = (tape.param(p.ln1_g), tape.param(p.ln1_b));
        let a = tape.layer_norm(h, g1, b1);
        let (wq, bq) = (tape.param(p.wq), tape.param(p.bq));
        let (wk, bk) = (tape.param(p.wk), tape.param(p.bk));
        let (wv, bv) = (tape.param(p.wv), tape.param(p.bv));
        let q = tape.linear(a, wq, bq);
        let k = tape.linear(a, wk, bk);
        let v = tape.linear(a, wv, bv);
        let att = tape.causal_attention(q, k, v, self.config.heads);
        let (wo, bo) = (tape.param(p.wo), tape.param(p.bo));
        let o = tape.linear(att, wo, bo);
        let h = tape.add(h, o);
        let (g2, b2) = (tape.param(p.ln2_g), tape.param(p.ln2_b));
        let f = tape.layer_norm(h, g2, b2);
        let (w1, fb1) = (tape.param(p.w1), tape.param(p.b1));
        let f = tape.linear(f, w1, fb1);
        let f = tape.gelu(f);
        let (w2, fb2) = (tape.param(p.w2), tape.param(p.b2));
        let f = tape.linear(f, w2, fb2);
        tape.add(h, f)
    }

    fn encoder_pass(&self, tape: &mut Tape, tokens: Array2<f64>) -> Var {
        let l = &self.layout;
        let x = tape.input(tokens);
        let (w, b) = (tape.param(l.in_w), tape.param(l.in_b));
        let h = tape.linear(x, w, b);
        let pos = tape.input(self.pos.clone());
        let mut h = tape.add(h, pos);
        for blk in &l.encoder {
            h = self.block(tape, h, blk);
        }
        let (g, b) = (tape.param(l.enc_ln_g), tape.param(l.enc_ln_b));
        let h = tape.layer_norm(h, g, b);
        let (w, b) = (tape.param(l.head_w), tape.param(l.head_b));
        tape.linear(h, w, b)
    }

    fn decoder_pass(&self, tape: &mut Tape, w: Var) -> Var {
        let l = &self.layout;
        let bases = tape.param(l.bases);
        let xd = tape.matmul(w, bases);
        let pos = tape.input(self.pos.clone());
        let mut h = tape.add(xd, pos);
        for blk in &l.decoder {
            h = self.block(tape, h, blk);
        }
        let (g, b) = (tape.param(l.dec_ln_g), tape.param(l.dec_ln_b));
        let h = tape.layer_norm(h, g, b);
        let (w, b) = (tape.param(l.out_w), tape.param(l.out_b));
        tape.linear(h, w, b)
    }

    fn forward(&self, tape: &mut Tape, seq: &LandmarkSequence) -> Forward {
        let w = self.encoder_pass(tape, self.tokens(seq));
        let out = self.decoder_pass(tape, w);
        Forward { w, out }
    }

    /// Basis weights for every frame of `seq`.
    pub fn encode(&self, seq: &LandmarkSequence) -> Result<WeightMatrix> {
        self.check_sequence(seq)?;
        let mut tape = Tape::new(&self.params);
        let w = self.encoder_pass(&mut tape, self.tokens(seq));
        WeightMatrix::new(tape.value(w).to_owned())
    }

    /// Decoder input `x_D = W B`.
    pub fn decoder_input(&self, w: &WeightMatrix) -> Result<Array2<f64>> {
        self.check_weights(w)?;
        Ok(w.values().dot(&self.params[self.layout.bases]))
    }

    /// Reconstructed landmarks from basis weights.
    pub fn decode(&self, w: &WeightMatrix) -> Result<LandmarkSequence> {
        self.check_weights(w)?;
        let mut tape = Tape::new(&self.params);
        let wv = tape.input(w.values().to_owned());
        let out = self.decoder_pass(&mut tape, wv);
        self.output_to_sequence(tape.value(out), crate::geometry::LandmarkScheme::Multipie68)
    }

    /// `decode(encode(seq))` in one pass.
    pub fn reconstruct(&self, seq: &LandmarkSequence) -> Result<LandmarkSequence> {
        self.check_sequence(seq)?;
        let mut tape = Tape::new(&self.params);
        let f = self.forward(&mut tape, seq);
        self.to_sequence(tape.value(f.out), seq)
    }

    /// Objective value without gradients.
    pub fn loss(&self, seq: &LandmarkSequence) -> Result<LossBreakdown> {
        self.check_sequence(seq)?;
        let mut tape = Tape::new(&self.params);
        let f = self.forward(&mut tape, seq);
        let target = self.tokens(seq);
        let (rec, _) = rec_value_and_grad(tape.value(f.out), target.view(), &self.weights);
        let reg = reg_value(tape.value(f.w));
        Ok(LossBreakdown {
            rec,
            reg,
            total: total_loss(rec, reg, self.config.lambda_reg),
        })
    }

    /// Objective and its gradient for every parameter tensor, in
    /// `parameters()` order.
    pub fn loss_and_gradients(
        &self,
        seq: &LandmarkSequence,
    ) -> Result<(LossBreakdown, Vec<Array2<f64>>)> {
        self.check_sequence(seq)?;
        let mut tape = Tape::new(&self.params);
        let f = self.forward(&mut tape, seq);
        let target = self.tokens(seq);
        let (rec, g_out) = rec_value_and_grad(tape.value(f.out), target.view(), &self.weights);
        let reg = reg_value(tape.value(f.w));
        let g_w = reg_grad(tape.value(f.w), self.config.lambda_reg);
        let mut grads = self.zero_gradients();
        tape.backward(vec![(f.out, g_out), (f.w, g_w)], &mut grads);
        Ok((
            LossBreakdown {
                rec,
                reg,
                total: total_loss(rec, reg, self.config.lambda_reg),
            },
            grads,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LandmarkScheme;
    use rand::Rng;

    fn small_config() -> LpnConfig {
        LpnConfig {
            k: 8,
            d: 16,
            t: 6,
            encoder_layers: 1,
            decoder_layers: 1,
            heads: 2,
            ff_dim: 24,
            ..Default::default()
        }
    }

    fn random_seq(seed: u64, t: usize) -> LandmarkSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = (0..t)
            .map(|_| (0..68).map(|_| [rng.random(), rng.random()]).collect())
            .collect();
        LandmarkSequence::from_frames(LandmarkScheme::Multipie68, frames).unwrap()
    }

    #[test]
    fn shapes_follow_the_config() {
        let model = LpnModel::new(small_config(), 1).unwrap();
        let seq = random_seq(2, 6);
        let w = model.encode(&seq).unwrap();
        assert_eq!((w.steps(), w.bases()), (6, 8));
        let out = model.decode(&w).unwrap();
        assert!(out.same_shape(&seq));
        assert!(model.encode(&random_seq(2, 5)).is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let a = LpnModel::new(small_config(), 9).unwrap();
        let b = LpnModel::new(small_config(), 9).unwrap();
        let seq = random_seq(4, 6);
        assert_eq!(a.reconstruct(&seq).unwrap(), b.reconstruct(&seq).unwrap());
        assert_eq!(
            a.reconstruct(&seq).unwrap(),
            a.decode(&a.encode(&seq).unwrap()).unwrap()
        );
    }

    #[test]
    fn bottleneck_is_linear() {
        let model = LpnModel::new(small_config(), 3).unwrap();
        let w = model.encode(&random_seq(5, 6)).unwrap();
        let x = model.decoder_input(&w).unwrap();
        let doubled = WeightMatrix::new(w.values().mapv(|v| 2.0 * v)).unwrap();
        let x2 = model.decoder_input(&doubled).unwrap();
        assert_eq!(x2, x.mapv(|v| 2.0 * v));
        let zero = WeightMatrix::new(Array2::zeros((6, 8))).unwrap();
        assert!(model.decoder_input(&zero).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn positional_encoding_first_row() {
        let pe = positional_encoding(3, 4);
        assert_eq!(pe.row(0).to_vec(), vec![0.0, 1.0, 0.0, 1.0]);
        assert!((pe[[1, 0]] - 1f64.sin()).abs() < 1e-15);
    }
}
