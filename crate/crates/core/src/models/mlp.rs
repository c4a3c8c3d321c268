//! Fully connected network `raw → h₁ → h₂ → 1` with a linear output,
//! trained by full-batch gradient descent on the mean squared error.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureVector};
use crate::error::{Error, Result};
use crate::models::{Activation, Predict, TrainConfig};
use crate::numerics::SimRng;

/// Dot product with four independent accumulators.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Training inputs transposed to feature-major order.
struct Batch {
    n: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Batch {
    fn new(data: &Dataset, input_dim: usize) -> Result<Self> {
        let samples = data.labeled();
        let n = samples.len();
        if n == 0 {
            return Err(Error::invalid("gradient over an empty batch"));
        }
        let mut x = vec![0.0; n * input_dim];
        for (s, sample) in samples.iter().enumerate() {
            let raw = sample.features.raw();
            if raw.len() != input_dim {
                return Err(Error::DimensionMismatch {
                    expected: input_dim,
                    found: raw.len(),
                });
            }
            for (j, v) in raw.iter().enumerate() {
                x[j * n + s] = *v;
            }
        }
        let y = samples.iter().map(|s| s.label).collect();
        Ok(Self { n, x, y })
    }
}

#[derive(Default)]
struct Workspace {
    a1: Vec<f64>,
    a2: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    out: Vec<f64>,
}

impl Workspace {
    fn resize(&mut self, n: usize, h1: usize, h2: usize) {
        self.a1.resize(h1 * n, 0.0);
        self.d1.resize(h1 * n, 0.0);
        self.a2.resize(h2 * n, 0.0);
        self.d2.resize(h2 * n, 0.0);
        self.out.resize(n, 0.0);
    }
}

/// Hidden widths up to this size run the forward pass on the stack.
const STACK_WIDTH: usize = 64;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs_run: usize,
    pub final_loss: f64,
}

/// Weight matrices are row-major: `w1[i * input_dim + k]` connects input `k`
/// to hidden unit `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpPredictor {
    pub input_dim: usize,
    pub hidden: [usize; 2],
    pub activation: Activation,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: f64,
    pub meta: TrainingMeta,
}

/// Gradient with the same layout as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: f64,
}

impl MlpGradient {
    fn zeros_like(p: &MlpPredictor) -> Self {
        Self {
            w1: vec![0.0; p.w1.len()],
            b1: vec![0.0; p.b1.len()],
            w2: vec![0.0; p.w2.len()],
            b2: vec![0.0; p.b2.len()],
            w3: vec![0.0; p.w3.len()],
            b3: 0.0,
        }
    }

    /// Flattened in parameter order `w1, b1, w2, b2, w3, b3`.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for v in [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3] {
            out.extend_from_slice(v);
        }
        out.push(self.b3);
        out
    }
}

impl MlpPredictor {
    /// All weights and biases zero; predicts 0 everywhere.
    pub fn zeros(input_dim: usize, hidden: [usize; 2], activation: Activation) -> Self {
        let [h1, h2] = hidden;
        Self {
            input_dim,
            hidden,
            activation,
            w1: vec![0.0; h1 * input_dim],
            b1: vec![0.0; h1],
            w2: vec![0.0; h2 * h1],
            b2: vec![0.0; h2],
            w3: vec![0.0; h2],
            b3: 0.0,
            meta: TrainingMeta::default(),
        }
    }

    /// Weights drawn from `U(-√3, √3)/√fan_in` (unit variance per fan-in),
    /// first-layer biases from `U(-1, 1)`, other biases zero.
    pub fn init(input_dim: usize, hidden: [usize; 2], activation: Activation, seed: u64) -> Self {
        let mut p = Self::zeros(input_dim, hidden, activation);
        let mut rng = SimRng::new(seed);
        let sqrt3 = 3f64.sqrt();
        let fill = |v: &mut [f64], fan_in: usize, rng: &mut SimRng| {
            let scale = sqrt3 / (fan_in as f64).sqrt();
            v.iter_mut().for_each(|w| *w = rng.uniform_range(-scale, scale));
        };
        fill(&mut p.w1, input_dim, &mut rng);
        p.b1.iter_mut().for_each(|b| *b = rng.uniform_range(-1.0, 1.0));
        fill(&mut p.w2, hidden[0], &mut rng);
        fill(&mut p.w3, hidden[1], &mut rng);
        p
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len() + self.w3.len() + 1
    }

    /// Flattened in the same order as [`MlpGradient::flat`].
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for v in [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3] {
            out.extend_from_slice(v);
        }
        out.push(self.b3);
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                expected: self.n_params(),
                found: flat.len(),
            });
        }
        let mut rest = flat;
        for v in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2, &mut self.w3] {
            let (head, tail) = rest.split_at(v.len());
            v.copy_from_slice(head);
            rest = tail;
        }
        self.b3 = rest[0];
        Ok(())
    }

    fn check_input(&self, raw: &[f64]) -> Result<()> {
        if raw.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: raw.len(),
            });
        }
        Ok(())
    }

    /// Forward pass writing both hidden activations; returns the output.
    #[inline]
    fn forward_into(&self, raw: &[f64], a1: &mut [f64], a2: &mut [f64]) -> f64 {
        let [h1, h2] = self.hidden;
        let act = self.activation;
        for i in 0..h1 {
            let row = &self.w1[i * self.input_dim..(i + 1) * self.input_dim];
            let z = row.iter().zip(raw).fold(self.b1[i], |acc, (w, x)| acc + w * x);
            a1[i] = act.apply(z);
        }
        for i in 0..h2 {
            let row = &self.w2[i * h1..(i + 1) * h1];
            let z = row.iter().zip(&a1[..h1]).fold(self.b2[i], |acc, (w, a)| acc + w * a);
            a2[i] = act.apply(z);
        }
        self.w3.iter().zip(&a2[..h2]).fold(self.b3, |acc, (w, a)| acc + w * a)
    }

    fn forward(&self, raw: &[f64]) -> f64 {
        let [h1, h2] = self.hidden;
        if h1 <= STACK_WIDTH && h2 <= STACK_WIDTH {
            let mut a1 = [0.0; STACK_WIDTH];
            let mut a2 = [0.0; STACK_WIDTH];
            self.forward_into(raw, &mut a1, &mut a2)
        } else {
            let mut a1 = vec![0.0; h1];
            let mut a2 = vec![0.0; h2];
            self.forward_into(raw, &mut a1, &mut a2)
        }
    }

    /// Forward pass over `n` inputs stored feature-major in `x`. Activations
    /// are unit-major: `a1[i * n + s]` is unit `i` on sample `s`. Every sum
    /// starts from the bias and adds terms in index order, as in
    /// [`Self::forward_into`].
    fn forward_batch(&self, x: &[f64], n: usize, a1: &mut [f64], a2: &mut [f64], out: &mut [f64]) {
        let [h1, h2] = self.hidden;
        let din = self.input_dim;
        let act = self.activation;
        for i in 0..h1 {
            let row = &mut a1[i * n..(i + 1) * n];
            row.fill(self.b1[i]);
            for j in 0..din {
                axpy(self.w1[i * din + j], &x[j * n..(j + 1) * n], row);
            }
            row.iter_mut().for_each(|v| *v = act.apply(*v));
        }
        for i in 0..h2 {
            let row = &mut a2[i * n..(i + 1) * n];
            row.fill(self.b2[i]);
            for k in 0..h1 {
                axpy(self.w2[i * h1 + k], &a1[k * n..(k + 1) * n], row);
            }
            row.iter_mut().for_each(|v| *v = act.apply(*v));
        }
        out.fill(self.b3);
        for i in 0..h2 {
            axpy(self.w3[i], &a2[i * n..(i + 1) * n], out);
        }
    }

    /// Mean squared error over `batch` and its gradient, written into `grad`.
    fn loss_and_gradient(&self, batch: &Batch, ws: &mut Workspace, grad: &mut MlpGradient) -> f64 {
        let n = batch.n;
        let [h1, h2] = self.hidden;
        let din = self.input_dim;
        let act = self.activation;
        ws.resize(n, h1, h2);
        let Workspace { a1, a2, d1, d2, out } = ws;

        self.forward_batch(&batch.x, n, a1, a2, out);
        let scale = 2.0 / n as f64;
        let mut loss = 0.0;
        for (o, y) in out.iter_mut().zip(&batch.y) {
            let r = *o - y;
            loss += r * r;
            *o = scale * r;
        }
        let d_out = &*out;

        grad.b3 = d_out.iter().sum();
        for i in 0..h2 {
            let a = &a2[i * n..(i + 1) * n];
            grad.w3[i] = dot(d_out, a);
            let w = self.w3[i];
            let d = &mut d2[i * n..(i + 1) * n];
            for s in 0..n {
                d[s] = d_out[s] * w * act.derivative_from_output(a[s]);
            }
        }
        d1.fill(0.0);
        for i in 0..h2 {
            let d = &d2[i * n..(i + 1) * n];
            grad.b2[i] = d.iter().sum();
            for k in 0..h1 {
                grad.w2[i * h1 + k] = dot(d, &a1[k * n..(k + 1) * n]);
                axpy(self.w2[i * h1 + k], d, &mut d1[k * n..(k + 1) * n]);
            }
        }
        for k in 0..h1 {
            let a = &a1[k * n..(k + 1) * n];
            let d = &mut d1[k * n..(k + 1) * n];
            for s in 0..n {
                d[s] *= act.derivative_from_output(a[s]);
            }
            let d = &*d;
            grad.b1[k] = d.iter().sum();
            for j in 0..din {
                grad.w1[k * din + j] = dot(d, &batch.x[j * n..(j + 1) * n]);
            }
        }
        loss / n as f64
    }

    fn step(&mut self, grad: &MlpGradient, lr: f64) {
        let pairs = [
            (&mut self.w1, &grad.w1),
            (&mut self.b1, &grad.b1),
            (&mut self.w2, &grad.w2),
            (&mut self.b2, &grad.b2),
            (&mut self.w3, &grad.w3),
        ];
        for (p, g) in pairs {
            p.iter_mut().zip(g).for_each(|(w, d)| *w -= lr * d);
        }
        self.b3 -= lr * grad.b3;
    }
}

impl Predict for MlpPredictor {
    fn predict(&self, raw: &[f64]) -> Result<f64> {
        self.check_input(raw)?;
        Ok(self.forward(raw))
    }

    fn predict_features(&self, x: &FeatureVector) -> Result<f64> {
        self.predict(x.raw())
    }

    fn predict_many(&self, xs: &[&FeatureVector]) -> Result<Vec<f64>> {
        const CHUNK: usize = 256;
        let [h1, h2] = self.hidden;
        let din = self.input_dim;
        let mut out = vec![0.0; xs.len()];
        let mut x = vec![0.0; din * CHUNK];
        let mut a1 = vec![0.0; h1 * CHUNK];
        let mut a2 = vec![0.0; h2 * CHUNK];
        for (chunk, dst) in xs.chunks(CHUNK).zip(out.chunks_mut(CHUNK)) {
            let n = chunk.len();
            for (s, fv) in chunk.iter().enumerate() {
                let raw = fv.raw();
                self.check_input(raw)?;
                for (j, v) in raw.iter().enumerate() {
                    x[j * n + s] = *v;
                }
            }
            self.forward_batch(&x[..din * n], n, &mut a1[..h1 * n], &mut a2[..h2 * n], dst);
        }
        Ok(out)
    }
}

/// Gradient of the mean squared error over `batch` with respect to every
/// network parameter.
pub fn mlp_gradient(p: &MlpPredictor, batch: &Dataset) -> Result<MlpGradient> {
    let batch = Batch::new(batch, p.input_dim)?;
    let mut grad = MlpGradient::zeros_like(p);
    p.loss_and_gradient(&batch, &mut Workspace::default(), &mut grad);
    Ok(grad)
}

pub fn train_mlp(train: &Dataset, cfg: &TrainConfig) -> Result<MlpPredictor> {
    train_mlp_traced(train, cfg).map(|(p, _)| p)
}

/// Like [`train_mlp`], also returning the training loss before every update
/// followed by the final loss.
pub fn train_mlp_traced(train: &Dataset, cfg: &TrainConfig) -> Result<(MlpPredictor, Vec<f64>)> {
    cfg.validate()?;
    let first = train
        .labeled()
        .first()
        .ok_or_else(|| Error::invalid("cannot train on an empty training set"))?;
    let input_dim = first.features.raw().len();
    let mut p = MlpPredictor::init(input_dim, cfg.hidden, cfg.activation, cfg.seed);
    let batch = Batch::new(train, input_dim)?;
    let mut ws = Workspace::default();
    let mut grad = MlpGradient::zeros_like(&p);
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..cfg.epochs {
        let loss = p.loss_and_gradient(&batch, &mut ws, &mut grad);
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch, loss });
        }
        trace.push(loss);
        p.step(&grad, cfg.learning_rate);
    }
    let final_loss = p.loss_and_gradient(&batch, &mut ws, &mut grad);
    if !final_loss.is_finite() {
        return Err(Error::TrainingDiverged {
            epoch: cfg.epochs,
            loss: final_loss,
        });
    }
    trace.push(final_loss);
    p.meta = TrainingMeta {
        epochs_run: cfg.epochs,
        final_loss,
    };
    Ok((p, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{featurize, Sample};

    fn data(xs: &[f64], f: impl Fn(f64) -> f64) -> Dataset {
        Dataset::labeled_only(
            xs.iter()
                .map(|&x| Sample::new(featurize(&[x], true).unwrap(), f(x)).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn uniform_xs(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = SimRng::new(seed);
        (0..n).map(|_| rng.uniform()).collect()
    }

    /// Mean squared error evaluated directly from predictions.
    fn loss_at(p: &MlpPredictor, ds: &Dataset) -> f64 {
        ds.labeled()
            .iter()
            .map(|s| (p.predict(s.features.raw()).unwrap() - s.label).powi(2))
            .sum::<f64>()
            / ds.n() as f64
    }

    fn finite_difference(p: &MlpPredictor, ds: &Dataset, h: f64) -> Vec<f64> {
        let base = p.params();
        let mut probe = p.clone();
        (0..base.len())
            .map(|i| {
                let mut plus = base.clone();
                plus[i] += h;
                probe.set_params(&plus).unwrap();
                let up = loss_at(&probe, ds);
                let mut minus = base.clone();
                minus[i] -= h;
                probe.set_params(&minus).unwrap();
                let down = loss_at(&probe, ds);
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn zero_network_predicts_zero() {
        let p = MlpPredictor::zeros(1, [16, 16], Activation::Tanh);
        for x in [-3.0, 0.0, 0.4, 17.0] {
            assert_eq!(p.predict(&[x]).unwrap(), 0.0);
        }
    }

    #[test]
    fn predict_checks_dimension() {
        let p = MlpPredictor::zeros(2, [4, 4], Activation::Tanh);
        assert!(matches!(p.predict(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn batched_prediction_matches_single() {
        let p = MlpPredictor::init(1, [16, 16], Activation::Tanh, 9);
        let fvs: Vec<FeatureVector> = uniform_xs(600, 4)
            .iter()
            .map(|&x| featurize(&[x], true).unwrap())
            .collect();
        let refs: Vec<&FeatureVector> = fvs.iter().collect();
        let many = p.predict_many(&refs).unwrap();
        for (fv, y) in fvs.iter().zip(&many) {
            assert_eq!(p.predict_features(fv).unwrap(), *y);
        }
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let p = MlpPredictor::init(1, [5, 4], Activation::Tanh, 3);
        let xs = uniform_xs(10, 1);
        let fitted: Vec<f64> = xs.iter().map(|&x| p.predict(&[x]).unwrap()).collect();
        let ds = Dataset::labeled_only(
            xs.iter()
                .zip(&fitted)
                .map(|(&x, &y)| Sample::new(featurize(&[x], true).unwrap(), y).unwrap())
                .collect(),
        )
        .unwrap();
        let g = mlp_gradient(&p, &ds).unwrap();
        assert!(g.flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let xs = uniform_xs(12, 2);
        let ds = data(&xs, |x| x * x);
        for (seed, act) in [(1, Activation::Tanh), (2, Activation::Sigmoid)] {
            let p = MlpPredictor::init(1, [6, 5], act, seed);
            let g = mlp_gradient(&p, &ds).unwrap().flat();
            let fd = finite_difference(&p, &ds, 1e-5);
            for (a, b) in g.iter().zip(&fd) {
                let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
                assert!(rel < 1e-4, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn duplicated_batch_has_same_gradient() {
        let xs = uniform_xs(9, 4);
        let doubled: Vec<f64> = xs.iter().chain(&xs).copied().collect();
        let p = MlpPredictor::init(1, [8, 8], Activation::Tanh, 5);
        let a = mlp_gradient(&p, &data(&xs, |x| x * x)).unwrap().flat();
        let b = mlp_gradient(&p, &data(&doubled, |x| x * x)).unwrap().flat();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() <= 1e-14 * u.abs().max(1.0));
        }
    }

    #[test]
    fn empty_batch_is_error() {
        let p = MlpPredictor::zeros(1, [2, 2], Activation::Tanh);
        assert!(mlp_gradient(&p, &Dataset::default()).is_err());
    }

    #[test]
    fn learns_a_constant() {
        let xs = uniform_xs(30, 6);
        let ds = data(&xs, |_| 0.7);
        let p = train_mlp(&ds, &TrainConfig::default()).unwrap();
        let worst = xs.iter().map(|&x| (p.predict(&[x]).unwrap() - 0.7).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-3, "worst error {worst}");
    }

    #[test]
    fn learns_the_square_with_monotone_loss() {
        let xs = uniform_xs(70, 7);
        let ds = data(&xs, |x| x * x);
        let cfg = TrainConfig {
            seed: 11,
            ..Default::default()
        };
        let (p, trace) = train_mlp_traced(&ds, &cfg).unwrap();
        assert!(p.meta.final_loss < 1e-3, "final loss {}", p.meta.final_loss);
        assert_eq!(p.meta.epochs_run, cfg.epochs);
        assert_eq!(trace.len(), cfg.epochs + 1);
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
        // bounded outputs on the unit interval
        for i in 0..=100 {
            let y = p.predict(&[i as f64 / 100.0]).unwrap();
            assert!(y.abs() < 10.0);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let ds = data(&uniform_xs(20, 8), |x| x * x);
        let cfg = TrainConfig {
            epochs: 200,
            seed: 3,
            ..Default::default()
        };
        assert_eq!(train_mlp(&ds, &cfg).unwrap(), train_mlp(&ds, &cfg).unwrap());
    }

    #[test]
    fn divergence_names_the_epoch() {
        let ds = data(&[1.0, 2.0, 3.0], |x| 1e3 * x);
        let cfg = TrainConfig {
            learning_rate: 50.0,
            epochs: 1000,
            ..Default::default()
        };
        match train_mlp(&ds, &cfg) {
            Err(Error::TrainingDiverged { epoch, .. }) => assert!(epoch < 1000),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn params_round_trip() {
        let mut p = MlpPredictor::init(2, [3, 4], Activation::Tanh, 9);
        let flat = p.params();
        assert_eq!(flat.len(), p.n_params());
        p.set_params(&flat).unwrap();
        assert_eq!(p.params(), flat);
        assert!(p.set_params(&flat[1..]).is_err());
    }
}
