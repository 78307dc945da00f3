use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::embedding::{SparseVec, EMBED_DIM};
use super::replay::ReplayBuffer;
use crate::error::{Error, Result};

pub const HIDDEN_DIM: usize = 512;
pub const CHECKPOINT_FORMAT: u32 = 1;

/// Two-layer perceptron `input -> hidden (ReLU) -> output` in double precision.
///
/// The first weight matrix is stored input-major so a sparse input only
/// touches the rows of its nonzero entries.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    input: usize,
    hidden: usize,
    output: usize,
    /// `w1[i * hidden + j]`: input `i` to hidden unit `j`.
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// `w2[k * hidden + j]`: hidden unit `j` to output `k`.
    w2: Vec<f64>,
    b2: Vec<f64>,
    seed: u64,
}

/// Dense gradient with the same layout as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradients {
    pub fn flat(&self, idx: usize) -> f64 {
        let (a, b, c) = (self.w1.len(), self.b1.len(), self.w2.len());
        if idx < a {
            self.w1[idx]
        } else if idx < a + b {
            self.b1[idx - a]
        } else if idx < a + b + c {
            self.w2[idx - a - b]
        } else {
            self.b2[idx - a - b - c]
        }
    }

    pub fn max_abs(&self) -> f64 {
        [&self.w1, &self.b1, &self.w2, &self.b2]
            .into_iter()
            .flat_map(|v| v.iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Update rule applied to a batch gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Optimizer {
    Sgd,
    /// Divides each gradient by a running RMS of its recent values.
    RmsProp { decay: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::RmsProp { decay: 0.95, eps: 1e-6 }
    }
}

/// Batch gradient with only the touched first-layer rows.
struct BatchGradient {
    w1_rows: BTreeMap<usize, Vec<f64>>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct RmsStats {
    w1: Vec<f64>,
    /// Step at which each first-layer row was last updated; untouched rows
    /// catch up on their decay lazily.
    w1_seen: Vec<u64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    step: u64,
}

fn rms_update(w: &mut [f64], g: &[f64], m: &mut [f64], lr: f64, decay: f64, eps: f64) {
    for ((w, d), m) in w.iter_mut().zip(g).zip(m.iter_mut()) {
        *m = decay * *m + (1.0 - decay) * d * d;
        if *d != 0.0 {
            *w -= lr * d / (m.sqrt() + eps);
        }
    }
}

/// An optimizer with its per-parameter running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    optimizer: Optimizer,
    stats: Option<RmsStats>,
}

impl OptimizerState {
    pub fn new(optimizer: Optimizer) -> Self {
        Self { optimizer, stats: None }
    }

    pub fn optimizer(&self) -> Optimizer {
        self.optimizer
    }

    fn apply(&mut self, net: &mut QNetwork, g: &BatchGradient, lr: f64) {
        let h = net.hidden;
        match self.optimizer {
            Optimizer::Sgd => {
                for (&r, row) in &g.w1_rows {
                    net.w1[r * h..(r + 1) * h].iter_mut().zip(row).for_each(|(w, d)| *w -= lr * d);
                }
                for (p, g) in [(&mut net.b1, &g.b1), (&mut net.w2, &g.w2), (&mut net.b2, &g.b2)] {
                    p.iter_mut().zip(g).for_each(|(w, d)| *w -= lr * d);
                }
            }
            Optimizer::RmsProp { decay, eps } => {
                let st = self.stats.get_or_insert_with(|| RmsStats {
                    w1: vec![0.0; net.w1.len()],
                    w1_seen: vec![0; net.input],
                    b1: vec![0.0; net.b1.len()],
                    w2: vec![0.0; net.w2.len()],
                    b2: vec![0.0; net.b2.len()],
                    step: 0,
                });
                st.step += 1;
                for (&r, row) in &g.w1_rows {
                    let m = &mut st.w1[r * h..(r + 1) * h];
                    let idle = st.step - st.w1_seen[r] - 1;
                    if idle > 0 {
                        let f = decay.powi(idle.min(i32::MAX as u64) as i32);
                        m.iter_mut().for_each(|x| *x *= f);
                    }
                    st.w1_seen[r] = st.step;
                    rms_update(&mut net.w1[r * h..(r + 1) * h], row, m, lr, decay, eps);
                }
                rms_update(&mut net.b1, &g.b1, &mut st.b1, lr, decay, eps);
                rms_update(&mut net.w2, &g.w2, &mut st.w2, lr, decay, eps);
                rms_update(&mut net.b2, &g.b2, &mut st.b2, lr, decay, eps);
            }
        }
    }
}

struct Activations {
    z: Vec<f64>,
    h: Vec<f64>,
    q: Vec<f64>,
}

impl QNetwork {
    /// Uniform initialization in `±1/sqrt(fan_in)` for weights and biases.
    pub fn new(input: usize, hidden: usize, output: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |n: usize, fan_in: usize| -> Vec<f64> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
        };
        let w1 = uniform(input * hidden, input);
        let b1 = uniform(hidden, input);
        let w2 = uniform(output * hidden, hidden);
        let b2 = uniform(output, hidden);
        Self { input, hidden, output, w1, b1, w2, b2, seed }
    }

    /// The controller shape: 1536 -> 512 -> `n_samples + 1`.
    pub fn for_samples(n_samples: usize, seed: u64) -> Self {
        Self::new(EMBED_DIM, HIDDEN_DIM, n_samples + 1, seed)
    }

    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            input,
            hidden,
            output,
            w1: vec![0.0; input * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; output * hidden],
            b2: vec![0.0; output],
            seed: 0,
        }
    }

    pub fn layer_dims(&self) -> [usize; 3] {
        [self.input, self.hidden, self.output]
    }

    pub fn n_actions(&self) -> usize {
        self.output
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_finite(&self) -> bool {
        [&self.w1, &self.b1, &self.w2, &self.b2].iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.input {
            return Err(Error::Shape { expected: self.input, actual: len });
        }
        Ok(())
    }

    fn activations(&self, x: &SparseVec) -> Activations {
        let mut z = self.b1.clone();
        for (i, xi) in x.iter() {
            let row = &self.w1[i * self.hidden..(i + 1) * self.hidden];
            for (zj, wij) in z.iter_mut().zip(row) {
                *zj += xi * wij;
            }
        }
        let h: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
        let q = (0..self.output)
            .map(|k| {
                let row = &self.w2[k * self.hidden..(k + 1) * self.hidden];
                self.b2[k] + row.iter().zip(&h).map(|(w, h)| w * h).sum::<f64>()
            })
            .collect();
        Activations { z, h, q }
    }

    /// Pre-softmax action values.
    pub fn logits_sparse(&self, x: &SparseVec) -> Result<Vec<f64>> {
        self.check_dim(x.dim())?;
        Ok(self.activations(x).q)
    }

    pub fn logits(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(v.len())?;
        Ok(self.activations(&SparseVec::from_dense(v)).q)
    }

    /// Softmax scores over the `N + 1` actions.
    pub fn forward(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(v)?))
    }

    /// Squared error `(Q(v, action) - target)^2`.
    pub fn loss(&self, v: &[f64], action: usize, target: f64) -> Result<f64> {
        let q = self.logits(v)?;
        Ok((q[action] - target).powi(2))
    }

    /// Analytic gradient of [`QNetwork::loss`].
    pub fn loss_gradient(&self, v: &[f64], action: usize, target: f64) -> Result<Gradients> {
        self.check_dim(v.len())?;
        let x = SparseVec::from_dense(v);
        let act = self.activations(&x);
        let dq = 2.0 * (act.q[action] - target);
        let mut g = Gradients {
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.hidden],
            w2: vec![0.0; self.w2.len()],
            b2: vec![0.0; self.output],
        };
        g.b2[action] = dq;
        let w2a = &self.w2[action * self.hidden..(action + 1) * self.hidden];
        for j in 0..self.hidden {
            g.w2[action * self.hidden + j] = dq * act.h[j];
            g.b1[j] = if act.z[j] > 0.0 { dq * w2a[j] } else { 0.0 };
        }
        for (i, xi) in x.iter() {
            for j in 0..self.hidden {
                g.w1[i * self.hidden + j] = xi * g.b1[j];
            }
        }
        Ok(g)
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    fn param_mut(&mut self, idx: usize) -> &mut f64 {
        let (a, b, c) = (self.w1.len(), self.b1.len(), self.w2.len());
        if idx < a {
            &mut self.w1[idx]
        } else if idx < a + b {
            &mut self.b1[idx - a]
        } else if idx < a + b + c {
            &mut self.w2[idx - a - b]
        } else {
            &mut self.b2[idx - a - b - c]
        }
    }

    /// One plain SGD step on a uniformly drawn batch. See [`Self::train_step_with`].
    pub fn train_step<R: Rng>(
        &mut self,
        buf: &ReplayBuffer,
        batch: usize,
        lr: f64,
        gamma: f64,
        rng: &mut R,
    ) -> Result<f64> {
        self.train_step_with(buf, batch, lr, gamma, &mut OptimizerState::new(Optimizer::Sgd), rng)
    }

    /// Samples `batch` transitions without replacement and takes one step on
    /// the mean squared error against `r` for terminal transitions and
    /// `r + gamma * max_a Q(s', a)` otherwise. Targets and gradients all use
    /// the pre-step weights. Returns the mean batch loss.
    pub fn train_step_with<R: Rng>(
        &mut self,
        buf: &ReplayBuffer,
        batch: usize,
        lr: f64,
        gamma: f64,
        opt: &mut OptimizerState,
        rng: &mut R,
    ) -> Result<f64> {
        if batch == 0 || buf.len() < batch {
            return Err(Error::NotReady { len: buf.len(), batch });
        }
        let picks = sample(rng, buf.len(), batch);
        let (grads, loss) = self.batch_gradient(buf, picks.iter(), gamma)?;
        opt.apply(self, &grads, lr);
        Ok(loss)
    }

    fn batch_gradient(
        &self,
        buf: &ReplayBuffer,
        picks: impl ExactSizeIterator<Item = usize>,
        gamma: f64,
    ) -> Result<(BatchGradient, f64)> {
        let scale = 1.0 / picks.len() as f64;
        let mut g = BatchGradient {
            w1_rows: BTreeMap::new(),
            b1: vec![0.0; self.b1.len()],
            w2: vec![0.0; self.w2.len()],
            b2: vec![0.0; self.b2.len()],
        };
        let mut loss = 0.0;
        for i in picks {
            let t = buf.get(i).expect("sampled index in range");
            self.check_dim(t.state.dim())?;
            let act = self.activations(&t.state);
            let target = match &t.next_state {
                Some(next) => {
                    self.check_dim(next.dim())?;
                    let q_next = self.activations(next).q;
                    t.reward + gamma * q_next.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                }
                None => t.reward,
            };
            let a = t.action;
            let err = act.q[a] - target;
            loss += err * err;
            let dq = 2.0 * err * scale;
            let w2a = &self.w2[a * self.hidden..(a + 1) * self.hidden];
            let dz: Vec<f64> = (0..self.hidden).map(|j| if act.z[j] > 0.0 { dq * w2a[j] } else { 0.0 }).collect();
            g.b2[a] += dq;
            for (gw, hj) in g.w2[a * self.hidden..(a + 1) * self.hidden].iter_mut().zip(&act.h) {
                *gw += dq * hj;
            }
            for (gb, d) in g.b1.iter_mut().zip(&dz) {
                *gb += d;
            }
            for (xi_idx, xi) in t.state.iter() {
                let row = g.w1_rows.entry(xi_idx).or_insert_with(|| vec![0.0; self.hidden]);
                for (gw, d) in row.iter_mut().zip(&dz) {
                    *gw += xi * d;
                }
            }
        }
        Ok((g, loss * scale))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let w1: Vec<Vec<f64>> =
            (0..self.hidden).map(|j| (0..self.input).map(|i| self.w1[i * self.hidden + j]).collect()).collect();
        let w2: Vec<Vec<f64>> = self.w2.chunks(self.hidden).map(<[f64]>::to_vec).collect();
        Checkpoint {
            format_version: CHECKPOINT_FORMAT,
            layer_dims: vec![self.input, self.hidden, self.output],
            n_samples: self.output.saturating_sub(1),
            seed: self.seed,
            weights: vec![w1, w2],
            biases: vec![self.b1.clone(), self.b2.clone()],
        }
    }

    /// Rebuilds a network, rejecting any shape that disagrees with
    /// `expected_n_samples` or with the checkpoint's own dims.
    pub fn from_checkpoint(ck: &Checkpoint, expected_n_samples: Option<usize>) -> Result<Self> {
        let bad = |m: String| Err(Error::CheckpointIncompatible(m));
        if ck.format_version != CHECKPOINT_FORMAT {
            return bad(format!("format_version {} is not {CHECKPOINT_FORMAT}", ck.format_version));
        }
        let [input, hidden, output] = match ck.layer_dims.as_slice() {
            &[a, b, c] => [a, b, c],
            other => return bad(format!("expected 3 layer dims, found {}", other.len())),
        };
        if input != EMBED_DIM {
            return bad(format!("input dim {input} does not match the {EMBED_DIM}-wide embedding"));
        }
        if ck.n_samples + 1 != output {
            return bad(format!("n_samples {} does not match output dim {output}", ck.n_samples));
        }
        if let Some(n) = expected_n_samples {
            if n + 1 != output {
                return bad(format!("checkpoint scores {} actions, configuration needs {}", output, n + 1));
            }
        }
        let shape_ok = |m: &Vec<Vec<f64>>, rows: usize, cols: usize| m.len() == rows && m.iter().all(|r| r.len() == cols);
        if ck.weights.len() != 2
            || ck.biases.len() != 2
            || !shape_ok(&ck.weights[0], hidden, input)
            || !shape_ok(&ck.weights[1], output, hidden)
            || ck.biases[0].len() != hidden
            || ck.biases[1].len() != output
        {
            return bad(format!("weight shapes do not match layer_dims {:?}", ck.layer_dims));
        }
        let mut w1 = vec![0.0; input * hidden];
        for (j, row) in ck.weights[0].iter().enumerate() {
            for (i, &w) in row.iter().enumerate() {
                w1[i * hidden + j] = w;
            }
        }
        let net = Self {
            input,
            hidden,
            output,
            w1,
            b1: ck.biases[0].clone(),
            w2: ck.weights[1].concat(),
            b2: ck.biases[1].clone(),
            seed: ck.seed,
        };
        if !net.is_finite() {
            return bad("non-finite parameters".into());
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(&self.to_checkpoint())?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, expected_n_samples: Option<usize>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read(path)
            .map_err(|e| Error::CheckpointIncompatible(format!("cannot read {}: {e}", path.display())))?;
        let ck: Checkpoint = serde_json::from_slice(&text)
            .map_err(|e| Error::CheckpointIncompatible(format!("{}: {e}", path.display())))?;
        Self::from_checkpoint(&ck, expected_n_samples)
    }
}

/// On-disk controller weights; matrices are `out x in`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub layer_dims: Vec<usize>,
    pub n_samples: usize,
    pub seed: u64,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
}

/// Max relative error between `analytic` gradients and central differences
/// over `n_checks` random parameters per layer tensor (all of them when the
/// tensor is smaller). Entries where both gradients are below `1e-10` count
/// as exact.
pub fn gradient_check_with<F>(
    net: &QNetwork,
    v: &[f64],
    action: usize,
    target: f64,
    n_checks: usize,
    seed: u64,
    analytic: F,
) -> Result<f64>
where
    F: Fn(&QNetwork, &[f64], usize, f64) -> Result<Gradients>,
{
    const H: f64 = 1e-5;
    let grads = analytic(net, v, action, target)?;
    let mut probe = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = [net.w1.len(), net.b1.len(), net.w2.len(), net.b2.len()];
    let mut offset = 0;
    let mut worst: f64 = 0.0;
    for size in sizes {
        let picks: Vec<usize> =
            if size <= n_checks { (0..size).collect() } else { sample(&mut rng, size, n_checks).into_vec() };
        for p in picks {
            let idx = offset + p;
            let orig = *probe.param_mut(idx);
            *probe.param_mut(idx) = orig + H;
            let plus = probe.loss(v, action, target)?;
            *probe.param_mut(idx) = orig - H;
            let minus = probe.loss(v, action, target)?;
            *probe.param_mut(idx) = orig;
            let numeric = (plus - minus) / (2.0 * H);
            let a = grads.flat(idx);
            let denom = a.abs().max(numeric.abs());
            if denom > 1e-10 {
                worst = worst.max((a - numeric).abs() / denom);
            }
        }
        offset += size;
    }
    Ok(worst)
}

/// [`gradient_check_with`] using the network's own backpropagation.
pub fn gradient_check(net: &QNetwork, v: &[f64], action: usize, target: f64, n_checks: usize, seed: u64) -> Result<f64> {
    gradient_check_with(net, v, action, target, n_checks, seed, |n, v, a, t| n.loss_gradient(v, a, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::replay::Transition;
    use crate::controller::HashEmbedding;
    use std::sync::Arc;

    fn random_input(seed: u64, dim: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_net_is_uniform() {
        let net = QNetwork::zeros(8, 4, 6);
        let s = net.forward(&random_input(1, 8)).unwrap();
        assert!(s.iter().all(|&p| (p - 1.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn softmax_shift_invariant() {
        let l = [0.3, -1.2, 4.0, 2.2];
        let shifted: Vec<f64> = l.iter().map(|x| x + 123.4).collect();
        for (a, b) in softmax(&l).iter().zip(softmax(&shifted)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_input_width_is_shape_error() {
        let net = QNetwork::new(8, 4, 3, 0);
        assert!(matches!(net.forward(&[0.0; 7]), Err(Error::Shape { expected: 8, actual: 7 })));
    }

    #[test]
    fn small_net_gradients_match() {
        let net = QNetwork::new(20, 16, 4, 3);
        let v = random_input(4, 20);
        let err = gradient_check(&net, &v, 2, 5.0, 1000, 9).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn stationary_point_has_zero_gradient() {
        let net = QNetwork::new(20, 16, 4, 3);
        let v = random_input(4, 20);
        let q = net.logits(&v).unwrap()[1];
        assert!(net.loss_gradient(&v, 1, q).unwrap().max_abs() < 1e-8);
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let net = QNetwork::new(20, 16, 4, 3);
        let v = random_input(4, 20);
        let err = gradient_check_with(&net, &v, 0, 5.0, 1000, 9, |n, v, a, t| {
            let mut g = n.loss_gradient(v, a, t)?;
            g.b2[a] *= 1.1;
            Ok(g)
        })
        .unwrap();
        assert!(err > 1e-2);
    }

    fn terminal_buffer(n: usize) -> ReplayBuffer {
        let s = SparseVec::from_dense(&HashEmbedding::embed_text("a fixed state"));
        let mut buf = ReplayBuffer::new(n);
        for _ in 0..n {
            buf.push(Transition::terminal(s.clone(), 0, 1.0));
        }
        buf
    }

    #[test]
    fn not_ready_leaves_weights() {
        let mut net = QNetwork::for_samples(5, 1);
        let before = net.clone();
        let buf = terminal_buffer(10);
        let r = net.train_step(&buf, 128, 1e-4, 1.0, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(r, Err(Error::NotReady { len: 10, batch: 128 })));
        assert_eq!(net, before);
    }

    #[test]
    fn terminal_reward_is_fixed_point() {
        let mut net = QNetwork::for_samples(5, 1);
        let buf = terminal_buffer(128);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20_000 {
            net.train_step(&buf, 128, 1e-4, 1.0, &mut rng).unwrap();
        }
        let q = net.logits_sparse(buf.get(0).unwrap().state.as_ref()).unwrap()[0];
        assert!((q - 1.0).abs() < 0.05, "{q}");
    }

    #[test]
    fn rmsprop_separates_two_states() {
        let a = Arc::new(SparseVec::from_dense(&HashEmbedding::embed_text("how many dogs")));
        let b = Arc::new(SparseVec::from_dense(&HashEmbedding::embed_text("what color is the dog")));
        let mut buf = ReplayBuffer::new(256);
        for i in 0..256 {
            let (s, r) = if i % 2 == 0 { (&a, 100.0) } else { (&b, -100.0) };
            buf.push(Transition::terminal(s.clone(), 2, r));
        }
        let mut net = QNetwork::for_samples(5, 3);
        let mut opt = OptimizerState::new(Optimizer::RmsProp { decay: 0.95, eps: 1e-6 });
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..3000 {
            net.train_step_with(&buf, 128, 1e-3, 1.0, &mut opt, &mut rng).unwrap();
        }
        let qa = net.logits_sparse(&a).unwrap()[2];
        let qb = net.logits_sparse(&b).unwrap()[2];
        assert!((qa - 100.0).abs() < 5.0 && (qb + 100.0).abs() < 5.0, "{qa} {qb}");
    }

    #[test]
    fn same_seed_same_step() {
        let buf = terminal_buffer(200);
        let run = || {
            let mut net = QNetwork::for_samples(5, 1);
            net.train_step(&buf, 128, 1e-4, 1.0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
            net
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn checkpoint_round_trip_and_mismatch() {
        let net = QNetwork::for_samples(5, 11);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        net.save(&path).unwrap();
        assert_eq!(QNetwork::load(&path, Some(5)).unwrap(), net);
        assert!(matches!(QNetwork::load(&path, Some(4)), Err(Error::CheckpointIncompatible(_))));
        let mut ck = net.to_checkpoint();
        ck.weights[1].pop();
        assert!(QNetwork::from_checkpoint(&ck, None).is_err());
    }
}
