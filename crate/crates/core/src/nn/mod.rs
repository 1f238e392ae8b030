//! Fixed-architecture dense regressor from word representations to
//! normalized EQ curves.
//!
//! Five ReLU layers of 300, 200, 100, 80 and 60 units feed a 40-unit
//! sigmoid output. The input is either a frozen embedding vector or a
//! one-hot word index. Training runs inverted dropout on the hidden
//! activations and minimizes the mean absolute error over bands.

mod io;
mod train;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{denormalize_gain, normalize_word, NUM_BANDS};
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

pub use io::{MODEL_FORMAT_VERSION, MODEL_MAGIC};
pub use train::{train, Optimizer, Sample, SampleInput, TrainConfig, TrainReport};

pub const HIDDEN_WIDTHS: [usize; 5] = [300, 200, 100, 80, 60];
pub const OUTPUT_WIDTH: usize = NUM_BANDS;
pub const DEFAULT_DROPOUT: f64 = 0.1;

/// How words reach the first dense layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputMode {
    /// Pre-computed embedding vectors of the given width. The embedding
    /// table itself is never part of the trainable state.
    Embedding { dim: usize },
    /// One-hot over a fixed vocabulary. Unknown words map to the all-zero
    /// vector.
    OneHot { vocab: Vec<String> },
}

impl InputMode {
    pub fn width(&self) -> usize {
        match self {
            InputMode::Embedding { dim } => *dim,
            InputMode::OneHot { vocab } => vocab.len(),
        }
    }

    pub fn one_hot<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab: Vec<String> = words
            .into_iter()
            .map(|w| normalize_word(w.as_ref()))
            .collect();
        vocab.sort();
        vocab.dedup();
        InputMode::OneHot { vocab }
    }

    /// Vocabulary position of `word` in one-hot mode.
    pub fn index_of(&self, word: &str) -> Option<usize> {
        match self {
            InputMode::OneHot { vocab } => vocab.binary_search(&normalize_word(word)).ok(),
            InputMode::Embedding { .. } => None,
        }
    }

    pub fn is_embedding(&self) -> bool {
        matches!(self, InputMode::Embedding { .. })
    }
}

/// Borrowed network input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Input<'a, T> {
    Dense(&'a [T]),
    /// `None` is the all-zero vector used for out-of-vocabulary words.
    OneHot(Option<usize>),
}

/// Fully connected layer; `weights` is row-major `out_dim × in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<T>,
    bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(in_dim: usize, out_dim: usize, weights: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Argument("layer dimensions must be positive".into()));
        }
        if weights.len() != in_dim * out_dim {
            return Err(Error::Shape {
                expected: in_dim * out_dim,
                found: weights.len(),
            });
        }
        if bias.len() != out_dim {
            return Err(Error::Shape {
                expected: out_dim,
                found: bias.len(),
            });
        }
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            bias,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![T::zero(); in_dim * out_dim],
            bias: vec![T::zero(); out_dim],
        }
    }

    fn uniform<R: Rng>(in_dim: usize, out_dim: usize, limit: f64, rng: &mut R) -> Self {
        let weights = (0..in_dim * out_dim)
            .map(|_| T::lit(rng.gen_range(-limit..limit)))
            .collect();
        Self {
            in_dim,
            out_dim,
            weights,
            bias: vec![T::zero(); out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias
    }

    fn row(&self, o: usize) -> &[T] {
        &self.weights[o * self.in_dim..(o + 1) * self.in_dim]
    }

    fn affine(&self, x: &[T], out: &mut Vec<T>) {
        out.clear();
        out.extend((0..self.out_dim).map(|o| dot(self.row(o), x) + self.bias[o]));
    }

    fn affine_one_hot(&self, idx: Option<usize>, out: &mut Vec<T>) {
        out.clear();
        match idx {
            Some(i) => out.extend(
                (0..self.out_dim).map(|o| self.weights[o * self.in_dim + i] + self.bias[o]),
            ),
            None => out.extend_from_slice(&self.bias),
        }
    }
}

#[inline]
fn sigmoid<T: Scalar>(z: T) -> T {
    let s = if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    };
    // keep the output strictly inside (0, 1)
    s.max(T::epsilon()).min(T::one() - T::epsilon())
}

/// Activations recorded by a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    version: u64,
    input: OwnedInput<T>,
    /// Post-activation, post-dropout output of every hidden layer.
    hidden: Vec<Vec<T>>,
    /// Per hidden unit: ReLU derivative times dropout scale.
    gates: Vec<Vec<T>>,
    output: Vec<T>,
}

impl<T> ForwardCache<T> {
    pub fn output(&self) -> &[T] {
        &self.output
    }

    /// ReLU derivative times dropout scale for every hidden unit.
    pub fn gates(&self) -> &[Vec<T>] {
        &self.gates
    }
}

#[derive(Debug, Clone)]
enum OwnedInput<T> {
    Dense(Vec<T>),
    OneHot(Option<usize>),
}

/// Per-parameter gradient buffers matching a model's layer shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub(crate) weights: Vec<Vec<T>>,
    pub(crate) biases: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn weights(&self, layer: usize) -> &[T] {
        &self.weights[layer]
    }

    pub fn bias(&self, layer: usize) -> &[T] {
        &self.biases[layer]
    }

    pub fn zero(&mut self) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            v.iter_mut().for_each(|g| *g = T::zero());
        }
    }

    pub(crate) fn scale(&mut self, k: T) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            v.iter_mut().for_each(|g| *g *= k);
        }
    }
}

/// Output of an inference pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    normalized: Vec<T>,
}

impl<T: Scalar> Prediction<T> {
    pub fn normalized(&self) -> &[T] {
        &self.normalized
    }

    /// Band gains in dB, each strictly inside ±4 dB.
    pub fn gains_db(&self) -> Vec<f64> {
        self.normalized
            .iter()
            .map(|v| denormalize_gain(v.as_f64()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    mode: InputMode,
    layers: Vec<Dense<T>>,
    version: u64,
}

impl<T: Scalar> Mlp<T> {
    /// The 300-200-100-80-60-40 network with fan-in scaled uniform weights
    /// (He bounds for ReLU layers, Glorot bounds for the sigmoid output)
    /// and zero biases.
    pub fn init(mode: InputMode, seed: u64) -> Result<Self> {
        Self::with_widths(mode, &HIDDEN_WIDTHS, OUTPUT_WIDTH, seed)
    }

    /// Same initialization scheme with arbitrary hidden widths.
    pub fn with_widths(
        mode: InputMode,
        hidden: &[usize],
        output: usize,
        seed: u64,
    ) -> Result<Self> {
        let in_dim = mode.width();
        if in_dim == 0 {
            return Err(Error::Argument(match mode {
                InputMode::OneHot { .. } => "one-hot vocabulary is empty".into(),
                InputMode::Embedding { .. } => "embedding dimension is zero".into(),
            }));
        }
        if hidden.contains(&0) || output == 0 {
            return Err(Error::Argument("layer widths must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = in_dim;
        for &width in hidden {
            let limit = (6.0 / fan_in as f64).sqrt();
            layers.push(Dense::uniform(fan_in, width, limit, &mut rng));
            fan_in = width;
        }
        let limit = (6.0 / (fan_in + output) as f64).sqrt();
        layers.push(Dense::uniform(fan_in, output, limit, &mut rng));
        Ok(Self {
            mode,
            layers,
            version: 0,
        })
    }

    /// Assembles a network from explicit layers; every layer but the last
    /// uses ReLU, the last uses the logistic sigmoid.
    pub fn from_layers(mode: InputMode, layers: Vec<Dense<T>>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::Argument("network needs at least one layer".into()))?;
        if first.in_dim != mode.width() {
            return Err(Error::Shape {
                expected: mode.width(),
                found: first.in_dim,
            });
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Shape {
                    expected: pair[0].out_dim,
                    found: pair[1].in_dim,
                });
            }
        }
        Ok(Self {
            mode,
            layers,
            version: 0,
        })
    }

    pub fn mode(&self) -> &InputMode {
        &self.mode
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        self.version += 1;
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.mode.width()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    /// Layer widths excluding the input, e.g. `[300, 200, 100, 80, 60, 40]`.
    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.out_dim).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn gradients(&self) -> Gradients<T> {
        Gradients {
            weights: self
                .layers
                .iter()
                .map(|l| vec![T::zero(); l.weights.len()])
                .collect(),
            biases: self
                .layers
                .iter()
                .map(|l| vec![T::zero(); l.bias.len()])
                .collect(),
        }
    }

    fn check_input(&self, input: &Input<'_, T>) -> Result<()> {
        match (input, &self.mode) {
            (Input::Dense(x), InputMode::Embedding { dim }) => {
                if x.len() != *dim {
                    return Err(Error::Shape {
                        expected: *dim,
                        found: x.len(),
                    });
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numeric(
                        "input vector has a non-finite component".into(),
                    ));
                }
                Ok(())
            }
            (Input::OneHot(idx), InputMode::OneHot { vocab }) => match idx {
                Some(i) if *i >= vocab.len() => Err(Error::Shape {
                    expected: vocab.len(),
                    found: *i + 1,
                }),
                _ => Ok(()),
            },
            (Input::Dense(x), InputMode::OneHot { vocab }) => Err(Error::Shape {
                expected: vocab.len(),
                found: x.len(),
            }),
            (Input::OneHot(_), InputMode::Embedding { dim }) => Err(Error::Shape {
                expected: *dim,
                found: 1,
            }),
        }
    }

    fn first_layer(&self, input: &Input<'_, T>, out: &mut Vec<T>) {
        match input {
            Input::Dense(x) => self.layers[0].affine(x, out),
            Input::OneHot(idx) => self.layers[0].affine_one_hot(*idx, out),
        }
    }

    /// Inference pass: no dropout, no scaling.
    pub fn forward(&self, input: Input<'_, T>) -> Result<Vec<T>> {
        self.check_input(&input)?;
        let last = self.layers.len() - 1;
        let mut z = Vec::new();
        self.first_layer(&input, &mut z);
        let mut a: Vec<T> = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            if l > 0 {
                layer.affine(&a, &mut z);
            }
            if l == last {
                z.iter_mut().for_each(|v| *v = sigmoid(*v));
            } else {
                z.iter_mut().for_each(|v| *v = v.max(T::zero()));
            }
            std::mem::swap(&mut a, &mut z);
        }
        Ok(a)
    }

    pub fn predict_input(&self, input: Input<'_, T>) -> Result<Prediction<T>> {
        Ok(Prediction {
            normalized: self.forward(input)?,
        })
    }

    /// Training pass with inverted dropout at `dropout_rate` on every hidden
    /// layer. The returned cache feeds [`Mlp::backward`].
    pub fn forward_train<R: Rng + ?Sized>(
        &self,
        input: Input<'_, T>,
        dropout_rate: f64,
        rng: &mut R,
    ) -> Result<ForwardCache<T>> {
        self.check_input(&input)?;
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::Argument(format!(
                "dropout rate {dropout_rate} outside [0, 1)"
            )));
        }
        let keep_scale = T::lit(1.0 / (1.0 - dropout_rate));
        let last = self.layers.len() - 1;
        let mut hidden: Vec<Vec<T>> = Vec::with_capacity(last);
        let mut gates: Vec<Vec<T>> = Vec::with_capacity(last);
        let mut z = Vec::new();
        self.first_layer(&input, &mut z);
        for l in 0..=last {
            if l > 0 {
                self.layers[l].affine(&hidden[l - 1], &mut z);
            }
            if l == last {
                break;
            }
            let mut gate = Vec::with_capacity(z.len());
            let mut act = Vec::with_capacity(z.len());
            for &v in &z {
                let kept = dropout_rate == 0.0 || rng.gen::<f64>() >= dropout_rate;
                let g = if v > T::zero() && kept {
                    if dropout_rate == 0.0 {
                        T::one()
                    } else {
                        keep_scale
                    }
                } else {
                    T::zero()
                };
                gate.push(g);
                act.push(v.max(T::zero()) * g);
            }
            hidden.push(act);
            gates.push(gate);
        }
        let output = z.iter().map(|&v| sigmoid(v)).collect();
        let input = match input {
            Input::Dense(x) => OwnedInput::Dense(x.to_vec()),
            Input::OneHot(i) => OwnedInput::OneHot(i),
        };
        Ok(ForwardCache {
            version: self.version,
            input,
            hidden,
            gates,
            output,
        })
    }

    /// Accumulates the gradient of the mean-absolute-error loss for one
    /// cached example into `grads` and returns that example's loss. The
    /// subgradient of |x| at 0 is taken as 0.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        target: &[T],
        grads: &mut Gradients<T>,
    ) -> Result<T> {
        if cache.version != self.version {
            return Err(Error::State(
                "forward cache predates the last parameter update".into(),
            ));
        }
        if cache.hidden.len() + 1 != self.layers.len()
            || cache
                .hidden
                .iter()
                .zip(&self.layers)
                .any(|(h, l)| h.len() != l.out_dim)
        {
            return Err(Error::State(
                "forward cache does not match this network".into(),
            ));
        }
        if grads.weights.len() != self.layers.len() {
            return Err(Error::State(
                "gradient buffers do not match this network".into(),
            ));
        }
        let loss = mae_loss(&cache.output, target)?;
        let n = T::from_usize(target.len()).expect("band count fits scalar");

        let mut delta: Vec<T> = cache
            .output
            .iter()
            .zip(target)
            .map(|(&p, &t)| {
                let sign = if p > t {
                    T::one()
                } else if p < t {
                    -T::one()
                } else {
                    T::zero()
                };
                sign / n * p * (T::one() - p)
            })
            .collect();

        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let gw = &mut grads.weights[l];
            let gb = &mut grads.biases[l];
            gb.iter_mut().zip(&delta).for_each(|(g, &d)| *g += d);
            if l > 0 {
                let x = &cache.hidden[l - 1];
                for (o, &d) in delta.iter().enumerate() {
                    if d == T::zero() {
                        continue;
                    }
                    let row = &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim];
                    row.iter_mut().zip(x).for_each(|(g, &xi)| *g += d * xi);
                }
                let mut prev = vec![T::zero(); layer.in_dim];
                for (o, &d) in delta.iter().enumerate() {
                    if d == T::zero() {
                        continue;
                    }
                    prev.iter_mut()
                        .zip(layer.row(o))
                        .for_each(|(p, &w)| *p += d * w);
                }
                prev.iter_mut()
                    .zip(&cache.gates[l - 1])
                    .for_each(|(p, &g)| *p *= g);
                delta = prev;
            } else {
                match &cache.input {
                    OwnedInput::Dense(x) => {
                        for (o, &d) in delta.iter().enumerate() {
                            let row = &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim];
                            row.iter_mut().zip(x).for_each(|(g, &xi)| *g += d * xi);
                        }
                    }
                    OwnedInput::OneHot(Some(i)) => {
                        for (o, &d) in delta.iter().enumerate() {
                            gw[o * layer.in_dim + i] += d;
                        }
                    }
                    OwnedInput::OneHot(None) => {}
                }
            }
        }
        Ok(loss)
    }

    /// Predicts the EQ curve for a free-text descriptor.
    ///
    /// Embedding mode requires `table` and fails with
    /// [`Error::Unresolvable`] when no part of the descriptor is in the
    /// table. One-hot mode ignores `table`; unknown words use the all-zero
    /// input.
    pub fn predict(
        &self,
        descriptor: &str,
        table: Option<&EmbeddingTable<T>>,
    ) -> Result<Prediction<T>> {
        match &self.mode {
            InputMode::Embedding { dim } => {
                let table = table.ok_or_else(|| {
                    Error::Argument("embedding-mode model needs an embedding table".into())
                })?;
                if table.dimension() != *dim {
                    return Err(Error::Dimension {
                        expected: *dim,
                        found: table.dimension(),
                    });
                }
                let v = table
                    .embed_descriptor(descriptor)?
                    .ok_or_else(|| Error::Unresolvable(descriptor.to_string()))?;
                self.predict_input(Input::Dense(&v))
            }
            InputMode::OneHot { .. } => {
                if descriptor.trim().is_empty() {
                    return Err(Error::Argument("descriptor is empty".into()));
                }
                self.predict_input(Input::OneHot(self.mode.index_of(descriptor)))
            }
        }
    }
}

/// Mean over bands of |prediction − target|.
pub fn mae_loss<T: Scalar>(prediction: &[T], target: &[T]) -> Result<T> {
    if prediction.len() != target.len() {
        return Err(Error::Shape {
            expected: target.len(),
            found: prediction.len(),
        });
    }
    if target.is_empty() {
        return Err(Error::Argument("empty loss input".into()));
    }
    let sum: T = prediction
        .iter()
        .zip(target)
        .map(|(&p, &t)| (p - t).abs())
        .sum();
    Ok(sum / T::from_usize(target.len()).expect("length fits scalar"))
}
