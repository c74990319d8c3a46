use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flops::ModelDims;
use crate::numerics::DenseMatrix;
use crate::scalar::Scalar;

/// Uniform init range for projection weights.
pub const INIT_SCALE: f64 = 0.02;
/// Uniform init range for the token and position tables.
pub const EMBEDDING_SCALE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub dims: ModelDims,
    pub vocab_size: usize,
    pub num_classes: usize,
    pub layer_norm_eps: f64,
}

impl EncoderConfig {
    pub fn new(dims: ModelDims, vocab_size: usize, num_classes: usize) -> Result<Self> {
        let cfg = Self {
            dims,
            vocab_size,
            num_classes,
            layer_norm_eps: 1e-12,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Desk-scale defaults: 1024-token vocabulary, binary classifier.
    pub fn desk(dims: ModelDims) -> Self {
        Self {
            dims,
            vocab_size: 1024,
            num_classes: 2,
            layer_norm_eps: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if self.vocab_size == 0 || self.num_classes == 0 {
            return Err(Error::invalid(
                "vocabulary and class count must be positive",
            ));
        }
        if !(self.layer_norm_eps > 0.0) {
            return Err(Error::invalid("layer norm epsilon must be positive"));
        }
        Ok(())
    }
}

/// `x·W + b` with `W` stored as `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: DenseMatrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(weight: DenseMatrix<T>, bias: Vec<T>) -> Result<Self> {
        if bias.len() != weight.cols() {
            return Err(Error::LengthMismatch {
                op: "Linear::new",
                expected: weight.cols(),
                got: bias.len(),
            });
        }
        Ok(Self { weight, bias })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Result<Self> {
        Ok(Self {
            weight: DenseMatrix::zeros(inputs, outputs)?,
            bias: vec![T::zero(); outputs],
        })
    }

    fn random(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            weight: DenseMatrix::random_with(inputs, outputs, rng, T::lit(INIT_SCALE))?,
            bias: vec![T::zero(); outputs],
        })
    }

    pub fn inputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormWeights<T> {
    pub gain: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> NormWeights<T> {
    pub fn identity(width: usize) -> Self {
        Self {
            gain: vec![T::one(); width],
            bias: vec![T::zero(); width],
        }
    }
}

/// Per-head projections, each `d × d/h`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights<T> {
    pub query: Linear<T>,
    pub key: Linear<T>,
    pub value: Linear<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<T> {
    pub heads: Vec<HeadWeights<T>>,
    /// `d × d` projection of the concatenated head outputs.
    pub output: Linear<T>,
    pub attention_norm: NormWeights<T>,
    /// `d × d_ffnn`
    pub ffnn_in: Linear<T>,
    /// `d_ffnn × d`
    pub ffnn_out: Linear<T>,
    pub ffnn_norm: NormWeights<T>,
}

impl<T: Scalar> LayerWeights<T> {
    /// All-zero projections with identity layer norms.
    pub fn zeros(dims: &ModelDims) -> Result<Self> {
        let (d, dh) = (dims.d_mha, dims.head_dim());
        let heads = (0..dims.heads)
            .map(|_| {
                Ok(HeadWeights {
                    query: Linear::zeros(d, dh)?,
                    key: Linear::zeros(d, dh)?,
                    value: Linear::zeros(d, dh)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            heads,
            output: Linear::zeros(d, d)?,
            attention_norm: NormWeights::identity(d),
            ffnn_in: Linear::zeros(d, dims.d_ffnn)?,
            ffnn_out: Linear::zeros(dims.d_ffnn, d)?,
            ffnn_norm: NormWeights::identity(d),
        })
    }

    /// Uniform `±0.02` projections, zero biases, identity layer norms.
    pub fn seeded(dims: &ModelDims, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random(dims, &mut rng)
    }

    fn random(dims: &ModelDims, rng: &mut ChaCha8Rng) -> Result<Self> {
        let (d, dh) = (dims.d_mha, dims.head_dim());
        let mut heads = Vec::with_capacity(dims.heads);
        for _ in 0..dims.heads {
            heads.push(HeadWeights {
                query: Linear::random(d, dh, rng)?,
                key: Linear::random(d, dh, rng)?,
                value: Linear::random(d, dh, rng)?,
            });
        }
        Ok(Self {
            heads,
            output: Linear::random(d, d, rng)?,
            attention_norm: NormWeights::identity(d),
            ffnn_in: Linear::random(d, dims.d_ffnn, rng)?,
            ffnn_out: Linear::random(dims.d_ffnn, d, rng)?,
            ffnn_norm: NormWeights::identity(d),
        })
    }

    pub fn check(&self, dims: &ModelDims) -> Result<()> {
        let (d, dh) = (dims.d_mha, dims.head_dim());
        let mut shapes: Vec<(&Linear<T>, (usize, usize))> = vec![
            (&self.output, (d, d)),
            (&self.ffnn_in, (d, dims.d_ffnn)),
            (&self.ffnn_out, (dims.d_ffnn, d)),
        ];
        if self.heads.len() != dims.heads {
            return Err(Error::invalid(format!(
                "layer has {} heads, expected {}",
                self.heads.len(),
                dims.heads
            )));
        }
        for h in &self.heads {
            shapes.extend([(&h.query, (d, dh)), (&h.key, (d, dh)), (&h.value, (d, dh))]);
        }
        for (lin, want) in shapes {
            if lin.weight.shape() != want || lin.bias.len() != want.1 {
                return Err(Error::ShapeMismatch {
                    op: "LayerWeights::check",
                    left: lin.weight.shape(),
                    right: want,
                });
            }
        }
        for n in [&self.attention_norm, &self.ffnn_norm] {
            if n.gain.len() != d || n.bias.len() != d {
                return Err(Error::LengthMismatch {
                    op: "LayerWeights::check",
                    expected: d,
                    got: n.gain.len(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights<T> {
    pub config: EncoderConfig,
    /// `vocab × d`
    pub token_embedding: DenseMatrix<T>,
    /// `max_len × d`
    pub position_embedding: DenseMatrix<T>,
    pub layers: Vec<LayerWeights<T>>,
    /// `d × num_classes`
    pub classifier: Linear<T>,
}

impl<T: Scalar> EncoderWeights<T> {
    /// Deterministic weights for `(config, seed)`.
    pub fn seeded(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let dims = config.dims;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let emb = T::lit(EMBEDDING_SCALE);
        let token_embedding =
            DenseMatrix::random_with(config.vocab_size, dims.d_mha, &mut rng, emb)?;
        let position_embedding = DenseMatrix::random_with(dims.max_len, dims.d_mha, &mut rng, emb)?;
        let layers = (0..dims.layers)
            .map(|_| LayerWeights::random(&dims, &mut rng))
            .collect::<Result<_>>()?;
        let classifier = Linear::random(dims.d_mha, config.num_classes, &mut rng)?;
        Ok(Self {
            config,
            token_embedding,
            position_embedding,
            layers,
            classifier,
        })
    }

    pub fn zeros(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let dims = config.dims;
        Ok(Self {
            config,
            token_embedding: DenseMatrix::zeros(config.vocab_size, dims.d_mha)?,
            position_embedding: DenseMatrix::zeros(dims.max_len, dims.d_mha)?,
            layers: (0..dims.layers)
                .map(|_| LayerWeights::zeros(&dims))
                .collect::<Result<_>>()?,
            classifier: Linear::zeros(dims.d_mha, config.num_classes)?,
        })
    }

    pub fn dims(&self) -> &ModelDims {
        &self.config.dims
    }

    /// Verifies every tensor shape against the config.
    pub fn check(&self) -> Result<()> {
        self.config.validate()?;
        let dims = &self.config.dims;
        let expect = |m: &DenseMatrix<T>, want: (usize, usize)| {
            if m.shape() != want {
                Err(Error::ShapeMismatch {
                    op: "EncoderWeights::check",
                    left: m.shape(),
                    right: want,
                })
            } else {
                Ok(())
            }
        };
        expect(&self.token_embedding, (self.config.vocab_size, dims.d_mha))?;
        expect(&self.position_embedding, (dims.max_len, dims.d_mha))?;
        expect(
            &self.classifier.weight,
            (dims.d_mha, self.config.num_classes),
        )?;
        if self.layers.len() != dims.layers {
            return Err(Error::invalid(format!(
                "{} layers present, config says {}",
                self.layers.len(),
                dims.layers
            )));
        }
        self.layers.iter().try_for_each(|l| l.check(dims))
    }
}
