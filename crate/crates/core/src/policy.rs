//! Fully connected power-allocation network with explicit forward and
//! backward passes; no external autodiff.
//!
//! Hidden layers are ReLU; the output layer is a logistic squash scaled by
//! `p_max`, so every predicted power is feasible by construction and the
//! backward pass stays exact (no clipping).

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channelgen::ChannelSample;
use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Per-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    /// out = p_max · σ(z); the feasibility squash of the output layer.
    PmaxSigmoid,
}

/// One dense layer: weights stored out×in row-major, plus biases.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub w: Mat,
    pub b: Vec<f64>,
}

/// All weights of the policy π(Θ; h).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    layer_dims: Vec<usize>,
    layers: Vec<DenseLayer>,
    activations: Vec<Activation>,
    p_max: f64,
    version: u64,
}

/// Per-layer pre-activations and activations of one forward pass, consumed
/// by the matching backward call.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    input: Mat,
    pre: Vec<Mat>,
    post: Vec<Mat>,
}

/// Parameter gradient, same shapes as the layers.
#[derive(Debug, Clone)]
pub struct PolicyGrad {
    pub layers: Vec<DenseLayer>,
}

impl PolicyGrad {
    pub fn zeros_like(params: &PolicyParams) -> Self {
        PolicyGrad {
            layers: params
                .layers
                .iter()
                .map(|l| DenseLayer { w: Mat::zeros(l.w.rows(), l.w.cols()), b: vec![0.0; l.b.len()] })
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.is_finite() && l.b.iter().all(|v| v.is_finite()))
    }

    /// self ← scale·self + other, entrywise. Used for momentum folding.
    pub fn scale_add(&mut self, scale: f64, other: &PolicyGrad) {
        for (mine, theirs) in self.layers.iter_mut().zip(other.layers.iter()) {
            for (a, b) in mine.w.as_mut_slice().iter_mut().zip(theirs.w.iter()) {
                *a = scale * *a + b;
            }
            for (a, b) in mine.b.iter_mut().zip(theirs.b.iter()) {
                *a = scale * *a + b;
            }
        }
    }
}

/// Variance-scaled uniform initializer: U(−a, a) with a = √(6/(fan_in+fan_out)),
/// so Var = 2/(fan_in+fan_out). Biases start at zero.
pub fn init_policy(layer_dims: &[usize], p_max: f64, seed: u64) -> Result<PolicyParams> {
    if layer_dims.len() < 2 {
        return Err(Error::InvalidDimension(format!(
            "need at least input and output dims, got {layer_dims:?}"
        )));
    }
    if layer_dims.iter().any(|&d| d == 0) {
        return Err(Error::InvalidDimension(format!("zero layer width in {layer_dims:?}")));
    }
    if !(p_max > 0.0) {
        return Err(Error::InvalidParameter(format!("p_max must be > 0, got {p_max}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(layer_dims.len() - 1);
    let mut activations = Vec::with_capacity(layer_dims.len() - 1);
    for pair in layer_dims.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut w = Mat::zeros(fan_out, fan_in);
        for v in w.as_mut_slice() {
            *v = rng.random_range(-a..a);
        }
        layers.push(DenseLayer { w, b: vec![0.0; fan_out] });
        activations.push(Activation::Relu);
    }
    *activations.last_mut().unwrap() = Activation::PmaxSigmoid;
    Ok(PolicyParams { layer_dims: layer_dims.to_vec(), layers, activations, p_max, version: 0 })
}

impl PolicyParams {
    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.rows() * l.w.cols() + l.b.len()).sum()
    }

    pub(crate) fn from_parts(
        layer_dims: Vec<usize>,
        layers: Vec<DenseLayer>,
        p_max: f64,
    ) -> Result<Self> {
        if layer_dims.len() < 2 || layers.len() != layer_dims.len() - 1 {
            return Err(Error::Format("layer structure inconsistent".into()));
        }
        let mut activations = vec![Activation::Relu; layers.len()];
        *activations.last_mut().unwrap() = Activation::PmaxSigmoid;
        Ok(PolicyParams { layer_dims, layers, activations, p_max, version: 0 })
    }

    /// Batched forward pass: `x` is batch×input_dim, the output batch×K of
    /// powers lies in [0, p_max] entrywise.
    pub fn forward(&self, x: &Mat) -> Result<(Mat, ForwardCache)> {
        if x.cols() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} features, policy expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut act = x.clone();
        for (layer, activation) in self.layers.iter().zip(self.activations.iter()) {
            let mut z = act.matmul_nt(&layer.w);
            for r in 0..z.rows() {
                let row = z.row_mut(r);
                for (v, b) in row.iter_mut().zip(layer.b.iter()) {
                    *v += b;
                }
            }
            let mut a = z.clone();
            match activation {
                Activation::Relu => {
                    for v in a.as_mut_slice() {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                }
                Activation::PmaxSigmoid => {
                    for v in a.as_mut_slice() {
                        *v = self.p_max / (1.0 + (-*v).exp());
                    }
                }
            }
            pre.push(z);
            post.push(a.clone());
            act = a;
        }
        let cache = ForwardCache { version: self.version, input: x.clone(), pre, post };
        Ok((act, cache))
    }

    /// Exact reverse-mode gradient of the forward pass. `out_grad` is
    /// ∂loss/∂output per batch row; the caller bakes any per-sample weights
    /// into it. The cache must come from a forward call on these params.
    pub fn backward(&self, cache: &ForwardCache, out_grad: &Mat) -> Result<PolicyGrad> {
        if cache.version != self.version {
            return Err(Error::StaleCache(format!(
                "cache built at version {}, params now at {}",
                cache.version, self.version
            )));
        }
        let last = self.layers.len() - 1;
        if out_grad.rows() != cache.post[last].rows() || out_grad.cols() != cache.post[last].cols()
        {
            return Err(Error::ShapeMismatch(format!(
                "out_grad {}×{} vs outputs {}×{}",
                out_grad.rows(),
                out_grad.cols(),
                cache.post[last].rows(),
                cache.post[last].cols()
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = out_grad.clone();
        for l in (0..self.layers.len()).rev() {
            // dZ = upstream ⊙ activation'(z)
            let mut dz = upstream;
            match self.activations[l] {
                Activation::Relu => {
                    for (v, &z) in dz.as_mut_slice().iter_mut().zip(cache.pre[l].iter()) {
                        if z <= 0.0 {
                            *v = 0.0;
                        }
                    }
                }
                Activation::PmaxSigmoid => {
                    for (v, &o) in dz.as_mut_slice().iter_mut().zip(cache.post[l].iter()) {
                        *v *= o * (1.0 - o / self.p_max);
                    }
                }
            }
            let below = if l == 0 { &cache.input } else { &cache.post[l - 1] };
            let dw = dz.matmul_tn(below);
            let db = dz.col_sums();
            if l > 0 {
                upstream = dz.matmul_nt(&self.layers[l].w.transpose());
            } else {
                upstream = Mat::zeros(0, 0);
            }
            grads.push(DenseLayer { w: dw, b: db });
        }
        grads.reverse();
        Ok(PolicyGrad { layers: grads })
    }

    /// Plain gradient step Θ ← Θ − step·grad. Errors on non-finite gradients
    /// so training aborts with a diagnostic instead of poisoning the params.
    pub fn apply_update(&mut self, grad: &PolicyGrad, step: f64) -> Result<()> {
        if !(step >= 0.0) {
            return Err(Error::InvalidParameter(format!("step must be >= 0, got {step}")));
        }
        if grad.layers.len() != self.layers.len() {
            return Err(Error::ShapeMismatch("gradient layer count".into()));
        }
        if !grad.is_finite() {
            return Err(Error::NonFinite("policy gradient".into()));
        }
        for (layer, g) in self.layers.iter_mut().zip(grad.layers.iter()) {
            for (w, gw) in layer.w.as_mut_slice().iter_mut().zip(g.w.iter()) {
                *w -= step * gw;
            }
            for (b, gb) in layer.b.iter_mut().zip(g.b.iter()) {
                *b -= step * gb;
            }
        }
        self.version += 1;
        Ok(())
    }
}

/// Frozen input standardization: fitted once on the first training batch
/// and never refitted, so the input distribution the network sees does not
/// silently shift across episodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureNorm {
    pub mean: f64,
    pub std: f64,
}

impl FeatureNorm {
    pub fn identity() -> Self {
        FeatureNorm { mean: 0.0, std: 1.0 }
    }

    /// Scalar mean/std over all |h| magnitudes of the given channels.
    pub fn fit<'a>(channels: impl Iterator<Item = &'a ChannelSample>) -> Self {
        let mut values = Vec::new();
        for ch in channels {
            values.extend(ch.magnitudes());
        }
        if values.is_empty() {
            return FeatureNorm::identity();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        FeatureNorm { mean, std: var.sqrt().max(1e-12) }
    }
}

/// Checkpoint layout, little-endian: magic "CLWP", format version u16,
/// dim count u16, dims u32 each, p_max f64, per-layer weights (row-major)
/// then biases, then the frozen feature-norm mean and std.
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CLWP";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Write params plus the frozen feature-norm statistics.
pub fn save_checkpoint(
    path: &std::path::Path,
    params: &PolicyParams,
    norm: &FeatureNorm,
) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&(params.layer_dims.len() as u16).to_le_bytes())?;
    for &d in &params.layer_dims {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    out.write_all(&params.p_max.to_le_bytes())?;
    for layer in &params.layers {
        for &w in layer.w.as_slice() {
            out.write_all(&w.to_le_bytes())?;
        }
        for &b in &layer.b {
            out.write_all(&b.to_le_bytes())?;
        }
    }
    out.write_all(&norm.mean.to_le_bytes())?;
    out.write_all(&norm.std.to_le_bytes())?;
    out.flush()?;
    Ok(())
}

/// Load a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &std::path::Path) -> Result<(PolicyParams, FeatureNorm)> {
    use std::io::Read;
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)
        .map_err(|_| Error::Format("checkpoint shorter than its magic".into()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!("bad checkpoint magic {magic:02x?}")));
    }
    let mut u16buf = [0u8; 2];
    file.read_exact(&mut u16buf)?;
    let version = u16::from_le_bytes(u16buf);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    file.read_exact(&mut u16buf)?;
    let n_dims = u16::from_le_bytes(u16buf) as usize;
    if n_dims < 2 {
        return Err(Error::Format(format!("checkpoint has {n_dims} dims, need at least 2")));
    }
    let mut dims = Vec::with_capacity(n_dims);
    for _ in 0..n_dims {
        let mut u32buf = [0u8; 4];
        file.read_exact(&mut u32buf)
            .map_err(|_| Error::Format("truncated dims table".into()))?;
        let d = u32::from_le_bytes(u32buf) as usize;
        if d == 0 {
            return Err(Error::Format("zero layer width in checkpoint".into()));
        }
        dims.push(d);
    }
    let mut f64buf = [0u8; 8];
    let mut read_f64 = |file: &mut std::io::BufReader<std::fs::File>, what: &str| -> Result<f64> {
        file.read_exact(&mut f64buf)
            .map_err(|_| Error::Format(format!("truncated checkpoint: {what}")))?;
        Ok(f64::from_le_bytes(f64buf))
    };
    let p_max = read_f64(&mut file, "p_max")?;
    let mut layers = Vec::with_capacity(n_dims - 1);
    for pair in dims.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let mut w = Vec::with_capacity(fan_out * fan_in);
        for _ in 0..fan_out * fan_in {
            w.push(read_f64(&mut file, "weights")?);
        }
        let mut b = Vec::with_capacity(fan_out);
        for _ in 0..fan_out {
            b.push(read_f64(&mut file, "biases")?);
        }
        layers.push(DenseLayer { w: Mat::from_vec(fan_out, fan_in, w), b });
    }
    let mean = read_f64(&mut file, "feature-norm mean")?;
    let std = read_f64(&mut file, "feature-norm std")?;
    let params = PolicyParams::from_parts(dims, layers, p_max)?;
    Ok((params, FeatureNorm { mean, std }))
}

/// Row-major flattened |h_ij| magnitudes, standardized by the frozen stats.
pub fn featurize(h: &ChannelSample, norm: &FeatureNorm) -> Vec<f64> {
    h.magnitudes().into_iter().map(|v| (v - norm.mean) / norm.std).collect()
}

/// Stack featurized channels into a batch matrix.
pub fn featurize_batch<'a>(
    channels: impl ExactSizeIterator<Item = &'a ChannelSample>,
    norm: &FeatureNorm,
) -> Mat {
    let n = channels.len();
    let mut data = Vec::new();
    let mut cols = 0;
    for ch in channels {
        let f = featurize(ch, norm);
        cols = f.len();
        data.extend(f);
    }
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    Mat::from_vec(n, cols, data)
}
