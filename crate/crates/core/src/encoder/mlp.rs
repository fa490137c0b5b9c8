use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{build_inputs, Encoder, FeatureMap, PointDescriptorInput, INPUT_DIM};
use crate::error::{Error, Result};
use crate::pointcloud::PointCloud;
use crate::rng;

pub const HIDDEN_WIDTH: usize = 32;

const CHECKPOINT_FORMAT: &str = "placerec-encoder";
const CHECKPOINT_VERSION: u32 = 1;

/// Weights of the reference per-point MLP `9 → 32 → 32 → d` (ReLU on the
/// hidden layers, linear output).
///
/// All parameters live in one flat buffer: for each layer, the `out × in`
/// row-major weight matrix followed by the `out` biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub layer_sizes: Vec<usize>,
    pub k: usize,
    pub normalize_intensity: bool,
    pub data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    feature_dim: usize,
    #[serde(flatten)]
    params: EncoderParams,
}

/// Activations kept from the forward pass.
#[derive(Clone, Debug)]
pub struct MlpCache {
    pub inputs: Vec<PointDescriptorInput>,
    /// Post-activation outputs of each hidden layer, row-major `N × width`.
    hidden: Vec<Vec<f64>>,
}

impl EncoderParams {
    pub fn zeros(feature_dim: usize, k: usize) -> Self {
        let layer_sizes = vec![INPUT_DIM, HIDDEN_WIDTH, HIDDEN_WIDTH, feature_dim];
        let len = param_count(&layer_sizes);
        Self {
            layer_sizes,
            k,
            normalize_intensity: true,
            data: vec![0.0; len],
        }
    }

    /// Glorot-uniform weights `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(feature_dim: usize, k: usize, seed: u64) -> Self {
        let mut p = Self::zeros(feature_dim, k);
        let mut r = rng::seeded(seed);
        let mut offset = 0;
        for w in p.layer_sizes.clone().windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in &mut p.data[offset..offset + fan_in * fan_out] {
                *v = r.random_range(-bound..bound);
            }
            offset += fan_in * fan_out + fan_out;
        }
        p
    }

    pub fn feature_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap_or(&0)
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len().saturating_sub(1)
    }

    /// `(weights, biases)` of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (start, n_in, n_out) = self.layer_span(l);
        let w = &self.data[start..start + n_in * n_out];
        let b = &self.data[start + n_in * n_out..start + n_in * n_out + n_out];
        (w, b)
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let (start, n_in, n_out) = self.layer_span(l);
        let (w, rest) = self.data[start..].split_at_mut(n_in * n_out);
        (w, &mut rest[..n_out])
    }

    fn layer_span(&self, l: usize) -> (usize, usize, usize) {
        let start = self.layer_sizes[..=l]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum();
        (start, self.layer_sizes[l], self.layer_sizes[l + 1])
    }

    /// A zeroed parameter set with the same architecture, used for gradients.
    pub fn zeros_like(&self) -> Self {
        Self {
            data: vec![0.0; self.data.len()],
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.layer_sizes;
        if s.len() < 2 || s[0] != INPUT_DIM || s.contains(&0) {
            return Err(Error::Config(format!("unsupported layer sizes {s:?}")));
        }
        if self.k == 0 {
            return Err(Error::Config("neighborhood size k must be at least 1".into()));
        }
        let expect = param_count(s);
        if self.data.len() != expect {
            return Err(Error::Config(format!(
                "parameter buffer has {} values, architecture {s:?} needs {expect}",
                self.data.len()
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite encoder parameter".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            feature_dim: self.feature_dim(),
            params: self.clone(),
        };
        serde_json::to_string(&file).expect("encoder params serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("bad encoder checkpoint: {e}")))?;
        if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint {} v{}",
                file.format, file.version
            )));
        }
        file.params.validate()?;
        if file.params.feature_dim() != file.feature_dim {
            return Err(Error::Config("feature_dim disagrees with layer sizes".into()));
        }
        Ok(file.params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::pointcloud::write_text_file(path.as_ref(), &self.to_json())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Runs the MLP on precomputed inputs.
    pub fn forward_inputs(&self, inputs: Vec<PointDescriptorInput>) -> Result<(FeatureMap, MlpCache)> {
        self.validate()?;
        let n = inputs.len();
        let mut current: Vec<f64> = inputs.iter().flatten().copied().collect();
        let mut hidden = Vec::with_capacity(self.num_layers() - 1);
        for l in 0..self.num_layers() {
            let (w, b) = self.layer(l);
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let last = l + 1 == self.num_layers();
            let mut out = vec![0.0; n * n_out];
            for (x, y) in current.chunks_exact(n_in).zip(out.chunks_exact_mut(n_out)) {
                for o in 0..n_out {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    let mut acc = b[o];
                    for (wi, xi) in row.iter().zip(x) {
                        acc += wi * xi;
                    }
                    y[o] = if last { acc } else { acc.max(0.0) };
                }
            }
            if last {
                current = out;
            } else {
                hidden.push(out.clone());
                current = out;
            }
        }
        let features = FeatureMap::new(self.feature_dim(), current)?;
        Ok((features, MlpCache { inputs, hidden }))
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Encoder for EncoderParams {
    type Cache = MlpCache;

    fn feature_dim(&self) -> usize {
        EncoderParams::feature_dim(self)
    }

    fn params(&self) -> &[f64] {
        &self.data
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn forward(&self, cloud: &PointCloud) -> Result<(FeatureMap, MlpCache)> {
        self.validate()?;
        if cloud.is_empty() {
            return self.forward_inputs(Vec::new());
        }
        self.forward_inputs(build_inputs(cloud, self.k, self.normalize_intensity))
    }

    fn backward(&self, cache: &MlpCache, upstream: &FeatureMap, grad: &mut [f64]) -> Result<()> {
        let n = cache.inputs.len();
        if upstream.dim() != self.feature_dim() || upstream.len() != n {
            return Err(Error::InvalidInput(format!(
                "upstream gradient is {}x{}, features are {}x{}",
                upstream.len(),
                upstream.dim(),
                n,
                self.feature_dim()
            )));
        }
        if grad.len() != self.data.len() {
            return Err(Error::InvalidInput("gradient buffer length mismatch".into()));
        }
        let layers = self.num_layers();
        let mut delta: Vec<f64> = upstream.as_slice().to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let input: &[f64] = if l == 0 {
                cache.inputs.as_flattened()
            } else {
                &cache.hidden[l - 1]
            };
            let (start, _, _) = self.layer_span(l);
            {
                let (gw, gb) = grad[start..start + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for (d, x) in delta.chunks_exact(n_out).zip(input.chunks_exact(n_in)) {
                    for o in 0..n_out {
                        if d[o] == 0.0 {
                            continue;
                        }
                        gb[o] += d[o];
                        for (g, xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                            *g += d[o] * xi;
                        }
                    }
                }
            }
            if l == 0 {
                break;
            }
            let (w, _) = self.layer(l);
            let mut prev = vec![0.0; n * n_in];
            for ((d, x), p) in delta
                .chunks_exact(n_out)
                .zip(input.chunks_exact(n_in))
                .zip(prev.chunks_exact_mut(n_in))
            {
                for o in 0..n_out {
                    if d[o] == 0.0 {
                        continue;
                    }
                    for (pi, wi) in p.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *pi += d[o] * wi;
                    }
                }
                // ReLU subgradient at 0 is 0
                for (pi, xi) in p.iter_mut().zip(x) {
                    if *xi <= 0.0 {
                        *pi = 0.0;
                    }
                }
            }
            delta = prev;
        }
        Ok(())
    }
}

pub fn encode(cloud: &PointCloud, params: &EncoderParams) -> Result<FeatureMap> {
    params.forward(cloud).map(|(f, _)| f)
}

pub fn encode_backward(cloud: &PointCloud, params: &EncoderParams, upstream: &FeatureMap) -> Result<EncoderParams> {
    let (_, cache) = params.forward(cloud)?;
    let mut grad = params.zeros_like();
    params.backward(&cache, upstream, &mut grad.data)?;
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::Point;
    use rand::Rng;

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut r = rng::seeded(seed);
        (0..n)
            .map(|_| Point::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-0.5..0.5), r.random()))
            .collect()
    }

    fn random_params(d: usize, k: usize, seed: u64) -> EncoderParams {
        let mut p = EncoderParams::init(d, k, seed);
        let mut r = rng::seeded(seed ^ 0xABCD);
        for l in 0..p.num_layers() {
            for b in p.layer_mut(l).1 {
                *b = r.random_range(-0.3..0.3);
            }
        }
        p
    }

    /// Straight-line oracle: explicit loops over matrices, no shared code
    /// with the flat-buffer implementation beyond the input statistics.
    fn oracle_forward(p: &EncoderParams, cloud: &PointCloud) -> Vec<Vec<f64>> {
        let inputs = build_inputs(cloud, p.k, p.normalize_intensity);
        let s = &p.layer_sizes;
        let mut mats = Vec::new();
        let mut off = 0;
        for l in 0..s.len() - 1 {
            let mut w = vec![vec![0.0; s[l]]; s[l + 1]];
            for o in 0..s[l + 1] {
                for i in 0..s[l] {
                    w[o][i] = p.data[off + o * s[l] + i];
                }
            }
            off += s[l] * s[l + 1];
            let b = p.data[off..off + s[l + 1]].to_vec();
            off += s[l + 1];
            mats.push((w, b));
        }
        inputs
            .iter()
            .map(|x| {
                let mut h = x.to_vec();
                for (l, (w, b)) in mats.iter().enumerate() {
                    let mut next: Vec<f64> = w
                        .iter()
                        .zip(b)
                        .map(|(row, bi)| row.iter().zip(&h).map(|(a, c)| a * c).sum::<f64>() + bi)
                        .collect();
                    if l + 1 < mats.len() {
                        next.iter_mut().for_each(|v| *v = v.max(0.0));
                    }
                    h = next;
                }
                h
            })
            .collect()
    }

    #[test]
    fn zero_params_give_zero_features() {
        let f = encode(&random_cloud(30, 1), &EncoderParams::zeros(4, 8)).unwrap();
        assert!(f.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(f.len(), 30);
    }

    #[test]
    fn constant_map_outputs_final_bias() {
        let mut p = EncoderParams::zeros(3, 4);
        {
            let (w, _) = p.layer_mut(0);
            for i in 0..INPUT_DIM {
                w[i * INPUT_DIM + i] = 1.0;
            }
        }
        p.layer_mut(2).1.copy_from_slice(&[0.5, -1.0, 2.0]);
        let f = encode(&random_cloud(10, 2), &p).unwrap();
        for row in f.rows() {
            assert_eq!(row, &[0.5, -1.0, 2.0]);
        }
    }

    #[test]
    fn matches_matrix_oracle() {
        let cloud = random_cloud(40, 3);
        let p = random_params(6, 5, 4);
        let f = encode(&cloud, &p).unwrap();
        let o = oracle_forward(&p, &cloud);
        for (i, row) in f.rows().enumerate() {
            for (a, b) in row.iter().zip(&o[i]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let mut p = EncoderParams::zeros(4, 4);
        p.data.pop();
        assert!(matches!(encode(&random_cloud(5, 1), &p), Err(Error::Config(_))));
        let p = EncoderParams::zeros(4, 4);
        let bad = FeatureMap::zeros(5, 3);
        assert!(encode_backward(&random_cloud(5, 1), &p, &bad).is_err());
    }

    #[test]
    fn zero_upstream_zero_gradient() {
        let cloud = random_cloud(15, 5);
        let p = random_params(4, 4, 6);
        let g = encode_backward(&cloud, &p, &FeatureMap::zeros(15, 4)).unwrap();
        assert!(g.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_point_closed_form() {
        // One point, d = 1. Only the output bias and output weights matter
        // when the hidden activations are known: dL/db3 = u, dL/dW3 = u·h2.
        let cloud = PointCloud::new(vec![Point::new(0.3, -0.2, 0.1, 0.5)]);
        let p = random_params(1, 1, 7);
        let (_, cache) = p.forward(&cloud).unwrap();
        let u = 1.7;
        let mut g = vec![0.0; p.data.len()];
        p.backward(&cache, &FeatureMap::new(1, vec![u]).unwrap(), &mut g).unwrap();
        let (start, _, _) = p.layer_span(2);
        let h2 = &cache.hidden[1];
        for i in 0..HIDDEN_WIDTH {
            assert!((g[start + i] - u * h2[i]).abs() < 1e-15);
        }
        assert!((g[start + HIDDEN_WIDTH] - u).abs() < 1e-15);
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        diff / na.max(nb).max(1e-8)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..10 {
            let cloud = random_cloud(20, 100 + seed);
            let p = random_params(4, 6, 200 + seed);
            let mut r = rng::seeded(300 + seed);
            let up: Vec<f64> = (0..20 * 4).map(|_| r.random_range(-1.0..1.0)).collect();
            let upstream = FeatureMap::new(4, up.clone()).unwrap();
            let loss = |q: &EncoderParams| -> f64 {
                encode(&cloud, q).unwrap().as_slice().iter().zip(&up).map(|(a, b)| a * b).sum()
            };
            let g = encode_backward(&cloud, &p, &upstream).unwrap();
            let h = 1e-6;
            let mut fd = vec![0.0; p.data.len()];
            for i in 0..p.data.len() {
                let mut a = p.clone();
                a.data[i] += h;
                let mut b = p.clone();
                b.data[i] -= h;
                fd[i] = (loss(&a) - loss(&b)) / (2.0 * h);
            }
            for l in 0..p.num_layers() {
                let (start, n_in, n_out) = p.layer_span(l);
                let w = start..start + n_in * n_out;
                let b = start + n_in * n_out..start + n_in * n_out + n_out;
                assert!(rel_err(&g.data[w.clone()], &fd[w]) < 1e-4, "seed {seed} layer {l} weights");
                assert!(rel_err(&g.data[b.clone()], &fd[b]) < 1e-4, "seed {seed} layer {l} biases");
            }
        }
    }

    #[test]
    fn permutation_equivariant() {
        let cloud = random_cloud(60, 9);
        let p = random_params(5, 8, 10);
        let f = encode(&cloud, &p).unwrap();
        let perm: Vec<usize> = (0..60).map(|i| (i * 37 + 11) % 60).collect();
        let g = encode(&cloud.select(&perm), &p).unwrap();
        assert_eq!(g, f.select(&perm));
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = random_params(8, 16, 11);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enc.json");
        p.save(&path).unwrap();
        assert_eq!(EncoderParams::load(&path).unwrap(), p);
        let mut bad = p.clone();
        bad.layer_sizes[1] = 31;
        std::fs::write(&path, bad.to_json()).unwrap();
        assert!(EncoderParams::load(&path).is_err());
    }
}
