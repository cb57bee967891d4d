use ndarray::{Array1, Array2};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ArchConfig, SageError};

/// A dense layer: `weight` is `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LayerParams {
    fn zeros(rows: usize, cols: usize) -> Self {
        LayerParams {
            weight: Array2::zeros((rows, cols)),
            bias: Array1::zeros(cols),
        }
    }
}

/// Every learnable tensor of the network. Also used for gradients and
/// optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    /// `vocab_size × embed_dim`; absent when the embedding layer is off.
    pub embedding: Option<LayerParams>,
    /// Layer k maps `2·d_in → hidden_dim`; rows `0..d_in` act on the node's
    /// own vector and rows `d_in..2·d_in` on the neighbor mean.
    pub sage: Vec<LayerParams>,
    pub out_w: Array1<f64>,
    pub out_b: f64,
}

impl Weights {
    pub fn zeros(arch: &ArchConfig) -> Self {
        Weights {
            embedding: arch
                .use_embedding
                .then(|| LayerParams::zeros(arch.vocab_size, arch.embed_dim)),
            sage: (0..arch.num_sage_layers)
                .map(|k| LayerParams::zeros(2 * arch.layer_input_dim(k), arch.hidden_dim))
                .collect(),
            out_w: Array1::zeros(arch.hidden_dim),
            out_b: 0.0,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Weights {
            embedding: self
                .embedding
                .as_ref()
                .map(|e| LayerParams::zeros(e.weight.nrows(), e.weight.ncols())),
            sage: self
                .sage
                .iter()
                .map(|l| LayerParams::zeros(l.weight.nrows(), l.weight.ncols()))
                .collect(),
            out_w: Array1::zeros(self.out_w.len()),
            out_b: 0.0,
        }
    }

    /// Named flat views in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        if let Some(e) = &self.embedding {
            out.push(("embed_W".into(), e.weight.as_slice().expect("standard layout")));
            out.push(("embed_b".into(), e.bias.as_slice().expect("standard layout")));
        }
        for (k, l) in self.sage.iter().enumerate() {
            out.push((format!("sage_W[{k}]"), l.weight.as_slice().expect("standard layout")));
            out.push((format!("sage_b[{k}]"), l.bias.as_slice().expect("standard layout")));
        }
        out.push(("out_W".into(), self.out_w.as_slice().expect("standard layout")));
        out.push(("out_b".into(), std::slice::from_ref(&self.out_b)));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        let Weights {
            embedding,
            sage,
            out_w,
            out_b,
        } = self;
        if let Some(e) = embedding {
            out.push(("embed_W".into(), e.weight.as_slice_mut().expect("standard layout")));
            out.push(("embed_b".into(), e.bias.as_slice_mut().expect("standard layout")));
        }
        for (k, l) in sage.iter_mut().enumerate() {
            out.push((format!("sage_W[{k}]"), l.weight.as_slice_mut().expect("standard layout")));
            out.push((format!("sage_b[{k}]"), l.bias.as_slice_mut().expect("standard layout")));
        }
        out.push(("out_W".into(), out_w.as_slice_mut().expect("standard layout")));
        out.push(("out_b".into(), std::slice::from_mut(out_b)));
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Names the first tensor whose shape differs from `other`.
    pub fn shape_mismatch(&self, other: &Weights) -> Option<String> {
        let a = self.tensors();
        let b = other.tensors();
        for ((name, x), (_, y)) in a.iter().zip(&b) {
            if x.len() != y.len() {
                return Some(name.clone());
            }
        }
        if a.len() != b.len() {
            return Some(
                a.get(b.len())
                    .or_else(|| b.get(a.len()))
                    .map(|(n, _)| n.clone())
                    .unwrap_or_default(),
            );
        }
        if self.embedding.as_ref().map(|e| e.weight.dim()) != other.embedding.as_ref().map(|e| e.weight.dim()) {
            return Some("embed_W".into());
        }
        for (k, (x, y)) in self.sage.iter().zip(&other.sage).enumerate() {
            if x.weight.dim() != y.weight.dim() {
                return Some(format!("sage_W[{k}]"));
            }
        }
        None
    }

    /// `self += other`, element by element in a fixed order.
    pub fn add_assign(&mut self, other: &Weights) {
        for ((_, dst), (_, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: ArchConfig,
    pub weights: Weights,
}

impl ModelParams {
    /// Checks every tensor against the shapes `arch` implies.
    pub fn validate(&self) -> Result<(), SageError> {
        self.arch.validate()?;
        if let Some(name) = Weights::zeros(&self.arch).shape_mismatch(&self.weights) {
            return Err(SageError::ShapeMismatch(name));
        }
        if !self.weights.all_finite() {
            return Err(SageError::ShapeMismatch("non-finite weight".into()));
        }
        Ok(())
    }
}

fn glorot_fill(a: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    for x in a {
        *x = dist.sample(rng);
    }
}

/// Glorot-uniform weights, zero biases; deterministic in `(arch, seed)`.
pub fn init_params(arch: &ArchConfig, seed: u64) -> Result<ModelParams, SageError> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Weights::zeros(arch);
    if let Some(e) = &mut w.embedding {
        let (r, c) = e.weight.dim();
        glorot_fill(e.weight.as_slice_mut().expect("standard layout"), r, c, &mut rng);
    }
    for l in &mut w.sage {
        let (r, c) = l.weight.dim();
        glorot_fill(l.weight.as_slice_mut().expect("standard layout"), r, c, &mut rng);
    }
    let h = w.out_w.len();
    glorot_fill(w.out_w.as_slice_mut().expect("standard layout"), h, 1, &mut rng);
    Ok(ModelParams {
        arch: arch.clone(),
        weights: w,
    })
}

/// On-disk layout of [`Weights`].
#[derive(Serialize, Deserialize)]
pub(crate) struct WeightsDoc {
    #[serde(rename = "embed_W", skip_serializing_if = "Option::is_none", default)]
    embed_w: Option<Vec<Vec<f64>>>,
    #[serde(rename = "embed_b", skip_serializing_if = "Option::is_none", default)]
    embed_b: Option<Vec<f64>>,
    #[serde(rename = "sage_W")]
    sage_w: Vec<Vec<Vec<f64>>>,
    sage_b: Vec<Vec<f64>>,
    #[serde(rename = "out_W")]
    out_w: Vec<f64>,
    out_b: f64,
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn matrix(name: &str, data: Vec<Vec<f64>>, shape: (usize, usize)) -> Result<Array2<f64>, SageError> {
    if data.len() != shape.0 || data.iter().any(|r| r.len() != shape.1) {
        return Err(SageError::ShapeMismatch(name.to_string()));
    }
    let flat: Vec<f64> = data.into_iter().flatten().collect();
    Array2::from_shape_vec(shape, flat).map_err(|_| SageError::ShapeMismatch(name.to_string()))
}

fn vector(name: &str, data: Vec<f64>, len: usize) -> Result<Array1<f64>, SageError> {
    if data.len() != len {
        return Err(SageError::ShapeMismatch(name.to_string()));
    }
    Ok(Array1::from(data))
}

impl WeightsDoc {
    pub(crate) fn from_weights(w: &Weights) -> Self {
        WeightsDoc {
            embed_w: w.embedding.as_ref().map(|e| rows(&e.weight)),
            embed_b: w.embedding.as_ref().map(|e| e.bias.to_vec()),
            sage_w: w.sage.iter().map(|l| rows(&l.weight)).collect(),
            sage_b: w.sage.iter().map(|l| l.bias.to_vec()).collect(),
            out_w: w.out_w.to_vec(),
            out_b: w.out_b,
        }
    }

    /// Rebuilds weights, checking each tensor against `arch`.
    pub(crate) fn into_weights(self, arch: &ArchConfig) -> Result<Weights, SageError> {
        arch.validate()?;
        let embedding = match (arch.use_embedding, self.embed_w, self.embed_b) {
            (true, Some(w), Some(b)) => Some(LayerParams {
                weight: matrix("embed_W", w, (arch.vocab_size, arch.embed_dim))?,
                bias: vector("embed_b", b, arch.embed_dim)?,
            }),
            (true, None, _) => return Err(SageError::ShapeMismatch("embed_W".into())),
            (true, _, None) => return Err(SageError::ShapeMismatch("embed_b".into())),
            (false, None, None) => None,
            (false, Some(_), _) => return Err(SageError::ShapeMismatch("embed_W".into())),
            (false, _, Some(_)) => return Err(SageError::ShapeMismatch("embed_b".into())),
        };
        if self.sage_w.len() != arch.num_sage_layers {
            return Err(SageError::ShapeMismatch("sage_W".into()));
        }
        if self.sage_b.len() != arch.num_sage_layers {
            return Err(SageError::ShapeMismatch("sage_b".into()));
        }
        let mut sage = Vec::with_capacity(arch.num_sage_layers);
        for (k, (w, b)) in self.sage_w.into_iter().zip(self.sage_b).enumerate() {
            let d_in = arch.layer_input_dim(k);
            sage.push(LayerParams {
                weight: matrix(&format!("sage_W[{k}]"), w, (2 * d_in, arch.hidden_dim))?,
                bias: vector(&format!("sage_b[{k}]"), b, arch.hidden_dim)?,
            });
        }
        let weights = Weights {
            embedding,
            sage,
            out_w: vector("out_W", self.out_w, arch.hidden_dim)?,
            out_b: self.out_b,
        };
        if !weights.all_finite() {
            return Err(SageError::ShapeMismatch("non-finite weight".into()));
        }
        Ok(weights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_arch() -> ArchConfig {
        ArchConfig {
            embed_dim: 2,
            hidden_dim: 3,
            num_sage_layers: 2,
            ..ArchConfig::new(4)
        }
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let arch = small_arch();
        let a = init_params(&arch, 7).unwrap();
        let b = init_params(&arch, 7).unwrap();
        assert_eq!(a, b);
        let c = init_params(&arch, 8).unwrap();
        assert_ne!(a, c);
        for (name, t) in a.weights.tensors() {
            if name.contains("_b") {
                assert!(t.iter().all(|&x| x == 0.0), "{name}");
            }
        }
    }

    #[test]
    fn glorot_bound_on_embedding() {
        // N=4, embed_dim=2: sqrt(6 / (4 + 2)) = 1.
        let p = init_params(&small_arch(), 3).unwrap();
        let e = p.weights.embedding.unwrap();
        assert!(e.weight.iter().all(|x| x.abs() <= 1.0));
        assert!(e.weight.iter().any(|x| x.abs() > 0.3));
    }

    #[test]
    fn shapes_follow_arch() {
        let mut arch = small_arch();
        let p = init_params(&arch, 1).unwrap();
        assert_eq!(p.weights.sage[0].weight.dim(), (4, 3));
        assert_eq!(p.weights.sage[1].weight.dim(), (6, 3));
        assert!(p.validate().is_ok());

        arch.use_embedding = false;
        let p = init_params(&arch, 1).unwrap();
        assert!(p.weights.embedding.is_none());
        assert_eq!(p.weights.sage[0].weight.dim(), (8, 3));
    }

    #[test]
    fn weights_doc_round_trip_and_shape_errors() {
        let arch = small_arch();
        let p = init_params(&arch, 11).unwrap();
        let doc = WeightsDoc::from_weights(&p.weights);
        let json = serde_json::to_string(&doc).unwrap();
        let back: WeightsDoc = serde_json::from_str(&json).unwrap();
        assert_eq!(back.into_weights(&arch).unwrap(), p.weights);

        let mut bad: WeightsDoc = serde_json::from_str(&json).unwrap();
        bad.sage_w[1].pop();
        assert_eq!(
            bad.into_weights(&arch),
            Err(SageError::ShapeMismatch("sage_W[1]".into()))
        );
        let mut bad: WeightsDoc = serde_json::from_str(&json).unwrap();
        bad.out_w.push(0.0);
        assert_eq!(
            bad.into_weights(&arch),
            Err(SageError::ShapeMismatch("out_W".into()))
        );
    }
}
