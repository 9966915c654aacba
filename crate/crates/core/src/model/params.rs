use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{cst, ModelConfig, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub ln1_g: Array1<T>,
    pub ln1_b: Array1<T>,
    /// `[d_model, 3 * d_model]`, query | key | value.
    pub w_qkv: Array2<T>,
    pub b_qkv: Array1<T>,
    pub w_proj: Array2<T>,
    pub b_proj: Array1<T>,
    pub ln2_g: Array1<T>,
    pub ln2_b: Array1<T>,
    /// `[d_model, 4 * d_model]`
    pub w_fc: Array2<T>,
    pub b_fc: Array1<T>,
    /// `[4 * d_model, d_model]`
    pub w_out: Array2<T>,
    pub b_out: Array1<T>,
}

/// All learned weights. The output head reuses `wte`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    /// `[vocab_size, d_model]`
    pub wte: Array2<T>,
    /// `[context_len, d_model]`
    pub wpe: Array2<T>,
    pub layers: Vec<LayerParams<T>>,
    pub lnf_g: Array1<T>,
    pub lnf_b: Array1<T>,
}

impl<T: Scalar> LayerParams<T> {
    fn zeros(d: usize) -> Self {
        Self {
            ln1_g: Array1::zeros(d),
            ln1_b: Array1::zeros(d),
            w_qkv: Array2::zeros((d, 3 * d)),
            b_qkv: Array1::zeros(3 * d),
            w_proj: Array2::zeros((d, d)),
            b_proj: Array1::zeros(d),
            ln2_g: Array1::zeros(d),
            ln2_b: Array1::zeros(d),
            w_fc: Array2::zeros((d, 4 * d)),
            b_fc: Array1::zeros(4 * d),
            w_out: Array2::zeros((4 * d, d)),
            b_out: Array1::zeros(d),
        }
    }
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.d_model;
        Self {
            wte: Array2::zeros((config.vocab_size, d)),
            wpe: Array2::zeros((config.context_len, d)),
            layers: (0..config.n_layers).map(|_| LayerParams::zeros(d)).collect(),
            lnf_g: Array1::zeros(d),
            lnf_b: Array1::zeros(d),
        }
    }

    /// Normal(0, 0.02) weights, zero biases, unit layer-norm gains; residual
    /// output projections are further scaled by `1/sqrt(2 * n_layers)`.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = 0.02;
        let resid_std = std / (2.0 * config.n_layers as f64).sqrt();
        let mut p = Self::zeros(config);
        let normal = Normal::new(0.0, std).unwrap();
        let resid = Normal::new(0.0, resid_std).unwrap();
        p.wte.mapv_inplace(|_| cst(normal.sample(&mut rng)));
        p.wpe.mapv_inplace(|_| cst(normal.sample(&mut rng)));
        for l in &mut p.layers {
            l.ln1_g.fill(T::one());
            l.ln2_g.fill(T::one());
            l.w_qkv.mapv_inplace(|_| cst(normal.sample(&mut rng)));
            l.w_proj.mapv_inplace(|_| cst(resid.sample(&mut rng)));
            l.w_fc.mapv_inplace(|_| cst(normal.sample(&mut rng)));
            l.w_out.mapv_inplace(|_| cst(resid.sample(&mut rng)));
        }
        p.lnf_g.fill(T::one());
        p
    }

    /// Tensor slices in checkpoint order: `wte`, `wpe`, then per layer
    /// `ln1_g, ln1_b, w_qkv, b_qkv, w_proj, b_proj, ln2_g, ln2_b, w_fc, b_fc,
    /// w_out, b_out`, then `lnf_g, lnf_b`. Matrices are row-major.
    pub fn tensors(&self) -> Vec<(String, &[T])> {
        let mut out: Vec<(String, &[T])> = vec![
            ("wte".into(), self.wte.as_slice().unwrap()),
            ("wpe".into(), self.wpe.as_slice().unwrap()),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            let parts: [(&str, &[T]); 12] = [
                ("ln1_g", l.ln1_g.as_slice().unwrap()),
                ("ln1_b", l.ln1_b.as_slice().unwrap()),
                ("w_qkv", l.w_qkv.as_slice().unwrap()),
                ("b_qkv", l.b_qkv.as_slice().unwrap()),
                ("w_proj", l.w_proj.as_slice().unwrap()),
                ("b_proj", l.b_proj.as_slice().unwrap()),
                ("ln2_g", l.ln2_g.as_slice().unwrap()),
                ("ln2_b", l.ln2_b.as_slice().unwrap()),
                ("w_fc", l.w_fc.as_slice().unwrap()),
                ("b_fc", l.b_fc.as_slice().unwrap()),
                ("w_out", l.w_out.as_slice().unwrap()),
                ("b_out", l.b_out.as_slice().unwrap()),
            ];
            out.extend(parts.into_iter().map(|(n, s)| (format!("h{i}.{n}"), s)));
        }
        out.push(("lnf_g".into(), self.lnf_g.as_slice().unwrap()));
        out.push(("lnf_b".into(), self.lnf_b.as_slice().unwrap()));
        out
    }

    /// Mutable slices in the same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = vec![self.wte.as_slice_mut().unwrap(), self.wpe.as_slice_mut().unwrap()];
        for l in &mut self.layers {
            out.push(l.ln1_g.as_slice_mut().unwrap());
            out.push(l.ln1_b.as_slice_mut().unwrap());
            out.push(l.w_qkv.as_slice_mut().unwrap());
            out.push(l.b_qkv.as_slice_mut().unwrap());
            out.push(l.w_proj.as_slice_mut().unwrap());
            out.push(l.b_proj.as_slice_mut().unwrap());
            out.push(l.ln2_g.as_slice_mut().unwrap());
            out.push(l.ln2_b.as_slice_mut().unwrap());
            out.push(l.w_fc.as_slice_mut().unwrap());
            out.push(l.b_fc.as_slice_mut().unwrap());
            out.push(l.w_out.as_slice_mut().unwrap());
            out.push(l.b_out.as_slice_mut().unwrap());
        }
        out.push(self.lnf_g.as_slice_mut().unwrap());
        out.push(self.lnf_b.as_slice_mut().unwrap());
        out
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }

    /// Reads the parameter at a flat index over [`ModelParams::tensors`].
    pub fn get_flat(&self, mut index: usize) -> T {
        for (_, t) in self.tensors() {
            if index < t.len() {
                return t[index];
            }
            index -= t.len();
        }
        panic!("flat parameter index out of range");
    }

    pub fn set_flat(&mut self, mut index: usize, value: T) {
        for t in self.tensors_mut() {
            if index < t.len() {
                t[index] = value;
                return;
            }
            index -= t.len();
        }
        panic!("flat parameter index out of range");
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let c = |x: &T| U::from_f64(x.to_f64().unwrap()).unwrap();
        ModelParams {
            wte: self.wte.map(c),
            wpe: self.wpe.map(c),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    ln1_g: l.ln1_g.map(c),
                    ln1_b: l.ln1_b.map(c),
                    w_qkv: l.w_qkv.map(c),
                    b_qkv: l.b_qkv.map(c),
                    w_proj: l.w_proj.map(c),
                    b_proj: l.b_proj.map(c),
                    ln2_g: l.ln2_g.map(c),
                    ln2_b: l.ln2_b.map(c),
                    w_fc: l.w_fc.map(c),
                    b_fc: l.b_fc.map(c),
                    w_out: l.w_out.map(c),
                    b_out: l.b_out.map(c),
                })
                .collect(),
            lnf_g: self.lnf_g.map(c),
            lnf_b: self.lnf_b.map(c),
        }
    }

    /// Checks every tensor shape against `config`.
    pub fn matches(&self, config: &ModelConfig) -> bool {
        let d = config.d_model;
        self.wte.dim() == (config.vocab_size, d)
            && self.wpe.dim() == (config.context_len, d)
            && self.layers.len() == config.n_layers
            && self.layers.iter().all(|l| {
                l.w_qkv.dim() == (d, 3 * d) && l.w_fc.dim() == (d, 4 * d) && l.w_out.dim() == (4 * d, d)
            })
            && self.lnf_g.len() == d
    }
}
