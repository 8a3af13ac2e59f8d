use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{MllmError, Result};

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const LN_EPS: f64 = 1e-5;

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Low-rank adapter for a `d x k` weight: `A` is `r x k`, `B` is `d x r`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraParams {
    pub a: Array2<f64>,
    pub b: Array2<f64>,
    pub alpha: f64,
}

impl LoraParams {
    pub fn rank(&self) -> usize {
        self.a.nrows()
    }

    pub fn scale(&self) -> f64 {
        self.alpha / self.rank() as f64
    }

    fn check(&self, w: &Array2<f64>) -> Result<()> {
        let (d, k) = w.dim();
        let r = self.rank();
        if r == 0 || self.a.ncols() != k || self.b.dim() != (d, r) {
            return Err(MllmError::Shape(format!(
                "W {d}x{k} with A {:?} and B {:?}",
                self.a.dim(),
                self.b.dim()
            )));
        }
        Ok(())
    }
}

fn shape_err(what: &str, expected: usize, got: usize) -> MllmError {
    MllmError::Shape(format!("{what}: expected {expected}, got {got}"))
}

/// `W x + (alpha / r) B (A x)`, leaving `W` untouched.
pub fn lora_forward(w: &Array2<f64>, lora: &LoraParams, x: &Array1<f64>) -> Result<Array1<f64>> {
    lora.check(w)?;
    if x.len() != w.ncols() {
        return Err(shape_err("input length", w.ncols(), x.len()));
    }
    Ok(w.dot(x) + lora.b.dot(&lora.a.dot(x)) * lora.scale())
}

/// `W + (alpha / r) B A` as a new matrix.
pub fn merge_lora(w: &Array2<f64>, lora: &LoraParams) -> Result<Array2<f64>> {
    lora.check(w)?;
    Ok(w + &(lora.b.dot(&lora.a) * lora.scale()))
}

/// Two-layer GELU MLP from encoder space into the model width, applied per
/// token: `GELU(x W1 + b1) W2 + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorParams {
    /// `encoder_dim x hidden`
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// `hidden x d_model`
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl ProjectorParams {
    pub fn zeros(encoder_dim: usize, hidden: usize, d_model: usize) -> Self {
        Self {
            w1: Array2::zeros((encoder_dim, hidden)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((hidden, d_model)),
            b2: Array1::zeros(d_model),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.ncols()
    }

    /// Returns the hidden pre-activation and the output.
    pub(crate) fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        if x.ncols() != self.input_dim() {
            return Err(shape_err("music token dim", self.input_dim(), x.ncols()));
        }
        let pre = x.dot(&self.w1) + &self.b1;
        let out = pre.mapv(gelu).dot(&self.w2) + &self.b2;
        Ok((pre, out))
    }
}

/// Projects `(n_tokens, encoder_dim)` music tokens to `(n_tokens, d_model)`.
pub fn project(music_tokens: &crate::audio::TokenGrid, p: &ProjectorParams) -> Result<Array2<f64>> {
    let x = ArrayView2::from_shape((music_tokens.n_tokens(), music_tokens.dim()), music_tokens.data())
        .map_err(|e| MllmError::Shape(e.to_string()))?;
    Ok(p.forward(x)?.1)
}

/// Row-wise layer norm; returns the output and the normalized input.
pub(crate) fn layer_norm(x: &Array2<f64>, g: &Array1<f64>, b: &Array1<f64>) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let n = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, s) in xhat.axis_iter_mut(Axis(0)).zip(inv_std.iter_mut()) {
        let mean = row.sum() / n;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / n;
        *s = 1.0 / (var + LN_EPS).sqrt();
        row.mapv_inplace(|v| v * *s);
    }
    let y = &xhat * g + b;
    (y, xhat, inv_std)
}

/// Gradient with respect to the layer-norm input.
pub(crate) fn layer_norm_backward(dy: &Array2<f64>, xhat: &Array2<f64>, inv_std: &Array1<f64>, g: &Array1<f64>) -> Array2<f64> {
    let n = dy.ncols() as f64;
    let dxhat = dy * g;
    let mut dx = Array2::zeros(dy.dim());
    for i in 0..dy.nrows() {
        let d = dxhat.row(i);
        let h = xhat.row(i);
        let mean_d = d.sum() / n;
        let mean_dh = d.dot(&h) / n;
        let mut out = dx.row_mut(i);
        for j in 0..out.len() {
            out[j] = inv_std[i] * (d[j] - mean_d - h[j] * mean_dh);
        }
    }
    dx
}

/// Numerically stable in-place softmax over each row.
pub(crate) fn softmax_rows(x: &mut Array2<f64>) {
    for mut row in x.axis_iter_mut(Axis(0)) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
}
