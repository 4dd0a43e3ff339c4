//! Two-layer GCN:
//!
//! ```text
//! H      = ReLU(P · (X · W1) + b1)
//! logits = P · (dropout(H) · W2) + b2
//! out    = log_softmax(logits)
//! ```
//!
//! `P` is the normalized propagation matrix, or the identity when no graph is
//! supplied; in that case the sparse product is skipped entirely and the
//! network is an MLP on node attributes.

use rand::Rng;

use super::dense::shape_error;
use super::{instrument, spmm, CsrMatrix, DenseMatrix, Real};
use crate::error::{Result, SfrError};

/// Weights of the two layers. Also used as the gradient container.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub w1: DenseMatrix<T>,
    pub b1: Vec<T>,
    pub w2: DenseMatrix<T>,
    pub b2: Vec<T>,
}

/// Gradients have the same layout as the parameters they differentiate.
pub type ParamGrads<T> = ModelParams<T>;

impl<T: Real> ModelParams<T> {
    pub fn zeros(input_dim: usize, hidden: usize, classes: usize) -> Self {
        Self {
            w1: DenseMatrix::zeros(input_dim, hidden),
            b1: vec![T::zero(); hidden],
            w2: DenseMatrix::zeros(hidden, classes),
            b2: vec![T::zero(); classes],
        }
    }

    /// Glorot-uniform weights, zero biases. Draws are made in f64 so f32 and
    /// f64 runs start from the same point up to rounding.
    pub fn glorot<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: usize,
        classes: usize,
        rng: &mut R,
    ) -> Self {
        let mut glorot = |rows: usize, cols: usize| {
            let a = (6.0 / (rows + cols) as f64).sqrt();
            DenseMatrix::from_fn(rows, cols, |_, _| T::of(rng.gen_range(-a..a)))
        };
        let w1 = glorot(input_dim, hidden);
        let w2 = glorot(hidden, classes);
        Self {
            w1,
            b1: vec![T::zero(); hidden],
            w2,
            b2: vec![T::zero(); classes],
        }
    }

    /// `(input_dim, hidden, classes)`
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.w1.rows(), self.w1.cols(), self.w2.cols())
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn tensors(&self) -> [&[T]; 4] {
        [self.w1.data(), &self.b1, self.w2.data(), &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut [T]; 4] {
        [
            self.w1.data_mut(),
            &mut self.b1,
            self.w2.data_mut(),
            &mut self.b2,
        ]
    }

    pub fn add_assign(&mut self, other: &ModelParams<T>) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let cv = |v: &[T]| v.iter().map(|&x| U::of(x.as_f64())).collect();
        ModelParams {
            w1: self.w1.cast(),
            b1: cv(&self.b1),
            w2: self.w2.cast(),
            b2: cv(&self.b2),
        }
    }

    /// Bitwise equality of every weight, treating `-0.0 != 0.0` and NaN == NaN.
    pub fn bitwise_eq(&self, other: &ModelParams<T>) -> bool {
        self.dims() == other.dims()
            && self.tensors().iter().zip(other.tensors()).all(|(a, b)| {
                a.iter()
                    .zip(b)
                    .all(|(x, y)| x.as_f64().to_bits() == y.as_f64().to_bits())
            })
    }

    pub fn check_finite(&self, context: &str) -> Result<()> {
        for (name, t) in ["w1", "b1", "w2", "b2"].iter().zip(self.tensors()) {
            if t.iter().any(|x| !x.is_finite()) {
                return Err(SfrError::numeric(
                    context,
                    format!("non-finite value in {name}"),
                ));
            }
        }
        Ok(())
    }
}

/// Intermediates of one forward pass, borrowed from its inputs so a stale
/// cache cannot outlive a parameter update.
#[derive(Debug)]
pub struct ForwardCache<'a, T> {
    params: &'a ModelParams<T>,
    x: &'a CsrMatrix<T>,
    prop: Option<&'a CsrMatrix<T>>,
    pre_hidden: DenseMatrix<T>,
    hidden: DenseMatrix<T>,
    dropout_scale: Option<Vec<T>>,
    dropped: Option<DenseMatrix<T>>,
    log_probs: DenseMatrix<T>,
}

impl<'a, T: Real> ForwardCache<'a, T> {
    pub fn log_probs(&self) -> &DenseMatrix<T> {
        &self.log_probs
    }

    /// Hidden representation after ReLU, before dropout.
    pub fn hidden(&self) -> &DenseMatrix<T> {
        &self.hidden
    }

    pub fn into_log_probs(self) -> DenseMatrix<T> {
        self.log_probs
    }

    pub fn params(&self) -> &'a ModelParams<T> {
        self.params
    }

    fn layer2_input(&self) -> &DenseMatrix<T> {
        self.dropped.as_ref().unwrap_or(&self.hidden)
    }
}

fn propagate<T: Real>(prop: Option<&CsrMatrix<T>>, h: DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    match prop {
        Some(p) => spmm(p, &h),
        None => Ok(h),
    }
}

fn propagate_t<T: Real>(prop: Option<&CsrMatrix<T>>, g: DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    match prop {
        Some(p) => {
            instrument::record_spmm();
            p.t_matmul_dense(&g)
        }
        None => Ok(g),
    }
}

/// Forward pass. With `prop = None` the computation is `f(X, I)`.
///
/// Dropout (inverted, rate `dropout_p`) is applied to the hidden layer only
/// in train mode; its mask is drawn from `rng` and kept for the backward pass.
pub fn gcn_forward<'a, T: Real, R: Rng + ?Sized>(
    params: &'a ModelParams<T>,
    x: &'a CsrMatrix<T>,
    prop: Option<&'a CsrMatrix<T>>,
    dropout_p: f64,
    rng: &mut R,
    train_mode: bool,
) -> Result<ForwardCache<'a, T>> {
    let (d, f, c) = params.dims();
    if x.cols() != d {
        return Err(shape_error(
            "gcn_forward attributes",
            (x.rows(), x.cols()),
            (d, f),
        ));
    }
    if params.b1.len() != f || params.b2.len() != c || params.w2.rows() != f {
        return Err(SfrError::validation(
            "gcn_forward: inconsistent parameter shapes",
        ));
    }
    if let Some(p) = prop {
        if p.rows() != x.rows() || p.cols() != x.rows() {
            return Err(shape_error(
                "gcn_forward propagation",
                (p.rows(), p.cols()),
                (x.rows(), d),
            ));
        }
    }
    if !(0.0..1.0).contains(&dropout_p) {
        return Err(SfrError::validation(format!(
            "dropout must be in [0, 1), got {dropout_p}"
        )));
    }
    if prop.is_some() {
        instrument::record_propagation();
    }

    let n = x.rows();
    let mut pre_hidden = propagate(prop, x.matmul_dense(&params.w1)?)?;
    pre_hidden.add_row_vector(&params.b1);
    pre_hidden.check_finite("gcn layer 1")?;
    let hidden = pre_hidden.map(|v| v.max(T::zero()));

    let (dropout_scale, dropped) = if train_mode && dropout_p > 0.0 {
        let keep = T::of(1.0 / (1.0 - dropout_p));
        let scale: Vec<T> = (0..n * f)
            .map(|_| {
                if rng.gen::<f64>() < dropout_p {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let mut dropped = hidden.clone();
        for (h, &s) in dropped.data_mut().iter_mut().zip(&scale) {
            *h *= s;
        }
        (Some(scale), Some(dropped))
    } else {
        (None, None)
    };

    let mut cache = ForwardCache {
        params,
        x,
        prop,
        pre_hidden,
        hidden,
        dropout_scale,
        dropped,
        log_probs: DenseMatrix::zeros(0, 0),
    };

    let mut logits = propagate(prop, cache.layer2_input().matmul(&params.w2)?)?;
    logits.add_row_vector(&params.b2);
    log_softmax_rows(&mut logits);
    logits.check_finite("gcn layer 2")?;
    cache.log_probs = logits;
    Ok(cache)
}

fn log_softmax_rows<T: Real>(m: &mut DenseMatrix<T>) {
    for i in 0..m.rows() {
        let row = m.row_mut(i);
        let max = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let sum: T = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        for v in row.iter_mut() {
            *v -= log_z;
        }
    }
}

/// Gradients of all parameters given `∂L/∂log_probs`.
pub fn gcn_backward<T: Real>(
    cache: &ForwardCache<'_, T>,
    grad_log_probs: &DenseMatrix<T>,
) -> Result<ParamGrads<T>> {
    gcn_backward_with_hidden(cache, Some(grad_log_probs), None)
}

/// Backward pass with an optional extra upstream gradient on the hidden
/// representation (post-ReLU, pre-dropout), as used by the contrastive term.
/// When `grad_log_probs` is `None` the second layer is not differentiated.
pub fn gcn_backward_with_hidden<T: Real>(
    cache: &ForwardCache<'_, T>,
    grad_log_probs: Option<&DenseMatrix<T>>,
    grad_hidden: Option<&DenseMatrix<T>>,
) -> Result<ParamGrads<T>> {
    let params = cache.params;
    let (d, f, c) = params.dims();
    let n = cache.x.rows();
    let mut grads = ModelParams::zeros(d, f, c);

    let mut d_hidden = match grad_log_probs {
        Some(g) => {
            if g.shape() != (n, c) {
                return Err(SfrError::validation(format!(
                    "stale cache: gradient is {}x{}, forward produced {n}x{c}",
                    g.rows(),
                    g.cols()
                )));
            }
            // d logits = g - softmax * rowsum(g)
            let mut d_logits = g.clone();
            for i in 0..n {
                let lp = cache.log_probs.row(i);
                let row = d_logits.row_mut(i);
                let total: T = row.iter().copied().sum();
                for (v, &l) in row.iter_mut().zip(lp) {
                    *v -= l.exp() * total;
                }
            }
            grads.b2 = d_logits.col_sums();
            let d_hw = propagate_t(cache.prop, d_logits)?;
            grads.w2 = cache.layer2_input().t_matmul(&d_hw)?;
            let mut d_dropped = d_hw.matmul_t(&params.w2)?;
            if let Some(scale) = &cache.dropout_scale {
                for (v, &s) in d_dropped.data_mut().iter_mut().zip(scale) {
                    *v *= s;
                }
            }
            d_dropped
        }
        None => DenseMatrix::zeros(n, f),
    };

    if let Some(gh) = grad_hidden {
        if gh.shape() != (n, f) {
            return Err(SfrError::validation(format!(
                "stale cache: hidden gradient is {}x{}, forward produced {n}x{f}",
                gh.rows(),
                gh.cols()
            )));
        }
        d_hidden.add_assign(gh);
    }

    for (v, &pre) in d_hidden.data_mut().iter_mut().zip(cache.pre_hidden.data()) {
        if pre <= T::zero() {
            *v = T::zero();
        }
    }
    grads.b1 = d_hidden.col_sums();
    let d_xw = propagate_t(cache.prop, d_hidden)?;
    grads.w1 = cache.x.t_matmul_dense(&d_xw)?;
    Ok(grads)
}
