//! Central finite-difference verification of every hand-derived gradient.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{gcn_backward_with_hidden, gcn_forward, infonce_loss, nll_loss};
use super::{CsrMatrix, DenseMatrix, ForwardCache, InfoNceOutput, ModelParams, ParamGrads};
use crate::error::Result;
use crate::rng::RngState;

/// Central-difference step.
pub const FD_EPS: f64 = 1e-5;
/// Pass threshold on the maximum relative error of a component.
pub const GRAD_TOLERANCE: f64 = 1e-5;
/// Denominator floor of the relative error, so entries whose true gradient is
/// zero are judged on absolute error.
pub const REL_FLOOR: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub seed: u64,
    pub tolerance: f64,
    pub components: Vec<ComponentCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.components.iter().all(|c| c.passed)
    }

    pub fn component(&self, name: &str) -> Option<&ComponentCheck> {
        self.components.iter().find(|c| c.name == name)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.max_rel_error)
            .fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `analytic` with central differences of `f` around `x0`.
pub fn finite_difference_check(
    name: &str,
    x0: &[f64],
    f: impl Fn(&[f64]) -> f64,
    analytic: &[f64],
    tolerance: f64,
) -> ComponentCheck {
    assert_eq!(x0.len(), analytic.len(), "{name}: gradient length mismatch");
    let mut x = x0.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + FD_EPS;
        let plus = f(&x);
        x[i] = orig - FD_EPS;
        let minus = f(&x);
        x[i] = orig;
        let numeric = (plus - minus) / (2.0 * FD_EPS);
        let err = relative_error(analytic[i], numeric);
        worst = if err.is_nan() {
            f64::INFINITY
        } else {
            worst.max(err)
        };
    }
    ComponentCheck {
        name: name.to_string(),
        max_rel_error: worst,
        checked: x0.len(),
        passed: worst < tolerance,
    }
}

pub type GcnBackwardFn = fn(
    &ForwardCache<'_, f64>,
    Option<&DenseMatrix<f64>>,
    Option<&DenseMatrix<f64>>,
) -> Result<ParamGrads<f64>>;
pub type NllFn = fn(&DenseMatrix<f64>, &[usize], &[bool]) -> Result<(f64, DenseMatrix<f64>)>;
pub type InfoNceFn =
    fn(&DenseMatrix<f64>, &DenseMatrix<f64>, &[bool], f64) -> Result<InfoNceOutput<f64>>;

/// The analytic routines under test. Swapping one for a deliberately wrong
/// version must make the matching component fail.
#[derive(Clone, Copy)]
pub struct GradientRoutines {
    pub gcn_backward: GcnBackwardFn,
    pub nll: NllFn,
    pub infonce: InfoNceFn,
}

impl Default for GradientRoutines {
    fn default() -> Self {
        Self {
            gcn_backward: gcn_backward_with_hidden,
            nll: nll_loss,
            infonce: infonce_loss,
        }
    }
}

pub fn check_gradients(rng: RngState) -> GradCheckReport {
    check_gradients_with(rng, &GradientRoutines::default())
}

pub fn check_gradients_with(rng: RngState, routines: &GradientRoutines) -> GradCheckReport {
    let mut components = Vec::new();
    let mut push = |name: &str, r: Result<ComponentCheck>| {
        components.push(r.unwrap_or_else(|e| {
            ComponentCheck {
                name: name.to_string(),
                max_rel_error: f64::INFINITY,
                checked: 0,
                passed: false,
            }
            .with_note(&e.to_string())
        }))
    };
    push(
        "gcn_backward",
        check_gcn(&mut rng.derive("gcn").rng(), routines, true),
    );
    push(
        "gcn_backward_no_graph",
        check_gcn(&mut rng.derive("mlp").rng(), routines, false),
    );
    push(
        "nll_loss",
        check_nll(&mut rng.derive("nll").rng(), routines),
    );
    push(
        "infonce_loss",
        check_infonce(&mut rng.derive("infonce").rng(), routines),
    );
    push(
        "gcn_nll_end_to_end",
        check_end_to_end(&mut rng.derive("e2e").rng(), routines),
    );
    GradCheckReport {
        seed: rng.seed(),
        tolerance: GRAD_TOLERANCE,
        components,
    }
}

impl ComponentCheck {
    fn with_note(mut self, note: &str) -> Self {
        self.name = format!("{} ({note})", self.name);
        self
    }
}

struct GcnInstance {
    x: CsrMatrix<f64>,
    prop: Option<CsrMatrix<f64>>,
    params: ModelParams<f64>,
    labels: Vec<usize>,
    mask: Vec<bool>,
    dropout_seed: RngState,
}

const DROPOUT: f64 = 0.5;
/// Pre-activations closer than this to zero are re-drawn so a central
/// difference never straddles the ReLU kink.
const KINK_MARGIN: f64 = 1e-3;

fn random_instance(rng: &mut ChaCha8Rng, with_graph: bool) -> Result<GcnInstance> {
    for _ in 0..1000 {
        let n = rng.gen_range(5..=8);
        let d = rng.gen_range(3..=6);
        let f = rng.gen_range(2..=4);
        let c = rng.gen_range(2..=4);
        let x = CsrMatrix::from_dense(&DenseMatrix::from_fn(n, d, |_, _| {
            if rng.gen_bool(0.3) {
                0.0
            } else {
                rng.gen_range(-1.0..1.0)
            }
        }));
        let prop = with_graph.then(|| {
            let mut m = DenseMatrix::<f64>::zeros(n, n);
            for i in 0..n {
                m.set(i, i, rng.gen_range(0.2..0.6));
                for j in i + 1..n {
                    if rng.gen_bool(0.4) {
                        let v = rng.gen_range(0.1..0.5);
                        m.set(i, j, v);
                        m.set(j, i, v);
                    }
                }
            }
            CsrMatrix::from_dense(&m)
        });
        let mut params = ModelParams::glorot(d, f, c, rng);
        for b in params.b1.iter_mut().chain(params.b2.iter_mut()) {
            *b = rng.gen_range(-0.3..0.3);
        }
        let labels = (0..n).map(|_| rng.gen_range(0..c)).collect();
        let mut mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.6)).collect();
        mask[0] = true;
        let dropout_seed = RngState::new(rng.gen());
        let inst = GcnInstance {
            x,
            prop,
            params,
            labels,
            mask,
            dropout_seed,
        };
        let cache = forward(&inst, &inst.params)?;
        let near_kink = cache_pre_hidden_min_abs(&inst, &inst.params)? < KINK_MARGIN;
        drop(cache);
        if !near_kink {
            return Ok(inst);
        }
    }
    Err(crate::SfrError::numeric(
        "gradcheck",
        "could not draw an instance away from ReLU kinks",
    ))
}

fn forward<'a>(
    inst: &'a GcnInstance,
    params: &'a ModelParams<f64>,
) -> Result<ForwardCache<'a, f64>> {
    let mut rng = inst.dropout_seed.rng();
    gcn_forward(params, &inst.x, inst.prop.as_ref(), DROPOUT, &mut rng, true)
}

fn cache_pre_hidden_min_abs(inst: &GcnInstance, params: &ModelParams<f64>) -> Result<f64> {
    // pre-activation = P·X·W1 + b1, recomputed densely
    let xw = inst.x.to_dense().matmul(&params.w1)?;
    let mut pre = match &inst.prop {
        Some(p) => p.to_dense().matmul(&xw)?,
        None => xw,
    };
    pre.add_row_vector(&params.b1);
    Ok(pre.data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs())))
}

fn flatten(p: &ModelParams<f64>) -> Vec<f64> {
    p.tensors().iter().flat_map(|t| t.iter().copied()).collect()
}

fn unflatten(template: &ModelParams<f64>, flat: &[f64]) -> ModelParams<f64> {
    let mut p = template.clone();
    let mut k = 0;
    for t in p.tensors_mut() {
        let len = t.len();
        t.copy_from_slice(&flat[k..k + len]);
        k += len;
    }
    p
}

fn random_like(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix<f64> {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

fn dot(a: &DenseMatrix<f64>, b: &DenseMatrix<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Loss = <R, log_probs> + <Q, hidden> for random R, Q.
fn check_gcn(
    rng: &mut ChaCha8Rng,
    routines: &GradientRoutines,
    with_graph: bool,
) -> Result<ComponentCheck> {
    let inst = random_instance(rng, with_graph)?;
    let (_, f, c) = inst.params.dims();
    let n = inst.x.rows();
    let r = random_like(rng, n, c);
    let q = random_like(rng, n, f);
    let cache = forward(&inst, &inst.params)?;
    let grads = (routines.gcn_backward)(&cache, Some(&r), Some(&q))?;
    let loss = |flat: &[f64]| {
        let p = unflatten(&inst.params, flat);
        let cache = forward(&inst, &p).expect("forward");
        dot(&r, cache.log_probs()) + dot(&q, cache.hidden())
    };
    let name = if with_graph {
        "gcn_backward"
    } else {
        "gcn_backward_no_graph"
    };
    Ok(finite_difference_check(
        name,
        &flatten(&inst.params),
        loss,
        &flatten(&grads),
        GRAD_TOLERANCE,
    ))
}

fn check_nll(rng: &mut ChaCha8Rng, routines: &GradientRoutines) -> Result<ComponentCheck> {
    let n = rng.gen_range(3..=8);
    let c = rng.gen_range(2..=4);
    let lp = random_like(rng, n, c);
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
    let mut mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
    mask[n - 1] = true;
    let (_, grad) = (routines.nll)(&lp, &labels, &mask)?;
    let loss = |flat: &[f64]| {
        let m = DenseMatrix::from_vec(n, c, flat.to_vec()).expect("shape");
        nll_loss(&m, &labels, &mask).expect("nll").0
    };
    Ok(finite_difference_check(
        "nll_loss",
        lp.data(),
        loss,
        grad.data(),
        GRAD_TOLERANCE,
    ))
}

fn check_infonce(rng: &mut ChaCha8Rng, routines: &GradientRoutines) -> Result<ComponentCheck> {
    let n = 7;
    let dim = 4;
    let z = random_like(rng, n, dim);
    let za = random_like(rng, n, dim);
    let mask = vec![true, false, true, true, false, true, true];
    let tau = 0.5;
    let out = (routines.infonce)(&z, &za, &mask, tau)?;
    let mut x0 = z.data().to_vec();
    x0.extend_from_slice(za.data());
    let mut analytic = out.grad_z.data().to_vec();
    analytic.extend_from_slice(out.grad_z_aug.data());
    let loss = |flat: &[f64]| {
        let a = DenseMatrix::from_vec(n, dim, flat[..n * dim].to_vec()).expect("shape");
        let b = DenseMatrix::from_vec(n, dim, flat[n * dim..].to_vec()).expect("shape");
        infonce_loss(&a, &b, &mask, tau).expect("infonce").loss
    };
    Ok(finite_difference_check(
        "infonce_loss",
        &x0,
        loss,
        &analytic,
        GRAD_TOLERANCE,
    ))
}

fn check_end_to_end(rng: &mut ChaCha8Rng, routines: &GradientRoutines) -> Result<ComponentCheck> {
    let inst = random_instance(rng, true)?;
    let cache = forward(&inst, &inst.params)?;
    let (_, g) = (routines.nll)(cache.log_probs(), &inst.labels, &inst.mask)?;
    let grads = (routines.gcn_backward)(&cache, Some(&g), None)?;
    let loss = |flat: &[f64]| {
        let p = unflatten(&inst.params, flat);
        let cache = forward(&inst, &p).expect("forward");
        nll_loss(cache.log_probs(), &inst.labels, &inst.mask)
            .expect("nll")
            .0
    };
    Ok(finite_difference_check(
        "gcn_nll_end_to_end",
        &flatten(&inst.params),
        loss,
        &flatten(&grads),
        GRAD_TOLERANCE,
    ))
}
