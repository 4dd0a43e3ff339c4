//! Two-stage training: attribute pre-training without propagation, then
//! structure fine-tuning with an optional contrastive term. Also the
//! baselines (GCN, MLP, GCN-Jaccard) and the ablation variants.

mod augment;
mod jaccard;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SfrError};
use crate::graph::{normalize_adjacency, Graph};
use crate::numeric::{
    gcn_backward, gcn_backward_with_hidden, gcn_forward, infonce_loss, nll_loss, AdamConfig,
    AdamState, CsrMatrix, DenseMatrix, ModelParams, Real,
};
use crate::rng::RngState;

pub use augment::{
    augment_with_donors, edge_removing, feature_masking, internaa, node_dropping,
    AugmentedFeatures, CorruptedView, DonorPool, DonorRecord,
};
pub use jaccard::{jaccard_prune, jaccard_similarity, DEFAULT_JACCARD_THRESHOLD};

/// Corruption rate of the node-dropping, edge-removing and feature-masking
/// ablations.
pub const ABLATION_RATE: f64 = 0.2;

/// Contrastive temperature. Fixed by design; [`TrainConfig::temperature`]
/// exists for research overrides only.
pub const DEFAULT_TEMPERATURE: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden_units: usize,
    /// Always 2.
    pub layers: usize,
    pub dropout: f64,
    pub lr: f64,
    pub weight_decay: f64,
    /// Attribute pre-training epochs; also the epoch budget of single-stage
    /// baselines.
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub internaa_subsample_ratio: f64,
    pub temperature: f64,
    pub jaccard_threshold: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_units: 16,
            layers: 2,
            dropout: 0.5,
            lr: 0.01,
            weight_decay: 5e-4,
            pretrain_epochs: 200,
            finetune_epochs: 20,
            internaa_subsample_ratio: 1.0,
            temperature: DEFAULT_TEMPERATURE,
            jaccard_threshold: DEFAULT_JACCARD_THRESHOLD,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(SfrError::validation(m));
        if self.layers != 2 {
            return fail(format!(
                "only 2-layer models are supported, got {}",
                self.layers
            ));
        }
        if self.hidden_units == 0 {
            return fail("hidden_units must be positive".into());
        }
        if self.pretrain_epochs == 0 && self.finetune_epochs == 0 {
            return fail("pretrain_epochs and finetune_epochs cannot both be 0".into());
        }
        if !(self.internaa_subsample_ratio > 0.0 && self.internaa_subsample_ratio <= 1.0) {
            return fail(format!(
                "internaa_subsample_ratio must be in (0, 1], got {}",
                self.internaa_subsample_ratio
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            ));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return fail(format!("temperature must be > 0, got {}", self.temperature));
        }
        if !(0.0..=1.0).contains(&self.jaccard_threshold) {
            return fail(format!(
                "jaccard_threshold must be in [0, 1], got {}",
                self.jaccard_threshold
            ));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig::new(self.lr, self.weight_decay)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "sfr")]
    Sfr,
    #[serde(rename = "sfr-nocl")]
    SfrNoCl,
    #[serde(rename = "sfr-nofin")]
    SfrNoFin,
    #[serde(rename = "sfr-nd")]
    SfrNd,
    #[serde(rename = "sfr-er")]
    SfrEr,
    #[serde(rename = "sfr-fm")]
    SfrFm,
    #[serde(rename = "sfr-ran")]
    SfrRan,
    #[serde(rename = "gcn")]
    Gcn,
    #[serde(rename = "mlp")]
    Mlp,
    #[serde(rename = "gcn-jaccard")]
    GcnJaccard,
}

impl Variant {
    pub const ALL: [Variant; 10] = [
        Variant::Sfr,
        Variant::SfrNoCl,
        Variant::SfrNoFin,
        Variant::SfrNd,
        Variant::SfrEr,
        Variant::SfrFm,
        Variant::SfrRan,
        Variant::Gcn,
        Variant::Mlp,
        Variant::GcnJaccard,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Sfr => "sfr",
            Variant::SfrNoCl => "sfr-nocl",
            Variant::SfrNoFin => "sfr-nofin",
            Variant::SfrNd => "sfr-nd",
            Variant::SfrEr => "sfr-er",
            Variant::SfrFm => "sfr-fm",
            Variant::SfrRan => "sfr-ran",
            Variant::Gcn => "gcn",
            Variant::Mlp => "mlp",
            Variant::GcnJaccard => "gcn-jaccard",
        }
    }

    /// Whether the final model propagates over the graph.
    pub fn uses_structure(&self) -> bool {
        !matches!(self, Variant::SfrNoFin | Variant::Mlp)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = SfrError;

    /// Accepts the hyphenated names and their underscore spellings
    /// (`sfr_no_cl`, `gcn_jaccard`, ...).
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .to_ascii_lowercase()
            .chars()
            .filter(|c| *c != '-' && *c != '_')
            .collect();
        let v = match key.as_str() {
            "sfr" => Variant::Sfr,
            "sfrnocl" => Variant::SfrNoCl,
            "sfrnofin" => Variant::SfrNoFin,
            "sfrnd" => Variant::SfrNd,
            "sfrer" => Variant::SfrEr,
            "sfrfm" => Variant::SfrFm,
            "sfrran" => Variant::SfrRan,
            "gcn" => Variant::Gcn,
            "mlp" => Variant::Mlp,
            "gcnjaccard" => Variant::GcnJaccard,
            _ => return Err(SfrError::validation(format!("unknown variant '{s}'"))),
        };
        Ok(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pretrain,
    Finetune,
    /// Single-stage baselines.
    Train,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: Stage,
    /// Total loss of the epoch.
    pub loss: f64,
    /// Contrastive part of `loss` (0 when the term is off).
    pub contrastive_loss: f64,
    pub millis: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn stage_millis(&self, stage: Stage) -> Vec<f64> {
        self.epochs
            .iter()
            .filter(|e| e.stage == stage)
            .map(|e| e.millis)
            .collect()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }
}

/// Output of a training run.
#[derive(Clone, Debug)]
pub struct TrainedModel<T> {
    pub params: ModelParams<T>,
    pub variant: Variant,
    /// Normalized adjacency used at inference; `None` for attribute-only models.
    pub propagation: Option<Arc<CsrMatrix<T>>>,
    pub history: TrainHistory,
}

impl<T: Real> TrainedModel<T> {
    /// Bitwise equality of parameters, variant, propagation and losses.
    pub fn bitwise_eq(&self, other: &TrainedModel<T>) -> bool {
        self.variant == other.variant
            && self.params.bitwise_eq(&other.params)
            && self.propagation == other.propagation
            && self.history.len() == other.history.len()
            && self
                .history
                .epochs
                .iter()
                .zip(&other.history.epochs)
                .all(|(a, b)| a.stage == b.stage && a.loss.to_bits() == b.loss.to_bits())
    }
}

/// Pre-training result: parameters and eval-mode log-probabilities `f(X, I)`.
#[derive(Clone, Debug)]
pub struct Pretrained<T> {
    pub params: ModelParams<T>,
    pub embeddings: DenseMatrix<T>,
    pub history: TrainHistory,
}

fn check_train_mask(g: &Graph) -> Result<()> {
    if !g.splits.train.iter().any(|&b| b) {
        return Err(SfrError::validation("training mask is empty"));
    }
    Ok(())
}

fn init_params<T: Real>(g: &Graph, cfg: &TrainConfig, rng: RngState) -> ModelParams<T> {
    ModelParams::glorot(
        g.num_features(),
        cfg.hidden_units,
        g.num_classes,
        &mut rng.derive("init").rng(),
    )
}

fn check_loss(loss: f64, stage: &str, epoch: usize) -> Result<()> {
    if !loss.is_finite() {
        return Err(SfrError::numeric(
            format!("{stage} epoch {epoch}"),
            format!("loss diverged to {loss}"),
        ));
    }
    Ok(())
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Supervised NLL training for `epochs` epochs with a fresh optimizer.
#[allow(clippy::too_many_arguments)]
fn fit_supervised<T: Real>(
    params: &mut ModelParams<T>,
    x: &CsrMatrix<T>,
    prop: Option<&CsrMatrix<T>>,
    g: &Graph,
    cfg: &TrainConfig,
    epochs: usize,
    dropout_rng: RngState,
    stage: Stage,
    history: &mut TrainHistory,
) -> Result<()> {
    let adam = cfg.adam();
    let mut state = AdamState::for_params(params);
    for epoch in 0..epochs {
        let t0 = Instant::now();
        let mut r = dropout_rng.derive_indexed("epoch", epoch as u64).rng();
        let cache = gcn_forward(params, x, prop, cfg.dropout, &mut r, true)?;
        let (loss, grad) = nll_loss(cache.log_probs(), &g.labels, &g.splits.train)?;
        check_loss(loss.as_f64(), "training", epoch)?;
        let grads = gcn_backward(&cache, &grad)?;
        drop(cache);
        grads.check_finite("gradients")?;
        state.update(&adam, &mut params.tensors_mut(), &grads.tensors());
        history.epochs.push(EpochRecord {
            stage,
            loss: loss.as_f64(),
            contrastive_loss: 0.0,
            millis: elapsed_ms(t0),
        });
    }
    Ok(())
}

/// Attribute pre-training: the model is trained as `f(X, I)`. The adjacency
/// is never read.
pub fn pretrain<T: Real>(g: &Graph, cfg: &TrainConfig, rng: RngState) -> Result<Pretrained<T>> {
    cfg.validate()?;
    check_train_mask(g)?;
    let x = g.feature_matrix::<T>();
    pretrain_on(&x, g, cfg, rng, Stage::Pretrain)
}

fn pretrain_on<T: Real>(
    x: &CsrMatrix<T>,
    g: &Graph,
    cfg: &TrainConfig,
    rng: RngState,
    stage: Stage,
) -> Result<Pretrained<T>> {
    let mut params = init_params(g, cfg, rng);
    let mut history = TrainHistory::default();
    fit_supervised(
        &mut params,
        x,
        None,
        g,
        cfg,
        cfg.pretrain_epochs,
        rng.derive("pretrain-dropout"),
        stage,
        &mut history,
    )?;
    let embeddings = eval_log_probs(&params, x, None)?;
    Ok(Pretrained {
        params,
        embeddings,
        history,
    })
}

fn eval_log_probs<T: Real>(
    params: &ModelParams<T>,
    x: &CsrMatrix<T>,
    prop: Option<&CsrMatrix<T>>,
) -> Result<DenseMatrix<T>> {
    let mut unused = RngState::new(0).rng();
    Ok(gcn_forward(params, x, prop, 0.0, &mut unused, false)?.into_log_probs())
}

/// Second view of the contrastive term.
struct ContrastView<'a, T> {
    x: CsrMatrix<T>,
    /// `None` reuses the main propagation.
    prop: Option<CsrMatrix<T>>,
    mask: &'a [bool],
}

/// Structure fine-tuning from pre-trained parameters on `Â′`, contrasting
/// hidden representations of `X` and the augmented attributes when
/// `use_contrastive` is set.
pub fn finetune<T: Real>(
    g: &Graph,
    params_p: &ModelParams<T>,
    aug: &AugmentedFeatures,
    cfg: &TrainConfig,
    rng: RngState,
    use_contrastive: bool,
) -> Result<TrainedModel<T>> {
    cfg.validate()?;
    check_train_mask(g)?;
    let x = g.feature_matrix::<T>();
    let prop = Arc::new(normalize_adjacency(&g.adjacency)?.cast::<T>());
    let mask: Vec<bool> = g
        .splits
        .train
        .iter()
        .zip(&aug.replaced_mask)
        .map(|(&a, &b)| a && b)
        .collect();
    let view = use_contrastive.then(|| ContrastView {
        x: CsrMatrix::from_dense(&aug.x_inter).cast(),
        prop: None,
        mask: &mask,
    });
    let mut history = TrainHistory::default();
    let params = finetune_on(g, params_p.clone(), &x, &prop, view, cfg, rng, &mut history)?;
    Ok(TrainedModel {
        params,
        variant: if use_contrastive {
            Variant::Sfr
        } else {
            Variant::SfrNoCl
        },
        propagation: Some(prop),
        history,
    })
}

#[allow(clippy::too_many_arguments)]
fn finetune_on<T: Real>(
    g: &Graph,
    mut params: ModelParams<T>,
    x: &CsrMatrix<T>,
    prop: &CsrMatrix<T>,
    view: Option<ContrastView<'_, T>>,
    cfg: &TrainConfig,
    rng: RngState,
    history: &mut TrainHistory,
) -> Result<ModelParams<T>> {
    let (d, f, c) = params.dims();
    if d != g.num_features() || c != g.num_classes || f != cfg.hidden_units {
        return Err(SfrError::validation(format!(
            "pre-trained parameters are {d}x{f}x{c}, graph needs {}x{}x{}",
            g.num_features(),
            cfg.hidden_units,
            g.num_classes
        )));
    }
    let view = view.filter(|v| v.mask.iter().any(|&b| b));
    let adam = cfg.adam();
    let mut state = AdamState::for_params(&params);
    let dropout = rng.derive("finetune-dropout");
    for epoch in 0..cfg.finetune_epochs {
        let t0 = Instant::now();
        // both views draw the same dropout mask
        let epoch_rng = dropout.derive_indexed("epoch", epoch as u64);
        let cache = gcn_forward(
            &params,
            x,
            Some(prop),
            cfg.dropout,
            &mut epoch_rng.rng(),
            true,
        )?;
        let (nll, g_nll) = nll_loss(cache.log_probs(), &g.labels, &g.splits.train)?;
        let (grads, cl) = match &view {
            None => (gcn_backward(&cache, &g_nll)?, T::zero()),
            Some(v) => {
                let p2 = v.prop.as_ref().unwrap_or(prop);
                let cache_aug = gcn_forward(
                    &params,
                    &v.x,
                    Some(p2),
                    cfg.dropout,
                    &mut epoch_rng.rng(),
                    true,
                )?;
                let out =
                    infonce_loss(cache.hidden(), cache_aug.hidden(), v.mask, cfg.temperature)?;
                let mut grads = gcn_backward_with_hidden(&cache, Some(&g_nll), Some(&out.grad_z))?;
                grads.add_assign(&gcn_backward_with_hidden(
                    &cache_aug,
                    None,
                    Some(&out.grad_z_aug),
                )?);
                (grads, out.loss)
            }
        };
        drop(cache);
        let loss = (nll + cl).as_f64();
        check_loss(loss, "fine-tuning", epoch)?;
        grads.check_finite("gradients")?;
        state.update(&adam, &mut params.tensors_mut(), &grads.tensors());
        history.epochs.push(EpochRecord {
            stage: Stage::Finetune,
            loss,
            contrastive_loss: cl.as_f64(),
            millis: elapsed_ms(t0),
        });
    }
    Ok(params)
}

/// Trains `variant` on `g` (whose adjacency may be poisoned).
pub fn train<T: Real>(
    g: &Graph,
    cfg: &TrainConfig,
    variant: Variant,
    rng: RngState,
) -> Result<TrainedModel<T>> {
    cfg.validate()?;
    check_train_mask(g)?;
    let x = g.feature_matrix::<T>();
    let normalized =
        || -> Result<Arc<CsrMatrix<T>>> { Ok(Arc::new(normalize_adjacency(&g.adjacency)?.cast())) };

    match variant {
        Variant::Mlp | Variant::SfrNoFin => {
            let stage = if variant == Variant::Mlp {
                Stage::Train
            } else {
                Stage::Pretrain
            };
            let p = pretrain_on(&x, g, cfg, rng, stage)?;
            Ok(TrainedModel {
                params: p.params,
                variant,
                propagation: None,
                history: p.history,
            })
        }
        Variant::Gcn | Variant::GcnJaccard => {
            let pruned;
            let graph = if variant == Variant::GcnJaccard {
                pruned = jaccard_prune(g, cfg.jaccard_threshold)?;
                &pruned
            } else {
                g
            };
            let prop = Arc::new(normalize_adjacency(&graph.adjacency)?.cast::<T>());
            let mut params = init_params(g, cfg, rng);
            let mut history = TrainHistory::default();
            fit_supervised(
                &mut params,
                &x,
                Some(&prop),
                g,
                cfg,
                cfg.pretrain_epochs,
                rng.derive("pretrain-dropout"),
                Stage::Train,
                &mut history,
            )?;
            Ok(TrainedModel {
                params,
                variant,
                propagation: Some(prop),
                history,
            })
        }
        _ => {
            let p = pretrain_on(&x, g, cfg, rng, Stage::Pretrain)?;
            let mut history = p.history;
            let prop = normalized()?;
            let aug_rng = rng.derive("augment");
            let inter;
            let view = match variant {
                Variant::SfrNoCl => None,
                Variant::Sfr | Variant::SfrRan => {
                    let pool = if variant == Variant::Sfr {
                        DonorPool::InterClass
                    } else {
                        DonorPool::Uniform
                    };
                    let aug = augment_with_donors(g, aug_rng, cfg.internaa_subsample_ratio, pool)?;
                    inter = g
                        .splits
                        .train
                        .iter()
                        .zip(&aug.replaced_mask)
                        .map(|(&a, &b)| a && b)
                        .collect::<Vec<_>>();
                    Some(ContrastView {
                        x: CsrMatrix::from_dense(&aug.x_inter).cast(),
                        prop: None,
                        mask: &inter,
                    })
                }
                Variant::SfrNd | Variant::SfrEr | Variant::SfrFm => {
                    let view = match variant {
                        Variant::SfrNd => node_dropping(g, ABLATION_RATE, aug_rng)?,
                        Variant::SfrEr => edge_removing(g, ABLATION_RATE, aug_rng)?,
                        _ => feature_masking(g, ABLATION_RATE, aug_rng)?,
                    };
                    let prop2 = view
                        .adjacency
                        .as_ref()
                        .map(|a| normalize_adjacency(a).map(|m| m.cast()))
                        .transpose()?;
                    Some(ContrastView {
                        x: CsrMatrix::from_dense(&view.features).cast(),
                        prop: prop2,
                        mask: &g.splits.train,
                    })
                }
                _ => unreachable!("single-stage variants handled above"),
            };
            let params = finetune_on(g, p.params, &x, &prop, view, cfg, rng, &mut history)?;
            Ok(TrainedModel {
                params,
                variant,
                propagation: Some(prop),
                history,
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskAccuracy {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub labels: Vec<usize>,
    pub accuracy: MaskAccuracy,
}

/// Fraction of masked nodes predicted correctly; 0 for an empty mask.
pub fn masked_accuracy(pred: &[usize], labels: &[usize], mask: &[bool]) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for ((&p, &y), &m) in pred.iter().zip(labels).zip(mask) {
        if m {
            total += 1;
            hit += (p == y) as usize;
        }
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

/// Eval-mode forward over the model's own propagation (the graph it was
/// trained on, after any purification) with `g`'s attributes, labels and
/// masks. Ties go to the lowest class index.
pub fn predict<T: Real>(m: &TrainedModel<T>, g: &Graph) -> Result<Prediction> {
    let (d, _, c) = m.params.dims();
    if d != g.num_features() || c != g.num_classes {
        return Err(SfrError::validation("model and graph dimensions differ"));
    }
    if let Some(p) = &m.propagation {
        if p.rows() != g.num_nodes() {
            return Err(SfrError::validation(
                "model propagation and graph node counts differ",
            ));
        }
    }
    let x = g.feature_matrix::<T>();
    let lp = eval_log_probs(&m.params, &x, m.propagation.as_deref())?;
    let labels = lp.argmax_rows();
    let s = &g.splits;
    let accuracy = MaskAccuracy {
        train: masked_accuracy(&labels, &g.labels, &s.train),
        val: masked_accuracy(&labels, &g.labels, &s.val),
        test: masked_accuracy(&labels, &g.labels, &s.test),
    };
    Ok(Prediction { labels, accuracy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::synth::{sbm, SbmConfig};
    use crate::numeric::instrument;

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            pretrain_epochs: 30,
            finetune_epochs: 5,
            ..TrainConfig::default()
        }
    }

    fn toy() -> Graph {
        sbm(&SbmConfig::new(40, 2, 0.3, 0.02), RngState::new(7)).unwrap()
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
            let json = serde_json::to_string(&v).unwrap();
            assert_eq!(json, format!("\"{}\"", v.as_str()));
        }
        assert_eq!("sfr_no_cl".parse::<Variant>().unwrap(), Variant::SfrNoCl);
        assert_eq!(
            "gcn_jaccard".parse::<Variant>().unwrap(),
            Variant::GcnJaccard
        );
        assert!("gat".parse::<Variant>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig {
                pretrain_epochs: 0,
                finetune_epochs: 0,
                ..Default::default()
            },
            TrainConfig {
                internaa_subsample_ratio: 0.0,
                ..Default::default()
            },
            TrainConfig {
                internaa_subsample_ratio: 1.5,
                ..Default::default()
            },
            TrainConfig {
                layers: 3,
                ..Default::default()
            },
            TrainConfig {
                dropout: 1.0,
                ..Default::default()
            },
            TrainConfig {
                temperature: 0.0,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn zero_pretrain_epochs_returns_init() {
        let g = toy();
        let cfg = TrainConfig {
            pretrain_epochs: 0,
            ..small_cfg()
        };
        let p = pretrain::<f64>(&g, &cfg, RngState::new(1)).unwrap();
        let init: ModelParams<f64> = init_params(&g, &cfg, RngState::new(1));
        assert!(p.params.bitwise_eq(&init));
        assert!(p.history.is_empty());
        let lp = eval_log_probs(&init, &g.feature_matrix(), None).unwrap();
        assert_eq!(p.embeddings, lp);
    }

    #[test]
    fn zero_finetune_epochs_keep_pretrained_params() {
        let g = toy();
        let cfg = TrainConfig {
            finetune_epochs: 0,
            ..small_cfg()
        };
        let p = pretrain::<f64>(&g, &cfg, RngState::new(2)).unwrap();
        let aug = internaa(&g, RngState::new(3), 1.0).unwrap();
        let m = finetune(&g, &p.params, &aug, &cfg, RngState::new(2), true).unwrap();
        assert!(m.params.bitwise_eq(&p.params));
    }

    #[test]
    fn propagation_counts_per_finetune_epoch() {
        let g = toy();
        let cfg = small_cfg();
        let p = pretrain::<f64>(&g, &cfg, RngState::new(2)).unwrap();
        let aug = internaa(&g, RngState::new(3), 1.0).unwrap();
        for (cl, per_epoch) in [(true, 2), (false, 1)] {
            instrument::reset();
            finetune(&g, &p.params, &aug, &cfg, RngState::new(2), cl).unwrap();
            assert_eq!(
                instrument::propagation_passes(),
                per_epoch * cfg.finetune_epochs as u64
            );
        }
    }

    #[test]
    fn no_fin_equals_mlp_and_pretrain() {
        let g = toy();
        let cfg = small_cfg();
        let a = train::<f64>(&g, &cfg, Variant::SfrNoFin, RngState::new(5)).unwrap();
        let b = train::<f64>(&g, &cfg, Variant::Mlp, RngState::new(5)).unwrap();
        let p = pretrain::<f64>(&g, &cfg, RngState::new(5)).unwrap();
        assert!(a.params.bitwise_eq(&b.params));
        assert!(a.params.bitwise_eq(&p.params));
        assert!(a.propagation.is_none());
    }

    #[test]
    fn every_variant_trains_and_is_deterministic() {
        let g = toy();
        let cfg = small_cfg();
        for v in Variant::ALL {
            let a = train::<f64>(&g, &cfg, v, RngState::new(9)).unwrap();
            let b = train::<f64>(&g, &cfg, v, RngState::new(9)).unwrap();
            assert!(a.bitwise_eq(&b), "{v}");
            let expected = match v {
                Variant::Gcn | Variant::GcnJaccard | Variant::Mlp | Variant::SfrNoFin => {
                    cfg.pretrain_epochs
                }
                _ => cfg.pretrain_epochs + cfg.finetune_epochs,
            };
            assert_eq!(a.history.len(), expected, "{v}");
            assert!(a.history.epochs.iter().all(|e| e.millis > 0.0));
            let pred = predict(&a, &g).unwrap();
            assert!((0.0..=1.0).contains(&pred.accuracy.test));
        }
    }

    #[test]
    fn uniform_logits_predict_class_zero() {
        let g = toy();
        let m = TrainedModel::<f64> {
            params: ModelParams::zeros(g.num_features(), 4, 2),
            variant: Variant::Mlp,
            propagation: None,
            history: TrainHistory::default(),
        };
        let pred = predict(&m, &g).unwrap();
        assert!(pred.labels.iter().all(|&y| y == 0));
        let zeros = |mask: &[bool]| {
            let idx: Vec<_> = (0..g.num_nodes()).filter(|&i| mask[i]).collect();
            idx.iter().filter(|&&i| g.labels[i] == 0).count() as f64 / idx.len() as f64
        };
        assert_eq!(pred.accuracy.test, zeros(&g.splits.test));
    }

    #[test]
    fn perfect_model_scores_one() {
        // one-hot attributes equal to the label, identity weights
        let mut g = toy();
        g.features = DenseMatrix::from_fn(g.num_nodes(), 2, |i, j| (g.labels[i] == j) as u8 as f64);
        let mut params = ModelParams::<f64>::zeros(2, 2, 2);
        params.w1 = DenseMatrix::identity(2);
        params.w2 = DenseMatrix::from_vec(2, 2, vec![10.0, 0.0, 0.0, 10.0]).unwrap();
        let m = TrainedModel {
            params,
            variant: Variant::Mlp,
            propagation: None,
            history: TrainHistory::default(),
        };
        let acc = predict(&m, &g).unwrap().accuracy;
        assert_eq!((acc.train, acc.val, acc.test), (1.0, 1.0, 1.0));
    }
}
