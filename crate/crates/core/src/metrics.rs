//! Displacement and likelihood metrics for sampled trajectories.
//!
//! Every metric reads only steps `1 … t₁` of the samples and the truth, where
//! `t₁` is the [`HorizonPrefix`]. Distances are taken in the planar embedding
//! of the approach paths; for the human (whose path is the x axis) this
//! equals the along-path error `|Δs|`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::idm::human_position;
use crate::stats;
use crate::types::{SampleSet, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Ade,
    Fde,
    KdeNll,
    MinAde,
    MinFde,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Ade => "ADE",
            MetricKind::Fde => "FDE",
            MetricKind::KdeNll => "KDE-NLL",
            MetricKind::MinAde => "minADE",
            MetricKind::MinFde => "minFDE",
        }
    }

    /// Mean-form metrics; the only ones a Shapley audit accepts.
    pub fn is_mean_form(self) -> bool {
        matches!(self, MetricKind::Ade | MetricKind::Fde | MetricKind::KdeNll)
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ade" => Ok(MetricKind::Ade),
            "fde" => Ok(MetricKind::Fde),
            "kde-nll" | "kde_nll" | "kde" | "nll" => Ok(MetricKind::KdeNll),
            "minade" | "min-ade" => Ok(MetricKind::MinAde),
            "minfde" | "min-fde" => Ok(MetricKind::MinFde),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

/// Last step `t₁` of the evaluated prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HorizonPrefix(pub usize);

pub const BANDWIDTH_FLOOR: f64 = 1e-3;
pub const LOG_DENSITY_FLOOR: f64 = -20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum BandwidthRule {
    /// Scott's factor `n^(-1/6)` times the per-axis spread, floored.
    Scott { floor: f64 },
    Fixed { h: f64 },
}

impl Default for BandwidthRule {
    fn default() -> Self {
        BandwidthRule::Scott {
            floor: BANDWIDTH_FLOOR,
        }
    }
}

/// Sample paths as planar points, indexed `[sample][t]`.
pub type Paths = [Vec<[f64; 2]>];

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn check_prefix(paths: &Paths, truth: &[[f64; 2]], prefix: HorizonPrefix) -> Result<()> {
    let t1 = prefix.0;
    if t1 == 0 {
        return Err(Error::Shape("metric prefix must cover at least one step".into()));
    }
    if truth.len() <= t1 {
        return Err(Error::Shape(format!(
            "truth has {} states, prefix needs step {t1}",
            truth.len()
        )));
    }
    if paths.is_empty() {
        return Err(Error::Shape("no samples".into()));
    }
    if let Some(i) = paths.iter().position(|p| p.len() <= t1) {
        return Err(Error::Shape(format!(
            "sample {i} has {} states, prefix needs step {t1}",
            paths[i].len()
        )));
    }
    Ok(())
}

fn resolve_weights(n: usize, weights: Option<&[f64]>) -> Result<Vec<f64>> {
    match weights {
        Some(w) if w.len() != n => Err(Error::Shape(format!("{} weights for {n} samples", w.len()))),
        Some(w) => Ok(w.to_vec()),
        None => Ok(vec![1.0; n]),
    }
}

pub fn ade_paths(
    paths: &Paths,
    weights: Option<&[f64]>,
    truth: &[[f64; 2]],
    prefix: HorizonPrefix,
) -> Result<f64> {
    check_prefix(paths, truth, prefix)?;
    let t1 = prefix.0;
    let per_sample: Vec<f64> = paths
        .iter()
        .map(|p| (1..=t1).map(|t| distance(p[t], truth[t])).sum::<f64>() / t1 as f64)
        .collect();
    stats::weighted_mean(&per_sample, &resolve_weights(paths.len(), weights)?)
}

pub fn fde_paths(
    paths: &Paths,
    weights: Option<&[f64]>,
    truth: &[[f64; 2]],
    prefix: HorizonPrefix,
) -> Result<f64> {
    check_prefix(paths, truth, prefix)?;
    let t1 = prefix.0;
    let per_sample: Vec<f64> = paths.iter().map(|p| distance(p[t1], truth[t1])).collect();
    stats::weighted_mean(&per_sample, &resolve_weights(paths.len(), weights)?)
}

fn bandwidth(values: &[f64], weights: &[f64], rule: BandwidthRule) -> Result<f64> {
    match rule {
        BandwidthRule::Fixed { h } => Ok(h),
        BandwidthRule::Scott { floor } => {
            if values.len() < 2 {
                return Ok(floor);
            }
            let n = stats::effective_sample_size(weights)?;
            let spread = stats::weighted_variance(values, weights)?.sqrt();
            Ok((spread * n.powf(-1.0 / 6.0)).max(floor))
        }
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Negative mean (over steps) log-density of the truth under a per-step
/// product-Gaussian KDE; each step's log-density is floored.
pub fn kde_nll_paths(
    paths: &Paths,
    weights: Option<&[f64]>,
    truth: &[[f64; 2]],
    prefix: HorizonPrefix,
    rule: BandwidthRule,
) -> Result<f64> {
    check_prefix(paths, truth, prefix)?;
    let weights = resolve_weights(paths.len(), weights)?;
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateWeights);
    }
    let log_norm = (2.0 * std::f64::consts::PI).ln();
    let t1 = prefix.0;
    let mut acc = 0.0;
    for t in 1..=t1 {
        let mut h = [0.0; 2];
        for (axis, h_axis) in h.iter_mut().enumerate() {
            let values: Vec<f64> = paths.iter().map(|p| p[t][axis]).collect();
            *h_axis = bandwidth(&values, &weights, rule)?;
        }
        let terms: Vec<f64> = paths
            .iter()
            .zip(&weights)
            .map(|(p, w)| {
                let zx = (truth[t][0] - p[t][0]) / h[0];
                let zy = (truth[t][1] - p[t][1]) / h[1];
                w.ln() - 0.5 * (zx * zx + zy * zy)
            })
            .collect();
        let log_density = log_sum_exp(&terms) - total.ln() - log_norm - h[0].ln() - h[1].ln();
        acc += if log_density.is_nan() {
            LOG_DENSITY_FLOOR
        } else {
            log_density.max(LOG_DENSITY_FLOOR)
        };
    }
    Ok(-acc / t1 as f64)
}

/// Minimum over samples of the per-sample ADE (or FDE).
pub fn min_paths(
    kind: MetricKind,
    paths: &Paths,
    truth: &[[f64; 2]],
    prefix: HorizonPrefix,
) -> Result<f64> {
    check_prefix(paths, truth, prefix)?;
    let per_sample = |p: &Vec<[f64; 2]>| -> Result<f64> {
        let one = std::slice::from_ref(p);
        match kind {
            MetricKind::MinAde => ade_paths(one, None, truth, prefix),
            MetricKind::MinFde => fde_paths(one, None, truth, prefix),
            other => Err(Error::Config(format!("{} is not a min-over-samples metric", other.name()))),
        }
    };
    paths
        .iter()
        .map(per_sample)
        .try_fold(f64::INFINITY, |acc, x| Ok(acc.min(x?)))
}

/// Human trajectory in the planar embedding.
pub fn embed_human(trajectory: &Trajectory) -> Vec<[f64; 2]> {
    trajectory.positions().map(human_position).collect()
}

fn embed_set(samples: &SampleSet) -> Vec<Vec<[f64; 2]>> {
    samples.samples.iter().map(embed_human).collect()
}

pub fn ade(samples: &SampleSet, truth: &Trajectory, prefix: HorizonPrefix) -> Result<f64> {
    ade_paths(&embed_set(samples), samples.weights.as_deref(), &embed_human(truth), prefix)
}

pub fn fde(samples: &SampleSet, truth: &Trajectory, prefix: HorizonPrefix) -> Result<f64> {
    fde_paths(&embed_set(samples), samples.weights.as_deref(), &embed_human(truth), prefix)
}

pub fn kde_nll(
    samples: &SampleSet,
    truth: &Trajectory,
    prefix: HorizonPrefix,
    rule: BandwidthRule,
) -> Result<f64> {
    kde_nll_paths(
        &embed_set(samples),
        samples.weights.as_deref(),
        &embed_human(truth),
        prefix,
        rule,
    )
}

/// `minADE`/`minFDE`; weighted sets are rejected.
pub fn min_variant(
    kind: MetricKind,
    samples: &SampleSet,
    truth: &Trajectory,
    prefix: HorizonPrefix,
) -> Result<f64> {
    if !samples.is_uniform() {
        return Err(Error::Config(
            "min-over-samples metrics need an equally weighted sample set".into(),
        ));
    }
    min_paths(kind, &embed_set(samples), &embed_human(truth), prefix)
}

/// Any metric with the default bandwidth rule.
pub fn evaluate(
    kind: MetricKind,
    samples: &SampleSet,
    truth: &Trajectory,
    prefix: HorizonPrefix,
) -> Result<f64> {
    match kind {
        MetricKind::Ade => ade(samples, truth, prefix),
        MetricKind::Fde => fde(samples, truth, prefix),
        MetricKind::KdeNll => kde_nll(samples, truth, prefix, BandwidthRule::default()),
        MetricKind::MinAde | MetricKind::MinFde => min_variant(kind, samples, truth, prefix),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::AgentState;

    fn line(points: &[f64]) -> Vec<[f64; 2]> {
        points.iter().map(|s| [*s, 0.0]).collect()
    }

    fn shifted(path: &[[f64; 2]], dx: f64, dy: f64) -> Vec<[f64; 2]> {
        path.iter().map(|p| [p[0] + dx, p[1] + dy]).collect()
    }

    #[test]
    fn exact_match_scores_zero() {
        let truth = line(&[10.0, 9.0, 7.5, 6.0]);
        let p = HorizonPrefix(3);
        assert_eq!(ade_paths(&[truth.clone()], None, &truth, p).unwrap(), 0.0);
        assert_eq!(fde_paths(&[truth.clone()], None, &truth, p).unwrap(), 0.0);
        assert_eq!(min_paths(MetricKind::MinAde, &[truth.clone()], &truth, p).unwrap(), 0.0);
    }

    #[test]
    fn lateral_offsets() {
        let truth = line(&[10.0, 9.0, 7.5, 6.0]);
        let p = HorizonPrefix(3);
        let three = shifted(&truth, 0.0, 3.0);
        assert!((ade_paths(&[three], None, &truth, p).unwrap() - 3.0).abs() < 1e-9);
        let pair = [shifted(&truth, 0.0, 1.0), shifted(&truth, 0.0, 3.0)];
        assert!((ade_paths(&pair, None, &truth, p).unwrap() - 2.0).abs() < 1e-9);
        assert!((min_paths(MetricKind::MinAde, &pair, &truth, p).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fde_examples() {
        let truth = line(&[10.0, 9.0, 7.5, 6.0]);
        let p = HorizonPrefix(3);
        let mut last = truth.clone();
        last[3][1] += 5.0;
        assert!((fde_paths(&[last], None, &truth, p).unwrap() - 5.0).abs() < 1e-9);
        let pair = [shifted(&truth, 2.0, 0.0), shifted(&truth, 6.0, 0.0)];
        assert!((fde_paths(&pair, Some(&[1.0, 3.0]), &truth, p).unwrap() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn kde_closed_form_at_kernel_center() {
        let truth = line(&[10.0, 9.0, 7.5]);
        let h = BANDWIDTH_FLOOR;
        let samples = vec![truth.clone(); 5];
        let nll = kde_nll_paths(&samples, None, &truth, HorizonPrefix(2), BandwidthRule::default()).unwrap();
        let expected = (2.0 * std::f64::consts::PI * h * h).ln();
        assert!((nll - expected).abs() < 1e-6, "{nll} vs {expected}");
    }

    #[test]
    fn kde_floor_applies_far_away() {
        let truth = line(&[10.0, 9.0, 7.5]);
        let far = vec![shifted(&truth, 1e6, 0.0), shifted(&truth, 1e6, 1.0)];
        let nll = kde_nll_paths(&far, None, &truth, HorizonPrefix(2), BandwidthRule::default()).unwrap();
        assert_eq!(nll, 20.0);
    }

    #[test]
    fn empty_prefix_rejected() {
        let truth = line(&[1.0, 0.0]);
        assert!(matches!(
            ade_paths(&[truth.clone()], None, &truth, HorizonPrefix(0)),
            Err(Error::Shape(_))
        ));
        assert!(ade_paths(&[truth.clone()], None, &truth, HorizonPrefix(2)).is_err());
    }

    #[test]
    fn trajectory_level_metrics_use_along_path_error() {
        let truth = Trajectory::new(vec![
            AgentState::new(10.0, 5.0),
            AgentState::new(9.0, 5.0),
            AgentState::new(8.0, 5.0),
        ])
        .unwrap();
        let off = Trajectory::new(vec![
            AgentState::new(10.0, 5.0),
            AgentState::new(8.0, 5.0),
            AgentState::new(11.0, 5.0),
        ])
        .unwrap();
        let set = SampleSet::uniform(vec![off]).unwrap();
        assert!((ade(&set, &truth, HorizonPrefix(2)).unwrap() - 2.0).abs() < 1e-12);
        assert!((fde(&set, &truth, HorizonPrefix(2)).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(fde(&set, &truth, HorizonPrefix(1)).unwrap(), 1.0);
    }

    #[test]
    fn min_variant_rejects_weighted_sets() {
        let t = Trajectory::new(vec![AgentState::new(1.0, 1.0), AgentState::new(0.8, 1.0)]).unwrap();
        let set = SampleSet::weighted(vec![t.clone(), t.clone()], vec![1.0, 2.0]).unwrap();
        assert!(min_variant(MetricKind::MinAde, &set, &t, HorizonPrefix(1)).is_err());
        let even = SampleSet::weighted(vec![t.clone(), t.clone()], vec![2.0, 2.0]).unwrap();
        assert_eq!(min_variant(MetricKind::MinFde, &even, &t, HorizonPrefix(1)).unwrap(), 0.0);
    }

    #[test]
    fn parses_metric_names() {
        assert_eq!("fde".parse::<MetricKind>().unwrap(), MetricKind::Fde);
        assert_eq!("KDE-NLL".parse::<MetricKind>().unwrap(), MetricKind::KdeNll);
        assert!("rmse".parse::<MetricKind>().is_err());
    }
}
