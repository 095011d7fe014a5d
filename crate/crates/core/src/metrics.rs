//! Depth accuracy metrics and label-disagreement statistics.
//!
//! Over the valid set `{gt > 0, gt ≤ cap, pred > 0}`:
//!
//! * `δᵢ` is the fraction with `max(pred/gt, gt/pred) < 1.25ⁱ`;
//! * `abs_rel = mean |pred − gt| / gt`;
//! * `rmse = √mean (pred − gt)²`;
//! * `rmse_log = √mean (ln pred − ln gt)²`;
//! * `log10 = mean |log₁₀ pred − log₁₀ gt|`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::DepthMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub abs_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub log10: f64,
    pub n_valid: usize,
}

/// Running sums, so several images can be pooled into one report.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricsAccumulator {
    d: [usize; 3],
    abs_rel: f64,
    sq: f64,
    sq_log: f64,
    log10: f64,
    n: usize,
}

impl MetricsAccumulator {
    pub fn add(&mut self, pred: &[f64], gt: &[f64], cap: f64) -> Result<()> {
        if pred.len() != gt.len() {
            return Err(Error::shape("evaluate", format!("{} predictions vs {} labels", pred.len(), gt.len())));
        }
        for (&p, &g) in pred.iter().zip(gt) {
            if !(g > 0.0 && g <= cap && p > 0.0) {
                continue;
            }
            let ratio = (p / g).max(g / p);
            for (i, t) in [1.25, 1.25f64.powi(2), 1.25f64.powi(3)].iter().enumerate() {
                if ratio < *t {
                    self.d[i] += 1;
                }
            }
            let diff = p - g;
            self.abs_rel += diff.abs() / g;
            self.sq += diff * diff;
            let dl = p.ln() - g.ln();
            self.sq_log += dl * dl;
            self.log10 += (p.log10() - g.log10()).abs();
            self.n += 1;
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<MetricsReport> {
        if self.n == 0 {
            return Err(Error::EmptyOverlap("no valid pixel to evaluate".into()));
        }
        let n = self.n as f64;
        Ok(MetricsReport {
            delta1: self.d[0] as f64 / n,
            delta2: self.d[1] as f64 / n,
            delta3: self.d[2] as f64 / n,
            abs_rel: self.abs_rel / n,
            rmse: (self.sq / n).sqrt(),
            rmse_log: (self.sq_log / n).sqrt(),
            log10: self.log10 / n,
            n_valid: self.n,
        })
    }
}

pub fn evaluate(pred: &DepthMap, gt: &DepthMap, z_cap: f64) -> Result<MetricsReport> {
    if !pred.same_shape(gt) {
        return Err(Error::shape(
            "evaluate",
            format!("{}x{} vs {}x{}", pred.width, pred.height, gt.width, gt.height),
        ));
    }
    evaluate_values(&pred.values, &gt.values, z_cap)
}

pub fn evaluate_values(pred: &[f64], gt: &[f64], z_cap: f64) -> Result<MetricsReport> {
    let mut acc = MetricsAccumulator::default();
    acc.add(pred, gt, z_cap)?;
    acc.finish()
}

/// L1, MSE and variance of `dense − sparse` over one image's co-valid pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub l1: f64,
    pub mse: f64,
    pub variance: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMaxAvg {
    pub min: f64,
    pub max: f64,
    pub avg: f64,
}

impl MinMaxAvg {
    fn of(xs: impl Iterator<Item = f64> + Clone) -> Self {
        let n = xs.clone().count() as f64;
        Self {
            min: xs.clone().fold(f64::INFINITY, f64::min),
            max: xs.clone().fold(f64::NEG_INFINITY, f64::max),
            avg: xs.sum::<f64>() / n,
        }
    }
}

/// Corpus summary of per-image [`PairStats`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisparityStats {
    pub l1: MinMaxAvg,
    pub mse: MinMaxAvg,
    pub variance: MinMaxAvg,
    pub images: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisparityReport {
    pub uncapped: DisparityStats,
    pub capped: DisparityStats,
    pub sparse_cap: f64,
    pub dense_cap: f64,
}

/// Statistics of `dense − sparse` where both are valid; `None` without overlap.
pub fn pair_stats(dense: &DepthMap, sparse: &DepthMap) -> Result<Option<PairStats>> {
    if !dense.same_shape(sparse) {
        return Err(Error::shape("disparity_report", "dense and sparse maps differ in size"));
    }
    let diffs: Vec<f64> = dense
        .values
        .iter()
        .zip(&sparse.values)
        .filter(|(d, s)| **d > 0.0 && **s > 0.0)
        .map(|(d, s)| d - s)
        .collect();
    if diffs.is_empty() {
        return Ok(None);
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    Ok(Some(PairStats {
        l1: diffs.iter().map(|d| d.abs()).sum::<f64>() / n,
        mse: diffs.iter().map(|d| d * d).sum::<f64>() / n,
        variance: diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n,
        n: diffs.len(),
    }))
}

fn summarize(stats: &[PairStats]) -> Result<DisparityStats> {
    if stats.is_empty() {
        return Err(Error::EmptyOverlap("no image has co-valid dense and sparse pixels".into()));
    }
    Ok(DisparityStats {
        l1: MinMaxAvg::of(stats.iter().map(|s| s.l1)),
        mse: MinMaxAvg::of(stats.iter().map(|s| s.mse)),
        variance: MinMaxAvg::of(stats.iter().map(|s| s.variance)),
        images: stats.len(),
    })
}

/// Dense-vs-sparse label disagreement over a corpus of `(dense, sparse)`
/// pairs, before and after capping sparse at `sparse_cap` and dense at
/// `dense_cap`. Images without overlap are left out of the summary.
pub fn disparity_report(pairs: &[(&DepthMap, &DepthMap)], sparse_cap: f64, dense_cap: f64) -> Result<DisparityReport> {
    let mut raw = Vec::new();
    let mut capped = Vec::new();
    for (dense, sparse) in pairs {
        if let Some(s) = pair_stats(dense, sparse)? {
            raw.push(s);
        }
        if let Some(s) = pair_stats(&dense.capped(dense_cap), &sparse.capped(sparse_cap))? {
            capped.push(s);
        }
    }
    Ok(DisparityReport {
        uncapped: summarize(&raw)?,
        capped: summarize(&capped)?,
        sparse_cap,
        dense_cap,
    })
}

/// One line of a comparison grid: which validation data, which run.
#[derive(Debug, Clone, Copy)]
pub struct TableRow<'a> {
    pub data: &'a str,
    pub label: &'a str,
    pub report: &'a MetricsReport,
}

/// Fixed-width grid with one row per (validation data, run).
pub fn render_table(rows: &[TableRow]) -> String {
    let mut s = format!(
        "{:<10} {:<12} {:>7} {:>7} {:>7} {:>8} {:>8} {:>9} {:>7}\n",
        "data", "loss", "d1", "d2", "d3", "abs_rel", "rmse", "rmse_log", "log10"
    );
    for r in rows {
        let m = r.report;
        s.push_str(&format!(
            "{:<10} {:<12} {:>7.4} {:>7.4} {:>7.4} {:>8.4} {:>8.4} {:>9.4} {:>7.4}\n",
            r.data, r.label, m.delta1, m.delta2, m.delta3, m.abs_rel, m.rmse, m.rmse_log, m.log10
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::DepthKind;
    use crate::rng::Stream;
    use proptest::prelude::*;

    fn map(v: &[f64]) -> DepthMap {
        DepthMap::from_values(v.len(), 1, DepthKind::Dense, v.to_vec()).unwrap()
    }

    #[test]
    fn identity_is_perfect() {
        let m = map(&[1.0, 2.0, 4.0]);
        let r = evaluate(&m, &m, 80.0).unwrap();
        assert_eq!((r.delta1, r.delta2, r.delta3), (1.0, 1.0, 1.0));
        assert_eq!((r.abs_rel, r.rmse, r.rmse_log, r.log10), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn worked_examples() {
        let r = evaluate(&map(&[2.0]), &map(&[1.0]), 80.0).unwrap();
        assert_eq!((r.abs_rel, r.rmse), (1.0, 1.0));
        assert!((r.rmse_log - 0.693147).abs() < 1e-6);
        assert!((r.log10 - 0.301030).abs() < 1e-6);
        assert_eq!((r.delta1, r.delta2, r.delta3), (0.0, 0.0, 0.0));

        let r = evaluate(&map(&[2.0, 4.0]), &map(&[1.0, 4.0]), 80.0).unwrap();
        assert_eq!(r.delta1, 0.5);
        assert_eq!(r.abs_rel, 0.5);
        assert!((r.rmse - 0.707107).abs() < 1e-6);
        assert!((r.rmse_log - 0.490129).abs() < 1e-6);
        assert!((r.log10 - 0.150515).abs() < 1e-6);
    }

    #[test]
    fn valid_set_and_errors() {
        let r = evaluate(&map(&[1.0, 5.0, 0.0]), &map(&[1.0, 90.0, 3.0]), 80.0).unwrap();
        assert_eq!(r.n_valid, 1);
        assert!(matches!(
            evaluate(&map(&[1.0]), &map(&[0.0]), 80.0),
            Err(Error::EmptyOverlap(_))
        ));
        assert!(evaluate(&map(&[1.0]), &map(&[1.0, 2.0]), 80.0).is_err());
    }

    #[test]
    fn constant_offset_disparity() {
        let sparse = map(&[0.0, 3.0, 7.0, 0.0]);
        let dense = map(&[1.0, 5.0, 9.0, 4.0]);
        let r = disparity_report(&[(&dense, &sparse)], 80.0, 120.0).unwrap();
        assert_eq!((r.uncapped.l1.avg, r.uncapped.mse.avg, r.uncapped.variance.avg), (2.0, 4.0, 0.0));
        let same = disparity_report(&[(&dense, &dense)], 80.0, 120.0).unwrap();
        assert_eq!((same.capped.l1.max, same.capped.mse.max), (0.0, 0.0));
        assert!(disparity_report(&[(&dense, &map(&[0.0; 4]))], 80.0, 120.0).is_err());
    }

    #[test]
    fn capping_removes_far_outliers() {
        // A far sparse return behind a near dense surface inflates the raw stats.
        let sparse = map(&[10.0, 20.0, 95.0]);
        let dense = map(&[10.5, 19.0, 12.0]);
        let r = disparity_report(&[(&dense, &sparse)], 80.0, 120.0).unwrap();
        assert!(r.capped.l1.avg <= r.uncapped.l1.avg);
        assert!(r.capped.mse.avg <= r.uncapped.mse.avg);
        assert_eq!(r.capped.l1.avg, 0.75);
    }

    /// Per-pixel reference evaluation, written independently of the accumulator.
    fn naive(pred: &[f64], gt: &[f64], cap: f64) -> [f64; 7] {
        let idx: Vec<usize> = (0..gt.len()).filter(|&i| gt[i] > 0.0 && gt[i] <= cap && pred[i] > 0.0).collect();
        let n = idx.len() as f64;
        let mean = |f: &dyn Fn(usize) -> f64| idx.iter().map(|&i| f(i)).sum::<f64>() / n;
        let delta = |k: i32| mean(&|i| f64::from(u8::from((pred[i] / gt[i]).max(gt[i] / pred[i]) < 1.25f64.powi(k))));
        [
            delta(1),
            delta(2),
            delta(3),
            mean(&|i| (pred[i] - gt[i]).abs() / gt[i]),
            mean(&|i| (pred[i] - gt[i]).powi(2)).sqrt(),
            mean(&|i| (pred[i].ln() - gt[i].ln()).powi(2)).sqrt(),
            mean(&|i| (pred[i].log10() - gt[i].log10()).abs()),
        ]
    }

    #[test]
    fn matches_naive_loop() {
        let mut rng = Stream::new(12);
        for _ in 0..50 {
            let n = 1 + rng.below(300);
            let mut gt: Vec<f64> = (0..n).map(|_| if rng.uniform() < 0.3 { 0.0 } else { rng.range(0.5, 100.0) }).collect();
            gt[0] = 5.0;
            let pred: Vec<f64> = gt.iter().map(|g| (g * rng.range(0.5, 1.6)).max(0.1)).collect();
            let r = evaluate_values(&pred, &gt, 80.0).unwrap();
            let o = naive(&pred, &gt, 80.0);
            let got = [r.delta1, r.delta2, r.delta3, r.abs_rel, r.rmse, r.rmse_log, r.log10];
            for (a, b) in got.iter().zip(&o) {
                assert!((a - b).abs() < 1e-12, "{got:?} vs {o:?}");
            }
        }
    }

    proptest! {
        #[test]
        fn delta_monotone_and_symmetric(pairs in prop::collection::vec((0.1f64..50.0, 0.1f64..50.0), 1..60)) {
            let (p, g): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let a = evaluate_values(&p, &g, 1e9).unwrap();
            let b = evaluate_values(&g, &p, 1e9).unwrap();
            prop_assert!(a.delta1 <= a.delta2 && a.delta2 <= a.delta3);
            prop_assert_eq!((a.delta1, a.delta2, a.delta3), (b.delta1, b.delta2, b.delta3));
        }

        #[test]
        fn mse_is_variance_plus_mean_squared(pairs in prop::collection::vec((0.1f64..80.0, 0.1f64..80.0), 1..60)) {
            let (d, s): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let st = pair_stats(&map(&d), &map(&s)).unwrap().unwrap();
            let mean = d.iter().zip(&s).map(|(a, b)| a - b).sum::<f64>() / d.len() as f64;
            prop_assert!((st.mse - st.variance - mean * mean).abs() < 1e-9);
            prop_assert!(st.mse >= st.variance - 1e-9);
        }
    }
}
