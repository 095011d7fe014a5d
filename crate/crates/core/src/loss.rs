//! Scale-invariant log loss, its normalized form, the dense-sparse
//! consistency term and the weighted composite used for training.
//!
//! With `e = log pred − log gt` over the `N` pixels where both are positive,
//!
//! ```text
//! silog          = Σe²/(2N) − λ(Σe)²/(2N²)
//! norm(x, y)     = x / (x + y + ε)
//! consistency    = (norm(l_sp, l_de) − norm(l_de, l_sp))²
//! final          = α·l_sp + β·l_de + γ·consistency
//! ```
//!
//! The dense and consistency terms are only present when a dense label is.

use serde::{Deserialize, Serialize};

use crate::autodiff::gradcheck::{check, random_tensor, run_suite, SuiteResult, DEFAULT_EPS, DEFAULT_FLOOR};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geom::{mean_focal, CanonicalSpace};
use crate::raster::{DepthKind, DepthMap};
use crate::rng::Stream;

pub const DEFAULT_LAMBDA: f64 = 0.3;
pub const NORM_EPS: f64 = 1e-6;
pub const WEIGHT_MIN: f64 = 1e-4;
pub const ALPHA_BETA_MAX: f64 = 2.0;
pub const GAMMA_MAX: f64 = 1.0;

/// Learnable term weights and the fixed constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub epsilon: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.2,
            beta: 1.2,
            gamma: 0.5,
            lambda: DEFAULT_LAMBDA,
            epsilon: NORM_EPS,
        }
    }
}

impl LossWeights {
    pub fn clamp(&mut self) {
        self.alpha = self.alpha.clamp(WEIGHT_MIN, ALPHA_BETA_MAX);
        self.beta = self.beta.clamp(WEIGHT_MIN, ALPHA_BETA_MAX);
        self.gamma = self.gamma.clamp(WEIGHT_MIN, GAMMA_MAX);
    }

    pub fn within_bounds(&self) -> bool {
        (WEIGHT_MIN..=ALPHA_BETA_MAX).contains(&self.alpha)
            && (WEIGHT_MIN..=ALPHA_BETA_MAX).contains(&self.beta)
            && (WEIGHT_MIN..=GAMMA_MAX).contains(&self.gamma)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::Config(format!("epsilon must be non-negative, got {}", self.epsilon)));
        }
        Ok(())
    }

    /// Places α, β, γ on the tape, as leaves or as constants when frozen.
    pub fn bind(&self, tape: &mut Tape, frozen: bool) -> WeightVars {
        let mut put = |x: f64| {
            if frozen {
                tape.constant(Tensor::scalar(x))
            } else {
                tape.leaf(Tensor::scalar(x))
            }
        };
        WeightVars {
            alpha: put(self.alpha),
            beta: put(self.beta),
            gamma: put(self.gamma),
            lambda: self.lambda,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct WeightVars {
    pub alpha: Var,
    pub beta: Var,
    pub gamma: Var,
    pub lambda: f64,
    pub epsilon: f64,
}

/// Which terms enter the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// `α·silog` against the sparse label only; dense labels are ignored.
    SparseSilog,
    /// The full composite whenever a dense label is present.
    Consistency,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub mode: LossMode,
    pub sparse_cap: f64,
    pub dense_cap: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            mode: LossMode::Consistency,
            sparse_cap: crate::cloud::DEFAULT_Z_MAX,
            dense_cap: crate::stereo::DEFAULT_DENSE_CAP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_silog_sparse: f64,
    pub l_silog_dense: Option<f64>,
    pub l_con: Option<f64>,
    pub l_final: f64,
    pub n_valid_sparse: usize,
    pub n_valid_dense: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl LossReport {
    /// `α·l_sp + β·l_de + γ·l_con` from the stored parts.
    pub fn recompose(&self) -> f64 {
        let mut l = self.alpha * self.l_silog_sparse;
        if let (Some(d), Some(c)) = (self.l_silog_dense, self.l_con) {
            l += self.beta * d + self.gamma * c;
        }
        l
    }
}

/// SiLog of `factor·pred[offset..offset+len]` against `gt` (length `len`).
/// Returns the loss and the number of pixels it covers.
pub fn silog_region(
    tape: &mut Tape,
    pred: Var,
    offset: usize,
    factor: f64,
    gt: &[f64],
    lambda: f64,
) -> Result<(Var, usize)> {
    let p = tape.value(pred).data();
    if offset + gt.len() > p.len() {
        return Err(Error::shape(
            "silog",
            format!("label of {} at offset {offset} exceeds prediction of {}", gt.len(), p.len()),
        ));
    }
    let mut mask = vec![false; p.len()];
    let mut log_gt = Vec::new();
    for (i, &g) in gt.iter().enumerate() {
        if g > 0.0 && p[offset + i] > 0.0 {
            mask[offset + i] = true;
            log_gt.push(g.ln());
        }
    }
    let n = log_gt.len();
    if n == 0 {
        return Err(Error::EmptyOverlap("no pixel is positive in both prediction and label".into()));
    }
    let sel = tape.masked_select(pred, &mask)?;
    let sel = if factor == 1.0 { sel } else { tape.scale(sel, factor) };
    let lp = tape.log(sel)?;
    let lg = tape.constant(Tensor::new(vec![n], log_gt)?);
    let e = tape.sub(lp, lg)?;
    let e2 = tape.square(e);
    let s2 = tape.sum(e2);
    let s1 = tape.sum(e);
    let s1sq = tape.square(s1);
    let nf = n as f64;
    let a = tape.scale(s2, 1.0 / (2.0 * nf));
    let b = tape.scale(s1sq, lambda / (2.0 * nf * nf));
    Ok((tape.sub(a, b)?, n))
}

/// SiLog over a whole prediction of the same size as `gt`.
pub fn silog(tape: &mut Tape, pred: Var, gt: &DepthMap, lambda: f64) -> Result<Var> {
    let numel = tape.value(pred).numel();
    if numel != gt.values.len() {
        return Err(Error::shape("silog", format!("prediction {numel} vs label {}", gt.values.len())));
    }
    Ok(silog_region(tape, pred, 0, 1.0, &gt.values, lambda)?.0)
}

/// `x / (x + y + ε)` for scalar losses.
pub fn silog_norm(tape: &mut Tape, x: Var, y: Var, eps: f64) -> Result<Var> {
    let s = tape.add(x, y)?;
    let s = tape.add_scalar(s, eps);
    tape.div(x, s)
}

/// Squared difference of the two normalized losses.
pub fn consistency(tape: &mut Tape, l_gt: Var, l_dense: Var, eps: f64) -> Result<Var> {
    let a = silog_norm(tape, l_gt, l_dense, eps)?;
    let b = silog_norm(tape, l_dense, l_gt, eps)?;
    let d = tape.sub(a, b)?;
    Ok(tape.square(d))
}

/// Labels for one sample, in the acquisition camera.
#[derive(Debug, Clone, Copy)]
pub struct Targets<'a> {
    pub f_gt: f64,
    pub sparse: &'a DepthMap,
    pub dense: Option<&'a DepthMap>,
}

/// Composite loss for image `index` of a batched canonical-space prediction
/// `pred_mc` (`[N, 1, H, W]`, or any tensor of `N·H·W` values).
///
/// The prediction is first recovered into the acquisition camera,
/// `D_rc = (f_gt/f_mc)·D_mc`, and labels are capped before use.
pub fn final_loss(
    tape: &mut Tape,
    pred_mc: Var,
    index: usize,
    space: &CanonicalSpace,
    targets: Targets<'_>,
    w: &WeightVars,
    cfg: &LossConfig,
) -> Result<(Var, LossReport)> {
    let len = targets.sparse.values.len();
    if let Some(d) = targets.dense {
        if !d.same_shape(targets.sparse) {
            return Err(Error::shape("final_loss", "sparse and dense labels differ in size"));
        }
    }
    let factor = space.factor_from(targets.f_gt)?;
    let sparse = targets.sparse.capped(cfg.sparse_cap);
    let (l_sp, n_sp) = silog_region(tape, pred_mc, index * len, factor, &sparse.values, w.lambda)?;
    let mut total = tape.mul(w.alpha, l_sp)?;
    let mut report = LossReport {
        l_silog_sparse: tape.scalar(l_sp),
        l_silog_dense: None,
        l_con: None,
        l_final: 0.0,
        n_valid_sparse: n_sp,
        n_valid_dense: 0,
        alpha: tape.scalar(w.alpha),
        beta: tape.scalar(w.beta),
        gamma: tape.scalar(w.gamma),
    };
    if let (Some(dense), LossMode::Consistency) = (targets.dense, cfg.mode) {
        let dense = dense.capped(cfg.dense_cap);
        let (l_de, n_de) = silog_region(tape, pred_mc, index * len, factor, &dense.values, w.lambda)?;
        let l_con = consistency(tape, l_sp, l_de, w.epsilon)?;
        let bd = tape.mul(w.beta, l_de)?;
        let gc = tape.mul(w.gamma, l_con)?;
        total = tape.add(total, bd)?;
        total = tape.add(total, gc)?;
        report.l_silog_dense = Some(tape.scalar(l_de));
        report.l_con = Some(tape.scalar(l_con));
        report.n_valid_dense = n_de;
    }
    report.l_final = tape.scalar(total);
    Ok((total, report))
}

/// Finite-difference check of the full weighted loss, with gradients taken
/// into the canonical prediction and into `α`, `β`, `γ` together. Each trial
/// draws a random batch, labels and weights.
pub fn composite_suite(trials: usize, seed: u64) -> Result<SuiteResult> {
    let space = mean_focal(&[45.0, 60.0])?;
    let mut trial = 0;
    run_suite("final_loss", trials, seed, |rng| {
        let (h, w, n) = (3, 4, 2);
        let pred = random_tensor(rng, &[n, 1, h, w], 1.0, 30.0, &[], 0.0);
        let mk = |rng: &mut Stream, density: f64| {
            let v = (0..h * w)
                .map(|_| if rng.uniform() < density { rng.range(1.0, 40.0) } else { 0.0 })
                .collect();
            DepthMap::from_values(w, h, DepthKind::Sparse, v)
        };
        let mut sparse = mk(rng, 0.5)?;
        sparse.values[0] = 5.0;
        let dense = mk(rng, 0.95)?;
        let weights = Tensor::new(vec![3], vec![rng.range(0.1, 2.0), rng.range(0.1, 2.0), rng.range(0.1, 1.0)])?;
        let f_gt = rng.range(40.0, 70.0);
        let index = trial % n;
        trial += 1;
        check(&[pred, weights], DEFAULT_EPS, DEFAULT_FLOOR, |t, v| {
            let mut wv = Vec::new();
            for i in 0..3 {
                let m: Vec<bool> = (0..3).map(|j| j == i).collect();
                let s = t.masked_select(v[1], &m)?;
                wv.push(t.reshape(s, vec![])?);
            }
            let vars = WeightVars {
                alpha: wv[0],
                beta: wv[1],
                gamma: wv[2],
                lambda: DEFAULT_LAMBDA,
                epsilon: NORM_EPS,
            };
            let targets = Targets {
                f_gt,
                sparse: &sparse,
                dense: Some(&dense),
            };
            let (l, _) = final_loss(t, v[0], index, &space, targets, &vars, &LossConfig::default())?;
            Ok(l)
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(values: Vec<f64>, kind: DepthKind) -> DepthMap {
        let n = values.len();
        DepthMap::from_values(n, 1, kind, values).unwrap()
    }

    fn silog_value(pred: &[f64], gt: &[f64], lambda: f64) -> Result<f64> {
        let mut t = Tape::new();
        let p = t.constant(Tensor::new(vec![pred.len()], pred.to_vec()).unwrap());
        let l = silog(&mut t, p, &map(gt.to_vec(), DepthKind::Sparse), lambda)?;
        Ok(t.scalar(l))
    }

    fn scalar_pair(a: f64, b: f64, f: fn(&mut Tape, Var, Var, f64) -> Result<Var>) -> f64 {
        let mut t = Tape::new();
        let (x, y) = (t.leaf(Tensor::scalar(a)), t.leaf(Tensor::scalar(b)));
        let r = f(&mut t, x, y, NORM_EPS).unwrap();
        t.scalar(r)
    }

    #[test]
    fn silog_worked_values() {
        assert_eq!(silog_value(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0], 0.3).unwrap(), 0.0);
        let e = std::f64::consts::E;
        assert!((silog_value(&[e * 3.0], &[3.0], 0.3).unwrap() - 0.35).abs() < 1e-12);
        let two = silog_value(&[2.0, 6.0], &[1.0, 3.0], 0.3).unwrap();
        let ln2 = std::f64::consts::LN_2;
        assert!((two - 0.35 * ln2 * ln2).abs() < 1e-12);
        assert!((two - 0.168159).abs() < 1e-6);
    }

    #[test]
    fn silog_masks_invalid_and_reports_empty_overlap() {
        // Zero labels are ignored entirely.
        let a = silog_value(&[2.0, 5.0, 7.0], &[1.0, 0.0, 0.0], 0.3).unwrap();
        let b = silog_value(&[2.0], &[1.0], 0.3).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            silog_value(&[1.0, 2.0], &[0.0, 0.0], 0.3),
            Err(Error::EmptyOverlap(_))
        ));
        assert!(matches!(silog_value(&[1.0], &[1.0, 2.0], 0.3), Err(Error::Shape { .. })));
    }

    #[test]
    fn norm_and_consistency_worked_values() {
        assert!((scalar_pair(1.0, 1.0, silog_norm) - 0.5).abs() < 5e-7);
        assert_eq!(scalar_pair(0.0, 0.0, silog_norm), 0.0);
        let v = scalar_pair(3.0, 1.0, silog_norm);
        assert!((v - 3.0 / (4.0 + 1e-6)).abs() < 1e-15);
        assert!(v < 0.75 && v > 0.7499998);
        assert!(scalar_pair(2.5, 2.5, consistency).abs() < 1e-12);
        assert!((scalar_pair(3.0, 1.0, consistency) - 0.25).abs() < 1e-6);
    }

    #[test]
    fn sparse_only_final_is_alpha_times_silog() {
        let e = std::f64::consts::E;
        let space = mean_focal(&[50.0]).unwrap();
        let sparse = map(vec![4.0, 0.0], DepthKind::Sparse);
        let mut t = Tape::new();
        let p = t.leaf(Tensor::new(vec![2], vec![4.0 * e, 1.0]).unwrap());
        let weights = LossWeights::default();
        let w = weights.bind(&mut t, false);
        let targets = Targets {
            f_gt: 50.0,
            sparse: &sparse,
            dense: None,
        };
        let (l, rep) = final_loss(&mut t, p, 0, &space, targets, &w, &LossConfig::default()).unwrap();
        assert!((t.scalar(l) - 0.42).abs() < 1e-12);
        assert_eq!(rep.l_silog_dense, None);
        assert_eq!(rep.n_valid_sparse, 1);
    }

    #[test]
    fn dense_sample_at_truth_is_zero() {
        let space = mean_focal(&[40.0, 60.0]).unwrap();
        let gt = [3.0, 5.0, 9.0, 12.0];
        // The label is in a camera with f=60, so the canonical prediction is gt·50/60.
        let pred: Vec<f64> = gt.iter().map(|d| d * 50.0 / 60.0).collect();
        let sparse = map(vec![3.0, 0.0, 9.0, 0.0], DepthKind::Sparse);
        let dense = map(gt.to_vec(), DepthKind::Dense);
        let mut t = Tape::new();
        let p = t.leaf(Tensor::new(vec![4], pred).unwrap());
        let weights = LossWeights::default();
        let w = weights.bind(&mut t, false);
        let targets = Targets {
            f_gt: 60.0,
            sparse: &sparse,
            dense: Some(&dense),
        };
        let (l, rep) = final_loss(&mut t, p, 0, &space, targets, &w, &LossConfig::default()).unwrap();
        assert!(t.scalar(l).abs() < 1e-12);
        assert!(rep.l_silog_sparse.abs() < 1e-12);
        assert!(rep.l_silog_dense.unwrap().abs() < 1e-12);
        assert!(rep.l_con.unwrap().abs() < 1e-12);
        assert_eq!((rep.n_valid_sparse, rep.n_valid_dense), (2, 4));
    }

    #[test]
    fn caps_apply_before_loss() {
        let space = mean_focal(&[50.0]).unwrap();
        let sparse = map(vec![10.0, 90.0], DepthKind::Sparse);
        let mut t = Tape::new();
        let p = t.leaf(Tensor::new(vec![2], vec![10.0, 1.0]).unwrap());
        let weights = LossWeights::default();
        let w = weights.bind(&mut t, false);
        let targets = Targets {
            f_gt: 50.0,
            sparse: &sparse,
            dense: None,
        };
        let (_, rep) = final_loss(&mut t, p, 0, &space, targets, &w, &LossConfig::default()).unwrap();
        assert_eq!(rep.n_valid_sparse, 1);
        assert_eq!(rep.l_silog_sparse, 0.0);
    }

    #[test]
    fn sparse_mode_ignores_dense() {
        let space = mean_focal(&[50.0]).unwrap();
        let sparse = map(vec![2.0, 0.0], DepthKind::Sparse);
        let dense = map(vec![2.0, 8.0], DepthKind::Dense);
        let mut t = Tape::new();
        let p = t.leaf(Tensor::new(vec![2], vec![3.0, 3.0]).unwrap());
        let weights = LossWeights::default();
        let w = weights.bind(&mut t, false);
        let cfg = LossConfig {
            mode: LossMode::SparseSilog,
            ..LossConfig::default()
        };
        let targets = Targets {
            f_gt: 50.0,
            sparse: &sparse,
            dense: Some(&dense),
        };
        let (_, rep) = final_loss(&mut t, p, 0, &space, targets, &w, &cfg).unwrap();
        assert_eq!(rep.l_silog_dense, None);
        assert_eq!(rep.l_final, rep.recompose());
    }

    #[test]
    fn composite_gradient_matches_finite_differences() {
        let r = composite_suite(10, 77).unwrap();
        assert!(r.passed(1e-5), "{r:?}");
    }

    proptest! {
        #[test]
        fn silog_nonnegative_and_scale_rules(
            pairs in prop::collection::vec((0.5f64..60.0, 0.5f64..60.0), 1..40),
            lambda in 0.0f64..=1.0,
            c in prop::sample::select(vec![0.5, 2.0, 10.0]),
        ) {
            let (pred, gt): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let base = silog_value(&pred, &gt, lambda).unwrap();
            prop_assert!(base >= -1e-12);

            // λ = 1: scaling the prediction leaves the loss unchanged.
            let scaled: Vec<f64> = pred.iter().map(|p| p * c).collect();
            let l1 = silog_value(&pred, &gt, 1.0).unwrap();
            prop_assert!((silog_value(&scaled, &gt, 1.0).unwrap() - l1).abs() < 1e-9);

            // General λ: L(e + k) − L(e) = (1 − λ)(k·Σe/N + k²/2), k = ln c.
            let n = pred.len() as f64;
            let k = c.ln();
            let se: f64 = pred.iter().zip(&gt).map(|(p, g)| p.ln() - g.ln()).sum();
            let shifted = silog_value(&scaled, &gt, lambda).unwrap();
            let expected = (1.0 - lambda) * (k * se / n + k * k / 2.0);
            prop_assert!((shifted - base - expected).abs() < 1e-9);
        }

        #[test]
        fn consistency_symmetric_bounded(a in 0.0f64..10.0, b in 0.0f64..10.0) {
            let ab = scalar_pair(a, b, consistency);
            let ba = scalar_pair(b, a, consistency);
            prop_assert!((ab - ba).abs() < 1e-15);
            prop_assert!((0.0..1.0).contains(&ab));
        }

        #[test]
        fn weight_clamps(a in -5.0f64..5.0, b in -5.0f64..5.0, g in -5.0f64..5.0) {
            let mut w = LossWeights { alpha: a, beta: b, gamma: g, ..LossWeights::default() };
            w.clamp();
            prop_assert!(w.within_bounds());
        }
    }
}
