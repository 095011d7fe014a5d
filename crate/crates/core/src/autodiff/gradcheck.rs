//! Central finite-difference checks against [`Tape::backward`].

use super::{Tape, Tensor, Var};
use crate::error::Result;
use crate::rng::Stream;

pub const DEFAULT_EPS: f64 = 1e-5;

/// Denominator floor for the relative error, so exact zeros compare sanely.
pub const DEFAULT_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckReport {
    pub max_rel_err: f64,
    /// `(input, element)` of the worst entry.
    pub worst: (usize, usize),
    pub checked: usize,
}

pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares analytic and numeric gradients of the scalar `f(inputs)` with
/// respect to every element of every input.
pub fn check<F>(inputs: &[Tensor], eps: f64, floor: f64, f: F) -> Result<CheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        let y = f(&mut tape, &vars)?;
        Ok(tape.scalar(y))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let y = f(&mut tape, &vars)?;
    let grads = tape.backward(y)?;

    let mut report = CheckReport {
        max_rel_err: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    let mut xs = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.wrt(*v);
        for j in 0..xs[i].numel() {
            let x0 = xs[i].data()[j];
            xs[i].data_mut()[j] = x0 + eps;
            let up = eval(&xs)?;
            xs[i].data_mut()[j] = x0 - eps;
            let down = eval(&xs)?;
            xs[i].data_mut()[j] = x0;
            let numeric = (up - down) / (2.0 * eps);
            let e = rel_err(analytic.data()[j], numeric, floor);
            if e > report.max_rel_err || e.is_nan() {
                report.max_rel_err = e;
                report.worst = (i, j);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

/// Uniform samples in `[lo, hi)` whose distance to every `kink` is at least `margin`.
pub fn random_tensor(rng: &mut Stream, shape: &[usize], lo: f64, hi: f64, kinks: &[f64], margin: f64) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for x in t.data_mut() {
        *x = loop {
            let c = rng.range(lo, hi);
            if kinks.iter().all(|k| (c - k).abs() >= margin) {
                break c;
            }
        };
    }
    t
}

/// Result of one named suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub trials: usize,
    pub max_rel_err: f64,
}

impl SuiteResult {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// Runs `trials` seeded instances of `case`, keeping the worst error.
pub fn run_suite<C>(name: &'static str, trials: usize, seed: u64, mut case: C) -> Result<SuiteResult>
where
    C: FnMut(&mut Stream) -> Result<CheckReport>,
{
    let mut root = Stream::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let mut rng = root.split();
        let r = case(&mut rng)?;
        if r.max_rel_err.is_nan() {
            worst = f64::NAN;
        } else if !worst.is_nan() {
            worst = worst.max(r.max_rel_err);
        }
    }
    Ok(SuiteResult {
        name,
        trials,
        max_rel_err: worst,
    })
}

/// Weighted sum `Σ wᵢ·yᵢ` with fixed random weights, so every output element
/// contributes a distinct amount to the checked scalar.
pub fn project(tape: &mut Tape, y: Var, weights: &Tensor) -> Result<Var> {
    let w = tape.constant(weights.clone());
    let p = tape.mul(y, w)?;
    Ok(tape.sum(p))
}

fn unary_suite(
    name: &'static str,
    trials: usize,
    seed: u64,
    lo: f64,
    hi: f64,
    kinks: &'static [f64],
    op: fn(&mut Tape, Var) -> Result<Var>,
) -> Result<SuiteResult> {
    run_suite(name, trials, seed, |rng| {
        let shape = [2 + rng.below(3), 1 + rng.below(4)];
        let x = random_tensor(rng, &shape, lo, hi, kinks, 1e-3);
        let w = random_tensor(rng, &shape, -1.0, 1.0, &[], 0.0);
        check(&[x], DEFAULT_EPS, DEFAULT_FLOOR, |t, v| {
            let y = op(t, v[0])?;
            project(t, y, &w)
        })
    })
}

fn binary_suite(
    name: &'static str,
    trials: usize,
    seed: u64,
    op: fn(&mut Tape, Var, Var) -> Result<Var>,
) -> Result<SuiteResult> {
    run_suite(name, trials, seed, |rng| {
        let shape = [2 + rng.below(3), 1 + rng.below(4)];
        let a = random_tensor(rng, &shape, -2.0, 2.0, &[], 0.0);
        // Operand b stays away from zero so division is well conditioned;
        // every third trial broadcasts a scalar b.
        let b_shape: &[usize] = if rng.below(3) == 0 { &[] } else { &shape };
        let sign = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
        let mut b = random_tensor(rng, b_shape, 0.5, 2.0, &[], 0.0);
        b.data_mut().iter_mut().for_each(|x| *x *= sign);
        let w = random_tensor(rng, &shape, -1.0, 1.0, &[], 0.0);
        check(&[a, b], DEFAULT_EPS, DEFAULT_FLOOR, |t, v| {
            let y = op(t, v[0], v[1])?;
            project(t, y, &w)
        })
    })
}

fn conv_case(rng: &mut Stream, n: usize, c: usize, h: usize, w: usize) -> Result<CheckReport> {
    let o = 1 + rng.below(3);
    let k = [1, 3][rng.below(2)];
    let stride = 1 + rng.below(2);
    let padding = rng.below(2).min(k / 2 + 1);
    let with_bias = rng.uniform() < 0.5;
    let x = random_tensor(rng, &[n, c, h, w], -1.0, 1.0, &[], 0.0);
    let wt = random_tensor(rng, &[o, c, k, k], -1.0, 1.0, &[], 0.0);
    let b = random_tensor(rng, &[o], -1.0, 1.0, &[], 0.0);
    let ho = (h + 2 * padding - k) / stride + 1;
    let wo = (w + 2 * padding - k) / stride + 1;
    let proj = random_tensor(rng, &[n, o, ho, wo], -1.0, 1.0, &[], 0.0);
    check(&[x, wt, b], DEFAULT_EPS, DEFAULT_FLOOR, |t, v| {
        let y = t.conv2d(v[0], v[1], with_bias.then_some(v[2]), stride, padding)?;
        project(t, y, &proj)
    })
}

/// Finite-difference suites for every tape primitive, `trials` seeded instances each.
pub fn primitive_suites(trials: usize, seed: u64) -> Result<Vec<SuiteResult>> {
    let s = |k: u64| crate::rng::mix64(seed ^ k);
    let mut out = vec![
        binary_suite("add", trials, s(1), |t, a, b| t.add(a, b))?,
        binary_suite("sub", trials, s(2), |t, a, b| t.sub(a, b))?,
        binary_suite("mul", trials, s(3), |t, a, b| t.mul(a, b))?,
        binary_suite("div", trials, s(4), |t, a, b| t.div(a, b))?,
        unary_suite("scale", trials, s(5), -2.0, 2.0, &[], |t, a| Ok(t.scale(a, -1.7)))?,
        unary_suite("add_scalar", trials, s(6), -2.0, 2.0, &[], |t, a| Ok(t.add_scalar(a, 0.3)))?,
        unary_suite("log", trials, s(7), 0.2, 5.0, &[], |t, a| t.log(a))?,
        unary_suite("exp", trials, s(8), -2.0, 2.0, &[], |t, a| Ok(t.exp(a)))?,
        unary_suite("square", trials, s(9), -2.0, 2.0, &[], |t, a| Ok(t.square(a)))?,
        unary_suite("sum", trials, s(10), -2.0, 2.0, &[], |t, a| {
            let y = t.sum(a);
            Ok(t.square(y))
        })?,
        unary_suite("mean", trials, s(11), -2.0, 2.0, &[], |t, a| {
            let y = t.mean(a)?;
            Ok(t.square(y))
        })?,
        unary_suite("clamp", trials, s(12), -2.0, 2.0, &[-0.5, 0.8], |t, a| Ok(t.clamp(a, -0.5, 0.8)))?,
        unary_suite("relu", trials, s(13), -2.0, 2.0, &[0.0], |t, a| Ok(t.relu(a)))?,
        unary_suite("softplus", trials, s(14), -6.0, 6.0, &[], |t, a| Ok(t.softplus(a)))?,
        unary_suite("reshape", trials, s(15), -2.0, 2.0, &[], |t, a| {
            let shape = t.value(a).shape().to_vec();
            let y = t.reshape(a, vec![shape.iter().product()])?;
            let y = t.square(y);
            t.reshape(y, shape)
        })?,
        run_suite("upsample2x", trials, s(16), |rng| {
            let (n, c, h, w) = (1 + rng.below(2), 1 + rng.below(2), 1 + rng.below(3), 1 + rng.below(3));
            let x = random_tensor(rng, &[n, c, h, w], -1.0, 1.0, &[], 0.0);
            let proj = random_tensor(rng, &[n, c, 2 * h, 2 * w], -1.0, 1.0, &[], 0.0);
            check(&[x], DEFAULT_EPS, DEFAULT_FLOOR, |t, v| {
                let y = t.upsample2x(v[0])?;
                project(t, y, &proj)
            })
        })?,
        run_suite("masked_select", trials, s(17), |rng| {
            let x = random_tensor(rng, &[3, 4], -2.0, 2.0, &[], 0.0);
            let mask: Vec<bool> = (0..12).map(|i| i == 0 || rng.uniform() < 0.5).collect();
            let kept = mask.iter().filter(|m| **m).count();
            let proj = random_tensor(rng, &[kept], -1.0, 1.0, &[], 0.0);
            check(&[x], DEFAULT_EPS, DEFAULT_FLOOR, |t, v| {
                let y = t.masked_select(v[0], &mask)?;
                let y = t.square(y);
                project(t, y, &proj)
            })
        })?,
    ];
    out.push(run_suite("conv2d", trials, s(18), |rng| conv_case(rng, 1, 3, 5, 5))?);
    out.push(run_suite("conv2d_batched", trials / 4 + 1, s(19), |rng| {
        let (h, w) = (3 + rng.below(4), 3 + rng.below(4));
        conv_case(rng, 2, 2, h, w)
    })?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rel_err_uses_floor() {
        assert_eq!(rel_err(0.0, 0.0, DEFAULT_FLOOR), 0.0);
        assert!((rel_err(1e-9, 0.0, DEFAULT_FLOOR) - 1e-5).abs() < 1e-18);
        assert!((rel_err(2.0, 1.0, DEFAULT_FLOOR) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // The analytic side sees d/dx x² = 2x; the function evaluated for the
        // numeric side is x²+x, so the check must report a large error.
        use std::cell::Cell;
        let calls = Cell::new(0);
        let x = Tensor::new(vec![1], vec![1.5]).unwrap();
        let r = check(&[x], DEFAULT_EPS, DEFAULT_FLOOR, |t, v| {
            calls.set(calls.get() + 1);
            let s = t.square(v[0]);
            let y = if calls.get() == 1 { s } else { t.add(s, v[0])? };
            Ok(t.sum(y))
        })
        .unwrap();
        assert!(r.max_rel_err > 0.1);
    }

    #[test]
    fn conv_single_instance_tight() {
        let mut rng = Stream::new(7);
        let x = random_tensor(&mut rng, &[1, 3, 5, 5], -1.0, 1.0, &[], 0.0);
        let w = random_tensor(&mut rng, &[2, 3, 3, 3], -1.0, 1.0, &[], 0.0);
        let proj = random_tensor(&mut rng, &[1, 2, 5, 5], -1.0, 1.0, &[], 0.0);
        let r = check(&[x, w], DEFAULT_EPS, DEFAULT_FLOOR, |t, v| {
            let y = t.conv2d(v[0], v[1], None, 1, 1)?;
            project(t, y, &proj)
        })
        .unwrap();
        assert!(r.max_rel_err < 1e-6, "{r:?}");
        assert_eq!(r.checked, 75 + 54);
    }

    #[test]
    fn all_primitives_pass() {
        let suites = primitive_suites(10, 42);
        let suites = suites.unwrap_or_else(|e| panic!("{e}"));
        for s in suites {
            assert!(s.passed(1e-5), "{s:?}");
        }
    }
}
