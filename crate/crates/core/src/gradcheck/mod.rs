//! Central-difference gradient checks against the tape.

mod suites;
pub use suites::{run_suite, SuiteCase, COMPONENT_TOLERANCE, END_TO_END_TOLERANCE, MODULES};

use std::fmt;

use crate::error::Result;
use crate::tensor::{BoundParams, ParamSet, Tape, Var};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Denominator floor so near-zero gradients are compared absolutely.
    pub floor: f64,
    /// Check at most this many evenly spaced elements per tensor.
    pub max_per_tensor: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-6,
            floor: 1e-3,
            max_per_tensor: None,
        }
    }
}

/// `|a - n| / max(|a|, |n|, floor)`
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    /// Element index, analytic and numeric value at the worst element.
    pub worst: (usize, f64, f64),
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.tensors.iter().map(|t| t.checked).sum()
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.tensors {
            let (i, a, n) = t.worst;
            writeln!(
                f,
                "{:<28} checked {:>5}  max rel err {:.3e}  (at {i}: analytic {a:.6e}, numeric {n:.6e})",
                t.name, t.checked, t.max_rel_error
            )?;
        }
        write!(f, "overall max rel err {:.3e} over {} elements", self.max_rel_error(), self.checked())
    }
}

fn sample_indices(n: usize, max: Option<usize>) -> Vec<usize> {
    match max {
        Some(k) if k < n => (0..k).map(|i| i * n / k).collect(),
        _ => (0..n).collect(),
    }
}

/// Compares the tape gradient of `loss` with central differences for every
/// (or a sampled subset of every) tensor in `params`.
pub fn check_gradients<F>(params: &ParamSet, mut loss: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &BoundParams) -> Result<Var>,
{
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let l = loss(&mut tape, &bound)?;
    let grads = tape.backward(l)?;
    let mut analytic = params.zeros_like();
    bound.accumulate_grads(&grads, &mut analytic);

    let mut eval = |p: &ParamSet| -> Result<f64> {
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let l = loss(&mut tape, &bound)?;
        Ok(tape.value(l).item().unwrap_or(f64::NAN))
    };

    let mut work = params.clone();
    let mut report = GradCheckReport::default();
    for (k, (name, t)) in params.iter().enumerate() {
        let id = params.id(name).expect("own name");
        let mut check = TensorCheck {
            name: name.to_string(),
            checked: 0,
            max_rel_error: 0.0,
            worst: (0, 0.0, 0.0),
        };
        for i in sample_indices(t.numel(), opts.max_per_tensor) {
            let x0 = t.data()[i];
            work.tensor_mut(id).data_mut()[i] = x0 + opts.step;
            let plus = eval(&work)?;
            work.tensor_mut(id).data_mut()[i] = x0 - opts.step;
            let minus = eval(&work)?;
            work.tensor_mut(id).data_mut()[i] = x0;
            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = analytic[k].data()[i];
            let err = relative_error(a, numeric, opts.floor);
            check.checked += 1;
            if err > check.max_rel_error || err.is_nan() {
                check.max_rel_error = if err.is_nan() { f64::INFINITY } else { err };
                check.worst = (i, a, numeric);
            }
        }
        report.tensors.push(check);
    }
    Ok(report)
}
