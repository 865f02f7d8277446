//! Central finite-difference gradient checks.
//!
//! The numeric side only ever evaluates the forward function, so it stays
//! independent of the backward rules it is used to check.

use alloc::vec::Vec;

use crate::params::ParamStore;
use crate::tensor::{Matrix, Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// (input index, element index) of the worst relative error.
    pub worst: (usize, usize),
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, rel_tol: f64) -> bool {
        self.max_rel_error < rel_tol
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / scale
}

pub fn compare(analytic: &[Vec<f64>], numeric: &[Vec<f64>], floor: f64) -> GradCheckReport {
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        assert_eq!(a.len(), n.len(), "gradient lengths differ for input {i}");
        for (j, (&x, &y)) in a.iter().zip(n).enumerate() {
            let rel = relative_error(x, y, floor);
            if rel > report.max_rel_error || rel.is_nan() {
                report.max_rel_error = rel;
                report.worst = (i, j);
            }
            report.max_abs_error = report.max_abs_error.max((x - y).abs());
            report.checked += 1;
        }
    }
    report
}

/// Central differences of a scalar function of a parameter store.
pub fn numeric_gradient(
    params: &ParamStore,
    h: f64,
    mut f: impl FnMut(&ParamStore) -> f64,
) -> Vec<Vec<f64>> {
    let mut work = params.clone();
    let ids: Vec<_> = params.ids().collect();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let len = params.get(id).len();
        let mut g = Vec::with_capacity(len);
        for j in 0..len {
            let orig = params.get(id).data()[j];
            work.get_mut(id).data_mut()[j] = orig + h;
            let up = f(&work);
            work.get_mut(id).data_mut()[j] = orig - h;
            let down = f(&work);
            work.get_mut(id).data_mut()[j] = orig;
            g.push((up - down) / (2.0 * h));
        }
        out.push(g);
    }
    out
}

/// Checks a tape-built scalar function of the given inputs.
pub fn check_tape_fn(
    inputs: &[Matrix],
    h: f64,
    floor: f64,
    build: impl Fn(&mut Tape, &[Var]) -> Var,
) -> GradCheckReport {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.param(m.clone())).collect();
    let out = build(&mut tape, &vars);
    tape.backward(out).expect("scalar output");
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| match tape.grad(v) {
            Some(g) => g.to_vec(),
            None => alloc::vec![0.0; tape.value(v).len()],
        })
        .collect();

    let eval = |values: &[Matrix]| {
        let mut t = Tape::new();
        let vs: Vec<Var> = values.iter().map(|m| t.constant(m.clone())).collect();
        let o = build(&mut t, &vs);
        t.scalar(o)
    };
    let mut work: Vec<Matrix> = inputs.to_vec();
    let mut numeric = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut g = Vec::with_capacity(inputs[i].len());
        for j in 0..inputs[i].len() {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let up = eval(&work);
            work[i].data_mut()[j] = orig - h;
            let down = eval(&work);
            work[i].data_mut()[j] = orig;
            g.push((up - down) / (2.0 * h));
        }
        numeric.push(g);
    }
    compare(&analytic, &numeric, floor)
}
