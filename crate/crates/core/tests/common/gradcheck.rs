//! Central finite-difference oracle for tape gradients.
//!
//! Everything here re-evaluates the forward closure on perturbed copies of
//! the inputs; it never looks at backward rules.

#![allow(dead_code)]

use icfinv_core::tensor::{Tape, Tensor, Var};
use icfinv_core::Result;

pub const STEP: f64 = 1e-4;

/// Forward closure: builds a scalar loss from leaves created for `inputs`.
pub type Loss<'a> = dyn Fn(&mut Tape, &[Var]) -> Result<Var> + 'a;

pub fn eval(f: &Loss, inputs: &[Tensor]) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone()).unwrap())
        .collect();
    let loss = f(&mut tape, &vars).unwrap();
    tape.value(loss).item()
}

pub fn analytic(f: &Loss, inputs: &[Tensor]) -> Vec<Vec<f64>> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone()).unwrap())
        .collect();
    let loss = f(&mut tape, &vars).unwrap();
    tape.backward(loss).unwrap();
    vars.iter()
        .zip(inputs)
        .map(|(&v, t)| {
            tape.grad(v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; t.len()])
        })
        .collect()
}

/// Coordinate-wise central differences for every input entry.
pub fn numeric(f: &Loss, inputs: &[Tensor], h: f64) -> Vec<Vec<f64>> {
    let mut grads = Vec::new();
    for i in 0..inputs.len() {
        let mut g = vec![0.0; inputs[i].len()];
        for (j, gj) in g.iter_mut().enumerate() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= h;
            *gj = (eval(f, &plus) - eval(f, &minus)) / (2.0 * h);
        }
        grads.push(g);
    }
    grads
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// ‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖) over all inputs jointly.
pub fn relative_error(f: &Loss, inputs: &[Tensor], h: f64) -> f64 {
    let a: Vec<f64> = analytic(f, inputs).concat();
    let n: Vec<f64> = numeric(f, inputs, h).concat();
    let diff: Vec<f64> = a.iter().zip(&n).map(|(x, y)| x - y).collect();
    let scale = norm(&a).max(norm(&n)).max(1e-300);
    norm(&diff) / scale
}

/// Directional check for large inputs: compares ⟨∇f, v⟩ with the central
/// difference along unit directions `v` (the normalized analytic gradient
/// plus the supplied random directions). Error is relative to ‖∇f‖.
pub fn directional_error(f: &Loss, inputs: &[Tensor], random_dirs: &[Vec<f64>], h: f64) -> f64 {
    let g: Vec<f64> = analytic(f, inputs).concat();
    let gnorm = norm(&g).max(1e-300);
    let mut dirs: Vec<Vec<f64>> = vec![g.iter().map(|x| x / gnorm).collect()];
    for d in random_dirs {
        let n = norm(d);
        dirs.push(d.iter().map(|x| x / n).collect());
    }
    let mut worst: f64 = 0.0;
    for v in &dirs {
        let shifted = |sign: f64| -> Vec<Tensor> {
            let mut out = inputs.to_vec();
            let mut k = 0;
            for t in &mut out {
                for x in t.data_mut() {
                    *x += sign * h * v[k];
                    k += 1;
                }
            }
            out
        };
        let fd = (eval(f, &shifted(1.0)) - eval(f, &shifted(-1.0))) / (2.0 * h);
        let an: f64 = g.iter().zip(v).map(|(a, b)| a * b).sum();
        worst = worst.max((an - fd).abs() / gnorm);
    }
    worst
}
