//! Central-difference gradient checking.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::{Graph, Var};
use crate::params::{Grads, ParamId, ParamStore};
use crate::NeuralError;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Max over checked scalars of `|a - n| / max(|a|, |n|, 1e-8)`.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameter name and flat index of the worst scalar.
    pub worst: Option<(String, usize)>,
}

/// Compares backprop gradients of `loss` with `(L(p+eps) - L(p-eps)) / 2eps`.
/// Checks every scalar when there are at most `max_checks`, otherwise a
/// seeded random subset of that size.
pub fn grad_check<F>(
    params: &ParamStore,
    loss: F,
    eps: f64,
    max_checks: usize,
    seed: u64,
) -> Result<GradCheckReport, NeuralError>
where
    F: Fn(&mut Graph) -> Result<Var, NeuralError>,
{
    let eval = |p: &ParamStore| -> Result<f64, NeuralError> {
        let mut g = Graph::new(p);
        let l = loss(&mut g)?;
        g.check_finite()?;
        Ok(g.value(l).get(0, 0))
    };
    let mut grads = Grads::zeros_like(params);
    {
        let mut g = Graph::new(params);
        let l = loss(&mut g)?;
        g.check_finite()?;
        g.backward(l, 1.0, &mut grads);
    }
    let coords: Vec<(ParamId, usize)> = params
        .iter()
        .flat_map(|(id, _, m)| (0..m.len()).map(move |i| (id, i)))
        .collect();
    let picked: Vec<usize> = if coords.len() <= max_checks {
        (0..coords.len()).collect()
    } else {
        let mut idx = sample(&mut ChaCha8Rng::seed_from_u64(seed), coords.len(), max_checks).into_vec();
        idx.sort_unstable();
        idx
    };
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: None,
    };
    for k in picked {
        let (id, i) = coords[k];
        let orig = work.get(id).data()[i];
        work.get_mut(id).data_mut()[i] = orig + eps;
        let up = eval(&work)?;
        work.get_mut(id).data_mut()[i] = orig - eps;
        let down = eval(&work)?;
        work.get_mut(id).data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let analytic = grads.get(id).data()[i];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        report.checked += 1;
        if rel > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(rel);
            report.worst = Some((params.name(id).to_string(), i));
        }
    }
    Ok(report)
}
