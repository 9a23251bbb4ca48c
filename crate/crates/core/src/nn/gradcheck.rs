use super::{PolicyModel, StepLoss};
use rand::seq::SliceRandom;
use rand::Rng;

/// Result of comparing analytic and finite-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Sampled parameters skipped because a ReLU switched inside the stencil.
    pub kinks: usize,
    pub max_rel_error: f64,
    /// Parameter index at which `max_rel_error` occurred.
    pub worst_index: usize,
}

/// Compares the analytic gradient of a minibatch loss (the per-step mean, as
/// minimized by the learner) with five-point central differences of step `h`
/// on `n_checks` randomly chosen parameters.
///
/// The relative error is `|a - n| / max(|a| + |n|, floor)`, where the floor
/// keeps near-zero gradients from dominating. Finite differences are not a
/// valid oracle across a ReLU kink, so a parameter whose stencil changes the
/// set of active units is skipped and another one is drawn in its place.
pub fn gradient_check<R: Rng + ?Sized>(
    model: &PolicyModel,
    batch: &[StepLoss<'_>],
    n_checks: usize,
    h: f64,
    floor: f64,
    rng: &mut R,
) -> GradCheckReport {
    let n = batch.len().max(1) as f64;
    let mut grad = vec![0.0; model.n_params()];
    for loss in batch {
        loss.accumulate(model, &mut grad);
    }
    for g in &mut grad {
        *g /= n;
    }
    let total = |m: &PolicyModel| batch.iter().map(|l| l.evaluate(m).total).sum::<f64>() / n;
    let pattern = |m: &PolicyModel| batch.iter().map(|l| m.forward(l.input).active_units()).collect::<Vec<_>>();
    let base = pattern(model);

    let mut order: Vec<usize> = (0..model.n_params()).collect();
    order.shuffle(rng);
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        checked: 0,
        kinks: 0,
        max_rel_error: 0.0,
        worst_index: 0,
    };
    for i in order {
        if report.checked == n_checks {
            break;
        }
        let orig = probe.params()[i];
        let mut at = |d: f64| {
            probe.params_mut()[i] = orig + d;
            let v = (total(&probe), pattern(&probe) == base);
            probe.params_mut()[i] = orig;
            v
        };
        let (f2, s2) = at(2.0 * h);
        let (f1, s1) = at(h);
        let (b1, t1) = at(-h);
        let (b2, t2) = at(-2.0 * h);
        if !(s1 && s2 && t1 && t2) {
            report.kinks += 1;
            continue;
        }
        let numeric = (8.0 * (f1 - b1) - (f2 - b2)) / (12.0 * h);
        let err = (grad[i] - numeric).abs() / (grad[i].abs() + numeric.abs()).max(floor);
        report.checked += 1;
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_index = i;
        }
    }
    report
}
