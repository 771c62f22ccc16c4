//! Executable property suites: the memory-dynamics guarantees (convergence,
//! stability, order equivalence, simplex preservation) and the gradient
//! checks, bundled so `selftest` can run them in one command.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::losses::{
    ce_grad_logits, gce_grad_logits, sym_kl, symkl_grad_logits,
};
use crate::memory::{weight_schedule, TemporalMemoryStore, ViewTag, NUM_UNITS};
use crate::model::{init_mlp, Architecture, MlpParams};
use crate::prob::{softmax, ProbDist, PROB_FLOOR, SIMPLEX_TOL};
use crate::seeding;

/// Result of one property run.
#[derive(Debug, Clone)]
pub struct PropertyOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl PropertyOutcome {
    fn pass(name: &'static str, detail: String) -> Self {
        Self {
            name,
            passed: true,
            detail,
        }
    }

    fn check(name: &'static str, passed: bool, detail: String) -> Self {
        Self {
            name,
            passed,
            detail,
        }
    }
}

fn random_dist(rng: &mut ChaCha8Rng, k: usize) -> ProbDist {
    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-6).collect();
    ProbDist::normalized(raw).expect("positive mass")
}

/// A store with one tracked sample warmed up from the given four preds.
fn warmed_store(k: usize, warmup: &[ProbDist; 4]) -> TemporalMemoryStore {
    let mut store = TemporalMemoryStore::new(k);
    for t in 1..=4u64 {
        for view in ViewTag::ALL {
            store
                .init_unit(0, view, t, warmup[(t - 1) as usize].values())
                .expect("warm-up write");
        }
        store.advance_epoch(t).expect("warm-up seal");
    }
    store
}

fn feed_constant(store: &mut TemporalMemoryStore, pred: &ProbDist, from: u64, to: u64) {
    for t in from..=to {
        for view in ViewTag::ALL {
            store.slide_update(0, view, t, pred.values()).expect("slide");
        }
        store.advance_epoch(t).expect("seal");
    }
}

fn max_unit_deviation(store: &TemporalMemoryStore, target: &ProbDist) -> f64 {
    let snap = store.snapshot(0).expect("populated");
    ViewTag::ALL
        .iter()
        .flat_map(|&v| snap.view(v).iter())
        .map(|u| u.sup_distance(target))
        .fold(0.0, f64::max)
}

/// Randomized sliding sequences keep every unit on the simplex.
///
/// Cycles K through {2, 10, 100}; most sequences run a few hundred epochs
/// and every 50th runs to `long_run_epochs` (10,000 at acceptance scale).
pub fn simplex_preservation(sequences: usize, long_run_epochs: u64) -> PropertyOutcome {
    let ks = [2usize, 10, 100];
    let mut worst_drift = 0.0f64;
    let mut deepest = 0u64;
    for s in 0..sequences {
        let k = ks[s % ks.len()];
        let mut rng = seeding::stream(0x51, &[s as u64]);
        let horizon = if s % 50 == 0 && k < 100 {
            long_run_epochs
        } else {
            100 + (rng.random::<u64>() % 1200)
        };
        deepest = deepest.max(horizon);
        let warmup: [ProbDist; 4] = std::array::from_fn(|_| random_dist(&mut rng, k));
        let mut store = warmed_store(k, &warmup);
        for t in 5..=horizon {
            for view in ViewTag::ALL {
                let pred = random_dist(&mut rng, k);
                store
                    .slide_update(0, view, t, pred.values())
                    .expect("slide");
            }
            store.advance_epoch(t).expect("seal");
            let snap = store.snapshot(0).expect("populated");
            for view in ViewTag::ALL {
                for unit in snap.view(view) {
                    if unit.values().iter().any(|&v| v < 0.0) {
                        return PropertyOutcome::check(
                            "simplex_preservation",
                            false,
                            format!("negative entry at sequence {s}, epoch {t}"),
                        );
                    }
                    let drift = (unit.values().iter().sum::<f64>() - 1.0).abs();
                    worst_drift = worst_drift.max(drift);
                }
            }
        }
    }
    PropertyOutcome::check(
        "simplex_preservation",
        worst_drift <= SIMPLEX_TOL,
        format!(
            "{sequences} sequences, K in {{2,10,100}}, t up to {deepest}: worst |sum-1| = {worst_drift:.3e}"
        ),
    )
}

/// The sliding rows use the schedule coefficients and they sum to exactly 1.
pub fn coefficient_identity() -> PropertyOutcome {
    let ts: Vec<u64> = (4..=2000).chain([10_000, 123_456, 1_000_000]).collect();
    for &t in &ts {
        for j in 1..=NUM_UNITS {
            let (alpha, beta) = weight_schedule(t, j).expect("valid schedule input");
            if alpha + beta != 1.0 {
                return PropertyOutcome::check(
                    "coefficient_identity",
                    false,
                    format!("alpha + beta != 1 at t={t}, j={j}"),
                );
            }
            let direct = ((t + 1) as f64 - j as f64) / (t + 1) as f64;
            if (alpha - direct).abs() > 1e-15 || !(alpha >= 0.0 && beta > 0.0) {
                return PropertyOutcome::check(
                    "coefficient_identity",
                    false,
                    format!("row coefficients off at t={t}, j={j}: ({alpha}, {beta})"),
                );
            }
        }
    }
    PropertyOutcome::pass(
        "coefficient_identity",
        format!("{} epochs checked, exact sums, convex rows for t >= 4", ts.len()),
    )
}

/// Measured convergence behavior under constant predictions.
#[derive(Debug, Clone)]
pub struct Theorem1Report {
    /// First epoch where every unit is within 1e-3 sup-norm of the target.
    pub horizon: u64,
    pub initial_deviation: f64,
    pub monotone_from_10: bool,
    pub outcome: PropertyOutcome,
}

/// Theorem 1 (memory convergence): with constant predictions `p*` from
/// epoch 5 and arbitrary valid warm-up units, the max unit deviation is
/// non-increasing and falls below 1e-3 at a finite recorded horizon.
///
/// The long-term unit contracts by `t/(t+1)` per epoch, so its deviation
/// follows `~5*d/(t+1)` from initial deviation `d`: the horizon scales like
/// `5000 * d` epochs, not a small constant.
pub fn theorem1_convergence(seed: u64) -> Theorem1Report {
    let k = 10;
    let mut rng = seeding::stream(0x71, &[seed]);
    let warmup: [ProbDist; 4] = std::array::from_fn(|_| random_dist(&mut rng, k));
    // A realistic converged prediction: confident but not one-hot.
    let mut logits = vec![0.0; k];
    logits[3] = 4.0;
    let target = softmax(&logits).expect("finite logits");

    let mut store = warmed_store(k, &warmup);
    let initial_deviation = max_unit_deviation(&store, &target);
    let cap = 1_000_000u64;
    let mut horizon = 0u64;
    let mut monotone_from_10 = true;
    let mut previous = f64::INFINITY;
    for t in 5..=cap {
        feed_constant(&mut store, &target, t, t);
        let dev = max_unit_deviation(&store, &target);
        if t >= 10 && dev > previous + 1e-15 {
            monotone_from_10 = false;
        }
        previous = dev;
        if dev < 1e-3 {
            horizon = t;
            break;
        }
    }
    let converged = horizon > 0;
    let outcome = PropertyOutcome::check(
        "theorem1_convergence",
        converged && monotone_from_10,
        format!(
            "initial deviation {initial_deviation:.3}, deviation < 1e-3 at epoch {horizon}, \
             monotone from epoch 10: {monotone_from_10}"
        ),
    );
    Theorem1Report {
        horizon,
        initial_deviation,
        monotone_from_10,
        outcome,
    }
}

/// Theorem 2 (containment): units inside an eps-ball around `p*` stay
/// inside it under eps-bounded prediction streams, to within 1e-12.
pub fn theorem2_containment(seed: u64) -> PropertyOutcome {
    let k = 10;
    let mut worst_excess = f64::NEG_INFINITY;
    for (case, &eps) in [0.05f64, 0.01].iter().enumerate() {
        let mut rng = seeding::stream(0x72, &[seed, case as u64]);
        let target = random_dist(&mut rng, k);
        // Warm-up units and every prediction: convex mixes within the ball.
        let bounded = |rng: &mut ChaCha8Rng| -> ProbDist {
            let other = random_dist(rng, k);
            let mix: Vec<f64> = target
                .values()
                .iter()
                .zip(other.values())
                .map(|(&t, &o)| (1.0 - eps) * t + eps * o)
                .collect();
            ProbDist::new(mix).expect("convex mix is valid")
        };
        let warmup: [ProbDist; 4] = std::array::from_fn(|_| bounded(&mut rng));
        let mut store = warmed_store(k, &warmup);
        for t in 5..=500u64 {
            for view in ViewTag::ALL {
                let pred = bounded(&mut rng);
                store.slide_update(0, view, t, pred.values()).expect("slide");
            }
            store.advance_epoch(t).expect("seal");
            let dev = max_unit_deviation(&store, &target);
            worst_excess = worst_excess.max(dev - eps);
            if dev > eps + 1e-12 {
                return PropertyOutcome::check(
                    "theorem2_containment",
                    false,
                    format!("deviation {dev} left the {eps}-ball at epoch {t}"),
                );
            }
        }
    }
    PropertyOutcome::pass(
        "theorem2_containment",
        format!("500 epochs x eps in {{0.05, 0.01}}: worst deviation-minus-eps = {worst_excess:.3e}"),
    )
}

/// Perturbation decay: after a one-shot prediction perturbation at epoch T
/// (units previously at `p*`), the immediate unit's deviation at epoch 2T is
/// at most half its size at T.
pub fn perturbation_decay(seed: u64) -> PropertyOutcome {
    let k = 10;
    let mut details = Vec::new();
    for (case, &big_t) in [10u64, 15, 30].iter().enumerate() {
        let mut rng = seeding::stream(0x73, &[seed, case as u64]);
        let target = random_dist(&mut rng, k);
        let warmup: [ProbDist; 4] = std::array::from_fn(|_| target.clone());
        let mut store = warmed_store(k, &warmup);
        feed_constant(&mut store, &target, 5, big_t - 1);

        // The perturbing prediction at sup distance 0.4 from the target.
        let other = random_dist(&mut rng, k);
        let lambda = 0.4 / target.sup_distance(&other).max(1e-9);
        let lambda = lambda.min(1.0);
        let perturbed: Vec<f64> = target
            .values()
            .iter()
            .zip(other.values())
            .map(|(&t, &o)| (1.0 - lambda) * t + lambda * o)
            .collect();
        let perturbed = ProbDist::new(perturbed).expect("convex mix");
        for view in ViewTag::ALL {
            store
                .slide_update(0, view, big_t, perturbed.values())
                .expect("slide");
        }
        store.advance_epoch(big_t).expect("seal");
        let unit4_dev = |store: &TemporalMemoryStore| -> f64 {
            let snap = store.snapshot(0).expect("populated");
            ViewTag::ALL
                .iter()
                .map(|&v| snap.view(v)[NUM_UNITS - 1].sup_distance(&target))
                .fold(0.0, f64::max)
        };
        let at_t = unit4_dev(&store);
        feed_constant(&mut store, &target, big_t + 1, 2 * big_t);
        let at_2t = unit4_dev(&store);
        if at_2t > 0.5 * at_t {
            return PropertyOutcome::check(
                "perturbation_decay",
                false,
                format!("T={big_t}: deviation {at_t:.4} only decayed to {at_2t:.4} by 2T"),
            );
        }
        details.push(format!("T={big_t}: {at_t:.4} -> {at_2t:.5}"));
    }
    PropertyOutcome::pass("perturbation_decay", details.join("; "))
}

/// The in-place ascending update equals a double-buffered reference that
/// reads all right-hand sides from a frozen previous-epoch snapshot.
pub fn order_equivalence(cases: usize) -> PropertyOutcome {
    for case in 0..cases {
        let mut rng = seeding::stream(0x74, &[case as u64]);
        let k = [2usize, 10][case % 2];
        let warmup: [ProbDist; 4] = std::array::from_fn(|_| random_dist(&mut rng, k));
        let mut store = warmed_store(k, &warmup);
        // Advance a random distance into the sliding phase.
        let depth = 5 + (rng.random::<u64>() % 200);
        for t in 5..depth {
            for view in ViewTag::ALL {
                let pred = random_dist(&mut rng, k);
                store.slide_update(0, view, t, pred.values()).expect("slide");
            }
            store.advance_epoch(t).expect("seal");
        }
        let pred = random_dist(&mut rng, k);
        let before = store.snapshot(0).expect("populated");
        for view in ViewTag::ALL {
            store.slide_update(0, view, depth, pred.values()).expect("slide");
        }
        store.advance_epoch(depth).expect("seal");
        let after = store.snapshot(0).expect("populated");

        // Double-buffered reference from the frozen snapshot.
        for view in ViewTag::ALL {
            let old = before.view(view);
            for j in 1..=NUM_UNITS {
                let (alpha, beta) = weight_schedule(depth, j).expect("valid");
                let incoming: &[f64] = if j < NUM_UNITS {
                    old[j].values()
                } else {
                    pred.values()
                };
                let expected: Vec<f64> = old[j - 1]
                    .values()
                    .iter()
                    .zip(incoming)
                    .map(|(&own, &inc)| alpha * own + beta * inc)
                    .collect();
                let mut expected = ProbDist::from_raw_unchecked(expected);
                expected.renormalize_if_drifted();
                if expected.values() != after.view(view)[j - 1].values() {
                    return PropertyOutcome::check(
                        "order_equivalence",
                        false,
                        format!("case {case}: unit {j} differs from the double-buffer reference"),
                    );
                }
            }
        }
    }
    PropertyOutcome::pass(
        "order_equivalence",
        format!("{cases} randomized steps identical to the double-buffered reference"),
    )
}

fn rel_err(got: &[f64], expect: &[f64]) -> f64 {
    let diff: f64 = got
        .iter()
        .zip(expect)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = expect.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / norm.max(1e-8)
}

fn central_diff(f: &dyn Fn(&[f64]) -> f64, at: &[f64], h: f64) -> Vec<f64> {
    (0..at.len())
        .map(|i| {
            let mut plus = at.to_vec();
            let mut minus = at.to_vec();
            plus[i] += h;
            minus[i] -= h;
            (f(&plus) - f(&minus)) / (2.0 * h)
        })
        .collect()
}

fn flatten_params(params: &MlpParams) -> Vec<f64> {
    params
        .layers()
        .iter()
        .flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied())
        .collect()
}

fn with_params(reference: &MlpParams, flat: &[f64]) -> MlpParams {
    let mut out = reference.clone();
    let mut cursor = 0;
    for layer in 0..out.layers().len() {
        let (nw, nb) = (
            out.layers()[layer].weights.len(),
            out.layers()[layer].biases.len(),
        );
        out.layers_mut()[layer]
            .weights
            .copy_from_slice(&flat[cursor..cursor + nw]);
        cursor += nw;
        out.layers_mut()[layer]
            .biases
            .copy_from_slice(&flat[cursor..cursor + nb]);
        cursor += nb;
    }
    out
}

fn flatten_grads(grads: &crate::model::Gradients) -> Vec<f64> {
    grads
        .weights
        .iter()
        .zip(grads.biases.iter())
        .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
        .collect()
}

/// Analytic gradients (CE, GCE, SymKL; softmax level and through the full
/// MLP) match central finite differences at relative error < 1e-5.
pub fn gradient_checks(instances: usize) -> PropertyOutcome {
    let clamp = PROB_FLOOR;
    let q = 0.7;
    let h = 1e-5;
    let mut worst: f64 = 0.0;

    // Softmax-level checks.
    let mut rng = seeding::stream(0x75, &[1]);
    for i in 0..instances {
        let k = 3 + i % 5;
        let logits: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let other: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let label = (rng.random::<u32>() as usize) % k;

        let ce = |z: &[f64]| -softmax(z).unwrap().values()[label].max(clamp).ln();
        worst = worst.max(rel_err(
            &ce_grad_logits(&logits, label, clamp).expect("valid"),
            &central_diff(&ce, &logits, h),
        ));
        let gce = |z: &[f64]| (1.0 - softmax(z).unwrap().values()[label].max(clamp).powf(q)) / q;
        worst = worst.max(rel_err(
            &gce_grad_logits(&logits, label, q, clamp).expect("valid"),
            &central_diff(&gce, &logits, h),
        ));
        let (g1, g2) = symkl_grad_logits(&logits, &other, clamp).expect("valid");
        let f1 = |z: &[f64]| sym_kl(&softmax(z).unwrap(), &softmax(&other).unwrap(), clamp).unwrap();
        let f2 = |z: &[f64]| sym_kl(&softmax(&logits).unwrap(), &softmax(z).unwrap(), clamp).unwrap();
        worst = worst.max(rel_err(&g1, &central_diff(&f1, &logits, h)));
        worst = worst.max(rel_err(&g2, &central_diff(&f2, &other, h)));
        if worst >= 1e-5 {
            return PropertyOutcome::check(
                "gradient_checks",
                false,
                format!("softmax-level gradient off at instance {i}: rel err {worst:.2e}"),
            );
        }
    }

    // Full-MLP checks, all three loss kinds.
    let arch = Architecture::new(4, vec![6, 5], 3).expect("valid");
    let net1 = init_mlp(&arch, 0xA1);
    let net2 = init_mlp(&arch, 0xA2);
    let flat1 = flatten_params(&net1);
    let flat2 = flatten_params(&net2);
    let mut rng = seeding::stream(0x75, &[2]);
    for i in 0..instances {
        let x1: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let x2: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let label = (rng.random::<u32>() as usize) % 3;

        // CE and GCE through net1.
        let cache = net1.forward_cached(&x1).expect("forward");
        for kind in 0..2 {
            let dlogits = if kind == 0 {
                ce_grad_logits(&cache.logits, label, clamp).expect("valid")
            } else {
                gce_grad_logits(&cache.logits, label, q, clamp).expect("valid")
            };
            let analytic = flatten_grads(&net1.backward(&cache, &dlogits).expect("backward"));
            let loss = |flat: &[f64]| -> f64 {
                let net = with_params(&net1, flat);
                let (_, probs) = net.forward(&x1).expect("forward");
                let py = probs.values()[label].max(clamp);
                if kind == 0 {
                    -py.ln()
                } else {
                    (1.0 - py.powf(q)) / q
                }
            };
            worst = worst.max(rel_err(&analytic, &central_diff(&loss, &flat1, h)));
        }

        // SymKL through both nets.
        let cache1 = net1.forward_cached(&x1).expect("forward");
        let cache2 = net2.forward_cached(&x2).expect("forward");
        let (d1, d2) = symkl_grad_logits(&cache1.logits, &cache2.logits, clamp).expect("valid");
        let analytic1 = flatten_grads(&net1.backward(&cache1, &d1).expect("backward"));
        let analytic2 = flatten_grads(&net2.backward(&cache2, &d2).expect("backward"));
        let loss1 = |flat: &[f64]| -> f64 {
            let net = with_params(&net1, flat);
            let (_, p1) = net.forward(&x1).expect("forward");
            let (_, p2) = net2.forward(&x2).expect("forward");
            sym_kl(&p1, &p2, clamp).expect("valid")
        };
        let loss2 = |flat: &[f64]| -> f64 {
            let net = with_params(&net2, flat);
            let (_, p1) = net1.forward(&x1).expect("forward");
            let (_, p2) = net.forward(&x2).expect("forward");
            sym_kl(&p1, &p2, clamp).expect("valid")
        };
        worst = worst.max(rel_err(&analytic1, &central_diff(&loss1, &flat1, h)));
        worst = worst.max(rel_err(&analytic2, &central_diff(&loss2, &flat2, h)));
        if worst >= 1e-5 {
            return PropertyOutcome::check(
                "gradient_checks",
                false,
                format!("full-MLP gradient off at instance {i}: rel err {worst:.2e}"),
            );
        }
    }
    PropertyOutcome::pass(
        "gradient_checks",
        format!("{instances} instances per loss kind, worst rel err {worst:.2e}"),
    )
}

/// GCE endpoints: exact mean absolute error at q = 1, within 1% of
/// cross-entropy at q = 1e-3 over p in [0.05, 0.95].
pub fn gce_limits() -> PropertyOutcome {
    for i in 0..=900usize {
        let p = 0.05 + 0.001 * i as f64;
        let dist = ProbDist::normalized(vec![p, 1.0 - p]).expect("valid");
        let gce1 = crate::losses::gce_batch(std::slice::from_ref(&dist), &[0], 1.0, PROB_FLOOR)
            .expect("valid");
        let expected = 1.0 - dist.values()[0];
        if gce1 != expected {
            return PropertyOutcome::check(
                "gce_limits",
                false,
                format!("q=1 not exactly 1-p at p={p}: {gce1} vs {expected}"),
            );
        }
        let ce = crate::losses::cross_entropy_batch(std::slice::from_ref(&dist), &[0], PROB_FLOOR)
            .expect("valid");
        let gce_small =
            crate::losses::gce_batch(std::slice::from_ref(&dist), &[0], 1e-3, PROB_FLOOR)
                .expect("valid");
        if (gce_small - ce).abs() > 0.01 * ce {
            return PropertyOutcome::check(
                "gce_limits",
                false,
                format!("q=1e-3 drifted from CE at p={p}: {gce_small} vs {ce}"),
            );
        }
    }
    PropertyOutcome::pass(
        "gce_limits",
        "q=1 exact MAE and q=1e-3 within 1% of CE over p in [0.05, 0.95]".into(),
    )
}

/// The default suite behind the `selftest` subcommand.
pub fn run_all() -> Vec<PropertyOutcome> {
    let theorem1 = theorem1_convergence(1);
    vec![
        coefficient_identity(),
        simplex_preservation(150, 10_000),
        theorem1.outcome,
        theorem2_containment(1),
        perturbation_decay(1),
        order_equivalence(200),
        gradient_checks(100),
        gce_limits(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_passes() {
        for outcome in run_all() {
            assert!(outcome.passed, "{}: {}", outcome.name, outcome.detail);
        }
    }

    /// Scalar envelope of the deviation recursion: all four units start at
    /// `dev` and the prediction deviation is zero. The recursion has
    /// positive coefficients, so it upper-bounds any run whose per-unit
    /// initial deviations are at most `dev`.
    fn envelope_horizon(dev: f64) -> u64 {
        let mut d = [dev; 4];
        for t in 5..=10_000_000u64 {
            let mut next = [0.0; 4];
            for j in 1..=4usize {
                let (alpha, beta) = weight_schedule(t, j).unwrap();
                let incoming = if j < 4 { d[j] } else { 0.0 };
                next[j - 1] = alpha * d[j - 1] + beta * incoming;
            }
            d = next;
            if d.iter().cloned().fold(0.0, f64::max) < 1e-3 {
                return t;
            }
        }
        unreachable!("envelope always converges");
    }

    #[test]
    fn theorem1_horizon_matches_long_term_decay_law() {
        let report = theorem1_convergence(3);
        assert!(report.outcome.passed, "{}", report.outcome.detail);
        // The long-term unit contracts by t/(t+1) per epoch, so the horizon
        // is thousands of epochs for O(1) initial deviations, never the
        // few-hundred figure a unit-4-only analysis would suggest.
        assert!(report.horizon > 500, "horizon = {}", report.horizon);
        let envelope = envelope_horizon(report.initial_deviation);
        assert!(
            report.horizon <= envelope + 1,
            "horizon {} exceeds the scalar envelope {envelope}",
            report.horizon
        );
        assert!(
            (report.horizon as f64) >= 0.2 * envelope as f64,
            "horizon {} implausibly far below the envelope {envelope}",
            report.horizon
        );
    }
}
