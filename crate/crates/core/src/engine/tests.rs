use super::*;
use crate::linalg::SymMatrix;
use crate::targets::{ex7, gaussian, intro_banana, FnTarget};

const LN_1E4: f64 = 9.210_340_371_976_184;

fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// One N(0, 1) component with weight `w`, then rows `points` with target values `q`.
fn unit_state(w: f64, points: &[f64], q: &[f64]) -> ExplorationState {
    let mut s = ExplorationState::new(1, 0.0, vec![1.0]);
    s.add_component(GaussianComponent::new(vec![0.0], SymMatrix::identity(1), 1.0).unwrap(), None).unwrap();
    s.force_weights(&[w]);
    s.add_points(points.iter().map(|&p| vec![p]).collect(), q.iter().map(|v| v.ln()).collect(), vec![1.0; q.len()]);
    s
}

#[test]
fn g_a_examples() {
    assert_eq!(g_a_from_z(1.0, 1e-4), 0.0);
    assert!((g_a_from_z(0.0, 1e-4) - (1e-4 + LN_1E4)).abs() < 1e-12);
    assert!((g_a_from_z(0.0, 1e-4) - 9.2104404).abs() < 1e-7);
    let z_l = 1e-4;
    let upper = g_a_from_z(z_l, z_l);
    let lower = z_l - z_l - z_l.ln();
    assert!((upper - lower).abs() < 1e-12);
    let below = g_a_from_z(z_l * (1.0 - 1e-13), z_l);
    assert!((below - upper).abs() < 1e-12);
}

#[test]
fn g_b_examples() {
    let eps = (-10.0f64).exp();
    assert!((g_b_from_z(1.0, eps, 0.0, 0.0) + 4.54e-5).abs() < 1e-7);
    assert!((g_b_from_z(-1.0, eps, 0.0, -3.0) + 4.54e-5).abs() < 1e-7);
    // −[log(1 + e⁻¹⁰) + 3·(−2)]/4 = (6 − 4.54e-5)/4.
    assert!((g_b_from_z(-1.0, eps, 3.0, -2.0) - 1.4999887).abs() < 1e-7);
    assert_eq!(g_b_from_z(-1.0, eps, 3.0, f64::NEG_INFINITY), f64::INFINITY);
    assert!(g_b_from_z(-1.0, eps, 0.0, f64::NEG_INFINITY).is_finite());
}

#[test]
fn g_b_symmetric_without_pull() {
    let eps = (-10.0f64).exp();
    for z in [1e-9, 1e-4, 0.3, 1.0, 7.5, 1e3] {
        assert!((g_b_from_z(z, eps, 0.0, -1.0) - g_b_from_z(-z, eps, 0.0, -1.0)).abs() < 1e-12);
    }
}

#[test]
fn residuals_through_state() {
    let t = FnTarget::new("flat", vec![(-5.0, 5.0)], |_| 0.0);
    let cfg = IterLapConfig::modified();
    let s = ExplorationState::new(1, 0.0, vec![1.0]);
    // Empty mixture: z = q = 1.
    assert_eq!(residual_g_a(&[0.3], &s, &t, &cfg), 0.0);
    assert!((residual_g_b(&[0.3], &s, &t, &cfg) + cfg.epsilon_z.ln_1p()).abs() < 1e-15);
}

#[test]
fn original_starts_ranked_by_ratio() {
    let cfg = IterLapConfig::original();
    let s = unit_state(1.0, &[0.0, 3.0], &[10.0 * phi(0.0), 2.0 * phi(3.0)]);
    assert_eq!(select_starts_original(&s, &cfg), vec![vec![0.0], vec![3.0]]);
    let s = unit_state(1.0, &[3.0, 0.0], &[2.0 * phi(3.0), 10.0 * phi(0.0)]);
    assert_eq!(select_starts_original(&s, &cfg), vec![vec![0.0], vec![3.0]]);

    let s = unit_state(1.0, &[1.0, 1.0], &[1.0, 1.0]);
    assert_eq!(select_starts_original(&s, &cfg).len(), 1);

    // q̃ underflows to 0 at x = 60, which then ranks first.
    let s = unit_state(1.0, &[0.0, 2.0, 60.0], &[5.0 * phi(0.0), phi(2.0), 1e-3]);
    assert_eq!(s.approx()[2], 0.0);
    assert_eq!(select_starts_original(&s, &cfg)[0], vec![60.0]);
}

#[test]
fn absdiff_starts_follow_the_algorithm() {
    let mut cfg = IterLapConfig { n_starts_per_iter: 2, ..IterLapConfig::modified() };
    // With q̃ = 0, |q − q̃| = q.
    let s = unit_state(0.0, &[5.0, 0.0], &[0.1, 0.5]);
    assert_eq!(select_starts_absdiff(&s, &cfg), vec![vec![0.0], vec![5.0]]);

    let s = unit_state(0.0, &[0.0, 0.2, 4.0], &[0.5, 0.4, 0.3]);
    assert_eq!(select_starts_absdiff(&s, &cfg), vec![vec![0.0], vec![4.0]]);

    cfg.delta_lq = -1.0;
    let mut s = unit_state(0.0, &[1.0, 2.0], &[(-5.0f64).exp(), (-7.0f64).exp()]);
    assert_eq!(select_starts_absdiff(&s, &cfg), vec![vec![1.0]]);
    s.raise_lq_max(10.0);
    assert!(select_starts_absdiff(&s, &cfg).is_empty());
}

#[test]
fn zeta_rule_examples() {
    assert!(zeta_stagnated(&[1.0, 1.0, 1.0], 0.01));
    assert!(!zeta_stagnated(&[1.0, 2.0, 4.0], 0.01));
    assert!(!zeta_stagnated(&[1.0, 1.0], 0.01));
    assert!(zeta_stagnated(&[5.0, 1.0, 1.0, 1.0], 0.01));
}

fn state_with_history(history: &[f64], n_components: usize) -> ExplorationState {
    let mut s = ExplorationState::new(1, 0.0, vec![1.0]);
    for i in 0..n_components {
        s.add_component(GaussianComponent::new(vec![i as f64], SymMatrix::identity(1), 1.0).unwrap(), None).unwrap();
    }
    s.add_points(vec![vec![0.0]], vec![0.0], vec![1.0]);
    s.set_zeta_history(history.to_vec());
    s
}

#[test]
fn stop_rules() {
    let o = IterLapConfig { n_c_max: 10, ..IterLapConfig::original() };
    let m = IterLapConfig { n_c_max: 10, ..IterLapConfig::modified() };
    let s = state_with_history(&[1.0, 1.0, 1.0], 2);
    assert_eq!(should_stop(&s, &o, true), Some(StopReason::ZetaStagnation));
    assert_eq!(should_stop(&s, &m, true), None);
    let s = state_with_history(&[1.0, 2.0, 4.0], 2);
    assert_eq!(should_stop(&s, &o, true), None);
    assert_eq!(should_stop(&s, &m, false), Some(StopReason::NoNewComponent));
    let s = state_with_history(&[1.0, 2.0, 4.0], 10);
    assert_eq!(should_stop(&s, &m, true), Some(StopReason::MaxComponents));
    let s = state_with_history(&[1.0, 2.0, 4.0], 2);
    let with_delta = IterLapConfig { delta_err: 10.0, ..m.clone() };
    assert_eq!(should_stop(&s, &with_delta, true), Some(StopReason::ErrorThreshold));
}

fn underfit_gaussian_state(cfg: &IterLapConfig) -> (FnTarget, ExplorationState) {
    let t = gaussian(vec![0.0], SymMatrix::identity(1)).unwrap();
    let mut s = ExplorationState::new(1, t.log_q(&[0.0]), vec![1.0]);
    let c = GaussianComponent::new(vec![0.0], SymMatrix::identity(1), 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    s.explore(c, None, &t, cfg, &mut rng).unwrap();
    s.force_weights(&[0.25 * (2.0 * std::f64::consts::PI).sqrt()]);
    (t, s)
}

#[test]
fn original_rejects_existing_mean() {
    let cfg = IterLapConfig::original();
    let (t, s) = underfit_gaussian_state(&cfg);
    assert!(matches!(propose_component(&[0.3], &s, &t, &cfg), Err(Rejection::Duplicate)));
}

#[test]
fn multiplicative_duplicates() {
    let cfg = IterLapConfig { n_dup: 3, kappa_b: 1.25, ..IterLapConfig::modified() };
    let (t, mut s) = underfit_gaussian_state(&cfg);
    let q_first = s.mixture().components()[0].precision().get(0, 0);
    let p = propose_component(&[0.1], &s, &t, &cfg).unwrap();
    assert_eq!(p.duplicate_of, Some(0));
    assert!(p.scaled);
    assert!((p.component.precision().get(0, 0) - 1.25 * q_first).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    s.explore(p.component, p.duplicate_of, &t, &cfg, &mut rng).unwrap();
    s.force_weights(&[0.1, 0.1]);
    let p = propose_component(&[0.1], &s, &t, &cfg).unwrap();
    assert!((p.component.precision().get(0, 0) - 1.5625 * q_first).abs() < 1e-12);
    s.explore(p.component, p.duplicate_of, &t, &cfg, &mut rng).unwrap();
    s.force_weights(&[0.05, 0.05, 0.05]);
    assert!(matches!(propose_component(&[0.1], &s, &t, &cfg), Err(Rejection::Duplicate)));

    let no_dup = IterLapConfig::modified();
    let (t, s) = underfit_gaussian_state(&no_dup);
    assert!(matches!(propose_component(&[0.1], &s, &t, &no_dup), Err(Rejection::Duplicate)));
}

#[test]
fn kappa_a_scales_fresh_hessian() {
    let t = FnTarget::new("two", vec![(-10.0, 10.0)], |x| -0.5 * (x[0] - 4.0).powi(2) * 2.0);
    let base = IterLapConfig::modified();
    // One far-away component leaves the target essentially unexplained.
    let mut s = ExplorationState::new(1, 0.0, vec![1.0]);
    let c = GaussianComponent::new(vec![-6.0], SymMatrix::identity(1), 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    s.explore(c, None, &t, &IterLapConfig { n_x: Some(5), ..base.clone() }, &mut rng).unwrap();
    s.force_weights(&[0.0]);
    let p1 = propose_component(&[3.5], &s, &t, &base).unwrap();
    let scaled = IterLapConfig { kappa_a: 1.5, ..base.clone() };
    let p15 = propose_component(&[3.5], &s, &t, &scaled).unwrap();
    assert!(!p1.scaled && p15.scaled);
    assert!((p1.component.mean()[0] - 4.0).abs() < 1e-4);
    // Residual −log q has curvature 2 at the mode.
    assert!((p1.component.precision().get(0, 0) - 2.0).abs() < 1e-3);
    assert!((p15.component.precision().get(0, 0) - 1.5 * p1.component.precision().get(0, 0)).abs() < 1e-9);
}

#[test]
fn runaway_is_rejected() {
    // q grows without bound, so the residual keeps falling to the right.
    let t = FnTarget::new("ramp", vec![(-5.0, 5.0)], |x| 2.0 * (1.0 + x[0].abs()).ln());
    let cfg = IterLapConfig {
        optim: crate::optimizer::OptimSettings { max_iters: 2000, ..Default::default() },
        ..IterLapConfig::modified()
    };
    let mut s = ExplorationState::new(1, 0.0, vec![1e-3]);
    let c = GaussianComponent::new(vec![0.0], SymMatrix::identity(1), 1.0).unwrap();
    s.add_component(c, None).unwrap();
    s.force_weights(&[0.0]);
    let r = propose_component(&[1.0], &s, &t, &cfg);
    assert!(matches!(r, Err(Rejection::Runaway)), "{:?}", r.map(|p| p.component.mean().to_vec()));
}

#[test]
fn initial_components_examples() {
    let t = gaussian(vec![0.0], SymMatrix::identity(1)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let c = initial_components(&t, &IterLapConfig::default(), &mut rng).unwrap();
    assert_eq!(c.len(), 1);
    assert!(c[0].mean()[0].abs() < 1e-4);
    assert!((c[0].precision().get(0, 0) - 1.0).abs() < 1e-3);

    let t = intro_banana();
    let c = initial_components(&t, &IterLapConfig::default(), &mut rng).unwrap();
    assert_eq!(c.len(), 1);
    assert!(c[0].mean()[0].abs() < 1e-3 && c[0].mean()[1].abs() < 1e-3, "{:?}", c[0].mean());

    let t = ex7();
    let spread = IterLapConfig { n_starts_initial: 6, start_spread: 3.0, ..IterLapConfig::default() };
    assert!(!initial_components(&t, &spread, &mut rng).unwrap().is_empty());
    let seeded = IterLapConfig {
        n_starts_initial: 1,
        initial_points: vec![vec![-1.0, 3.0], vec![1.0, -3.0]],
        ..IterLapConfig::default()
    };
    let c = initial_components(&t, &seeded, &mut rng).unwrap();
    assert_eq!(c.len(), 2);
    for m in c.iter().map(|c| c.mean()) {
        assert!((m[0].abs() - 2.09).abs() < 0.02 && (m[1].abs() - 2.2).abs() < 0.02, "{m:?}");
    }

    let nowhere = FnTarget::new("none", vec![(-1.0, 1.0)], |_| f64::NEG_INFINITY);
    assert!(matches!(initial_components(&nowhere, &IterLapConfig::default(), &mut rng), Err(Error::NoFiniteStart)));
}

#[test]
fn gaussian_run_gives_one_exact_component() {
    for cfg in [IterLapConfig::original(), IterLapConfig::modified()] {
        let t = gaussian(vec![0.0], SymMatrix::identity(1)).unwrap();
        let r = run(&t, &cfg).unwrap();
        assert_eq!(r.n_components, 1, "{:?}", r.stop_reason);
        let c = &r.mixture.components()[0];
        assert!(c.mean()[0].abs() < 1e-4);
        assert!((c.precision().get(0, 0) - 1.0).abs() < 1e-3);
        assert!((c.weight() - 1.0).abs() < 1e-6);
        assert_eq!(r.stop_reason, StopReason::NoNewComponent);
    }
}

#[test]
fn runs_are_deterministic_and_bounded() {
    let t = ex7();
    let cfg = IterLapConfig { n_c_max: 6, rng_seed: 11, ..IterLapConfig::modified() };
    let a = run(&t, &cfg).unwrap();
    let b = run(&t, &cfg).unwrap();
    assert_eq!(a.mixture.to_json(), b.mixture.to_json());
    assert!(a.n_components <= 6);
    assert!(a.iterations.windows(2).all(|w| w[1].n_points >= w[0].n_points));
    let json = a.to_json();
    let back: RunReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back.mixture, a.mixture);
    assert!(json.contains("\"stop_reason\""));
}
