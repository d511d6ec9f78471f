mod common;

use std::sync::Arc;

use nsmdp::controller::{
    glr_reset, kl_policy, Controller, ControllerKind, ControllerTemplate, ModelFamily, Phase,
    ResettingController, Thresholds,
};
use nsmdp::detectors::{Detector, DetectorConfig};
use nsmdp::harness::{run_piecewise, Environment, EpisodeOptions, InventoryEnv};
use nsmdp::inventory::{ChangePoint, InventoryParams};
use nsmdp::mdp::{kl_divergence, Transition, DEFAULT_EPS_PROB};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setup(n: usize, p: f64) -> (InventoryEnv, Arc<ModelFamily>) {
    let env = InventoryEnv::standard(&InventoryParams::standard(n, p)).unwrap();
    let fam = ModelFamily::pair(env.model(false).clone(), env.model(true).clone(), 0.99, 1e-8)
        .unwrap();
    (env, Arc::new(fam))
}

fn detector_config(i: u8) -> DetectorConfig {
    match i % 3 {
        0 => DetectorConfig::shiryaev(0.01),
        1 => DetectorConfig::sr(),
        _ => DetectorConfig::cusum(50),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // Phase discipline over whole episodes: pre acts as pi_0, probe as the
    // probing policy, post as pi_1 forever, and the embedded detector
    // follows a standalone one until the switch.
    #[test]
    fn episodes_respect_phases(seed in any::<u64>(), det in 0u8..3, kind in 0u8..3, a in 0.5f64..14.0, frac in 0.0f64..1.0, gamma in 1usize..300) {
        let (env, fam) = setup(10, 200.0);
        let config = detector_config(det);
        let kind = [ControllerKind::Loc, ControllerKind::Kl, ControllerKind::Tt][kind as usize];
        // ln-domain levels; Thresholds::log keeps them valid for every kind
        let thresholds = Thresholds::log(a, a * frac).unwrap();
        let template = ControllerTemplate::pair(Arc::clone(&fam), kind, config, thresholds).unwrap();
        let policies = template.policies().clone();
        let change = ChangePoint::At(gamma);
        let mut ctrl = template.instantiate(change, seed);
        let mut alone = Detector::new(config, fam.kernel(0), &[fam.kernel(1)]).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (mut s, mut feedback) = (env.initial_state(), None);
        let mut seen_post = false;
        for k in 0..400 {
            let action = ctrl.step(s, feedback, k).unwrap();
            if !seen_post {
                if let Some(t) = feedback {
                    alone.observe(t).unwrap();
                }
                prop_assert_eq!(ctrl.detector().state().statistic(), alone.state().statistic());
            }
            match ctrl.phase() {
                Phase::Pre => prop_assert_eq!(action, policies.pre.action(s)),
                Phase::Probe => prop_assert_eq!(action, policies.probe.action(s)),
                Phase::Post => {
                    seen_post = true;
                    prop_assert_eq!(action, policies.post[0].action(s));
                }
            }
            if seen_post {
                prop_assert_eq!(ctrl.phase(), Phase::Post);
            }
            let next = env.sample_next(change.is_post(k), s, action, r.gen());
            feedback = Some(Transition::new(s, action, next));
            s = next;
        }
    }

    #[test]
    fn kl_policy_maximizes_each_state(seed in any::<u64>(), n in 2usize..6, m in 1usize..4) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let m0 = common::random_mdp(&mut r, n, m, false);
        let m1 = common::perturbed(&mut r, &m0);
        let (k0, k1) = (m0.kernel(), m1.kernel());
        let pi = kl_policy(k0, k1).unwrap();
        for s in 0..n {
            let chosen = kl_divergence(k1.row(s, pi.action(s)), k0.row(s, pi.action(s)), DEFAULT_EPS_PROB).unwrap();
            for &a in k0.feasible(s) {
                let other = common::kl(k1.row(s, a), k0.row(s, a));
                prop_assert!(chosen >= other - 1e-12);
            }
        }
    }
}

fn glr_family() -> (Vec<nsmdp::mdp::TabularMdp>, Arc<ModelFamily>) {
    let env = InventoryEnv::standard(&InventoryParams::standard(10, 200.0)).unwrap();
    let models = vec![env.model(false).clone(), env.model(true).clone()];
    let fam = ModelFamily::solve(models.clone(), 0.99, 1e-8).unwrap();
    (models, Arc::new(fam))
}

#[test]
fn resetting_glr_follows_two_changes() {
    let (models, fam) = glr_family();
    let template = ControllerTemplate::new(
        Arc::clone(&fam),
        0,
        ControllerKind::Loc,
        DetectorConfig::glr(200, 0.05),
        Thresholds::single(15.0),
    )
    .unwrap();
    for seed in 0..20 {
        let mut ctrl = ResettingController::new(template.instantiate(ChangePoint::Never, seed));
        run_piecewise(
            &models,
            &[(0, 0), (300, 1), (700, 0)],
            &mut ctrl,
            EpisodeOptions::new(1000, 0.99),
            seed,
        )
        .unwrap();
        let stops = ctrl.stops();
        assert_eq!(stops.len(), 2, "seed {seed}: {stops:?}");
        assert!((300..400).contains(&stops[0].0) && stops[0].1 == 1, "{stops:?}");
        assert!((700..800).contains(&stops[1].0) && stops[1].1 == 0, "{stops:?}");
        assert_eq!(ctrl.current().pre_model(), 0);
    }
}

#[test]
fn reset_installs_new_pre_model_and_clears_statistic() {
    let (models, fam) = glr_family();
    let template = ControllerTemplate::new(
        Arc::clone(&fam),
        0,
        ControllerKind::Loc,
        DetectorConfig::glr(200, 0.05),
        Thresholds::single(15.0),
    )
    .unwrap();
    let mut ctrl = template.instantiate(ChangePoint::Never, 1);
    let env = nsmdp::harness::KernelEnv::new(models[1].clone(), models[1].clone(), 0).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let (mut s, mut feedback) = (0, None);
    for k in 0..500 {
        let a = ctrl.step(s, feedback, k).unwrap();
        if ctrl.switched_at().is_some() {
            break;
        }
        let next = env.sample_next(false, s, a, r.gen());
        feedback = Some(Transition::new(s, a, next));
        s = next;
    }
    assert!(ctrl.switched_at().is_some());
    assert_eq!(ctrl.estimated_model(), Some(1));
    let reset = glr_reset(&ctrl, 1).unwrap();
    assert_eq!(reset.pre_model(), 1);
    assert_eq!(reset.detector().state().step_count(), 0);
    assert_eq!(reset.detector().state().statistic(), 0.0);
    assert_eq!(reset.phase(), Phase::Pre);
    assert_eq!(reset.switched_at(), None);
}

#[test]
fn single_change_matches_plain_controller() {
    let (models, fam) = glr_family();
    let template = ControllerTemplate::new(
        Arc::clone(&fam),
        0,
        ControllerKind::Loc,
        DetectorConfig::glr(200, 0.05),
        Thresholds::single(15.0),
    )
    .unwrap();
    for seed in 0..10 {
        let mut plain = template.instantiate(ChangePoint::Never, seed);
        let mut resetting = ResettingController::new(template.instantiate(ChangePoint::Never, seed));
        let schedule = [(0, 0), (200, 1)];
        let options = EpisodeOptions::new(800, 0.99);
        let (c1, p1) = run_piecewise(&models, &schedule, &mut plain, options, seed).unwrap();
        let (c2, p2) = run_piecewise(&models, &schedule, &mut resetting, options, seed).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(c1, c2);
        assert_eq!(resetting.stops().len(), 1);
        assert_eq!(resetting.switch_time(), plain.switch_time());
    }
}
