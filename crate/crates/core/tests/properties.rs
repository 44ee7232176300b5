use std::sync::Arc;

use proptest::prelude::*;

use lerl_core::catalog::{Catalog, EmbeddingInit};
use lerl_core::hsp::{
    plan_categories, render_actor_prompt, ChatClient, ChatMessage, LlmError, PlannerBackend, PlannerContext,
    ReflectionEntry, ReflectionPool,
};
use lerl_core::lpl::clipped_surrogate;
use lerl_core::numeric::{softmax, RngStream, Tape, Tensor};
use lerl_core::simenv::{session_metrics, CategoryStep, EnvConfig, Environment, UserProfile};

fn user(n_categories: usize, seed: u64) -> UserProfile {
    let mut rng = RngStream::new(seed, 0);
    UserProfile {
        user_id: 0,
        category_affinity: (0..n_categories).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
        item_noise_seed: seed,
    }
}

struct Fixed(String);

impl ChatClient for Fixed {
    fn chat(&self, _: &[ChatMessage]) -> Result<String, LlmError> {
        Ok(self.0.clone())
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn softmax_ignores_a_common_shift(v in prop::collection::vec(-50.0f64..50.0, 1..12), shift in -500.0f64..500.0) {
        let a = softmax(&v, 1.0).unwrap();
        let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
        let b = softmax(&shifted, 1.0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tensors_reject_non_finite(n in 1usize..20, at in 0usize..20, which in 0usize..3) {
        let bad = [f64::NAN, f64::INFINITY, f64::NEG_INFINITY][which];
        let mut data = vec![0.5; n];
        data[at % n] = bad;
        prop_assert!(Tensor::new(vec![n], data).is_err());
        let mut t = Tensor::zeros(vec![n]);
        prop_assert!(t.set(at % n, bad).is_err());
    }

    #[test]
    fn masks_match_membership_for_every_subset(n_cat in 2usize..=6, extra in 0usize..45, seed in any::<u64>()) {
        let n = n_cat + extra;
        let catalog = Catalog::synthetic(n, n_cat, EmbeddingInit { dim: 2, seed }).unwrap();
        for bits in 1u32..(1 << n_cat) {
            let subset: Vec<usize> = (0..n_cat).filter(|c| bits & (1 << c) != 0).collect();
            let mask = catalog.category_mask(&subset).unwrap();
            for (i, m) in mask.iter().enumerate() {
                prop_assert_eq!(*m == 1, subset.contains(&catalog.category_of(i)));
            }
            let per_category: usize = subset
                .iter()
                .map(|c| (0..n).filter(|&i| catalog.category_of(i) == *c).count())
                .sum();
            prop_assert_eq!(mask.iter().map(|&m| m as usize).sum::<usize>(), per_category);
        }
    }

    #[test]
    fn sessions_never_exceed_the_length_cap(max_len in 1usize..=25, k in 1usize..=4, seed in any::<u64>()) {
        let catalog = Catalog::synthetic(16, 4, EmbeddingInit { dim: 2, seed }).unwrap();
        let cfg = EnvConfig { max_session_length: max_len, list_length: k, ..EnvConfig::default() };
        let env = Environment::new(&catalog, &cfg).unwrap();
        let u = user(4, seed);
        let mut rng = RngStream::new(seed, 1);
        let mut state = env.reset(&u);
        while !state.done {
            let mut items: Vec<usize> = (0..16).collect();
            for j in 0..k {
                let pick = j + rng.index(16 - j);
                items.swap(j, pick);
            }
            items.truncate(k);
            state = env.step(&state, &u, &items, &mut rng).unwrap().next;
        }
        prop_assert!(state.t <= max_len);
        prop_assert!(state.t >= max_len.div_ceil(2).min(max_len));
    }

    #[test]
    fn alternating_categories_never_pay_the_penalty(max_len in 1usize..=25, seed in any::<u64>()) {
        // items 0..4 are categories 0,1,0,1 under the modulo layout
        let catalog = Catalog::synthetic(4, 2, EmbeddingInit { dim: 2, seed }).unwrap();
        let cfg = EnvConfig { max_session_length: max_len, list_length: 2, ..EnvConfig::default() };
        let env = Environment::new(&catalog, &cfg).unwrap();
        let u = user(2, seed);
        let mut rng = RngStream::new(seed, 2);
        let mut state = env.reset(&u);
        while !state.done {
            let list = if state.t % 2 == 0 { [0, 2] } else { [1, 3] };
            let step = env.step(&state, &u, &list, &mut rng).unwrap();
            prop_assert!(!step.quit_penalty_applied);
            state = step.next;
        }
        prop_assert_eq!(state.t, max_len);
    }

    #[test]
    fn step_is_a_function_of_state_list_and_stream(seed in any::<u64>(), skip in 0usize..10) {
        let catalog = Catalog::synthetic(12, 3, EmbeddingInit { dim: 2, seed }).unwrap();
        let cfg = EnvConfig { list_length: 3, ..EnvConfig::default() };
        let env = Environment::new(&catalog, &cfg).unwrap();
        let u = user(3, seed);
        let state = env.reset(&u);
        let mut a = RngStream::new(seed, 3);
        for _ in 0..skip {
            a.uniform();
        }
        let mut b = a.clone();
        let x = env.step(&state, &u, &[0, 4, 8], &mut a).unwrap();
        let y = env.step(&state, &u, &[0, 4, 8], &mut b).unwrap();
        prop_assert_eq!(x.clicks, y.clicks);
        prop_assert_eq!(x.next, y.next);
    }

    #[test]
    fn pool_keeps_the_best_most_recent_entries(
        capacity in 1usize..30,
        scores in prop::collection::vec(0u8..10, 0..120),
    ) {
        let mut pool = ReflectionPool::new(capacity);
        for (i, s) in scores.iter().enumerate() {
            pool.insert(ReflectionEntry::from_session(format!("r{i}"), &[*s as f64], i).unwrap());
            prop_assert!(pool.len() <= capacity);
        }
        let mut oracle: Vec<(u8, usize)> = scores.iter().copied().zip(0..).collect();
        oracle.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.cmp(&a.1)));
        oracle.truncate(capacity);
        let mut expected: Vec<usize> = oracle.into_iter().map(|x| x.1).collect();
        expected.sort_unstable();
        let mut kept: Vec<usize> = pool.entries().map(|e| e.source_user()).collect();
        kept.sort_unstable();
        prop_assert_eq!(kept, expected);
    }

    #[test]
    fn any_llm_reply_yields_a_valid_plan(reply in ".{0,80}", names in prop::collection::vec(0usize..10, 0..6), m in 1usize..=5) {
        let catalog = Catalog::synthetic(30, 6, EmbeddingInit { dim: 2, seed: 0 }).unwrap();
        // mix real names, unknown names and free text
        let listed: Vec<String> = names.iter().map(|i| format!("\"category_{i}\"")).collect();
        for text in [reply.clone(), format!("[{}]", listed.join(",")), format!("{reply}[{}]", listed.join(", "))] {
            let backend = PlannerBackend::Llm { client: Arc::new(Fixed(text)), retries: 2 };
            let ctx = PlannerContext::new(&catalog, &[], vec![], m);
            let plan = plan_categories(&backend, &ctx, &catalog).unwrap();
            prop_assert_eq!(plan.categories.len(), m);
            prop_assert!(plan.categories.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(plan.categories.iter().all(|&c| c < 6));
        }
    }

    #[test]
    fn prompt_rendering_is_pure(steps in prop::collection::vec((0usize..5, 0u8..5), 0..8), refl in prop::collection::vec("[a-z ]{0,20}", 0..4)) {
        let catalog = Catalog::synthetic(10, 5, EmbeddingInit { dim: 2, seed: 0 }).unwrap();
        let history: Vec<CategoryStep> = steps
            .iter()
            .map(|(c, r)| CategoryStep { categories: vec![*c], reward: *r as f64 / 4.0 })
            .collect();
        let a = PlannerContext::new(&catalog, &history, refl.clone(), 2);
        let b = PlannerContext::new(&catalog, &history, refl, 2);
        prop_assert_eq!(render_actor_prompt(&a), render_actor_prompt(&b));
    }

    #[test]
    fn metric_identity_is_exact(clicks in prop::collection::vec(0u8..=6, 1..=20), k in 1u8..=6) {
        let rewards: Vec<f64> = clicks.iter().map(|c| (*c).min(k) as f64 / k as f64).collect();
        let m = session_metrics(&rewards).unwrap();
        prop_assert!(m.identity_holds());
        prop_assert_eq!(m.t_int, rewards.len());
    }

    #[test]
    fn clipped_surrogate_matches_its_definition(rho in 0.0f64..5.0, adv in -3.0f64..3.0, eps in 0.01f64..1.0) {
        let mut tape = Tape::new();
        let r = tape.constant_scalar(rho).unwrap();
        let v = clipped_surrogate(&mut tape, r, adv, eps).unwrap();
        let expected = (rho * adv).min(rho.clamp(1.0 - eps, 1.0 + eps) * adv);
        prop_assert_eq!(tape.scalar(v), expected);
    }
}
