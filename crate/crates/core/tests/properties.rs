use proptest::prelude::*;

use pause_lab::model::{count_params, AttentionMask, ModelConfig, ModelParams};
use pause_lab::numeric::kernels::{masked_cross_entropy, softmax_rows};
use pause_lab::pause::{inject_window, pause_pretrain_loss_from_logits, random_insert, PausedSequence};
use pause_lab::tasks::{build_vocab, exact_match, gen_task_examples, solve, Split, TaskKind, TaskSpec};
use pause_lab::train::{decode_checkpoint, encode_checkpoint, lr_schedule, TrainConfig};

const PAUSE: usize = 20;

fn plain_tokens(max_len: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0usize..PAUSE, 0..max_len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn random_insert_keeps_sequence_and_ignore_set(p in plain_tokens(40), m in 0usize..20, seed: u64) {
        let s = random_insert(&p, m, seed, PAUSE).unwrap();
        prop_assert_eq!(s.strip_pauses(PAUSE), p.clone());
        prop_assert_eq!(s.len(), p.len() + m);
        prop_assert_eq!(s.tokens.iter().filter(|&&t| t == PAUSE).count(), m);
        let expected: Vec<usize> = (0..s.len().saturating_sub(1)).filter(|&k| s.tokens[k + 1] == PAUSE).collect();
        prop_assert_eq!(&s.ignore, &expected);
        prop_assert_eq!(random_insert(&p, m, seed, PAUSE).unwrap(), s);
    }

    #[test]
    fn trimmed_window_keeps_length(window in prop::collection::vec(0usize..PAUSE, 2..64), seed: u64) {
        let s = inject_window(&window, 0.1, seed, true, PAUSE).unwrap();
        prop_assert_eq!(s.len(), window.len());
        let meaningful = s.strip_pauses(PAUSE);
        prop_assert_eq!(&window[..meaningful.len()], &meaningful[..]);
    }

    #[test]
    fn ignored_logits_never_matter(
        p in prop::collection::vec(0usize..PAUSE, 1..10),
        m in 1usize..4,
        seed: u64,
        noise in prop::collection::vec(-5.0f64..5.0, 14 * 21),
    ) {
        let v = PAUSE + 1;
        let s = random_insert(&p, m, seed, PAUSE).unwrap();
        let base: Vec<f64> = noise[..s.len() * v].to_vec();
        let l0 = pause_pretrain_loss_from_logits(&base, v, &s).unwrap().sum;
        for &k in &s.ignore {
            let mut x = base.clone();
            for c in 0..v {
                x[k * v + c] += 3.0 + c as f64;
            }
            prop_assert_eq!(pause_pretrain_loss_from_logits(&x, v, &s).unwrap().sum, l0);
        }
        let targets = s.targets();
        for (k, t) in targets.iter().enumerate() {
            if let Some(t) = t {
                let mut x = base.clone();
                x[k * v + (t + 1) % v] += 2.0;
                prop_assert_ne!(pause_pretrain_loss_from_logits(&x, v, &s).unwrap().sum, l0);
            }
        }
    }

    #[test]
    fn masked_softmax_rows_are_distributions(n in 1usize..10, p in 0usize..10, x in prop::collection::vec(-20.0f64..20.0, 100)) {
        let mask = AttentionMask::prefix(p.min(n), n).unwrap();
        let mut out = vec![0.0; n * n];
        softmax_rows(&x[..n * n], n, n, Some(&mask), &mut out).unwrap();
        for i in 0..n {
            let row = &out[i * n..(i + 1) * n];
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (j, &w) in row.iter().enumerate() {
                prop_assert_eq!(mask.allowed(i, j), j < p.min(n) || j <= i);
                if !mask.allowed(i, j) {
                    prop_assert_eq!(w, 0.0);
                }
            }
        }
    }

    #[test]
    fn cross_entropy_is_nonnegative(x in prop::collection::vec(-10.0f64..10.0, 12), t in 0usize..4) {
        let ce = masked_cross_entropy(&x, 4, &[Some(t), None, Some((t + 1) % 4)]).unwrap();
        prop_assert!(ce >= 0.0);
    }

    #[test]
    fn vocab_entry_adds_d_per_matrix(l in 0usize..4, h in 1usize..4, d in 1usize..64, v in 1usize..100) {
        let cfg = ModelConfig::new(l, h, d, 2 * d, 16, v);
        let (a, b) = (count_params(&cfg), count_params(&cfg.with_vocab_size(v + 1)));
        prop_assert_eq!(b.token_embedding - a.token_embedding, d);
        prop_assert_eq!(b.unembedding - a.unembedding, d);
        prop_assert_eq!(b.total - a.total, 2 * d);
    }

    #[test]
    fn exact_match_ignores_surrounding_whitespace(s in "[a-z0-9]{0,6}", pad in "[ \t]{0,3}") {
        prop_assert_eq!(exact_match(&format!("{pad}{s}{pad}"), &s), 1);
        prop_assert_eq!(exact_match(&format!("{s}x"), &s), 0);
    }

    #[test]
    fn warmup_schedule_ramps_then_holds(warmup in 0usize..50, extra in 0usize..50, step in 0usize..200) {
        let cfg = TrainConfig { warmup_steps: warmup, total_steps: warmup + extra, ..TrainConfig::default() };
        let lr = lr_schedule(step, &cfg);
        prop_assert!(lr >= 0.0 && lr <= cfg.learning_rate);
        if step >= warmup {
            prop_assert_eq!(lr, cfg.learning_rate);
        } else {
            prop_assert!(lr <= lr_schedule(step + 1, &cfg));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn causal_logits_ignore_later_tokens(tokens in prop::collection::vec(0usize..16, 2..10), k in 0usize..9, seed: u64, new in 0usize..16) {
        let params: ModelParams<f64> = ModelParams::init(&ModelConfig::new(2, 2, 16, 32, 16, 16), seed).unwrap();
        let n = tokens.len();
        let k = k % (n - 1);
        let mask = AttentionMask::causal(n).unwrap();
        let base = params.logits(&tokens, &mask).unwrap();
        let mut changed = tokens.clone();
        changed[n - 1] = (tokens[n - 1] + 1 + new % 15) % 16;
        let after = params.logits(&changed, &mask).unwrap();
        prop_assert_eq!(&base[..(k + 1) * 16], &after[..(k + 1) * 16]);
    }

    #[test]
    fn checkpoint_bytes_round_trip(seed: u64, d in 1usize..9, step: u64) {
        let params: ModelParams<f32> = ModelParams::init(&ModelConfig::new(1, 1, d, 4, 8, 6), seed).unwrap();
        let bytes = encode_checkpoint(&params, "digest", 7, step);
        let back = decode_checkpoint(&bytes).unwrap();
        prop_assert_eq!(back.header.step, step);
        for (a, b) in params.tensors().iter().zip(back.params.tensors()) {
            let (x, y): (Vec<u32>, Vec<u32>) =
                (a.data().iter().map(|f| f.to_bits()).collect(), b.data().iter().map(|f| f.to_bits()).collect());
            prop_assert_eq!(x, y);
        }
    }

    #[test]
    fn generators_are_deterministic_self_consistent_and_split(kind in prop::sample::select(TaskKind::ALL.to_vec()), size in 2usize..6, seed in 0u64..1000) {
        let train = TaskSpec::new(kind, size, Split::Train, seed);
        let a = gen_task_examples(&train, 30).unwrap();
        prop_assert_eq!(&a, &gen_task_examples(&train, 30).unwrap());
        let test = gen_task_examples(&train.with_split(Split::Test), 30).unwrap();
        for (p, t) in a.iter().chain(&test) {
            prop_assert_eq!(solve(kind, p), Some(t.clone()));
        }
        for ex in &a {
            prop_assert!(!test.contains(ex));
        }
        let vocab = build_vocab(&TaskKind::ALL);
        for (p, t) in &a {
            prop_assert_eq!(&vocab.decode(&vocab.encode(p).unwrap()).unwrap(), p);
            prop_assert_eq!(&vocab.decode(&vocab.encode(t).unwrap()).unwrap(), t);
        }
    }
}

#[test]
fn paused_sequence_line_round_trips() {
    let s = random_insert(&[1, 2, 3, 4, 5], 4, 9, PAUSE).unwrap();
    assert_eq!(PausedSequence::from_line(&s.to_line(PAUSE), PAUSE).unwrap(), s);
}
