use pause_lab::model::{count_params, ModelConfig, ModelParams};

// Independent count: four D_attn x D matrices per head, FF weights and biases,
// two (gamma, beta) pairs per layer, embeddings and an untied unembedding.
fn by_hand(l: usize, h: usize, d: usize, d_ff: usize, pos: usize, v: usize) -> usize {
    let d_attn = d / h;
    l * (h * 4 * d_attn * d + 2 * d * d_ff + d_ff + d + 4 * d) + v * d + pos * d + d * v
}

#[test]
fn model_130m_total() {
    let cfg = ModelConfig::new(12, 12, 768, 3072, 2048, 32_322);
    assert_eq!(count_params(&cfg).total, 136_237_056);
    assert_eq!(by_hand(12, 12, 768, 3072, 2048, 32_322), 136_237_056);
}

#[test]
fn counts_match_hand_formula_and_allocation() {
    for &(l, h, d, f, p, v) in &[(0, 1, 8, 16, 8, 5), (2, 2, 16, 32, 8, 16), (4, 4, 128, 512, 512, 32)] {
        let cfg = ModelConfig::new(l, h, d, f, p, v);
        assert_eq!(count_params(&cfg).total, by_hand(l, h, d, f, p, v));
        if d <= 16 {
            let params: ModelParams<f32> = ModelParams::init(&cfg, 0).unwrap();
            assert_eq!(params.num_params(), by_hand(l, h, d, f, p, v));
        }
    }
}

#[test]
fn embedding_only_model() {
    let c = count_params(&ModelConfig::new(0, 1, 8, 16, 4, 10));
    assert_eq!((c.attention, c.feedforward, c.layer_norm), (0, 0, 0));
    assert_eq!(c.total, 10 * 8 + 4 * 8 + 8 * 10);
}

#[test]
fn pause_entry_costs_d_twice() {
    for d in [64, 1024, 2048] {
        let base = ModelConfig::new(2, 4, d, 4 * d, 16, 31);
        let (a, b) = (count_params(&base), count_params(&base.with_vocab_size(32)));
        assert_eq!(b.token_embedding - a.token_embedding, d);
        assert_eq!(b.unembedding - a.unembedding, d);
    }
}
