/// 1 when the strings agree after trimming surrounding whitespace.
pub fn exact_match(pred: &str, gold: &str) -> u8 {
    u8::from(pred.trim() == gold.trim())
}

/// Mean exact match over paired predictions; 0 for an empty batch.
pub fn exact_match_mean<P: AsRef<str>, G: AsRef<str>>(pairs: &[(P, G)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let hits: u32 = pairs
        .iter()
        .map(|(p, g)| u32::from(exact_match(p.as_ref(), g.as_ref())))
        .sum();
    hits as f64 / pairs.len() as f64
}
