//! Paired-comparison tables recomputed from their discordant counts.

use phishguard_core::eval::{bh_adjust, format_p, mcnemar};

/// (n10, n01, reported adjusted p); `0.0` stands for `<.001`.
const BASELINES: [(u64, u64, f64); 18] = [
    (1, 0, 0.529),
    (0, 0, 1.000),
    (4, 0, 0.070),
    (6, 0, 0.023),
    (4, 0, 0.070),
    (12, 2, 0.011),
    (263, 4, 0.0),
    (305, 3, 0.0),
    (62, 37, 0.011),
    (115, 7, 0.0),
    (161, 2, 0.0),
    (46, 18, 0.0),
    (50, 3, 0.0),
    (52, 4, 0.0),
    (18, 9, 0.056),
    (28, 0, 0.0),
    (23, 0, 0.0),
    (18, 8, 0.036),
];

const ABLATIONS: [(u64, u64, f64); 24] = [
    (0, 0, 1.000),
    (2, 0, 0.300),
    (0, 0, 1.000),
    (1, 0, 0.571),
    (19, 1, 0.0),
    (24, 0, 0.0),
    (7, 1, 0.050),
    (9, 0, 0.004),
    (45, 23, 0.007),
    (72, 30, 0.0),
    (77, 21, 0.0),
    (69, 25, 0.0),
    (119, 10, 0.0),
    (66, 19, 0.0),
    (37, 13, 0.0),
    (40, 9, 0.0),
    (112, 6, 0.0),
    (11, 6, 0.210),
    (7, 1, 0.050),
    (18, 6, 0.019),
    (21, 0, 0.0),
    (1, 2, 0.955),
    (11, 5, 0.140),
    (16, 5, 0.021),
];

fn check(rows: &[(u64, u64, f64)]) -> Vec<String> {
    let raw: Vec<f64> = rows.iter().map(|&(a, b, _)| mcnemar(a, b).raw_p).collect();
    let adj = bh_adjust(&raw).unwrap();
    let mut misses = Vec::new();
    for (&(a, b, reported), got) in rows.iter().zip(&adj) {
        let ok = if reported == 0.0 { *got < 0.001 + 0.02 } else { (got - reported).abs() <= 0.02 };
        if !ok {
            misses.push(format!("({a},{b}): got {} reported {reported}", format_p(*got)));
        }
    }
    misses
}

#[test]
fn baseline_family_of_eighteen() {
    let misses = check(&BASELINES);
    assert!(misses.is_empty(), "{misses:?}");
}

#[test]
fn ablation_family_of_twenty_four() {
    let misses = check(&ABLATIONS);
    assert!(misses.is_empty(), "{misses:?}");
}
