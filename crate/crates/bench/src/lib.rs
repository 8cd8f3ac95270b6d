//! Deterministic inputs for the benchmarks under `benches/`.

/// Value in `[0, 1)` from a splitmix64 step on `i`.
pub fn unit(i: u64) -> f64 {
    let mut z = i.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// `rows` vectors of length `cols`, seeded by `seed`.
pub fn matrix(seed: u64, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|r| {
            (0..cols)
                .map(|c| unit(seed ^ ((r * cols + c) as u64).wrapping_mul(0x2545_F491_4F6C_DD1D)))
                .collect()
        })
        .collect()
}
