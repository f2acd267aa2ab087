use crate::warp::JitterOffset;

/// Length of the cyclic jitter sequence.
pub const JITTER_PERIOD: usize = 16;

/// Radical inverse of `index + 1` in `base`, so the first value is nonzero.
/// The digits are reversed into an integer fraction and divided once.
pub fn halton(index: u64, base: u32) -> f64 {
    assert!(base >= 2, "halton base must be at least 2");
    let b = base as u128;
    let mut i = index as u128 + 1;
    let (mut num, mut den) = (0u128, 1u128);
    while i > 0 {
        num = num * b + i % b;
        den *= b;
        i /= b;
    }
    num as f64 / den as f64
}

/// Halton(2, 3) points centered on zero.
pub fn jitter_sequence() -> [JitterOffset; JITTER_PERIOD] {
    std::array::from_fn(|i| JitterOffset {
        x: (halton(i as u64, 2) - 0.5) as f32,
        y: (halton(i as u64, 3) - 0.5) as f32,
    })
}

pub fn jitter_for_frame(frame: usize) -> JitterOffset {
    jitter_sequence()[frame % JITTER_PERIOD]
}
