//! Stable seed derivation. `DefaultHasher` is not guaranteed stable across
//! releases, so stream seeds are derived with an explicit splitmix-style
//! finalizer that will never change underneath recorded results.

/// Deterministic 64-bit mix of two words.
pub fn mix64(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-trial seed. Deliberately a function of the master seed, the cell's
/// attack duration and the trial index only: cells that differ in network
/// delay or confirmation depth share seeds, so those comparisons run on
/// common random numbers.
pub fn trial_seed(master_seed: u64, duration_s: u64, trial_index: u32) -> u64 {
    mix64(mix64(master_seed, 0x6475_7261 ^ duration_s), trial_index as u64)
}

/// Per-miner stream seed inside one trial; miners draw from disjoint streams
/// so perturbing one miner's schedule cannot shift another's draws.
pub fn miner_seed(trial_seed: u64, miner_index: usize) -> u64 {
    mix64(trial_seed, 0x6d69_6e65 ^ miner_index as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixing_is_stable() {
        // Frozen values: recorded outputs depend on them.
        assert_eq!(mix64(0, 0), 0);
        assert_eq!(mix64(42, 7), mix64(42, 7));
        assert_ne!(mix64(42, 7), mix64(42, 8));
        assert_ne!(mix64(42, 7), mix64(43, 7));
    }

    #[test]
    fn delay_and_m_do_not_enter_trial_seeds() {
        let a = trial_seed(99, 540, 3);
        let b = trial_seed(99, 540, 3);
        assert_eq!(a, b);
        assert_ne!(a, trial_seed(99, 540, 4));
        assert_ne!(a, trial_seed(99, 180, 3));
    }
}
