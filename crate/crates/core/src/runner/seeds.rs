//! Stable per-episode seed derivation.
//!
//! `derive(master, trial, experiment, algorithm, purpose)` folds each
//! component into a splitmix64 chain. Streams with different purposes or
//! coordinates never share state. Initial designs use [`SHARED`] as the
//! algorithm slot so every algorithm of a comparison sees the same points.

/// Algorithm slot for streams common to all algorithms.
pub const SHARED: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    InitialDesign = 1,
    Selection = 2,
    Noise = 3,
    Threshold = 4,
}

/// One splitmix64 output step.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(master: u64, trial: u64, experiment: u64, algorithm: u64, purpose: Purpose) -> u64 {
    [trial, experiment, algorithm, purpose as u64]
        .into_iter()
        .fold(splitmix64(master), |h, c| splitmix64(h ^ c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // First outputs of the reference generator seeded with 0.
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix64(0x9E37_79B9_7F4A_7C15), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn components_separate_streams() {
        let base = derive(7, 1, 2, 3, Purpose::Noise);
        assert_eq!(base, derive(7, 1, 2, 3, Purpose::Noise));
        assert_ne!(base, derive(7, 1, 2, 3, Purpose::Selection));
        assert_ne!(base, derive(7, 2, 1, 3, Purpose::Noise));
        assert_ne!(base, derive(8, 1, 2, 3, Purpose::Noise));
        assert_ne!(base, derive(7, 1, 2, SHARED, Purpose::Noise));
    }
}
