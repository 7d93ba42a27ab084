use std::collections::BTreeSet;

use crate::crypto::{hash_parts, Hash32};

/// The digest read as a big-endian integer, reduced mod `modulus`.
pub fn reduce_mod(digest: &Hash32, modulus: u64) -> u64 {
    let m = u128::from(modulus);
    digest
        .iter()
        .fold(0u128, |acc, b| ((acc << 8) | u128::from(*b)) % m) as u64
}

/// Maps a 32-byte seed onto `draws` distinct winning guesses in
/// `[0, guess_space)`.
///
/// The first candidate is the seed itself mod `guess_space`; candidate `c`
/// for `c >= 1` is `H(seed ‖ c_le) mod guess_space`. Repeats are skipped.
pub fn derive_winners(seed: &Hash32, guess_space: u64, draws: u64) -> BTreeSet<u64> {
    assert!(guess_space >= 1 && draws >= 1 && draws <= guess_space);
    let mut winners = BTreeSet::new();
    let mut counter = 0u64;
    while (winners.len() as u64) < draws {
        let digest = if counter == 0 {
            *seed
        } else {
            hash_parts(&[seed, &counter.to_le_bytes()])
        };
        winners.insert(reduce_mod(&digest, guess_space));
        counter += 1;
    }
    winners
}
