use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use splitinfer_core::field::PrimeField;

fn check_pairs(p: u64, n: usize, seed: u64) {
    let f = PrimeField::new(p).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for _ in 0..n {
        let a = rng.random_range(0..p);
        let b = rng.random_range(0..p);
        let (wa, wb, wp) = (a as u128, b as u128, p as u128);
        assert_eq!(f.add(a, b) as u128, (wa + wb) % wp);
        assert_eq!(f.sub(a, b) as u128, (wa + wp - wb) % wp);
        assert_eq!(f.mul(a, b) as u128, wa * wb % wp);
        assert!(f.add(a, b) < p && f.sub(a, b) < p && f.mul(a, b) < p);
    }
}

#[test]
fn mersenne_arithmetic_matches_wide_integers() {
    check_pairs((1 << 61) - 1, 100_000, 1);
}

#[test]
fn small_and_large_primes_match_wide_integers() {
    check_pairs(101, 20_000, 2);
    check_pairs(18_446_744_073_709_551_557, 50_000, 3);
}

#[test]
fn inverse_times_element_is_one() {
    let f = PrimeField::mersenne61();
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let a = rng.random_range(1..f.modulus());
        assert_eq!(f.mul(a, f.inv(a).unwrap()), 1);
    }
    assert_eq!(f.inv(0), None);
}
