use super::ProtocolError;
use crate::field::PrimeField;
use crate::matrix::FieldMatrix;

/// Batched Freivalds check `Z · ỹ == V · ã_in (mod p)` on all `k` rows.
///
/// With `V = Z · W` and `ỹ != W · ã_in`, a uniform `Z` passes with
/// probability exactly `p^-k`.
pub fn freivalds_check(
    field: &PrimeField,
    z: &FieldMatrix,
    v: &FieldMatrix,
    a_in: &[u64],
    y: &[u64],
) -> Result<bool, ProtocolError> {
    if z.rows() != v.rows() || z.cols() != y.len() || v.cols() != a_in.len() {
        return Err(ProtocolError::CheckShape);
    }
    Ok((0..z.rows()).all(|r| field.dot(z.row(r), y) == field.dot(v.row(r), a_in)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::random_vector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn correct_reply_always_passes() {
        let f = PrimeField::new(101).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let w = FieldMatrix::random(&f, 4, 3, &mut rng);
            let z = FieldMatrix::random(&f, 2, 4, &mut rng);
            let v = z.matmul(&f, &w).unwrap();
            let a = random_vector(&f, 3, &mut rng);
            let y = w.matvec(&f, &a).unwrap();
            assert!(freivalds_check(&f, &z, &v, &a, &y).unwrap());
        }
    }

    #[test]
    fn single_check_pass_rate_near_inverse_p() {
        // ỹ = W·a + e_0; Z uniform per trial. Pass iff Z[0][0] == 0: rate 1/101.
        let f = PrimeField::new(101).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = FieldMatrix::random(&f, 3, 3, &mut rng);
        let a = random_vector(&f, 3, &mut rng);
        let mut y = w.matvec(&f, &a).unwrap();
        y[0] = f.add(y[0], 1);
        let trials = 50_000u32;
        let mut passes = 0u32;
        for _ in 0..trials {
            let z = FieldMatrix::random(&f, 1, 3, &mut rng);
            let v = z.matmul(&f, &w).unwrap();
            passes += freivalds_check(&f, &z, &v, &a, &y).unwrap() as u32;
        }
        let q = 1.0 / 101.0;
        let se = libm::sqrt(q * (1.0 - q) / trials as f64);
        let rate = passes as f64 / trials as f64;
        assert!(libm::fabs(rate - q) <= 3.0 * se, "rate {rate}");
    }

    #[test]
    fn shape_mismatch() {
        let f = PrimeField::new(101).unwrap();
        let z = FieldMatrix::zeros(2, 3);
        let v = FieldMatrix::zeros(2, 4);
        assert_eq!(freivalds_check(&f, &z, &v, &[0; 3], &[0; 3]), Err(ProtocolError::CheckShape));
    }
}
