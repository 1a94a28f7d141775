use std::sync::OnceLock;

use super::GroundingError;
use crate::perception::Vec3;

/// The 26 nonzero sign patterns `(a, b, c)`, `a, b, c ∈ {-1, 0, 1}`, in
/// lexicographic order.
pub fn codebook() -> &'static [[i8; 3]; 26] {
    static CODES: OnceLock<[[i8; 3]; 26]> = OnceLock::new();
    CODES.get_or_init(|| {
        let mut out = [[0i8; 3]; 26];
        let mut n = 0;
        for a in -1..=1 {
            for b in -1..=1 {
                for c in -1..=1 {
                    if (a, b, c) != (0, 0, 0) {
                        out[n] = [a, b, c];
                        n += 1;
                    }
                }
            }
        }
        out
    })
}

pub fn code_vector(code: [i8; 3]) -> Vec3 {
    Vec3::new(code[0] as f64, code[1] as f64, code[2] as f64).normalize()
}

/// The codebook entry closest in angle to `v`; ties go to the
/// lexicographically smallest code.
pub fn quantize_code(v: &Vec3) -> Result<[i8; 3], GroundingError> {
    let norm = v.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(GroundingError::ZeroVector);
    }
    let u = v / norm;
    let mut best = codebook()[0];
    let mut best_dot = f64::NEG_INFINITY;
    for &code in codebook() {
        let d = u.dot(&code_vector(code));
        if d > best_dot {
            best = code;
            best_dot = d;
        }
    }
    Ok(best)
}

/// Normalized member of the 26-direction codebook nearest to `v`.
pub fn quantize_direction(v: &Vec3) -> Result<Vec3, GroundingError> {
    quantize_code(v).map(code_vector)
}
