// SPDX-License-Identifier: MIT OR Apache-2.0

//! Rotary position embedding, half-split convention: dimension `i` is paired
//! with `i + d/2` and rotated by `pos * theta^(-2i/d)`.

pub fn frequencies(head_dim: usize, theta: f32) -> Vec<f64> {
    let half = head_dim / 2;
    (0..half).map(|i| (theta as f64).powf(-2.0 * i as f64 / head_dim as f64)).collect()
}

/// Rotates `v` in place for position `pos`.
pub fn rotate(v: &mut [f32], pos: usize, theta: f32) {
    let half = v.len() / 2;
    for (i, freq) in frequencies(v.len(), theta).into_iter().enumerate() {
        let angle = pos as f64 * freq;
        let (sin, cos) = angle.sin_cos();
        let (a, b) = (v[i] as f64, v[i + half] as f64);
        v[i] = (a * cos - b * sin) as f32;
        v[i + half] = (a * sin + b * cos) as f32;
    }
}

pub fn rotated(v: &[f32], pos: usize, theta: f32) -> Vec<f32> {
    let mut out = v.to_vec();
    rotate(&mut out, pos, theta);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn position_zero_is_identity() {
        let v = vec![0.3, -1.0, 2.0, 0.5];
        assert_eq!(rotated(&v, 0, 10_000.0), v);
    }

    #[test]
    fn rotation_preserves_norm() {
        let v = vec![0.3, -1.0, 2.0, 0.5, 1.5, -0.25];
        let r = rotated(&v, 17, 10_000.0);
        let n = |x: &[f32]| x.iter().map(|a| a * a).sum::<f32>();
        assert!((n(&v) - n(&r)).abs() < 1e-5);
    }

    #[test]
    fn first_pair_turns_by_position() {
        let r = rotated(&[1.0, 0.0], 1, 10_000.0);
        assert!((r[0] - 1f32.cos()).abs() < 1e-6 && (r[1] - 1f32.sin()).abs() < 1e-6);
    }
}
