//! Sinusoidal positional encoding.
//!
//! Layout for a point `p` and `L` frequencies:
//! `[p_x, p_y, p_z]` (when the raw input is included), then for
//! `k = 0..L`: `sin(2ᵏπ p_x), sin(2ᵏπ p_y), sin(2ᵏπ p_z), cos(2ᵏπ p_x),
//! cos(2ᵏπ p_y), cos(2ᵏπ p_z)`.
//!
//! Only the base frequency is evaluated with `sin`/`cos`; higher octaves use
//! the double-angle recurrence, which agrees with direct evaluation to a few
//! ulps per octave.

use std::f64::consts::PI;

use crate::scene::Vec3;

pub fn encoded_len(num_freqs: usize, include_input: bool) -> usize {
    6 * num_freqs + if include_input { 3 } else { 0 }
}

pub fn positional_encode(p: &Vec3, num_freqs: usize, include_input: bool) -> Vec<f64> {
    let mut out = Vec::with_capacity(encoded_len(num_freqs, include_input));
    encode_into(p, 1.0, num_freqs, include_input, &mut out);
    out
}

/// Appends the encoding of `scale · p` to `out`.
pub fn encode_into(
    p: &Vec3,
    scale: f64,
    num_freqs: usize,
    include_input: bool,
    out: &mut Vec<f64>,
) {
    let q = [p.x * scale, p.y * scale, p.z * scale];
    if include_input {
        out.extend_from_slice(&q);
    }
    if num_freqs == 0 {
        return;
    }
    let mut s = [0.0; 3];
    let mut c = [0.0; 3];
    for i in 0..3 {
        let (si, ci) = (PI * q[i]).sin_cos();
        s[i] = si;
        c[i] = ci;
    }
    for k in 0..num_freqs {
        if k > 0 {
            for i in 0..3 {
                let (si, ci) = (s[i], c[i]);
                s[i] = 2.0 * si * ci;
                c[i] = (ci - si) * (ci + si);
            }
        }
        out.extend_from_slice(&s);
        out.extend_from_slice(&c);
    }
}
