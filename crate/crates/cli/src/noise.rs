//! Seeded Gaussian noise that any language can reproduce.
//!
//! Pixel `i` (row-major) uses the SplitMix64 outputs with counters `2i` and
//! `2i + 1`:
//!
//! ```text
//! z(k)  = mix(seed + (k + 1) · 0x9E3779B97F4A7C15)        (wrapping)
//! mix   = the SplitMix64 finalizer (xor-shift 30/27/31, multipliers
//!         0xBF58476D1CE4E5B9 and 0x94D049BB133111EB)
//! u₁    = ((z(2i) >> 11) + 1) · 2⁻⁵³                       ∈ (0, 1]
//! u₂    = (z(2i+1) >> 11) · 2⁻⁵³                           ∈ [0, 1)
//! n(i)  = √(−2 ln u₁) · cos(2π u₂)
//! ```
//!
//! so `z(0), z(1), …` is exactly the stream of a SplitMix64 generator seeded
//! with `seed`.

use pvb::Image;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn splitmix64(seed: u64, counter: u64) -> u64 {
    mix(seed.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN)))
}

const SCALE: f64 = 1.0 / (1u64 << 53) as f64;

/// Standard normal draw for pixel `index`.
pub fn gaussian(seed: u64, index: u64) -> f64 {
    let u1 = ((splitmix64(seed, 2 * index) >> 11) + 1) as f64 * SCALE;
    let u2 = (splitmix64(seed, 2 * index + 1) >> 11) as f64 * SCALE;
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// `img + sigma·n`, unclamped. `sigma = 0` returns `img` unchanged.
pub fn add_noise(img: &Image, sigma: f64, seed: u64) -> Image {
    if sigma == 0.0 {
        return img.clone();
    }
    let w = img.width();
    Image::from_fn(w, img.height(), |x, y| {
        img.get(x, y) + sigma * gaussian(seed, (y * w + x) as u64)
    })
    .expect("shape preserved")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_stream() {
        // first outputs of SplitMix64 seeded with 1234567
        assert_eq!(splitmix64(1234567, 0), 6457827717110365317);
        assert_eq!(splitmix64(1234567, 1), 3203168211198807973);
        assert_eq!(splitmix64(1234567, 2), 9817491932198370423);
    }

    #[test]
    fn moments() {
        let n = 200_000u64;
        let draws: Vec<f64> = (0..n).map(|i| gaussian(7, i)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.02);
    }
}
