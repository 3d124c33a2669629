#![allow(dead_code)]

use pvb::{Image, OperatorSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
    Image::from_fn(w, h, |_, _| rng.random_range(0.0..1.0)).unwrap()
}

pub fn random_spec(rng: &mut ChaCha8Rng, d: usize) -> OperatorSpec {
    OperatorSpec::new(
        (1..=d)
            .map(|h| {
                (0..1 << (2 * h))
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect()
            })
            .collect(),
    )
    .unwrap()
}

/// Random first-order `[1, s; t, 1]` with |s|, |t| ≤ 0.5 (inverse entries ≤ 4/3).
pub fn random_shear(rng: &mut ChaCha8Rng) -> OperatorSpec {
    OperatorSpec::first_order(
        1.0,
        rng.random_range(-0.5..0.5),
        rng.random_range(-0.5..0.5),
        1.0,
    )
    .unwrap()
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Disk of value 0.8 on a 0.2 background, radius 0.3·n, centred.
pub fn disk(n: usize) -> Image {
    let c = (n as f64 - 1.0) / 2.0;
    let r = 0.3 * n as f64;
    Image::from_fn(n, n, |x, y| {
        if (x as f64 - c).powi(2) + (y as f64 - c).powi(2) <= r * r {
            0.8
        } else {
            0.2
        }
    })
    .unwrap()
}

pub fn add_noise(img: &Image, sigma: f64, seed: u64) -> Image {
    let mut rng = rng(seed);
    let noise = Image::from_fn(img.width(), img.height(), |_, _| gaussian(&mut rng)).unwrap();
    img.combine(1.0, &noise, sigma).unwrap()
}

/// Smooth image: a low-frequency blend of sines with random phases.
pub fn smooth_image(rng: &mut ChaCha8Rng, n: usize) -> Image {
    let (a, b, c) = (
        rng.random_range(0.0..6.0),
        rng.random_range(0.0..6.0),
        rng.random_range(0.5..2.0),
    );
    Image::from_fn(n, n, |x, y| {
        let (x, y) = (x as f64 / n as f64, y as f64 / n as f64);
        (c * x + a).sin() + 0.5 * (c * y + b).cos() + x * y
    })
    .unwrap()
}
