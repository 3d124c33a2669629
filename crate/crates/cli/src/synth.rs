//! Synthetic test images on an `n × n` grid with centre `c = (n − 1)/2`.
//!
//! - `disk`: 0.8 where `(x − c)² + (y − c)² ≤ (0.3n)²`, else 0.2.
//! - `squares`: 0.2 background, 0.9 on `[n/8, 3n/8)²`, 0.5 on `[n/2, 7n/8)²`
//!   (integer division).
//! - `ramp`: `x / (n − 1)`.

use std::fmt;
use std::str::FromStr;

use pvb::Image;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    Disk,
    Squares,
    Ramp,
}

impl FromStr for SynthKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "disk" => Ok(SynthKind::Disk),
            "squares" => Ok(SynthKind::Squares),
            "ramp" => Ok(SynthKind::Ramp),
            other => Err(format!(
                "unknown image kind `{other}` (disk, squares, ramp)"
            )),
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthKind::Disk => "disk",
            SynthKind::Squares => "squares",
            SynthKind::Ramp => "ramp",
        })
    }
}

pub fn synthesize(kind: SynthKind, n: usize) -> pvb::Result<Image> {
    let c = (n as f64 - 1.0) / 2.0;
    match kind {
        SynthKind::Disk => {
            let r2 = (0.3 * n as f64).powi(2);
            Image::from_fn(n, n, |x, y| {
                let (dx, dy) = (x as f64 - c, y as f64 - c);
                if dx * dx + dy * dy <= r2 {
                    0.8
                } else {
                    0.2
                }
            })
        }
        SynthKind::Squares => {
            let inside = |v: usize, lo: usize, hi: usize| v >= lo && v < hi;
            Image::from_fn(n, n, |x, y| {
                if inside(x, n / 8, 3 * n / 8) && inside(y, n / 8, 3 * n / 8) {
                    0.9
                } else if inside(x, n / 2, 7 * n / 8) && inside(y, n / 2, 7 * n / 8) {
                    0.5
                } else {
                    0.2
                }
            })
        }
        SynthKind::Ramp => {
            let scale = if n > 1 { 1.0 / (n as f64 - 1.0) } else { 0.0 };
            Image::from_fn(n, n, |x, _| x as f64 * scale)
        }
    }
}
