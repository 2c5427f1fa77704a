//! Log-convexity check for harmonic functions: the sup of a harmonic
//! polynomial over three concentric balls must satisfy
//! `M(ρ₂) ≤ M(ρ₁)^τ · M(ρ₃)^{1−τ}` with `τ = log(ρ₃/ρ₂) / log(ρ₃/ρ₁)`.

use nalgebra::Point3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DtnError;
use crate::fem::FemError;

/// Outcome of a batch of randomized log-convexity trials.
#[derive(Clone, Copy, Debug)]
pub struct ThreeSpheresReport {
    pub trials: usize,
    /// Trials whose middle-ball sup exceeded the interpolated bound by more
    /// than the sampling tolerance.
    pub violations: usize,
    /// Largest observed `M(ρ₂) / (M(ρ₁)^τ · M(ρ₃)^{1−τ})`; equality cases
    /// (homogeneous polynomials) sit at 1.
    pub worst_ratio: f64,
    /// Interpolation exponent fixed by the radii.
    pub tau: f64,
}

/// Real solid harmonic of degree `l` and order `m` (`|m| ≤ l`) at `p`:
/// a degree-`l` harmonic polynomial, orthonormalized over the unit sphere.
/// Nonnegative `m` selects the cosine sector, negative the sine sector.
///
/// The zonal factor follows the ascending-degree Legendre recurrence with
/// the azimuthal factor split off as `Re/Im[(x + iy)^{|m|}]`, so the value
/// is a pure polynomial evaluation with no pole-axis special cases.
pub fn solid_harmonic(l: u32, m: i32, p: Point3<f64>) -> f64 {
    assert!(m.unsigned_abs() <= l, "order |{m}| exceeds degree {l}");
    let am = m.unsigned_abs();
    let (x, y, z) = (p.x, p.y, p.z);
    let r2 = x * x + y * y + z * z;

    // ρ^m cos(mφ) and ρ^m sin(mφ) by complex powers of (x + iy).
    let (mut c, mut s) = (1.0, 0.0);
    for _ in 0..am {
        let (nc, ns) = (c * x - s * y, c * y + s * x);
        c = nc;
        s = ns;
    }
    let azimuth = if m >= 0 { c } else { s };

    // T_l = r^{l−m} P_l^m(z/r) / (1 − (z/r)²)^{m/2}: polynomial zonal part.
    let mut double_factorial = 1.0;
    for i in 1..=am {
        double_factorial *= (2 * i - 1) as f64;
    }
    let parity = if am.is_multiple_of(2) { 1.0 } else { -1.0 };
    let seed = parity * double_factorial;
    let zonal = if l == am {
        seed
    } else {
        let mut prev = seed;
        let mut cur = (2.0 * f64::from(am) + 1.0) * z * prev;
        for ll in (am + 2)..=l {
            let next = ((2.0 * f64::from(ll) - 1.0) * z * cur
                - f64::from(ll - 1 + am) * r2 * prev)
                / f64::from(ll - am);
            prev = cur;
            cur = next;
        }
        cur
    };

    // Orthonormal scaling over the unit sphere; sectors carry the extra √2.
    let mut ratio = 1.0; // (l − m)! / (l + m)!
    for i in (l - am + 1)..=(l + am) {
        ratio /= f64::from(i);
    }
    let mut norm = ((2.0 * f64::from(l) + 1.0) / (4.0 * std::f64::consts::PI) * ratio).sqrt();
    if m != 0 {
        norm *= std::f64::consts::SQRT_2;
    }
    norm * zonal * azimuth
}

/// Golden-angle spiral directions: a deterministic, nearly uniform covering
/// of the unit sphere.
fn spiral_directions(count: usize) -> Vec<Point3<f64>> {
    let golden_angle = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden_angle * i as f64;
            Point3::new(rho * phi.cos(), rho * phi.sin(), z)
        })
        .collect()
}

/// All degree/order pairs up to `max_degree`, in a fixed order.
fn basis_indices(max_degree: u32) -> Vec<(u32, i32)> {
    let mut idx = Vec::new();
    for l in 0..=max_degree {
        for m in -(l as i32)..=(l as i32) {
            idx.push((l, m));
        }
    }
    idx
}

/// Runs `trials` random harmonic polynomials of degree ≤ 5 through the
/// three-ball log-convexity bound with sup norms estimated on dense sphere
/// samplings (`samples` directions, shared by the three spheres so that
/// homogeneous equality cases are preserved exactly under sampling).
///
/// A trial counts as a violation when the middle sup exceeds the
/// interpolated bound by more than the relative `tolerance`, which covers
/// the sup-estimation deficit of the sampling.
pub fn three_spheres_trials(
    trials: usize,
    seed: u64,
    radii: [f64; 3],
    samples: usize,
    tolerance: f64,
) -> Result<ThreeSpheresReport, DtnError> {
    let [r1, r2, r3] = radii;
    if !(r1.is_finite() && r1 > 0.0 && r1 < r2 && r2 < r3) || !r3.is_finite() {
        return Err(DtnError::Fem(FemError::BadDomain(format!(
            "radii must be finite and strictly increasing; got {radii:?}"
        ))));
    }
    if samples < 16 {
        return Err(DtnError::Fem(FemError::BadDomain(format!(
            "sup estimation needs a dense sampling; got {samples} directions"
        ))));
    }
    let tau = (r3 / r2).ln() / (r3 / r1).ln();

    let indices = basis_indices(5);
    let directions = spiral_directions(samples);
    // Basis values at every sample of every sphere, evaluated once.
    let tables: Vec<Vec<f64>> = radii
        .iter()
        .map(|&r| {
            let mut table = Vec::with_capacity(samples * indices.len());
            for d in &directions {
                let p = Point3::new(r * d.x, r * d.y, r * d.z);
                for &(l, m) in &indices {
                    table.push(solid_harmonic(l, m, p));
                }
            }
            table
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst_ratio = 0.0f64;
    for _ in 0..trials {
        let coeffs: Vec<f64> = (0..indices.len())
            .map(|_| rng.gen_range(-1.0..=1.0))
            .collect();
        let sups: Vec<f64> = tables
            .iter()
            .map(|table| {
                table
                    .chunks_exact(indices.len())
                    .map(|row| {
                        row.iter()
                            .zip(&coeffs)
                            .map(|(b, c)| b * c)
                            .sum::<f64>()
                            .abs()
                    })
                    .fold(0.0f64, f64::max)
            })
            .collect();
        let bound = sups[0].powf(tau) * sups[2].powf(1.0 - tau);
        let ratio = sups[1] / bound;
        worst_ratio = worst_ratio.max(ratio);
        if ratio > 1.0 + tolerance {
            violations += 1;
        }
    }
    Ok(ThreeSpheresReport {
        trials,
        violations,
        worst_ratio,
        tau,
    })
}
