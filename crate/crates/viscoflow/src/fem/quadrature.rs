//! Quadrature on the reference triangle and on edges.
//!
//! Triangle rules are symmetric with positive weights summing to the
//! reference area 1/2. Requested degrees 1..=6 are supported; degree 3 is
//! served by the 6-point degree-4 rule because the classical 4-point rule
//! has a negative centroid weight.

use crate::error::{Error, Result};

/// A quadrature rule on the reference triangle `{(0,0), (1,0), (0,1)}`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    /// Barycentric coordinates of the points.
    pub points: Vec<[f64; 3]>,
    /// Weights, summing to 1/2.
    pub weights: Vec<f64>,
    /// Largest polynomial degree integrated exactly.
    pub degree: usize,
}

impl QuadratureRule {
    /// Reference coordinates `(x, y) = (lambda_1, lambda_2)` of point `i`.
    #[inline]
    pub fn ref_point(&self, i: usize) -> [f64; 2] {
        [self.points[i][1], self.points[i][2]]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn perm3(a: f64, b: f64, w: f64, pts: &mut Vec<[f64; 3]>, wts: &mut Vec<f64>) {
    pts.push([a, b, b]);
    pts.push([b, a, b]);
    pts.push([b, b, a]);
    wts.extend_from_slice(&[w, w, w]);
}

fn perm6(a: f64, b: f64, c: f64, w: f64, pts: &mut Vec<[f64; 3]>, wts: &mut Vec<f64>) {
    for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
        pts.push(p);
        wts.push(w);
    }
}

/// Symmetric Gauss rule on the reference triangle, exact for polynomials of
/// the requested degree.
pub fn quadrature(degree: usize) -> Result<QuadratureRule> {
    let mut pts = Vec::new();
    let mut wts = Vec::new();
    match degree {
        1 => {
            pts.push([1.0 / 3.0; 3]);
            wts.push(1.0);
        }
        2 => perm3(2.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0, &mut pts, &mut wts),
        3 | 4 => {
            perm3(
                0.108_103_018_168_070_2,
                0.445_948_490_915_964_9,
                0.223_381_589_678_011_5,
                &mut pts,
                &mut wts,
            );
            perm3(
                0.816_847_572_980_458_5,
                0.091_576_213_509_770_74,
                0.109_951_743_655_321_9,
                &mut pts,
                &mut wts,
            );
        }
        5 => {
            let s15 = 15.0_f64.sqrt();
            pts.push([1.0 / 3.0; 3]);
            wts.push(9.0 / 40.0);
            let a1 = (6.0 + s15) / 21.0;
            let a2 = (6.0 - s15) / 21.0;
            perm3(1.0 - 2.0 * a1, a1, (155.0 + s15) / 1200.0, &mut pts, &mut wts);
            perm3(1.0 - 2.0 * a2, a2, (155.0 - s15) / 1200.0, &mut pts, &mut wts);
        }
        6 => {
            perm3(
                0.501_426_509_658_179_2,
                0.249_286_745_170_910_4,
                0.116_786_275_726_379_3,
                &mut pts,
                &mut wts,
            );
            perm3(
                0.873_821_971_016_995_5,
                0.063_089_014_491_502_23,
                0.050_844_906_370_206_82,
                &mut pts,
                &mut wts,
            );
            perm6(
                0.053_145_049_844_816_95,
                0.310_352_451_033_784_4,
                0.636_502_499_121_398_6,
                0.082_851_075_618_373_57,
                &mut pts,
                &mut wts,
            );
        }
        _ => {
            return Err(Error::invalid(format!(
                "unsupported quadrature degree {degree} (expected 1..=6)"
            )))
        }
    }
    // Published weights are normalized to unit total; the reference triangle
    // has area 1/2.
    for w in &mut wts {
        *w *= 0.5;
    }
    Ok(QuadratureRule { points: pts, weights: wts, degree })
}

/// Gauss-Legendre nodes and weights on `[0, 1]`, exact for degree `2n - 1`.
pub fn gauss_legendre_unit(n: usize) -> Result<Vec<(f64, f64)>> {
    let half = 0.5;
    let rule: Vec<(f64, f64)> = match n {
        1 => vec![(0.0, 2.0)],
        2 => {
            let x = 1.0 / 3.0_f64.sqrt();
            vec![(-x, 1.0), (x, 1.0)]
        }
        3 => {
            let x = (3.0 / 5.0_f64).sqrt();
            vec![(-x, 5.0 / 9.0), (0.0, 8.0 / 9.0), (x, 5.0 / 9.0)]
        }
        4 => {
            let t = (6.0 / 5.0_f64).sqrt();
            let x1 = (3.0 / 7.0 - 2.0 / 7.0 * t).sqrt();
            let x2 = (3.0 / 7.0 + 2.0 / 7.0 * t).sqrt();
            let s30 = 30.0_f64.sqrt();
            let w1 = (18.0 + s30) / 36.0;
            let w2 = (18.0 - s30) / 36.0;
            vec![(-x2, w2), (-x1, w1), (x1, w1), (x2, w2)]
        }
        5 => {
            let t = (10.0 / 7.0_f64).sqrt();
            let x1 = (5.0 - 2.0 * t).sqrt() / 3.0;
            let x2 = (5.0 + 2.0 * t).sqrt() / 3.0;
            let s70 = 70.0_f64.sqrt();
            let w1 = (322.0 + 13.0 * s70) / 900.0;
            let w2 = (322.0 - 13.0 * s70) / 900.0;
            vec![(-x2, w2), (-x1, w1), (0.0, 128.0 / 225.0), (x1, w1), (x2, w2)]
        }
        _ => {
            return Err(Error::invalid(format!(
                "unsupported edge quadrature order {n} (expected 1..=5)"
            )))
        }
    };
    Ok(rule
        .into_iter()
        .map(|(x, w)| (half * (x + 1.0), half * w))
        .collect())
}
