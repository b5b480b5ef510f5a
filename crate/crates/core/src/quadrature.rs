//! Quadrature on the reference triangle and on segments.

use alloc::vec::Vec;
use core::fmt;

use crate::math::sqrt;

/// Symmetric triangle rule: barycentric points with weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub degree: u32,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UnsupportedDegree(pub u32);

impl fmt::Display for UnsupportedDegree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "no triangle rule of degree {} (supported: 1 to 7)", self.0)
    }
}

impl core::error::Error for UnsupportedDegree {}

impl QuadratureRule {
    /// Smallest tabulated rule that integrates polynomials of `degree` exactly.
    pub fn triangle(degree: u32) -> Result<Self, UnsupportedDegree> {
        let mut rule = QuadratureRule { degree, points: Vec::new(), weights: Vec::new() };
        match degree {
            0 | 1 => rule.centroid(1.0),
            2 => rule.orbit3(2.0 / 3.0, 1.0 / 3.0),
            3 | 4 => {
                rule.orbit3(0.108_103_018_168_070, 0.223_381_589_678_011);
                rule.orbit3(0.816_847_572_980_459, 0.109_951_743_655_322);
            }
            5 => {
                let s = sqrt(15.0);
                rule.centroid(9.0 / 40.0);
                rule.orbit3((9.0 - 2.0 * s) / 21.0, (155.0 + s) / 1200.0);
                rule.orbit3((9.0 + 2.0 * s) / 21.0, (155.0 - s) / 1200.0);
            }
            6 => {
                rule.orbit3(0.501_426_509_658_179, 0.116_786_275_726_379);
                rule.orbit3(0.873_821_971_016_996, 0.050_844_906_370_207);
                rule.orbit6(0.053_145_049_844_817, 0.310_352_451_033_784, 0.082_851_075_618_374);
            }
            7 => {
                rule.centroid(-0.149_570_044_467_682);
                rule.orbit3(0.479_308_067_841_920, 0.175_615_257_433_208);
                rule.orbit3(0.869_739_794_195_568, 0.053_347_235_608_838);
                rule.orbit6(0.048_690_315_425_316, 0.312_865_496_004_874, 0.077_113_760_890_257);
            }
            d => return Err(UnsupportedDegree(d)),
        }
        rule.degree = degree.max(1);
        Ok(rule)
    }

    fn centroid(&mut self, w: f64) {
        self.points.push([1.0 / 3.0; 3]);
        self.weights.push(w);
    }

    /// The three points `(a, b, b)` with `b = (1 - a) / 2`.
    fn orbit3(&mut self, a: f64, w: f64) {
        let b = 0.5 * (1.0 - a);
        for p in [[a, b, b], [b, a, b], [b, b, a]] {
            self.points.push(p);
            self.weights.push(w);
        }
    }

    /// The six permutations of `(a, b, 1 - a - b)`.
    fn orbit6(&mut self, a: f64, b: f64, w: f64) {
        let c = 1.0 - a - b;
        for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
            self.points.push(p);
            self.weights.push(w);
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Three-point Gauss-Legendre rule on `[0, 1]`: `(abscissa, weight)` pairs.
pub fn gauss3_unit() -> [(f64, f64); 3] {
    let d = 0.5 * sqrt(0.6);
    [(0.5 - d, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + d, 5.0 / 18.0)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::powi;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    #[test]
    fn triangle_rules_are_exact() {
        for degree in 1..=7 {
            let rule = QuadratureRule::triangle(degree).unwrap();
            let sum: f64 = rule.weights.iter().sum();
            assert!((sum - 1.0).abs() < 1e-14, "degree {degree}");
            for a in 0..=degree {
                for b in 0..=degree - a {
                    // mean of x^a y^b over the reference triangle
                    let exact = 2.0 * factorial(a) * factorial(b) / factorial(a + b + 2);
                    let q: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(p, w)| w * powi(p[1], a as i32) * powi(p[2], b as i32))
                        .sum();
                    assert!((q - exact).abs() < 1e-13, "degree {degree}, x^{a} y^{b}: {q} vs {exact}");
                }
            }
        }
        assert_eq!(QuadratureRule::triangle(4).unwrap().len(), 6);
        assert_eq!(QuadratureRule::triangle(8), Err(UnsupportedDegree(8)));
    }

    #[test]
    fn gauss_rule_integrates_quintics() {
        for k in 0..=5 {
            let q: f64 = gauss3_unit().iter().map(|(x, w)| w * powi(*x, k)).sum();
            assert!((q - 1.0 / (k as f64 + 1.0)).abs() < 1e-15);
        }
    }
}
