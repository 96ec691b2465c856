//! Quadrature on triangles in barycentric coordinates, weights normalized
//! to sum to one (multiply by the element area).

#![allow(clippy::excessive_precision)]

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

fn orbit3(a: f64, w: f64, out: &mut Vec<([f64; 3], f64)>) {
    let b = 1.0 - 2.0 * a;
    out.push(([b, a, a], w));
    out.push(([a, b, a], w));
    out.push(([a, a, b], w));
}

fn orbit6(a: f64, b: f64, w: f64, out: &mut Vec<([f64; 3], f64)>) {
    let c = 1.0 - a - b;
    for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
        out.push((p, w));
    }
}

impl QuadratureRule {
    fn from_pairs(pairs: Vec<([f64; 3], f64)>, degree: usize) -> QuadratureRule {
        let (points, weights) = pairs.into_iter().unzip();
        QuadratureRule { points, weights, degree }
    }

    /// Centroid rule.
    pub fn degree1() -> QuadratureRule {
        QuadratureRule { points: vec![[1.0 / 3.0; 3]], weights: vec![1.0], degree: 1 }
    }

    pub fn degree2() -> QuadratureRule {
        let mut p = Vec::new();
        orbit3(1.0 / 6.0, 1.0 / 3.0, &mut p);
        QuadratureRule::from_pairs(p, 2)
    }

    /// 6-point symmetric rule.
    pub fn degree4() -> QuadratureRule {
        let mut p = Vec::new();
        orbit3(0.445_948_490_915_964_886_32, 0.223_381_589_678_011_465_7, &mut p);
        orbit3(0.091_576_213_509_770_743_46, 0.109_951_743_655_321_867_64, &mut p);
        QuadratureRule::from_pairs(p, 4)
    }

    /// 12-point symmetric rule.
    pub fn degree6() -> QuadratureRule {
        let mut p = Vec::new();
        orbit3(0.249_286_745_170_910_421_29, 0.116_786_275_726_379_366_03, &mut p);
        orbit3(0.063_089_014_491_502_228_34, 0.050_844_906_370_206_816_921, &mut p);
        orbit6(0.053_145_049_844_816_947_353, 0.310_352_451_033_784_405_42, 0.082_851_075_618_373_575_194, &mut p);
        QuadratureRule::from_pairs(p, 6)
    }

    /// Collapsed Gauss–Legendre product rule exact to any requested degree.
    pub fn collapsed(degree: usize) -> QuadratureRule {
        // the collapsed direction carries one extra power from the Jacobian
        let k = (degree + 3) / 2;
        let (x, w) = gauss_legendre(k);
        let mut points = Vec::with_capacity(k * k);
        let mut weights = Vec::with_capacity(k * k);
        for i in 0..k {
            // s in (0,1) along the collapsed direction
            let s = 0.5 * (x[i] + 1.0);
            let ws = 0.5 * w[i];
            for j in 0..k {
                let t = 0.5 * (x[j] + 1.0);
                let wt = 0.5 * w[j];
                let (px, py) = (s, t * (1.0 - s));
                points.push([1.0 - px - py, px, py]);
                // Jacobian (1 − s), normalized by the reference area 1/2
                weights.push(2.0 * ws * wt * (1.0 - s));
            }
        }
        QuadratureRule { points, weights, degree }
    }

    /// Smallest built-in rule of at least the requested degree.
    pub fn for_degree(degree: usize) -> QuadratureRule {
        match degree {
            0 | 1 => QuadratureRule::degree1(),
            2 => QuadratureRule::degree2(),
            3 | 4 => QuadratureRule::degree4(),
            5 | 6 => QuadratureRule::degree6(),
            d => QuadratureRule::collapsed(d),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ([f64; 3], f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    /// Integral of `x^a y^b` over the reference triangle.
    fn monomial_integral(a: usize, b: usize) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    fn check(rule: &QuadratureRule) {
        let sum: f64 = rule.weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-14, "weights sum {sum}");
        for a in 0..=rule.degree {
            for b in 0..=rule.degree - a {
                let q: f64 = 0.5 * rule.iter().map(|(p, w)| w * p[1].powi(a as i32) * p[2].powi(b as i32)).sum::<f64>();
                let err = (q - monomial_integral(a, b)).abs();
                assert!(err <= 1e-14, "degree {} rule fails on x^{a} y^{b}: {err:e}", rule.degree);
            }
        }
    }

    #[test]
    fn rules_are_exact_on_their_monomials() {
        for rule in [
            QuadratureRule::degree1(),
            QuadratureRule::degree2(),
            QuadratureRule::degree4(),
            QuadratureRule::degree6(),
        ] {
            check(&rule);
        }
        for d in 0..=14 {
            check(&QuadratureRule::collapsed(d));
            check(&QuadratureRule::for_degree(d));
        }
    }

    #[test]
    fn gauss_legendre_weights() {
        let (x, w) = gauss_legendre(5);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-15);
        let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((m4 - 2.0 / 9.0).abs() < 1e-15);
    }
}
