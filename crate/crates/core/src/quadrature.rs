//! Six-point symmetric triangle rule, exact for polynomials of degree 4.

/// Barycentric nodes.
pub const NODES: [[f64; 3]; 6] = [
    [0.108103018168070, 0.445948490915965, 0.445948490915965],
    [0.445948490915965, 0.108103018168070, 0.445948490915965],
    [0.445948490915965, 0.445948490915965, 0.108103018168070],
    [0.816847572980459, 0.091576213509771, 0.091576213509771],
    [0.091576213509771, 0.816847572980459, 0.091576213509771],
    [0.091576213509771, 0.091576213509771, 0.816847572980459],
];

/// Weights summing to one (multiply by the triangle area).
pub const WEIGHTS: [f64; 6] = [
    0.223381589678011,
    0.223381589678011,
    0.223381589678011,
    0.109951743655322,
    0.109951743655322,
    0.109951743655322,
];

pub const N: usize = 6;

#[cfg(test)]
mod tests {
    use super::*;

    fn integrate(f: impl Fn(f64, f64) -> f64) -> f64 {
        // reference triangle (0,0), (1,0), (0,1), area 1/2
        NODES
            .iter()
            .zip(WEIGHTS)
            .map(|(l, w)| w * 0.5 * f(l[1], l[2]))
            .sum()
    }

    fn monomial_exact(p: u32, q: u32) -> f64 {
        // ∫ x^p y^q over the reference triangle = p! q! / (p+q+2)!
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        fact(p) * fact(q) / fact(p + q + 2)
    }

    #[test]
    fn weights_sum_to_one() {
        let s: f64 = WEIGHTS.iter().sum();
        assert!((s - 1.0).abs() < 1e-14);
        for l in NODES {
            assert!((l.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_through_degree_four() {
        for p in 0..=4 {
            for q in 0..=(4 - p) {
                let got = integrate(|x, y| x.powi(p as i32) * y.powi(q as i32));
                assert!((got - monomial_exact(p, q)).abs() < 1e-13, "x^{p} y^{q}");
            }
        }
    }
}
