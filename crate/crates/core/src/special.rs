//! Complex exponential integral, used for algebraic frequency tails.

use num_complex::Complex64;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// e^z·E₁(z) on the principal branch, for z away from the negative real axis.
pub fn scaled_e1(z: Complex64) -> Complex64 {
    if z.norm() <= 1.5 {
        z.exp() * e1_series(z)
    } else {
        e1_continued_fraction(z)
    }
}

/// E₁(z).
pub fn e1(z: Complex64) -> Complex64 {
    if z.norm() <= 1.5 {
        e1_series(z)
    } else {
        e1_continued_fraction(z) * (-z).exp()
    }
}

fn e1_series(z: Complex64) -> Complex64 {
    let mut sum = Complex64::new(0.0, 0.0);
    let mut term = Complex64::new(1.0, 0.0);
    for k in 1..200 {
        term *= -z / k as f64;
        let add = term / k as f64;
        sum += add;
        if add.norm() < 1e-17 * sum.norm().max(1e-300) {
            break;
        }
    }
    -EULER_GAMMA - z.ln() - sum
}

// Modified Lentz evaluation of e^z E₁(z) = 1/(z+1− 1/(z+3− 4/(z+5− …))).
fn e1_continued_fraction(z: Complex64) -> Complex64 {
    let tiny = 1e-300;
    let mut b = z + 1.0;
    let mut c = Complex64::new(1.0 / tiny, 0.0);
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let a = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (a * d + b);
        c = b + a / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).norm() < 1e-16 {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        let v = e1(Complex64::new(1.0, 0.0));
        assert!((v.re - 0.219_383_934_395_520_3).abs() < 1e-14 && v.im.abs() < 1e-15);
        // E1(ix) = −Ci(x) + i(Si(x) − π/2)
        let v = e1(Complex64::new(0.0, 1.0));
        assert!((v.re + 0.337_403_922_900_968_1).abs() < 1e-13);
        assert!((v.im + 0.624_713_256_427_713_6).abs() < 1e-13);
        let v = e1(Complex64::new(0.0, 10.0));
        // Ci(10) = −0.0454564330044554, Si(10) = 1.658347594218874
        assert!((v.re - 0.045_456_433_004_455_4).abs() < 1e-13);
        assert!((v.im - (1.658_347_594_218_874 - std::f64::consts::FRAC_PI_2)).abs() < 1e-13);
    }

    #[test]
    fn branches_agree_at_switch_radius() {
        for k in 0..16 {
            let th = -1.9 + 3.8 * k as f64 / 15.0;
            let z = Complex64::from_polar(1.5, th);
            let a = z.exp() * e1_series(z);
            let b = e1_continued_fraction(z);
            assert!((a - b).norm() < 1e-12 * a.norm(), "{z}");
        }
    }
}
