//! Complementary error function and the chi-square survival function for
//! one degree of freedom, generic over the float type.

use num_traits::Float;

fn lit<T: Float>(v: f64) -> T {
    T::from(v).expect("literal representable in target float")
}

const MAX_TERMS: usize = 500;

/// Complementary error function.
///
/// Uses the positive-term series `erf(x) = 2/sqrt(pi) e^{-x^2} sum 2^n x^{2n+1} / (2n+1)!!`
/// below 2 and a Lentz-evaluated continued fraction above.
pub fn erfc<T: Float>(x: T) -> T {
    if x.is_nan() {
        return x;
    }
    if x < T::zero() {
        return lit::<T>(2.0) - erfc(-x);
    }
    let two = lit::<T>(2.0);
    let inv_sqrt_pi = lit::<T>(std::f64::consts::FRAC_2_SQRT_PI) / two;
    if x < two {
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        for n in 1..MAX_TERMS {
            term = term * two * x2 / lit::<T>((2 * n + 1) as f64);
            sum = sum + term;
            if term <= sum * T::epsilon() {
                break;
            }
        }
        T::one() - two * inv_sqrt_pi * (-x2).exp() * sum
    } else {
        // erfc(x) = e^{-x^2}/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
        let tiny = T::min_positive_value() / T::epsilon();
        let mut f = x;
        let mut c = x;
        let mut d = T::zero();
        for n in 1..MAX_TERMS {
            let a = lit::<T>(n as f64 / 2.0);
            d = x + a * d;
            if d.abs() < tiny {
                d = tiny;
            }
            c = x + a / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = d.recip();
            let delta = c * d;
            f = f * delta;
            if (delta - T::one()).abs() <= T::epsilon() {
                break;
            }
        }
        inv_sqrt_pi * (-x * x).exp() / f
    }
}

/// Upper tail probability of the chi-square distribution with one degree
/// of freedom: `erfc(sqrt(x / 2))`.
pub fn chi_square_sf_df1<T: Float>(x: T) -> T {
    if x <= T::zero() {
        return T::one();
    }
    erfc((x / lit::<T>(2.0)).sqrt()).max(T::zero()).min(T::one())
}
