//! Wick-ordered polynomials in a single Gaussian variable.
//!
//! `WickPolynomial { coeffs: q, wick_constant: c }` stands for
//! `Σ_k q_k :φ^k:_c`, where `:φ^n:_c` is generated by
//! `:e^{αφ}:_c = e^{αφ - α²c/2}`. With `c = 0` the coefficients are ordinary
//! monomial coefficients. Coefficients are generic so the combinatorics can be
//! checked exactly over `BigRational`; `f64` is used on the sampling paths.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

use crate::error::{Error, Result};

pub trait Coeff: Clone + Num + FromPrimitive + Debug + PartialEq {}
impl<T: Clone + Num + FromPrimitive + Debug + PartialEq> Coeff for T {}

pub type Rational = BigRational;

pub fn rational(num: i64, den: i64) -> Rational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WickPolynomial<T: Coeff = f64> {
    pub coeffs: Vec<T>,
    pub wick_constant: T,
}

/// `n! / (2^m m! (n-2m)!)`, the number of ways to pick `m` disjoint pairs.
fn pair_count(n: usize, m: usize) -> u128 {
    let mut binom: u128 = 1;
    for i in 0..2 * m {
        binom = binom * (n - i) as u128 / (i + 1) as u128;
    }
    let mut odd: u128 = 1;
    let mut k = 2 * m as i64 - 1;
    while k > 1 {
        odd *= k as u128;
        k -= 2;
    }
    binom * odd
}

fn from_u128<T: Coeff>(v: u128) -> T {
    T::from_u128(v).expect("coefficient representable")
}

fn pow<T: Coeff>(x: &T, k: usize) -> T {
    let mut acc = T::one();
    for _ in 0..k {
        acc = acc * x.clone();
    }
    acc
}

impl<T: Coeff> WickPolynomial<T> {
    pub fn new(coeffs: Vec<T>, wick_constant: T) -> Self {
        let mut p = WickPolynomial { coeffs, wick_constant };
        p.trim();
        p
    }

    pub fn zero() -> Self {
        WickPolynomial {
            coeffs: Vec::new(),
            wick_constant: T::zero(),
        }
    }

    fn trim(&mut self) {
        while self.coeffs.last().is_some_and(|c| c.is_zero()) {
            self.coeffs.pop();
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree; 0 for the zero polynomial.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn leading(&self) -> T {
        self.coeffs.last().cloned().unwrap_or_else(T::zero)
    }

    pub fn coeff(&self, k: usize) -> T {
        self.coeffs.get(k).cloned().unwrap_or_else(T::zero)
    }

    pub fn scale(&self, s: &T) -> Self {
        Self::new(self.coeffs.iter().map(|c| c.clone() * s.clone()).collect(), self.wick_constant.clone())
    }

    /// The same function of `φ` re-expressed against `c_to`:
    /// `:φ^n:_{c₁} = Σ_m n!/(m!(n-2m)!) ((c₂-c₁)/2)^m :φ^{n-2m}:_{c₂}`.
    pub fn reorder(&self, c_to: T) -> Self {
        // n!/(m!(n-2m)!) (Δ/2)^m = pair_count(n, m) Δ^m
        let shift = c_to.clone() - self.wick_constant.clone();
        let mut out = vec![T::zero(); self.coeffs.len()];
        for (n, q) in self.coeffs.iter().enumerate() {
            if q.is_zero() {
                continue;
            }
            for m in 0..=n / 2 {
                let term = from_u128::<T>(pair_count(n, m)) * pow(&shift, m) * q.clone();
                out[n - 2 * m] = out[n - 2 * m].clone() + term;
            }
        }
        Self::new(out, c_to)
    }

    /// Ordinary monomial coefficients.
    pub fn to_monomial(&self) -> Self {
        self.reorder(T::zero())
    }

    /// Evaluates `Σ q_k :x^k:_c` with the recurrence
    /// `:x^{k+1}: = x:x^k: - k c :x^{k-1}:`.
    pub fn eval(&self, x: &T) -> T {
        let mut acc = T::zero();
        let mut prev = T::zero();
        let mut cur = T::one();
        for (k, q) in self.coeffs.iter().enumerate() {
            acc = acc + q.clone() * cur.clone();
            let next = x.clone() * cur.clone() - from_u128::<T>(k as u128) * self.wick_constant.clone() * prev;
            prev = cur;
            cur = next;
        }
        acc
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.wick_constant != other.wick_constant {
            return Err(Error::Domain("polynomials ordered against different constants".into()));
        }
        let n = self.coeffs.len().max(other.coeffs.len());
        Ok(Self::new(
            (0..n).map(|k| self.coeff(k) - other.coeff(k)).collect(),
            self.wick_constant.clone(),
        ))
    }
}

impl<T: Coeff + Signed + ToPrimitive> WickPolynomial<T> {
    /// Even degree with positive leading coefficient, or identically zero.
    pub fn check_bounded_below(&self) -> Result<()> {
        if self.is_zero() {
            return Ok(());
        }
        let lead = self.leading();
        if self.degree() % 2 != 0 || !lead.is_positive() {
            return Err(Error::NotBoundedBelow {
                degree: self.degree(),
                leading: lead.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(())
    }
}

impl WickPolynomial<f64> {
    /// Evaluates at many points with the Wick constant fixed.
    #[inline]
    pub fn eval_f64(&self, x: f64) -> f64 {
        let c = self.wick_constant;
        let mut acc = 0.0;
        let mut prev = 0.0;
        let mut cur = 1.0;
        for (k, q) in self.coeffs.iter().enumerate() {
            acc += q * cur;
            let next = x * cur - k as f64 * c * prev;
            prev = cur;
            cur = next;
        }
        acc
    }

    pub fn from_rational(p: &WickPolynomial<Rational>) -> Self {
        let f = |r: &Rational| r.to_f64().unwrap_or(f64::NAN);
        Self::new(p.coeffs.iter().map(f).collect(), f(&p.wick_constant))
    }

    /// Parses sums of terms `[±][coef][*]x[^k]`, e.g. `"1*x^4+0.5*x^2"`,
    /// `"x^4 - 2x"`, `"3"`. Whitespace is ignored; `φ` and `phi` are accepted
    /// for `x`. The result is ordered against `wick_constant`.
    pub fn parse(text: &str, wick_constant: f64) -> Result<Self> {
        parse_poly(text).map(|c| Self::new(c, wick_constant))
    }
}

/// `:φ^n:_c` expanded in ordinary monomials.
pub fn wick_order<T: Coeff>(n: usize, c: T) -> WickPolynomial<T> {
    let mut coeffs = vec![T::zero(); n + 1];
    coeffs[n] = T::one();
    WickPolynomial::new(coeffs, c).to_monomial()
}

pub fn wick_reorder<T: Coeff>(p: &WickPolynomial<T>, c_to: T) -> WickPolynomial<T> {
    p.reorder(c_to)
}

/// `E[:φ(f)^n:_C :φ(g)^m:_C] = δ_{nm} n! C(f,g)^n`.
pub fn wick_pairing(n: usize, m: usize, c_fg: f64) -> f64 {
    if n != m {
        return 0.0;
    }
    (1..=n).map(|k| k as f64).product::<f64>() * c_fg.powi(n as i32)
}

fn parse_poly(text: &str) -> Result<Vec<f64>> {
    let s: Vec<(usize, char)> = text
        .replace("phi", "x")
        .replace('φ', "x")
        .char_indices()
        .filter(|(_, c)| !c.is_whitespace())
        .collect();
    let err = |pos: usize, msg: &str| Error::Parse { pos, msg: msg.to_string() };
    if s.is_empty() {
        return Err(err(0, "empty polynomial"));
    }
    let mut coeffs: Vec<f64> = Vec::new();
    let mut i = 0;
    let end_pos = text.len();
    while i < s.len() {
        let mut sign = 1.0;
        if s[i].1 == '+' || s[i].1 == '-' {
            if s[i].1 == '-' {
                sign = -1.0;
            }
            i += 1;
        } else if !coeffs.is_empty() || i > 0 {
            return Err(err(s[i].0, "expected '+' or '-'"));
        }
        let start = i;
        while i < s.len() && (s[i].1.is_ascii_digit() || s[i].1 == '.' || s[i].1 == 'e' || s[i].1 == 'E'
            || ((s[i].1 == '+' || s[i].1 == '-') && i > start && matches!(s[i - 1].1, 'e' | 'E')))
        {
            i += 1;
        }
        let number: String = s[start..i].iter().map(|(_, c)| c).collect();
        let coef = if number.is_empty() {
            None
        } else {
            Some(number.parse::<f64>().map_err(|_| err(s[start].0, "invalid number"))?)
        };
        let mut power = 0usize;
        let mut has_star = false;
        if i < s.len() && s[i].1 == '*' {
            if coef.is_none() {
                return Err(err(s[i].0, "'*' without a coefficient"));
            }
            has_star = true;
            i += 1;
        }
        if i < s.len() && s[i].1 == 'x' {
            i += 1;
            power = 1;
            if i < s.len() && s[i].1 == '^' {
                i += 1;
                let ps = i;
                while i < s.len() && s[i].1.is_ascii_digit() {
                    i += 1;
                }
                if ps == i {
                    return Err(err(s.get(ps).map_or(end_pos, |c| c.0), "expected exponent"));
                }
                let digits: String = s[ps..i].iter().map(|(_, c)| c).collect();
                power = digits.parse().map_err(|_| err(s[ps].0, "invalid exponent"))?;
            }
        } else if has_star {
            return Err(err(s.get(i).map_or(end_pos, |c| c.0), "expected 'x' after '*'"));
        } else if coef.is_none() {
            return Err(err(s.get(i).map_or(end_pos, |c| c.0), "expected a number or 'x'"));
        }
        if coeffs.len() <= power {
            coeffs.resize(power + 1, 0.0);
        }
        coeffs[power] += sign * coef.unwrap_or(1.0);
    }
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(err(0, "non-finite coefficient"));
    }
    Ok(coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn r(n: i64) -> Rational {
        rational(n, 1)
    }

    #[test]
    fn low_orders() {
        assert_eq!(wick_order(0, 2.5).coeffs, vec![1.0]);
        assert_eq!(wick_order(2, r(3)).coeffs, vec![r(-3), r(0), r(1)]);
        let c = rational(7, 3);
        let p = wick_order(4, c.clone());
        assert_eq!(p.coeffs, vec![r(3) * c.clone() * c.clone(), r(0), r(-6) * c, r(0), r(1)]);
    }

    #[test]
    fn generating_series_oracle() {
        // Coefficient of α^n in e^{αx - α²c/2} times n!, evaluated pointwise.
        let (x, c): (f64, f64) = (0.7, 1.3);
        for n in 0..10usize {
            let mut series = 0.0;
            for m in 0..=n / 2 {
                let k = n - 2 * m;
                let fact = |j: usize| (1..=j).map(|v| v as f64).product::<f64>();
                series += x.powi(k as i32) / fact(k) * (-c / 2.0f64).powi(m as i32) / fact(m);
            }
            series *= (1..=n).map(|v| v as f64).product::<f64>();
            let mut q = vec![0.0; n + 1];
            q[n] = 1.0;
            let p = WickPolynomial::new(q, c);
            assert_abs_diff_eq!(p.eval_f64(x), series, epsilon = 1e-10 * series.abs().max(1.0));
            assert_abs_diff_eq!(wick_order(n, c).eval_f64(x), series, epsilon = 1e-10 * series.abs().max(1.0));
        }
    }

    #[test]
    fn reorder_quadratic() {
        let (c1, c2) = (r(2), rational(5, 2));
        let p = WickPolynomial::new(vec![r(0), r(0), r(1)], c1.clone());
        let q = p.reorder(c2.clone());
        assert_eq!(q.coeffs, vec![c2 - c1, r(0), r(1)]);
        assert_eq!(p.reorder(r(2)), p);
    }

    #[test]
    fn reorder_preserves_values_and_degree() {
        let p = WickPolynomial::new(vec![0.3, -1.0, 0.5, 0.0, 2.0], 0.8);
        let q = p.reorder(1.7);
        assert_eq!(q.degree(), p.degree());
        for x in [-2.0, -0.1, 0.4, 3.0] {
            assert_abs_diff_eq!(p.eval_f64(x), q.eval_f64(x), epsilon = 1e-12);
        }
    }

    #[test]
    fn pairing() {
        assert_eq!(wick_pairing(1, 2, 0.7), 0.0);
        assert_abs_diff_eq!(wick_pairing(2, 2, 0.7), 2.0 * 0.49, epsilon = 1e-15);
        assert_eq!(wick_pairing(0, 0, 0.7), 1.0);
    }

    #[test]
    fn exponential_identity() {
        let (alpha, c): (f64, f64) = (0.5, 1.1);
        let fact = |n: usize| (1..=n).map(|v| v as f64).product::<f64>();
        let coeffs: Vec<f64> = (0..=20).map(|n| alpha.powi(n as i32) / fact(n)).collect();
        let p = WickPolynomial::new(coeffs, c);
        for x in [-1.5, 0.0, 0.3, 2.0] {
            assert_abs_diff_eq!(p.eval_f64(x), (alpha * x - alpha * alpha * c / 2.0).exp(), epsilon = 1e-10);
        }
    }

    #[test]
    fn bounded_below() {
        assert!(WickPolynomial::new(vec![0.0, 0.0, 0.0, 0.0, 0.1], 0.0).check_bounded_below().is_ok());
        assert!(WickPolynomial::new(vec![0.0, 1.0], 0.0).check_bounded_below().is_err());
        assert!(WickPolynomial::new(vec![0.0, 0.0, -1.0], 0.0).check_bounded_below().is_err());
        assert!(WickPolynomial::<f64>::zero().check_bounded_below().is_ok());
    }

    #[test]
    fn parser() {
        let p = WickPolynomial::parse("1*x^4+0.5*x^2", 0.0).unwrap();
        assert_eq!(p.coeffs, vec![0.0, 0.0, 0.5, 0.0, 1.0]);
        let p = WickPolynomial::parse(" -2x + 3 + x^2 - x", 0.0).unwrap();
        assert_eq!(p.coeffs, vec![3.0, -3.0, 1.0]);
        assert_eq!(WickPolynomial::parse("phi^4", 0.0).unwrap().coeffs, vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(WickPolynomial::parse("1e-1*x^2", 0.0).unwrap().coeffs, vec![0.0, 0.0, 0.1]);
        for bad in ["", "x^", "2*", "x^4 x", "1..2x", "+*x"] {
            assert!(matches!(WickPolynomial::parse(bad, 0.0), Err(Error::Parse { .. })), "{bad}");
        }
    }

    proptest! {
        #[test]
        fn rational_round_trip(
            nums in proptest::collection::vec(-50i64..50, 9),
            c1n in 0i64..40, c1d in 1i64..9, c2n in 0i64..40, c2d in 1i64..9,
        ) {
            let p = WickPolynomial::new(nums.into_iter().map(|v| rational(v, 7)).collect(), rational(c1n, c1d));
            let back = p.reorder(rational(c2n, c2d)).reorder(rational(c1n, c1d));
            prop_assert_eq!(&back, &p);
            let q = p.reorder(rational(c2n, c2d));
            prop_assert_eq!(q.degree(), p.degree());
            if c1n * c2d != c2n * c1d && !p.is_zero() && p.degree() >= 1 {
                let diff = q.reorder(p.wick_constant.clone()).sub(&p).unwrap();
                prop_assert!(diff.is_zero());
                let shifted = WickPolynomial::new(q.coeffs.clone(), p.wick_constant.clone()).sub(&p).unwrap();
                prop_assert!(shifted.is_zero() || shifted.degree() + 1 <= p.degree());
            }
        }
    }
}
