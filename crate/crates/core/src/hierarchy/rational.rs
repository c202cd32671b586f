//! Exact multivariate polynomials and rational functions over ℚ.
//!
//! Potentials and their derivatives are manipulated exactly; conversion to
//! floating point happens only when a [`CompiledRational`] is built for
//! quadrature.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Exponent vector, one entry per variable.
pub type Exponents = Vec<u32>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polynomial {
    vars: usize,
    terms: BTreeMap<Exponents, BigRational>,
}

impl Polynomial {
    pub fn zero(vars: usize) -> Self {
        Polynomial {
            vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(vars: usize, c: BigRational) -> Self {
        let mut p = Polynomial::zero(vars);
        if !c.is_zero() {
            p.terms.insert(vec![0; vars], c);
        }
        p
    }

    pub fn one(vars: usize) -> Self {
        Polynomial::constant(vars, BigRational::one())
    }

    /// The monomial `x_var`.
    pub fn variable(vars: usize, var: usize) -> Self {
        let mut e = vec![0; vars];
        e[var] = 1;
        let mut p = Polynomial::zero(vars);
        p.terms.insert(e, BigRational::one());
        p
    }

    pub fn vars(&self) -> usize {
        self.vars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, &BigRational)> {
        self.terms.iter()
    }

    /// Constant value if the polynomial has degree 0.
    pub fn as_constant(&self) -> Option<BigRational> {
        match self.terms.len() {
            0 => Some(BigRational::zero()),
            1 => {
                let (e, c) = self.terms.iter().next().unwrap();
                e.iter().all(|&x| x == 0).then(|| c.clone())
            }
            _ => None,
        }
    }

    fn insert_add(&mut self, e: Exponents, c: BigRational) {
        let entry = self
            .terms
            .entry(e.clone())
            .or_insert_with(BigRational::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&e);
        }
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.insert_add(e.clone(), c.clone());
        }
        out
    }

    pub fn neg(&self) -> Polynomial {
        Polynomial {
            vars: self.vars,
            terms: self
                .terms
                .iter()
                .map(|(e, c)| (e.clone(), -c.clone()))
                .collect(),
        }
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.neg())
    }

    pub fn scale(&self, s: &BigRational) -> Polynomial {
        if s.is_zero() {
            return Polynomial::zero(self.vars);
        }
        Polynomial {
            vars: self.vars,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect(),
        }
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = Polynomial::zero(self.vars);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &other.terms {
                let e: Exponents = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                out.insert_add(e, c1 * c2);
            }
        }
        out
    }

    pub fn pow(&self, n: u32) -> Polynomial {
        let mut out = Polynomial::one(self.vars);
        for _ in 0..n {
            out = out.mul(self);
        }
        out
    }

    pub fn derivative(&self, var: usize) -> Polynomial {
        let mut out = Polynomial::zero(self.vars);
        for (e, c) in &self.terms {
            if e[var] == 0 {
                continue;
            }
            let mut e2 = e.clone();
            e2[var] -= 1;
            out.insert_add(e2, c * BigRational::from_integer(BigInt::from(e[var])));
        }
        out
    }

    /// Exchanges two variables.
    pub fn swap_vars(&self, a: usize, b: usize) -> Polynomial {
        Polynomial {
            vars: self.vars,
            terms: self
                .terms
                .iter()
                .map(|(e, c)| {
                    let mut e2 = e.clone();
                    e2.swap(a, b);
                    (e2, c.clone())
                })
                .collect(),
        }
    }

    /// Re-expresses the polynomial over a larger variable set; variable `i`
    /// becomes `map[i]`.
    pub fn remap(&self, vars: usize, map: &[usize]) -> Polynomial {
        let mut out = Polynomial::zero(vars);
        for (e, c) in &self.terms {
            let mut e2 = vec![0; vars];
            for (i, &x) in e.iter().enumerate() {
                e2[map[i]] += x;
            }
            out.insert_add(e2, c.clone());
        }
        out
    }

    /// Variables that actually occur.
    pub fn support(&self) -> Vec<usize> {
        (0..self.vars)
            .filter(|&v| self.terms.keys().any(|e| e[v] > 0))
            .collect()
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                let mono: f64 = e.iter().zip(x).map(|(&k, v)| v.powi(k as i32)).product();
                c.to_f64().unwrap_or(f64::NAN) * mono
            })
            .sum()
    }

    fn fmt_with(&self, names: &[&str]) -> String {
        if self.terms.is_empty() {
            return "0".into();
        }
        let mut parts = Vec::new();
        for (e, c) in &self.terms {
            let mut factors = Vec::new();
            for (i, &k) in e.iter().enumerate() {
                match k {
                    0 => {}
                    1 => factors.push(names[i].to_string()),
                    _ => factors.push(format!("{}^{}", names[i], k)),
                }
            }
            let coef = if c.is_integer() {
                c.numer().to_string()
            } else {
                format!("({}/{})", c.numer(), c.denom())
            };
            if factors.is_empty() {
                parts.push(coef);
            } else if c.is_one() {
                parts.push(factors.join("*"));
            } else if (-c.clone()).is_one() {
                parts.push(format!("-{}", factors.join("*")));
            } else {
                parts.push(format!("{}*{}", coef, factors.join("*")));
            }
        }
        parts.join(" + ").replace("+ -", "- ")
    }
}

/// `numerator / denominator` with a nonzero denominator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalFunction {
    num: Polynomial,
    den: Polynomial,
}

impl RationalFunction {
    pub fn new(num: Polynomial, den: Polynomial) -> Option<Self> {
        if den.is_zero() || num.vars != den.vars {
            return None;
        }
        Some(RationalFunction { num, den }.normalized())
    }

    /// Splits a polynomial in `x_a`, `x_b` as `Σ_j x_b^j Σ_i c_ij x_a^i`.
    /// `None` when the denominator is not constant or other variables occur.
    pub fn separate(&self, a: usize, b: usize) -> Option<Vec<(u32, Vec<(u32, f64)>)>> {
        let den = self.den.as_constant()?.to_f64()?;
        let mut groups: BTreeMap<u32, Vec<(u32, f64)>> = BTreeMap::new();
        for (e, c) in self.num.terms() {
            if e.iter()
                .enumerate()
                .any(|(v, &k)| k != 0 && v != a && v != b)
            {
                return None;
            }
            groups
                .entry(e[b])
                .or_default()
                .push((e[a], c.to_f64()? / den));
        }
        Some(groups.into_iter().collect())
    }

    pub fn from_polynomial(p: Polynomial) -> Self {
        let vars = p.vars;
        RationalFunction {
            num: p,
            den: Polynomial::one(vars),
        }
    }

    pub fn zero(vars: usize) -> Self {
        Self::from_polynomial(Polynomial::zero(vars))
    }

    pub fn constant(vars: usize, c: BigRational) -> Self {
        Self::from_polynomial(Polynomial::constant(vars, c))
    }

    pub fn variable(vars: usize, var: usize) -> Self {
        Self::from_polynomial(Polynomial::variable(vars, var))
    }

    pub fn numerator(&self) -> &Polynomial {
        &self.num
    }

    pub fn denominator(&self) -> &Polynomial {
        &self.den
    }

    pub fn vars(&self) -> usize {
        self.num.vars
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    /// Folds constant denominators into the numerator and makes the
    /// leading denominator coefficient positive.
    fn normalized(self) -> Self {
        if self.num.is_zero() {
            return RationalFunction::zero(self.num.vars);
        }
        if let Some(c) = self.den.as_constant() {
            let inv = c.recip();
            return RationalFunction {
                num: self.num.scale(&inv),
                den: Polynomial::one(self.num.vars),
            };
        }
        let lead = self.den.terms.values().next_back().cloned().unwrap();
        if lead.is_negative() {
            let m = -BigRational::one();
            return RationalFunction {
                num: self.num.scale(&m),
                den: self.den.scale(&m),
            };
        }
        self
    }

    pub fn add(&self, o: &Self) -> Self {
        if self.den == o.den {
            return RationalFunction {
                num: self.num.add(&o.num),
                den: self.den.clone(),
            }
            .normalized();
        }
        RationalFunction {
            num: self.num.mul(&o.den).add(&o.num.mul(&self.den)),
            den: self.den.mul(&o.den),
        }
        .normalized()
    }

    pub fn neg(&self) -> Self {
        RationalFunction {
            num: self.num.neg(),
            den: self.den.clone(),
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }

    pub fn mul(&self, o: &Self) -> Self {
        RationalFunction {
            num: self.num.mul(&o.num),
            den: self.den.mul(&o.den),
        }
        .normalized()
    }

    /// `None` when dividing by the zero function.
    pub fn div(&self, o: &Self) -> Option<Self> {
        RationalFunction::new(self.num.mul(&o.den), self.den.mul(&o.num))
    }

    pub fn scale(&self, s: &BigRational) -> Self {
        RationalFunction {
            num: self.num.scale(s),
            den: self.den.clone(),
        }
        .normalized()
    }

    /// Integer power; negative exponents invert (`None` for 0^−n).
    pub fn powi(&self, n: i64) -> Option<Self> {
        let k = n.unsigned_abs() as u32;
        let p = RationalFunction {
            num: self.num.pow(k),
            den: self.den.pow(k),
        };
        if n >= 0 {
            Some(p.normalized())
        } else {
            RationalFunction::new(p.den, p.num)
        }
    }

    /// Exact partial derivative by the quotient rule.
    pub fn derivative(&self, var: usize) -> Self {
        if self.den.as_constant().is_some() {
            return RationalFunction {
                num: self.num.derivative(var),
                den: self.den.clone(),
            }
            .normalized();
        }
        RationalFunction {
            num: self
                .num
                .derivative(var)
                .mul(&self.den)
                .sub(&self.num.mul(&self.den.derivative(var))),
            den: self.den.mul(&self.den),
        }
        .normalized()
    }

    pub fn swap_vars(&self, a: usize, b: usize) -> Self {
        RationalFunction {
            num: self.num.swap_vars(a, b),
            den: self.den.swap_vars(a, b),
        }
        .normalized()
    }

    pub fn remap(&self, vars: usize, map: &[usize]) -> Self {
        RationalFunction {
            num: self.num.remap(vars, map),
            den: self.den.remap(vars, map),
        }
    }

    /// Exact equality as functions: `a/b == c/d ⇔ a d == c b`.
    pub fn equals(&self, o: &Self) -> bool {
        self.num.mul(&o.den) == o.num.mul(&self.den)
    }

    pub fn support(&self) -> Vec<usize> {
        let mut s = self.num.support();
        for v in self.den.support() {
            if !s.contains(&v) {
                s.push(v);
            }
        }
        s.sort_unstable();
        s
    }

    pub fn compile(&self) -> CompiledRational {
        CompiledRational {
            num: compile_poly(&self.num),
            den: compile_poly(&self.den),
        }
    }

    pub fn display(&self, names: &[&str]) -> String {
        let num = self.num.fmt_with(names);
        if self.den.as_constant().is_some() {
            num
        } else {
            format!("({num}) / ({})", self.den.fmt_with(names))
        }
    }
}

fn compile_poly(p: &Polynomial) -> Vec<(f64, Vec<u32>)> {
    p.terms
        .iter()
        .map(|(e, c)| (c.to_f64().unwrap_or(f64::NAN), e.clone()))
        .collect()
}

/// Floating-point evaluator of a rational function.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledRational {
    num: Vec<(f64, Vec<u32>)>,
    den: Vec<(f64, Vec<u32>)>,
}

fn eval_terms(terms: &[(f64, Vec<u32>)], x: &[f64]) -> f64 {
    terms
        .iter()
        .map(|(c, e)| {
            let mut m = *c;
            for (&k, v) in e.iter().zip(x) {
                if k > 0 {
                    m *= v.powi(k as i32);
                }
            }
            m
        })
        .sum()
}

impl CompiledRational {
    /// `(numerator, denominator)` at `x`.
    pub fn eval_parts(&self, x: &[f64]) -> (f64, f64) {
        (eval_terms(&self.num, x), eval_terms(&self.den, x))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let (n, d) = self.eval_parts(x);
        n / d
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = (0..self.vars).map(|i| format!("x{i}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        f.write_str(&self.fmt_with(&refs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn harmonic_derivative() {
        // U = q^2 / 2 → U' = q
        let q = RationalFunction::variable(1, 0);
        let u = q.mul(&q).scale(&r(1, 2));
        assert!(u.derivative(0).equals(&q));
    }

    #[test]
    fn quotient_rule() {
        // d/dx 1/(1+x^2) = -2x/(1+x^2)^2
        let x = RationalFunction::variable(1, 0);
        let one = RationalFunction::constant(1, r(1, 1));
        let f = one.div(&one.add(&x.mul(&x))).unwrap();
        let df = f.derivative(0).compile();
        for &v in &[-1.3f64, 0.0, 0.4, 2.0] {
            let exact = -2.0 * v / (1.0 + v * v).powi(2);
            assert!((df.eval(&[v]) - exact).abs() < 1e-14);
        }
    }

    #[test]
    fn symmetry_check() {
        let a = RationalFunction::variable(2, 0);
        let b = RationalFunction::variable(2, 1);
        let d = a.sub(&b);
        let u = d.mul(&d);
        assert!(u.equals(&u.swap_vars(0, 1)));
        assert!(!d.equals(&d.swap_vars(0, 1)));
    }

    #[test]
    fn division_by_zero_function() {
        let x = RationalFunction::variable(1, 0);
        assert!(x.div(&RationalFunction::zero(1)).is_none());
        assert!(RationalFunction::zero(1).powi(-1).is_none());
    }
}
