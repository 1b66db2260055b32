use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::PolyError;

/// Vector-valued polynomial in two variables `x1`, `x2`.
///
/// Coefficients are stored sparsely by exponent pair `(l, m)`, each entry
/// holding one coefficient per output component. `max_degree` is a declared
/// bound on `l + m`; the actual degree may be lower.
#[derive(Clone, Debug, PartialEq)]
pub struct BivariatePolyVec {
    dim_out: usize,
    max_degree: u32,
    coeffs: BTreeMap<(u32, u32), Vec<f64>>,
}

/// One term of the JSON literal form.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolyTerm {
    pub l: u32,
    pub m: u32,
    pub coef: Vec<f64>,
}

/// JSON literal form: `{"dim_out": 2, "n": 2, "terms": [{"l":2,"m":0,"coef":[1,0]}]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolyLiteral {
    pub dim_out: usize,
    pub n: u32,
    pub terms: Vec<PolyTerm>,
}

fn falling(k: u32, p: u32) -> f64 {
    (0..p).fold(1.0, |acc, i| acc * f64::from(k - i))
}

impl BivariatePolyVec {
    pub fn zero(dim_out: usize, max_degree: u32) -> Self {
        Self {
            dim_out,
            max_degree,
            coeffs: BTreeMap::new(),
        }
    }

    /// Builds a polynomial from `(l, m, coef)` terms. Repeated exponents are summed.
    pub fn from_terms<I>(dim_out: usize, max_degree: u32, terms: I) -> Result<Self, PolyError>
    where
        I: IntoIterator<Item = (u32, u32, Vec<f64>)>,
    {
        if dim_out == 0 {
            return Err(PolyError::ZeroDimension);
        }
        let mut p = Self::zero(dim_out, max_degree);
        for (l, m, coef) in terms {
            if l + m > max_degree {
                return Err(PolyError::DegreeExceeded {
                    l,
                    m,
                    bound: max_degree,
                });
            }
            if coef.len() != dim_out {
                return Err(PolyError::DimensionMismatch {
                    expected: dim_out,
                    found: coef.len(),
                });
            }
            if coef.iter().any(|c| !c.is_finite()) {
                return Err(PolyError::NonFinite);
            }
            p.add_term(l, m, &coef);
        }
        p.prune();
        Ok(p)
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    /// Highest `l + m` with a nonzero coefficient, `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.coeffs.keys().map(|(l, m)| l + m).max()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coefficient(&self, l: u32, m: u32) -> Option<&[f64]> {
        self.coeffs.get(&(l, m)).map(Vec::as_slice)
    }

    pub fn terms(&self) -> impl Iterator<Item = ((u32, u32), &[f64])> {
        self.coeffs.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    fn add_term(&mut self, l: u32, m: u32, coef: &[f64]) {
        let entry = self.coeffs.entry((l, m)).or_insert_with(|| vec![0.0; coef.len()]);
        for (e, c) in entry.iter_mut().zip(coef) {
            *e += c;
        }
    }

    fn prune(&mut self) {
        self.coeffs.retain(|_, v| v.iter().any(|c| *c != 0.0));
    }

    pub fn eval(&self, x1: f64, x2: f64) -> Vec<f64> {
        self.eval_derivative(0, 0, x1, x2)
    }

    /// Evaluates `d1^p d2^q` of the polynomial at `(x1, x2)` without forming it.
    pub fn eval_derivative(&self, p: u32, q: u32, x1: f64, x2: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_out];
        for (&(l, m), c) in &self.coeffs {
            if l < p || m < q {
                continue;
            }
            let w = falling(l, p) * falling(m, q) * x1.powi((l - p) as i32) * x2.powi((m - q) as i32);
            for (o, ci) in out.iter_mut().zip(c) {
                *o += ci * w;
            }
        }
        out
    }

    /// Partial derivative along `axis` (1 or 2).
    pub fn partial(&self, axis: u8) -> Result<Self, PolyError> {
        let mut out = Self::zero(self.dim_out, self.max_degree);
        for (&(l, m), c) in &self.coeffs {
            let (k, nl, nm) = match axis {
                1 => (l, l.wrapping_sub(1), m),
                2 => (m, l, m.wrapping_sub(1)),
                _ => return Err(PolyError::InvalidAxis(axis)),
            };
            if k == 0 {
                continue;
            }
            let scaled: Vec<f64> = c.iter().map(|ci| ci * f64::from(k)).collect();
            out.add_term(nl, nm, &scaled);
        }
        out.prune();
        Ok(out)
    }

    /// `x -> integral from w1 to x1 of p(u, x2) du`. The degree bound grows by one.
    pub fn antiderivative_x1(&self, w1: f64) -> Self {
        let mut out = Self::zero(self.dim_out, self.max_degree + 1);
        for (&(l, m), c) in &self.coeffs {
            let k = f64::from(l + 1);
            let hi: Vec<f64> = c.iter().map(|ci| ci / k).collect();
            let base = w1.powi((l + 1) as i32) / k;
            let lo: Vec<f64> = c.iter().map(|ci| -ci * base).collect();
            out.add_term(l + 1, m, &hi);
            out.add_term(0, m, &lo);
        }
        out.prune();
        out
    }

    pub fn sub(&self, other: &Self) -> Result<Self, PolyError> {
        if self.dim_out != other.dim_out {
            return Err(PolyError::DimensionMismatch {
                expected: self.dim_out,
                found: other.dim_out,
            });
        }
        let mut out = self.clone();
        out.max_degree = self.max_degree.max(other.max_degree);
        for (&(l, m), c) in &other.coeffs {
            let neg: Vec<f64> = c.iter().map(|x| -x).collect();
            out.add_term(l, m, &neg);
        }
        out.prune();
        Ok(out)
    }

    /// Lowers the declared bound to `bound` if the actual degree allows it.
    pub fn with_max_degree(mut self, bound: u32) -> Result<Self, PolyError> {
        if let Some(d) = self.degree() {
            if d > bound {
                let (l, m) = *self.coeffs.keys().find(|(l, m)| l + m == d).expect("degree attained");
                return Err(PolyError::DegreeExceeded { l, m, bound });
            }
        }
        self.max_degree = bound;
        Ok(self)
    }

    pub fn to_literal(&self) -> PolyLiteral {
        PolyLiteral {
            dim_out: self.dim_out,
            n: self.max_degree,
            terms: self
                .coeffs
                .iter()
                .map(|(&(l, m), c)| PolyTerm { l, m, coef: c.clone() })
                .collect(),
        }
    }
}

impl TryFrom<PolyLiteral> for BivariatePolyVec {
    type Error = PolyError;

    fn try_from(lit: PolyLiteral) -> Result<Self, Self::Error> {
        Self::from_terms(lit.dim_out, lit.n, lit.terms.into_iter().map(|t| (t.l, t.m, t.coef)))
    }
}

impl Serialize for BivariatePolyVec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_literal().serialize(s)
    }
}

impl<'de> Deserialize<'de> for BivariatePolyVec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let lit = PolyLiteral::deserialize(d)?;
        Self::try_from(lit).map_err(serde::de::Error::custom)
    }
}
