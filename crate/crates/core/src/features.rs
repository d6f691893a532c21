//! Explicit feature map of the polynomial kernel `(κ + xᵀx′)^q`.
//!
//! The feature vector holds one entry per multi-index `p = (p₀, p₁, …, p_d)`
//! with `|p| = q`, equal to `√a_p · ∏ xᵢ^{pᵢ}` where
//! `a_p = q! / (p₀! ⋯ p_d!) · κ^{p₀}`. Its inner product reproduces the
//! kernel exactly, which makes it the brute-force oracle for every
//! kernel-space computation on polynomial kernels. It is also used to turn a
//! fitted kernel model back into coefficients on raw monomials.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, SampleMatrix};
use crate::regression::ReducedModel;

/// One monomial of the dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialIndex {
    /// `(p₀, p₁, …, p_d)`; `p₀` is the power of the constant.
    pub p: Vec<u32>,
    /// `a_p`
    pub prefactor: f64,
}

impl MonomialIndex {
    /// Exponents of the variables `x₁ … x_d`.
    pub fn exponents(&self) -> &[u32] {
        &self.p[1..]
    }

    pub fn degree(&self) -> u32 {
        self.exponents().iter().sum()
    }

    /// Raw monomial `∏ xᵢ^{pᵢ}`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.exponents()
            .iter()
            .zip(x)
            .fold(1.0, |acc, (&e, &v)| acc * v.powi(e as i32))
    }

    /// Display name such as `1`, `x2` or `x1^2*x3`.
    pub fn name(&self) -> String {
        let parts: Vec<String> = self
            .exponents()
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(i, &e)| {
                if e == 1 {
                    format!("x{}", i + 1)
                } else {
                    format!("x{}^{}", i + 1, e)
                }
            })
            .collect();
        if parts.is_empty() {
            "1".to_string()
        } else {
            parts.join("*")
        }
    }
}

/// All monomials of total degree at most `q` in `d` variables, graded
/// lexicographic, constant first.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialDictionary {
    d: usize,
    q: u32,
    kappa: f64,
    monomials: Vec<MonomialIndex>,
}

impl MonomialDictionary {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn degree(&self) -> u32 {
        self.q
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomials(&self) -> &[MonomialIndex] {
        &self.monomials
    }

    /// Position of the monomial with the given variable exponents.
    pub fn position(&self, exponents: &[u32]) -> Option<usize> {
        self.monomials.iter().position(|m| m.exponents() == exponents)
    }

    /// The kernel whose feature map this dictionary spans.
    pub fn kernel(&self) -> KernelSpec {
        KernelSpec::Polynomial {
            kappa: self.kappa,
            degree: self.q,
        }
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// `C(n, k)`.
pub fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

// Exponent vectors of length `len` summing to `total`, lexicographically
// descending (x₁^total first).
fn push_compositions(len: usize, total: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if len == 1 {
        prefix.push(total);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for e in (0..=total).rev() {
        prefix.push(e);
        push_compositions(len - 1, total - e, prefix, out);
        prefix.pop();
    }
}

/// Enumerates the `C(d+q, q)` monomials with their prefactors `a_p`.
pub fn enumerate_monomials(d: usize, q: u32, kappa: f64) -> Result<MonomialDictionary> {
    if d == 0 || q == 0 {
        return Err(Error::InvalidParameter(format!(
            "monomial dictionary needs d >= 1 and q >= 1, got d={d}, q={q}"
        )));
    }
    if !(kappa.is_finite() && kappa >= 0.0) {
        return Err(Error::InvalidParameter(format!("kappa must be >= 0, got {kappa}")));
    }
    let mut monomials = Vec::new();
    for degree in 0..=q {
        let mut exps = Vec::new();
        push_compositions(d, degree, &mut Vec::with_capacity(d), &mut exps);
        for e in exps {
            let p0 = q - degree;
            let denom: f64 = factorial(p0) * e.iter().map(|&v| factorial(v)).product::<f64>();
            let prefactor = factorial(q) / denom * kappa.powi(p0 as i32);
            let mut p = Vec::with_capacity(d + 1);
            p.push(p0);
            p.extend(e);
            monomials.push(MonomialIndex { p, prefactor });
        }
    }
    Ok(MonomialDictionary { d, q, kappa, monomials })
}

/// `Ψ(x)`: scaled monomials `√a_p · ∏ xᵢ^{pᵢ}`.
pub fn explicit_features(x: &[f64], dict: &MonomialDictionary) -> Result<Vec<f64>> {
    if x.len() != dict.d {
        return Err(Error::DimensionMismatch {
            expected: dict.d,
            found: x.len(),
        });
    }
    Ok(dict.monomials.iter().map(|m| m.prefactor.sqrt() * m.eval(x)).collect())
}

/// Unscaled monomials `∏ xᵢ^{pᵢ}` in dictionary order.
pub fn raw_monomials(x: &[f64], dict: &MonomialDictionary) -> Result<Vec<f64>> {
    if x.len() != dict.d {
        return Err(Error::DimensionMismatch {
            expected: dict.d,
            found: x.len(),
        });
    }
    Ok(dict.monomials.iter().map(|m| m.eval(x)).collect())
}

/// `n × m` matrix whose columns are `Ψ(x⁽ʲ⁾)`.
pub fn feature_matrix(samples: &SampleMatrix, dict: &MonomialDictionary) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(dict.len(), samples.len());
    for (j, x) in samples.columns().enumerate() {
        let f = explicit_features(x, dict)?;
        out.column_mut(j).copy_from_slice(&f);
    }
    Ok(out)
}

/// Coefficients of an output function on raw monomials (one row per output).
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    pub values: DMatrix<f64>,
    pub dictionary: MonomialDictionary,
}

impl CoefficientMatrix {
    /// Coefficient of the monomial with `exponents` in output `row`; zero if
    /// the monomial is not in the dictionary.
    pub fn coefficient(&self, row: usize, exponents: &[u32]) -> f64 {
        self.dictionary
            .position(exponents)
            .map_or(0.0, |c| self.values[(row, c)])
    }

    /// Applies the coefficients to raw monomials of `x`.
    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = DMatrix::from_vec(self.dictionary.len(), 1, raw_monomials(x, &self.dictionary)?);
        Ok((&self.values * m).iter().copied().collect())
    }

    /// `‖self − reference‖_F / ‖reference‖_F`, matching terms by multi-index
    /// so the two dictionaries may be ordered differently.
    pub fn relative_error(&self, reference: &CoefficientMatrix) -> Result<f64> {
        if self.values.nrows() != reference.values.nrows() {
            return Err(Error::DimensionMismatch {
                expected: reference.values.nrows(),
                found: self.values.nrows(),
            });
        }
        let mut keys: Vec<Vec<u32>> = self
            .dictionary
            .monomials
            .iter()
            .map(|m| m.exponents().to_vec())
            .collect();
        for m in &reference.dictionary.monomials {
            if self.dictionary.position(m.exponents()).is_none() {
                keys.push(m.exponents().to_vec());
            }
        }
        let (mut diff, mut norm) = (0.0, 0.0);
        for row in 0..self.values.nrows() {
            for k in &keys {
                let r = reference.coefficient(row, k);
                let s = self.coefficient(row, k);
                diff += (s - r) * (s - r);
                norm += r * r;
            }
        }
        Ok((diff / norm).sqrt())
    }

    /// CSV with a header naming each monomial; one row per output.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["output".to_string()];
        header.extend(self.dictionary.monomials.iter().map(|m| m.name()));
        w.write_record(&header)?;
        for r in 0..self.values.nrows() {
            let mut rec = vec![format!("{}", r + 1)];
            rec.extend(self.values.row(r).iter().map(|v| format!("{v:e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Rewrites `f(x) = Θ̃ G_{X̃,x}` as `Θ′ m(x)` on raw monomials, with
/// `Θ′ = Θ̃ Ψ_X̃ᵀ D` and `D = diag(√a_p)`.
pub fn recover_coefficients(model: &ReducedModel, dict: &MonomialDictionary) -> Result<CoefficientMatrix> {
    match model.kernel() {
        KernelSpec::Polynomial { kappa, degree } if *degree == dict.q && kappa.to_bits() == dict.kappa.to_bits() => {}
        other => {
            return Err(Error::KernelMismatch(format!(
                "dictionary is for polynomial(kappa={}, q={}), model uses {other:?}",
                dict.kappa, dict.q
            )))
        }
    }
    if model.normalizer().is_some() {
        return Err(Error::InvalidParameter(
            "coefficient recovery requires a model fitted on unnormalized inputs".into(),
        ));
    }
    if model.samples().dim() != dict.d {
        return Err(Error::DimensionMismatch {
            expected: dict.d,
            found: model.samples().dim(),
        });
    }
    let psi = feature_matrix(model.samples(), dict)?;
    let mut theta_prime = model.theta() * psi.transpose();
    for (c, m) in dict.monomials.iter().enumerate() {
        let s = m.prefactor.sqrt();
        theta_prime.column_mut(c).scale_mut(s);
    }
    Ok(CoefficientMatrix {
        values: theta_prime,
        dictionary: dict.clone(),
    })
}

type Poly = HashMap<Vec<u32>, f64>;

fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    let mut out = Poly::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let e: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            *out.entry(e).or_insert(0.0) += ca * cb;
        }
    }
    out
}

fn poly_add(acc: &mut Poly, p: &Poly, scale: f64) {
    for (e, c) in p {
        *acc.entry(e.clone()).or_insert(0.0) += scale * c;
    }
}

// Linear form Σ cᵢ xᵢ; indices are 1-based, 0 and d+1 are the fixed ends.
fn linear(d: usize, terms: &[(usize, f64)]) -> Poly {
    let mut p = Poly::new();
    for &(i, c) in terms {
        if i >= 1 && i <= d {
            let mut e = vec![0; d];
            e[i - 1] = 1;
            *p.entry(e).or_insert(0.0) += c;
        }
    }
    p
}

/// Ground-truth coefficients of the Fermi-Pasta-Ulam-Tsingou chain
/// `ẍᵢ = (x_{i+1} − 2xᵢ + x_{i−1}) + β((x_{i+1} − xᵢ)³ − (xᵢ − x_{i−1})³)`
/// with fixed ends `x₀ = x_{d+1} = 0`.
pub fn exact_fpu_coefficients(d: usize, beta: f64, dict: &MonomialDictionary) -> Result<CoefficientMatrix> {
    if d == 0 {
        return Err(Error::InvalidParameter("FPU chain needs d >= 1".into()));
    }
    if dict.d != d || dict.q < 3 {
        return Err(Error::InvalidParameter(format!(
            "dictionary (d={}, q={}) cannot represent a cubic FPU chain with d={d}",
            dict.d, dict.q
        )));
    }
    let mut values = DMatrix::zeros(d, dict.len());
    for i in 1..=d {
        let mut row = linear(d, &[(i + 1, 1.0), (i, -2.0), (i - 1, 1.0)]);
        let fwd = linear(d, &[(i + 1, 1.0), (i, -1.0)]);
        let bwd = linear(d, &[(i, 1.0), (i - 1, -1.0)]);
        let cube = |p: &Poly| poly_mul(&poly_mul(p, p), p);
        poly_add(&mut row, &cube(&fwd), beta);
        poly_add(&mut row, &cube(&bwd), -beta);
        for (e, c) in row {
            if c == 0.0 {
                continue;
            }
            let col = dict
                .position(&e)
                .ok_or_else(|| Error::InvalidParameter(format!("monomial {e:?} missing")))?;
            values[(i - 1, col)] += c;
        }
    }
    Ok(CoefficientMatrix {
        values,
        dictionary: dict.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::kernel_eval;

    #[test]
    fn small_dictionaries() {
        let d = enumerate_monomials(1, 1, 1.0).unwrap();
        let names: Vec<_> = d.monomials().iter().map(|m| m.name()).collect();
        assert_eq!(names, ["1", "x1"]);

        assert_eq!(enumerate_monomials(3, 3, 1.0).unwrap().len(), 20);
        for dim in 1..=12usize {
            let n = enumerate_monomials(dim, 3, 1.0).unwrap().len();
            assert_eq!(n, (dim + 1) * (dim + 2) * (dim + 3) / 6);
            assert_eq!(n as u64, binomial(dim as u64 + 3, 3));
        }
        assert!(enumerate_monomials(0, 3, 1.0).is_err());
    }

    #[test]
    fn graded_lex_order() {
        let d = enumerate_monomials(2, 2, 1.0).unwrap();
        let names: Vec<_> = d.monomials().iter().map(|m| m.name()).collect();
        assert_eq!(names, ["1", "x1", "x2", "x1^2", "x1*x2", "x2^2"]);
    }

    #[test]
    fn prefactors_sum_to_kernel_at_ones() {
        // Σ a_p = (κ + d)^q, the multinomial theorem at x = 1
        let d = enumerate_monomials(3, 4, 0.5).unwrap();
        let s: f64 = d.monomials().iter().map(|m| m.prefactor).sum();
        assert!((s - 3.5f64.powi(4)).abs() < 1e-10);
    }

    #[test]
    fn feature_examples() {
        let d = enumerate_monomials(3, 3, 1.0).unwrap();
        let f = explicit_features(&[0.0; 3], &d).unwrap();
        assert_eq!(f[0], 1.0);
        assert!(f[1..].iter().all(|&v| v == 0.0));

        let d = enumerate_monomials(1, 2, 1.0).unwrap();
        let f = explicit_features(&[2.0], &d).unwrap();
        assert!((f[0] - 1.0).abs() < 1e-15);
        assert!((f[1] - 2f64.sqrt() * 2.0).abs() < 1e-15);
        assert!((f[2] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn features_reproduce_kernel() {
        let d = enumerate_monomials(3, 3, 1.0).unwrap();
        let (x, y) = ([0.3, -0.7, 1.1], [-0.2, 0.5, 0.9]);
        let fx = explicit_features(&x, &d).unwrap();
        let fy = explicit_features(&y, &d).unwrap();
        let dot: f64 = fx.iter().zip(&fy).map(|(a, b)| a * b).sum();
        let k = kernel_eval(&d.kernel(), &x, &y).unwrap();
        assert!((dot - k).abs() <= 1e-12 * k.abs());
    }

    #[test]
    fn fpu_single_oscillator() {
        let d = enumerate_monomials(1, 3, 1.0).unwrap();
        let c = exact_fpu_coefficients(1, 0.7, &d).unwrap();
        assert_eq!(c.coefficient(0, &[1]), -2.0);
        assert!((c.coefficient(0, &[3]) + 1.4).abs() < 1e-15);
        assert_eq!(c.coefficient(0, &[2]), 0.0);
        assert_eq!(c.coefficient(0, &[0]), 0.0);
    }

    #[test]
    fn fpu_matches_displayed_entries() {
        let d = enumerate_monomials(4, 3, 1.0).unwrap();
        let c = exact_fpu_coefficients(4, 0.7, &d).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() < 1e-14;
        // row 1
        assert!(close(c.coefficient(0, &[1, 0, 0, 0]), -2.0));
        assert!(close(c.coefficient(0, &[0, 1, 0, 0]), 1.0));
        assert!(close(c.coefficient(0, &[3, 0, 0, 0]), -1.4));
        assert!(close(c.coefficient(0, &[2, 1, 0, 0]), 2.1));
        assert!(close(c.coefficient(0, &[1, 1, 0, 0]), 0.0));
        // row 2
        assert!(close(c.coefficient(1, &[1, 0, 0, 0]), 1.0));
        assert!(close(c.coefficient(1, &[3, 0, 0, 0]), 0.7));
        assert!(close(c.coefficient(1, &[0, 1, 0, 0]), -2.0));
        assert!(close(c.coefficient(1, &[2, 1, 0, 0]), -2.1));
        // last two rows
        assert!(close(c.coefficient(2, &[0, 0, 1, 2]), -2.1));
        assert!(close(c.coefficient(2, &[0, 0, 0, 3]), 0.7));
        assert!(close(c.coefficient(3, &[0, 0, 1, 2]), 2.1));
        assert!(close(c.coefficient(3, &[0, 0, 0, 3]), -1.4));
    }

    #[test]
    fn fpu_chain_is_mirror_symmetric() {
        let dim = 5;
        let d = enumerate_monomials(dim, 3, 1.0).unwrap();
        let c = exact_fpu_coefficients(dim, 0.7, &d).unwrap();
        for i in 0..dim {
            for m in d.monomials() {
                let mut rev = m.exponents().to_vec();
                rev.reverse();
                let a = c.coefficient(i, m.exponents());
                let b = c.coefficient(dim - 1 - i, &rev);
                // reflection x_i -> x_{d+1-i} maps the chain onto itself
                assert!((a - b).abs() < 1e-14, "row {i} {}", m.name());
            }
        }
    }

    #[test]
    fn csv_header_names_monomials() {
        let d = enumerate_monomials(2, 3, 1.0).unwrap();
        let c = exact_fpu_coefficients(2, 0.7, &d).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("output,1,x1,x2,x1^2,x1*x2,x2^2,x1^3"));
        assert!(header.contains("x1^2*x2"));
        assert_eq!(text.lines().count(), 3);
    }
}
