//! Monomials given by exponent tuples, with exact derivatives.

use nalgebra::DVector;

pub type MultiIndex = Vec<u32>;

/// All exponent tuples over `nvars` variables with total degree in
/// `min_degree..=max_degree`, ordered by total degree and then
/// lexicographically with larger leading exponents first.
pub fn graded_lex(nvars: usize, min_degree: u32, max_degree: u32) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    for degree in min_degree..=max_degree {
        let mut current = vec![0u32; nvars];
        fill(&mut out, &mut current, 0, degree);
    }
    out
}

fn fill(out: &mut Vec<MultiIndex>, current: &mut [u32], pos: usize, remaining: u32) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(current.to_vec());
        return;
    }
    if current.is_empty() {
        return;
    }
    for e in (0..=remaining).rev() {
        current[pos] = e;
        fill(out, current, pos + 1, remaining - e);
    }
    current[pos] = 0;
}

pub fn degree(exponents: &[u32]) -> u32 {
    exponents.iter().sum()
}

pub fn factorial_scale(exponents: &[u32]) -> f64 {
    let denom: f64 = exponents
        .iter()
        .map(|&e| (1..=e).map(f64::from).product::<f64>())
        .product();
    1.0 / denom
}

pub fn value(exponents: &[u32], x: &[f64]) -> f64 {
    exponents
        .iter()
        .zip(x)
        .filter(|(&e, _)| e > 0)
        .map(|(&e, &xi)| xi.powi(e as i32))
        .product()
}

/// ∂/∂x_var of the monomial.
pub fn partial(exponents: &[u32], x: &[f64], var: usize) -> f64 {
    let e = exponents[var];
    if e == 0 {
        return 0.0;
    }
    let mut out = f64::from(e) * x[var].powi(e as i32 - 1);
    for (i, (&ei, &xi)) in exponents.iter().zip(x).enumerate() {
        if i != var && ei > 0 {
            out *= xi.powi(ei as i32);
        }
    }
    out
}

/// ∂²/∂x_var² of the monomial.
pub fn second_partial(exponents: &[u32], x: &[f64], var: usize) -> f64 {
    let e = exponents[var];
    if e < 2 {
        return 0.0;
    }
    let mut out = f64::from(e * (e - 1)) * x[var].powi(e as i32 - 2);
    for (i, (&ei, &xi)) in exponents.iter().zip(x).enumerate() {
        if i != var && ei > 0 {
            out *= xi.powi(ei as i32);
        }
    }
    out
}

pub fn gradient(exponents: &[u32], x: &[f64]) -> DVector<f64> {
    DVector::from_iterator(x.len(), (0..x.len()).map(|i| partial(exponents, x, i)))
}

pub fn laplacian(exponents: &[u32], x: &[f64]) -> f64 {
    (0..x.len()).map(|i| second_partial(exponents, x, i)).sum()
}
