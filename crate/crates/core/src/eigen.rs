//! Leading eigenpairs of Hermitian positive semidefinite matrices.
//!
//! Lanczos with full reorthogonalization is the default: the interference
//! matrices of rotating scenes have `λ₂/λ₁` close to one, where plain power
//! iteration needs thousands of matrix-vector products. Power iteration is
//! kept as an alternative method.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("matrix is empty")]
    Empty,
    #[error("matrix is not square ({rows}×{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("requested {requested} eigenpairs of a {size}×{size} matrix")]
    TooMany { requested: usize, size: usize },
    #[error("no convergence after {iterations} iterations (residual {residual:.3e} relative to λ₁)")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("matrix is zero")]
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigenMethod {
    #[default]
    Lanczos,
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    pub method: EigenMethod,
    /// Bound on `‖Xv − λv‖ / λ₁` for every returned pair.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            method: EigenMethod::Lanczos,
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    /// Unit vector, phase fixed so its largest-magnitude entry is real
    /// positive.
    pub vector: CVector,
    /// `‖Xv − λv‖ / λ₁`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopEigen {
    pub pair: EigenPair,
    /// Second eigenvalue when the method produced it.
    pub second: Option<f64>,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

fn check_square(x: &CMatrix) -> Result<usize, EigenError> {
    if x.nrows() != x.ncols() {
        return Err(EigenError::NotSquare {
            rows: x.nrows(),
            cols: x.ncols(),
        });
    }
    if x.nrows() == 0 {
        return Err(EigenError::Empty);
    }
    Ok(x.nrows())
}

/// Deterministic start: all ones plus a fixed small perturbation.
fn start_vector(n: usize) -> CVector {
    let v = CVector::from_fn(n, |i, _| {
        let t = i as f64;
        Complex64::new(1.0 + 0.1 * (0.7 * t).sin(), 0.1 * (1.3 * t).cos())
    });
    let norm = v.norm();
    v / Complex64::new(norm, 0.0)
}

fn fix_phase(v: &mut CVector) {
    let Some((_, z)) = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
        .map(|(i, z)| (i, *z))
    else {
        return;
    };
    if z.norm() > 0.0 {
        let u = z.conj() / z.norm();
        for x in v.iter_mut() {
            *x *= u;
        }
    }
}

fn rayleigh(x: &CMatrix, v: &CVector) -> (f64, CVector) {
    let w = x * v;
    (v.dotc(&w).re, w)
}

fn pair_from(x: &CMatrix, mut v: CVector, scale: f64) -> EigenPair {
    let norm = v.norm();
    v /= Complex64::new(norm, 0.0);
    fix_phase(&mut v);
    let (value, w) = rayleigh(x, &v);
    let residual = (w - &v * Complex64::new(value, 0.0)).norm() / scale.max(f64::MIN_POSITIVE);
    EigenPair {
        value,
        vector: v,
        residual,
    }
}

/// Leading `m` eigenpairs by Lanczos with full reorthogonalization,
/// descending. Converged when every Ritz residual is at most `tol·λ₁`.
pub fn lanczos(x: &CMatrix, m: usize, tol: f64, max_iter: usize) -> Result<(Vec<EigenPair>, usize), EigenError> {
    let n = check_square(x)?;
    if m == 0 || m > n {
        return Err(EigenError::TooMany { requested: m, size: n });
    }
    let mut q: Vec<CVector> = vec![start_vector(n)];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let limit = max_iter.min(n).max(m);
    let mut last_residual = f64::INFINITY;
    loop {
        let j = q.len() - 1;
        let mut w = x * &q[j];
        let a = q[j].dotc(&w).re;
        alpha.push(a);
        w -= &q[j] * Complex64::new(a, 0.0);
        if j > 0 {
            w -= &q[j - 1] * Complex64::new(beta[j - 1], 0.0);
        }
        for _ in 0..2 {
            for qi in &q {
                let c = qi.dotc(&w);
                w -= qi * c;
            }
        }
        let b = w.norm();
        let k = alpha.len();
        let done = k >= limit;
        if k >= m && (k % 4 == 0 || done || b == 0.0) {
            let t = DMatrix::<f64>::from_fn(k, k, |r, c| {
                if r == c {
                    alpha[r]
                } else if r + 1 == c {
                    beta[r]
                } else if c + 1 == r {
                    beta[c]
                } else {
                    0.0
                }
            });
            let eig = SymmetricEigen::new(t);
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&p, &r| eig.eigenvalues[r].total_cmp(&eig.eigenvalues[p]));
            let lam1 = eig.eigenvalues[order[0]];
            if lam1 <= 0.0 && b == 0.0 {
                return Err(EigenError::Zero);
            }
            let scale = lam1.abs().max(f64::MIN_POSITIVE);
            let worst = order[..m]
                .iter()
                .map(|&i| (b * eig.eigenvectors[(k - 1, i)]).abs() / scale)
                .fold(0.0, f64::max);
            last_residual = worst;
            if worst <= tol || b <= tol * scale || done {
                if worst > tol && b > tol * scale {
                    return Err(EigenError::NoConvergence {
                        iterations: k,
                        residual: worst,
                    });
                }
                let pairs = order[..m]
                    .iter()
                    .map(|&i| {
                        let mut v = CVector::zeros(n);
                        for (l, ql) in q.iter().take(k).enumerate() {
                            v += ql * Complex64::new(eig.eigenvectors[(l, i)], 0.0);
                        }
                        pair_from(x, v, scale)
                    })
                    .collect();
                return Ok((pairs, k));
            }
        }
        if done {
            return Err(EigenError::NoConvergence {
                iterations: k,
                residual: last_residual,
            });
        }
        if b == 0.0 {
            // invariant subspace smaller than m: continue from a fresh
            // direction orthogonal to what we have
            let mut w = start_vector(n).map(|z| z * Complex64::new(0.0, 1.0));
            for (i, wi) in w.iter_mut().enumerate() {
                *wi += Complex64::new((i as f64 * 2.1).cos(), 0.0);
            }
            for _ in 0..2 {
                for qi in &q {
                    let c = qi.dotc(&w);
                    w -= qi * c;
                }
            }
            let nw = w.norm();
            if nw == 0.0 {
                return Err(EigenError::NoConvergence {
                    iterations: k,
                    residual: last_residual,
                });
            }
            beta.push(0.0);
            q.push(w / Complex64::new(nw, 0.0));
        } else {
            beta.push(b);
            q.push(w / Complex64::new(b, 0.0));
        }
    }
}

/// Power iteration for the leading eigenpair, optionally kept orthogonal to
/// already-found vectors.
fn power_iteration(
    x: &CMatrix,
    deflate: &[EigenPair],
    tol: f64,
    max_iter: usize,
) -> Result<(EigenPair, usize), EigenError> {
    let n = check_square(x)?;
    let project = |v: &mut CVector| {
        for p in deflate {
            let c = p.vector.dotc(v);
            *v -= &p.vector * c;
        }
    };
    let mut v = start_vector(n);
    project(&mut v);
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let mut w = x * &v;
        project(&mut w);
        let lam = v.dotc(&w).re;
        let norm = w.norm();
        if norm == 0.0 {
            return Err(EigenError::Zero);
        }
        let scale = deflate.first().map_or(lam, |p| p.value).abs();
        residual = (&w - &v * Complex64::new(lam, 0.0)).norm() / scale;
        if residual <= tol {
            return Ok((pair_from(x, v, scale), it));
        }
        v = w / Complex64::new(norm, 0.0);
    }
    Err(EigenError::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Leading eigenpair with the degenerate-top-pair warning.
pub fn top_eigenpair(x: &CMatrix, opts: &EigenOptions) -> Result<TopEigen, EigenError> {
    let n = check_square(x)?;
    let (pair, second, iterations) = match opts.method {
        EigenMethod::Lanczos => {
            let m = n.min(2);
            let (pairs, it) = lanczos(x, m, opts.tol, opts.max_iter)?;
            let second = pairs.get(1).map(|p| p.value);
            (pairs.into_iter().next().unwrap(), second, it)
        }
        EigenMethod::Power => {
            let (p, it) = power_iteration(x, &[], opts.tol, opts.max_iter)?;
            (p, None, it)
        }
    };
    if pair.value <= 0.0 {
        return Err(EigenError::Zero);
    }
    let mut warnings = Vec::new();
    if let Some(l2) = second {
        if pair.value - l2 < 1e-6 * pair.value {
            warnings.push(format!(
                "degenerate top pair: λ₁ = {:.6e}, λ₂ = {:.6e}",
                pair.value, l2
            ));
        }
    }
    Ok(TopEigen {
        pair,
        second,
        iterations,
        warnings,
    })
}

/// Leading `m` eigenpairs, descending, each with residual ≤ `tol·λ₁`.
pub fn eigen_spectrum(x: &CMatrix, m: usize, opts: &EigenOptions) -> Result<Vec<EigenPair>, EigenError> {
    let n = check_square(x)?;
    if m == 0 || m > n {
        return Err(EigenError::TooMany { requested: m, size: n });
    }
    match opts.method {
        EigenMethod::Lanczos => Ok(lanczos(x, m, opts.tol, opts.max_iter)?.0),
        EigenMethod::Power => {
            let mut pairs: Vec<EigenPair> = Vec::with_capacity(m);
            for _ in 0..m {
                let (p, _) = power_iteration(x, &pairs, opts.tol, opts.max_iter)?;
                pairs.push(p);
            }
            Ok(pairs)
        }
    }
}

/// Every eigenpair by dense decomposition, descending.
pub fn full_decomposition(x: &CMatrix) -> Result<Vec<EigenPair>, EigenError> {
    check_square(x)?;
    let eig = SymmetricEigen::new(x.clone());
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let scale = eig.eigenvalues[order[0]].abs();
    Ok(order
        .into_iter()
        .map(|i| {
            let mut v = eig.eigenvectors.column(i).into_owned();
            fix_phase(&mut v);
            let value = eig.eigenvalues[i];
            let residual = (x * &v - &v * Complex64::new(value, 0.0)).norm() / scale.max(f64::MIN_POSITIVE);
            EigenPair {
                value,
                vector: v,
                residual,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_psd(n: usize, rank: usize, seed: u64) -> CMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b = CMatrix::from_fn(n, rank, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        &b * b.adjoint()
    }

    #[test]
    fn two_by_two() {
        let x = CMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)]);
        for method in [EigenMethod::Lanczos, EigenMethod::Power] {
            let t = top_eigenpair(&x, &EigenOptions { method, ..Default::default() }).unwrap();
            assert!((t.pair.value - 3.0).abs() < 1e-12);
            let h = 1.0 / 2f64.sqrt();
            assert!((t.pair.vector[0] - c(h, 0.0)).norm() < 1e-6);
            assert!((t.pair.vector[1] - c(h, 0.0)).norm() < 1e-6);
        }
    }

    #[test]
    fn exact_rank_one() {
        let b = CVector::from_fn(30, |i, _| c((i as f64 * 0.3).cos(), (i as f64 * 0.11).sin()));
        let x = &b * b.adjoint();
        let t = top_eigenpair(&x, &EigenOptions::default()).unwrap();
        assert!((t.pair.value - b.norm_squared()).abs() < 1e-10 * b.norm_squared());
        let spec = eigen_spectrum(&x, 2, &EigenOptions::default()).unwrap();
        assert!(spec[1].value.abs() <= 1e-8 * spec[0].value);
        for (v, bi) in t.pair.vector.iter().zip(b.iter()) {
            assert!((v.norm_sqr() - bi.norm_sqr() / b.norm_squared()).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_dense_decomposition() {
        let x = random_psd(60, 12, 4);
        let full = full_decomposition(&x).unwrap();
        for method in [EigenMethod::Lanczos, EigenMethod::Power] {
            let opts = EigenOptions {
                method,
                tol: 1e-11,
                max_iter: 100_000,
            };
            let spec = eigen_spectrum(&x, 5, &opts).unwrap();
            for (a, b) in spec.iter().zip(&full) {
                assert!((a.value - b.value).abs() <= 1e-8 * full[0].value, "{method:?} {} {}", a.value, b.value);
                // unit vectors with the same phase convention
                assert!((&a.vector - &b.vector).norm() < 1e-4, "{method:?}");
                assert!(a.residual <= 1e-8);
            }
        }
    }

    #[test]
    fn degenerate_pair_warns() {
        let mut x = CMatrix::zeros(6, 6);
        x[(0, 0)] = c(5.0, 0.0);
        x[(1, 1)] = c(5.0, 0.0);
        x[(2, 2)] = c(1.0, 0.0);
        let t = top_eigenpair(&x, &EigenOptions::default()).unwrap();
        assert!((t.pair.value - 5.0).abs() < 1e-12);
        assert_eq!(t.warnings.len(), 1);
    }

    #[test]
    fn errors() {
        assert_eq!(top_eigenpair(&CMatrix::zeros(0, 0), &EigenOptions::default()), Err(EigenError::Empty));
        assert!(matches!(
            top_eigenpair(&CMatrix::zeros(2, 3), &EigenOptions::default()),
            Err(EigenError::NotSquare { .. })
        ));
        assert_eq!(top_eigenpair(&CMatrix::zeros(4, 4), &EigenOptions::default()), Err(EigenError::Zero));
        assert!(matches!(
            eigen_spectrum(&random_psd(4, 2, 1), 5, &EigenOptions::default()),
            Err(EigenError::TooMany { .. })
        ));
        // close top pair: ten power steps are not enough
        let x = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.0, 0.0), c(0.99, 0.0), c(0.1, 0.0)]));
        let r = top_eigenpair(&x, &EigenOptions {
            method: EigenMethod::Power,
            tol: 1e-12,
            max_iter: 10,
        });
        assert!(matches!(r, Err(EigenError::NoConvergence { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn lanczos_top_value_matches_dense(n in 2usize..40, rank in 1usize..8, seed in 0u64..1000) {
            let x = random_psd(n, rank.min(n), seed);
            let full = full_decomposition(&x).unwrap();
            let t = top_eigenpair(&x, &EigenOptions::default()).unwrap();
            prop_assert!((t.pair.value - full[0].value).abs() <= 1e-9 * full[0].value);
        }
    }
}
