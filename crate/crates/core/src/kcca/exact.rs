use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use super::KccaModel;
use crate::error::{Error, Result};
use crate::kernels::GramMatrix;
use crate::linalg::{normalize_signs, symmetrize};

/// Dense exact solution with the operators the verifiers need.
#[derive(Clone, Debug)]
pub struct ExactSolution {
    pub model: KccaModel,
    /// `T = (K1c + N l1 I)^{-1} K1c K2c (K2c + N l2 I)^{-1}`.
    pub t: Mat<f64>,
    /// `Kc (Kc + N l I)^{-1}` for each view.
    pub ridge_ops: [Mat<f64>; 2],
    /// All singular values of `T`, nonincreasing.
    pub singular_values: Vec<f64>,
}

impl ExactSolution {
    /// Gap between the `l`-th and `(l+1)`-th singular values (1-based `l`).
    pub fn gap(&self, l: usize) -> f64 {
        let s = &self.singular_values;
        match (s.get(l - 1), s.get(l)) {
            (Some(a), Some(b)) => a - b,
            (Some(a), None) => *a,
            _ => 0.0,
        }
    }
}

pub(super) fn check_lambda(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be positive, got {v}")))
    }
}

pub(super) fn check_l(l: usize, n: usize) -> Result<()> {
    if l < 1 || l > n {
        return Err(Error::invalid("L", format!("must lie in 1..={n}, got {l}")));
    }
    Ok(())
}

/// Exact KCCA with coefficients `alpha = sqrt(N) (K1c + N l1 I)^{-1} alpha'`.
pub fn exact_kcca(k1: &GramMatrix, k2: &GramMatrix, lambda1: f64, lambda2: f64, l: usize) -> Result<KccaModel> {
    Ok(exact_solution(k1, k2, lambda1, lambda2, l)?.model)
}

/// [`exact_kcca`] keeping `T`, the per-view ridge operators and the full spectrum.
pub fn exact_solution(k1: &GramMatrix, k2: &GramMatrix, lambda1: f64, lambda2: f64, l: usize) -> Result<ExactSolution> {
    let n = k1.n();
    if k2.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: k2.n(),
        });
    }
    check_lambda("lambda1", lambda1)?;
    check_lambda("lambda2", lambda2)?;
    check_l(l, n)?;

    let mut ops = Vec::with_capacity(2);
    let mut factors = Vec::with_capacity(2);
    for (k, lambda) in [(k1, lambda1), (k2, lambda2)] {
        let kc = k.centered();
        let nl = n as f64 * lambda;
        let reg = Mat::from_fn(n, n, |i, j| kc.as_ref()[(i, j)] + if i == j { nl } else { 0.0 });
        let llt = reg
            .llt(Side::Lower)
            .map_err(|e| Error::decomposition("regularized kernel cholesky", e))?;
        ops.push(symmetrize(llt.solve(kc.as_ref()).as_ref()));
        factors.push(llt);
    }
    let t = &ops[0] * &ops[1];
    let svd = t.thin_svd().map_err(|e| Error::decomposition("svd of T", e))?;
    let s = svd.S().column_vector();
    let singular_values: Vec<f64> = (0..n).map(|i| s[i]).collect();
    let mut alpha_prime = svd.U().subcols(0, l).to_owned();
    let mut beta_prime = svd.V().subcols(0, l).to_owned();
    normalize_signs(&mut alpha_prime, &mut [&mut beta_prime]);
    let sn = (n as f64).sqrt();
    let alpha = factors[0].solve(alpha_prime.as_ref()) * faer::Scale(sn);
    let beta = factors[1].solve(beta_prime.as_ref()) * faer::Scale(sn);
    let model = KccaModel {
        lambda1,
        lambda2,
        l,
        rho: singular_values[..l].to_vec(),
        alpha_prime,
        beta_prime,
        alpha: Some(alpha),
        beta: Some(beta),
        training: None,
        landmarks: Default::default(),
    };
    let [op1, op2]: [Mat<f64>; 2] = ops.try_into().expect("two views");
    Ok(ExactSolution {
        model,
        t,
        ridge_ops: [op1, op2],
        singular_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{gram, KernelSpec};
    use crate::linalg::{max_abs, sym_eigenvalues, SymEigen};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_views(n: usize, seed: u64) -> (GramMatrix, GramMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Mat::from_fn(n, 2, |_, _| rng.random::<f64>() * 2.0);
        let y = Mat::from_fn(n, 2, |i, j| x[(i, j)].powi(2) + 0.3 * rng.random::<f64>());
        (
            gram(&KernelSpec::rbf(0.7).unwrap(), x.as_ref()),
            gram(&KernelSpec::rbf(1.1).unwrap(), y.as_ref()),
        )
    }

    #[test]
    fn block_eigenproblem_oracle() {
        let (k1, k2) = two_views(6, 1);
        let sol = exact_solution(&k1, &k2, 0.05, 0.08, 3).unwrap();
        let n = 6;
        let inv = |k: &GramMatrix, lam: f64| {
            let e = SymEigen::new(k.centered().as_ref()).unwrap();
            e.reconstruct_with(|s| s / (s + n as f64 * lam))
        };
        let t = inv(&k1, 0.05) * inv(&k2, 0.08);
        let block = Mat::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
            (true, false) => t[(i, j - n)],
            (false, true) => t[(j, i - n)],
            _ => 0.0,
        });
        let ev = sym_eigenvalues(block.as_ref()).unwrap();
        for l in 0..3 {
            assert!((sol.model.rho[l] - ev[l]).abs() < 1e-12);
        }
    }

    #[test]
    fn same_view_gives_squared_shrinkage() {
        let (k, _) = two_views(15, 2);
        let lam = 0.02;
        let m = exact_kcca(&k, &k, lam, lam, 1).unwrap();
        let sigma = sym_eigenvalues(k.centered().as_ref()).unwrap()[0];
        let nl = 15.0 * lam;
        assert!((m.rho[0] - (sigma / (sigma + nl)).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn huge_lambda_kills_correlation() {
        let (k1, k2) = two_views(10, 3);
        let m = exact_kcca(&k1, &k2, 1e9, 1e9, 2).unwrap();
        assert!(m.rho.iter().all(|r| *r < 1e-8));
    }

    #[test]
    fn model_invariants() {
        let (k1, k2) = two_views(25, 4);
        let sol = exact_solution(&k1, &k2, 0.01, 0.03, 4).unwrap();
        let m = &sol.model;
        for l in 0..4 {
            let a = m.alpha_prime.col(l).norm_l2();
            assert!((a - 1.0).abs() < 1e-10);
            assert!((m.beta_prime.col(l).norm_l2() - 1.0).abs() < 1e-10);
            assert!(m.rho[l] <= 1.0 + 1e-10);
            if l > 0 {
                assert!(m.rho[l] <= m.rho[l - 1]);
            }
        }
        let kc = k1.centered();
        let back = (kc.as_ref() + Mat::<f64>::identity(25, 25) * (25.0 * 0.01)) * m.alpha.as_ref().unwrap();
        let want = &m.alpha_prime * faer::Scale(5.0);
        assert!(max_abs((back - want).as_ref()) < 1e-8);
        let tv = &sol.t * &m.beta_prime;
        for l in 0..4 {
            for i in 0..25 {
                assert!((tv[(i, l)] - m.rho[l] * m.alpha_prime[(i, l)]).abs() < 1e-10);
            }
        }
        let first = (0..25).find(|&i| m.alpha_prime[(i, 0)].abs() > 1e-8).unwrap();
        assert!(m.alpha_prime[(first, 0)] > 0.0);
    }

    #[test]
    fn argument_errors() {
        let (k1, k2) = two_views(5, 5);
        assert!(exact_kcca(&k1, &k2, 0.0, 1.0, 1).is_err());
        assert!(exact_kcca(&k1, &k2, 1.0, 1.0, 6).is_err());
        assert!(exact_kcca(&k1, &k2, 1.0, 1.0, 0).is_err());
        let (k3, _) = two_views(4, 5);
        assert!(exact_kcca(&k1, &k3, 1.0, 1.0, 1).is_err());
    }
}
