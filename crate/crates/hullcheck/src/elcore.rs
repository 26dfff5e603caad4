//! Empirical-likelihood engine: the pseudo-logarithm, the damped-Newton dual
//! solver over displacement rows, and recovery of the marginal weights and
//! the common point S = F.
//!
//! The solver minimizes `f(lambda) = -sum_k c_k * log_star(1 + lambda . delta_k)`
//! over the dual multiplier. Under overlap the optimum is interior, the
//! recovered weights sum to one and satisfy the zero-mean constraint; under
//! separation the multiplier drifts and the total weight collapses toward
//! zero, which is exactly what the status classifier keys on.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dataset::{Dataset, Displacements};
use crate::error::{Error, Result};

/// Pseudo-logarithm with a quadratic C2 extension below `eps0 = 1/n`.
///
/// Returns `(value, first derivative, second derivative)`. For `z >= eps0`
/// this is the plain logarithm; below the knot the quadratic keeps the
/// objective finite and self-concordant-friendly for any real `z`.
pub fn log_star(z: f64, n: usize) -> (f64, f64, f64) {
    assert!(n >= 1, "log_star needs n >= 1");
    log_star_eps(z, 1.0 / n as f64)
}

/// `log_star` with an explicit knot, used by the weighted solver where the
/// effective sample size need not be an integer.
pub(crate) fn log_star_eps(z: f64, eps0: f64) -> (f64, f64, f64) {
    if z >= eps0 {
        (z.ln(), 1.0 / z, -1.0 / (z * z))
    } else {
        let v = eps0.ln() - 1.5 + 2.0 * z / eps0 - z * z / (2.0 * eps0 * eps0);
        let d1 = 2.0 / eps0 - z / (eps0 * eps0);
        let d2 = -1.0 / (eps0 * eps0);
        (v, d1, d2)
    }
}

/// Options for the dual Newton solver.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Stop when (newton decrement)^2 / 2 falls below this.
    pub decrement_tol: f64,
    /// Stop when the gradient infinity-norm falls below this.
    pub grad_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iter: 100,
            decrement_tol: 1e-12,
            grad_tol: 1e-10,
        }
    }
}

/// Result of an empirical-likelihood dual solve.
#[derive(Debug, Clone, Serialize)]
pub struct ElSolution {
    /// Dual multiplier in the original (unscaled) displacement coordinates.
    pub lambda: Vec<f64>,
    /// Per-pair weights in pair order, clamped to `[0, inf)`.
    pub weights: Vec<f64>,
    /// Total recovered weight; ~1 under overlap, ~0 under complete separation.
    pub w_tot: f64,
    pub iterations: usize,
    /// Final Newton decrement.
    pub decrement: f64,
    pub converged: bool,
}

const ARMIJO_SLOPE: f64 = 0.3;
const MAX_HALVINGS: usize = 40;

/// Solve the EL dual for the displacement set. Counts are folded in as pair
/// weights; a singular Hessian is handled by a least-squares Newton step.
pub fn el_solve(disp: &Displacements, opts: &SolverOptions) -> Result<ElSolution> {
    if disp.delta().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let n_pairs = disp.n_pairs();
    let dim = disp.dim();
    let n_eff = disp.total_weight();
    if !(n_eff > 0.0) {
        return Err(Error::Validation {
            field: "counts".into(),
            msg: "total pair weight must be positive".into(),
        });
    }
    let eps0 = 1.0 / n_eff;

    // Column scaling to unit max-absolute value keeps the Newton system well
    // conditioned and makes w_tot stable under predictor rescaling. Scaling
    // commutes with the constraint set; the multiplier is mapped back below.
    let scales = column_scales(disp);
    let scaled = |k: usize, j: usize| disp.row(k)[j] / scales[j];

    let mut lambda = vec![0.0_f64; dim];
    let mut z = vec![0.0_f64; n_pairs];
    let mut q = vec![0.0_f64; n_pairs];

    let eval_z = |lambda: &[f64], z: &mut [f64]| {
        for k in 0..n_pairs {
            let mut acc = 1.0;
            for j in 0..dim {
                acc += lambda[j] * scaled(k, j);
            }
            z[k] = acc;
        }
    };
    let f_of = |z: &[f64]| -> f64 {
        let mut f = 0.0;
        for (k, &zk) in z.iter().enumerate() {
            f -= disp.weight(k) * log_star_eps(zk, eps0).0;
        }
        f
    };

    eval_z(&lambda, &mut z);
    let mut f_cur = f_of(&z);
    let mut iterations = 0;
    let mut decrement = f64::INFINITY;
    let mut converged = false;

    for _ in 0..opts.max_iter {
        // gradient and Hessian of f at the current multiplier
        let mut grad = DVector::zeros(dim);
        let mut hess = DMatrix::zeros(dim, dim);
        for k in 0..n_pairs {
            let ck = disp.weight(k);
            let (_, d1, d2) = log_star_eps(z[k], eps0);
            for a in 0..dim {
                let da = scaled(k, a);
                grad[a] -= ck * d1 * da;
                for b in a..dim {
                    hess[(a, b)] -= ck * d2 * da * scaled(k, b);
                }
            }
        }
        for a in 0..dim {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }

        if grad.amax() < opts.grad_tol {
            converged = true;
            decrement = 0.0;
            break;
        }

        // Newton direction; pseudo-inverse restricts the solve to the row
        // space when the Hessian degenerates near separation.
        let step = solve_spd_or_lstsq(&hess, &grad);
        let dec2 = grad.dot(&step).max(0.0);
        decrement = dec2.sqrt();
        if dec2 / 2.0 < opts.decrement_tol {
            converged = true;
            break;
        }
        let dir: Vec<f64> = (0..dim).map(|j| -step[j]).collect();
        let slope = -dec2;

        // q = delta_scaled . dir, so trial objectives reuse z + t*q
        for k in 0..n_pairs {
            let mut acc = 0.0;
            for j in 0..dim {
                acc += dir[j] * scaled(k, j);
            }
            q[k] = acc;
        }

        let mut t = 1.0;
        let mut f_new;
        let mut halvings = 0;
        loop {
            f_new = {
                let mut f = 0.0;
                for k in 0..n_pairs {
                    f -= disp.weight(k) * log_star_eps(z[k] + t * q[k], eps0).0;
                }
                f
            };
            if f_new <= f_cur + ARMIJO_SLOPE * t * slope || halvings >= MAX_HALVINGS {
                break;
            }
            t /= 2.0;
            halvings += 1;
        }

        for j in 0..dim {
            lambda[j] += t * dir[j];
        }
        for k in 0..n_pairs {
            z[k] += t * q[k];
        }
        f_cur = f_new;
        iterations += 1;
    }

    let mut weights = Vec::with_capacity(n_pairs);
    let mut w_tot = 0.0;
    for (k, &zk) in z.iter().enumerate() {
        let d1 = log_star_eps(zk, eps0).1;
        let w = (disp.weight(k) * d1 / n_eff).max(0.0);
        w_tot += w;
        weights.push(w);
    }

    // map the multiplier back to original coordinates
    let lambda: Vec<f64> = (0..dim).map(|j| lambda[j] / scales[j]).collect();

    Ok(ElSolution {
        lambda,
        weights,
        w_tot,
        iterations,
        decrement,
        converged,
    })
}

/// Per-column max-absolute-value scales (1 for all-zero columns).
pub(crate) fn column_scales(disp: &Displacements) -> Vec<f64> {
    let dim = disp.dim();
    let mut scales = vec![0.0_f64; dim];
    for k in 0..disp.n_pairs() {
        let row = disp.row(k);
        for j in 0..dim {
            scales[j] = scales[j].max(row[j].abs());
        }
    }
    for s in &mut scales {
        if *s == 0.0 {
            *s = 1.0;
        }
    }
    scales
}

/// Solve `H x = g` for symmetric PSD `H`, falling back to an SVD
/// least-squares solve when Cholesky fails.
fn solve_spd_or_lstsq(h: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    if let Some(chol) = h.clone().cholesky() {
        return chol.solve(g);
    }
    let svd = h.clone().svd(true, true);
    svd.solve(g, 1e-12 * h.amax().max(1e-300)).unwrap_or_else(|_| DVector::zeros(g.len()))
}

/// Marginal weights and the common point of the two predictor groups.
#[derive(Debug, Clone, Serialize)]
pub struct Marginals {
    /// Case-side weights, one per Case row in dataset order; sums to 1.
    pub u1: Vec<f64>,
    /// Non-Case-side weights, one per Non-Case row in dataset order.
    pub u0: Vec<f64>,
    /// `S = u1 * X1`.
    pub s: Vec<f64>,
    /// `F = u0 * X0`; equals `S` whenever the solve certified overlap.
    pub f: Vec<f64>,
}

/// Collapse pair weights to the group marginals `u1, u0` (renormalized by
/// `w_tot`) and the weighted group means `S` and `F`.
pub fn marginal_weights(
    sol: &ElSolution,
    disp: &Displacements,
    ds: &Dataset,
) -> Result<Marginals> {
    if sol.w_tot <= 1e-8 {
        return Err(Error::DegenerateWeights { w_tot: sol.w_tot });
    }
    let mut u1 = vec![0.0_f64; disp.n1()];
    let mut u0 = vec![0.0_f64; disp.n0()];
    for (k, &(i, j)) in disp.pairs().iter().enumerate() {
        let w = sol.weights[k] / sol.w_tot;
        u1[i as usize] += w;
        u0[j as usize] += w;
    }
    let d = ds.dim();
    let cases = ds.case_rows();
    let noncases = ds.noncase_rows();
    let mut s = vec![0.0_f64; d];
    let mut f = vec![0.0_f64; d];
    for (gi, &row) in cases.iter().enumerate() {
        for j in 0..d {
            s[j] += u1[gi] * ds.x()[(row, j)];
        }
    }
    for (gj, &row) in noncases.iter().enumerate() {
        for j in 0..d {
            f[j] += u0[gj] * ds.x()[(row, j)];
        }
    }
    Ok(Marginals { u1, u0, s, f })
}

/// Outer product of the marginal weights: the feasibility witness
/// `w_ij = u1_i * u0_j` from the Silvapulle-to-EL direction.
pub fn reconstruct_product_weights(u1: &[f64], u0: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(u1.len(), u0.len(), |i, j| u1[i] * u0[j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::displacements;
    use crate::fixtures;
    use approx::assert_relative_eq;

    fn solve_one(rows: &[Vec<f64>]) -> ElSolution {
        let disp = Displacements::from_rows(rows);
        el_solve(&disp, &SolverOptions::default()).unwrap()
    }

    #[test]
    fn log_star_at_one() {
        let (v, d1, d2) = log_star(1.0, 1);
        assert_eq!((v, d1, d2), (0.0, 1.0, -1.0));
    }

    #[test]
    fn log_star_quadratic_branch_at_zero() {
        let (v, d1, d2) = log_star(0.0, 4);
        assert_relative_eq!(v, 0.25_f64.ln() - 1.5, max_relative = 1e-15);
        assert_eq!(d1, 8.0);
        assert_eq!(d2, -16.0);
    }

    #[test]
    fn log_star_c2_at_knot() {
        for n in [1usize, 3, 10, 100] {
            let eps0 = 1.0 / n as f64;
            let below = log_star_eps(eps0 - 1e-12, eps0);
            let above = log_star_eps(eps0 + 1e-12, eps0);
            assert_relative_eq!(below.0, (1.0 / n as f64).ln(), epsilon = 1e-9);
            assert_relative_eq!(below.0, above.0, epsilon = 1e-9);
            assert_relative_eq!(below.1, above.1, epsilon = 1e-6 * n as f64);
            assert_relative_eq!(below.2, above.2, epsilon = 1e-4 * (n * n) as f64);
        }
    }

    #[test]
    fn symmetric_pair_gives_uniform_weights() {
        let sol = solve_one(&[vec![1.0], vec![-1.0]]);
        assert!(sol.converged);
        assert!(sol.lambda[0].abs() < 1e-9);
        assert_relative_eq!(sol.weights[0], 0.5, epsilon = 1e-9);
        assert_relative_eq!(sol.weights[1], 0.5, epsilon = 1e-9);
        assert_relative_eq!(sol.w_tot, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn two_point_constraint_determines_weights() {
        let sol = solve_one(&[vec![2.0], vec![-1.0]]);
        assert_relative_eq!(sol.weights[0], 1.0 / 3.0, epsilon = 1e-9);
        assert_relative_eq!(sol.weights[1], 2.0 / 3.0, epsilon = 1e-9);
        assert_relative_eq!(sol.w_tot, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn one_sided_points_collapse_weight() {
        let sol = solve_one(&[vec![1.0], vec![2.0]]);
        assert!(sol.w_tot < 1e-8, "w_tot = {}", sol.w_tot);
    }

    #[test]
    fn w0_reaches_full_weight() {
        let disp = displacements(&fixtures::w0()).unwrap();
        let sol = el_solve(&disp, &SolverOptions::default()).unwrap();
        assert!(sol.converged);
        assert!((sol.w_tot - 1.0).abs() < 1e-9, "w_tot = {}", sol.w_tot);
        // feasibility: weighted displacement mean is ~0
        let mut resid: [f64; 3] = [0.0; 3];
        for k in 0..disp.n_pairs() {
            for j in 0..3 {
                resid[j] += sol.weights[k] * disp.row(k)[j];
            }
        }
        for r in resid {
            assert!(r.abs() < 1e-8, "residual {r}");
        }
    }

    #[test]
    fn w0_marginals_match_reference_weights() {
        let ds = fixtures::w0();
        let disp = displacements(&ds).unwrap();
        let sol = el_solve(&disp, &SolverOptions::default()).unwrap();
        let m = marginal_weights(&sol, &disp, &ds).unwrap();
        let u1_ref = [
            0.16493310, 0.08925699, 0.21147676, 0.08701106, 0.08695881, 0.09646835, 0.08728623,
            0.17660869,
        ];
        let u0_ref = [
            0.07232476, 0.12967985, 0.13076825, 0.08068072, 0.11694525, 0.07262221, 0.08199628,
            0.31498268,
        ];
        for (got, want) in m.u1.iter().zip(u1_ref) {
            assert!((got - want).abs() < 1e-6, "u1 {got} vs {want}");
        }
        for (got, want) in m.u0.iter().zip(u0_ref) {
            assert!((got - want).abs() < 1e-6, "u0 {got} vs {want}");
        }
        let common = [9.227367, 4.194798, 5.981682];
        for j in 0..3 {
            assert!((m.s[j] - common[j]).abs() < 1e-6, "S[{j}] = {}", m.s[j]);
            assert!((m.f[j] - common[j]).abs() < 1e-6, "F[{j}] = {}", m.f[j]);
            assert!((m.s[j] - m.f[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn w1_marginals_are_exact_rationals() {
        let ds = fixtures::w1();
        let disp = displacements(&ds).unwrap();
        let sol = el_solve(&disp, &SolverOptions::default()).unwrap();
        let m = marginal_weights(&sol, &disp, &ds).unwrap();
        let u1_ref = [0.75, 0.25];
        let u0_ref = [0.4, 0.1, 0.5];
        for (got, want) in m.u1.iter().zip(u1_ref) {
            assert!((got - want).abs() < 1e-8, "u1 {got} vs {want}");
        }
        for (got, want) in m.u0.iter().zip(u0_ref) {
            assert!((got - want).abs() < 1e-8, "u0 {got} vs {want}");
        }
        for (j, want) in [10.0, 4.1, 7.1].iter().enumerate() {
            assert!((m.s[j] - want).abs() < 1e-7);
        }
    }

    #[test]
    fn single_shared_point_marginals() {
        let ds = Dataset::from_rows(&[vec![0.0], vec![0.0]], &[1, 0]).unwrap();
        let disp = displacements(&ds).unwrap();
        let sol = el_solve(&disp, &SolverOptions::default()).unwrap();
        let m = marginal_weights(&sol, &disp, &ds).unwrap();
        assert_eq!(m.u1, vec![1.0]);
        assert_eq!(m.u0, vec![1.0]);
        assert_eq!(m.s, vec![0.0]);
        assert_eq!(m.f, vec![0.0]);
    }

    #[test]
    fn product_weights_have_prescribed_margins() {
        let w = reconstruct_product_weights(&[0.75, 0.25], &[0.4, 0.1, 0.5]);
        assert_eq!(w.nrows(), 2);
        assert_eq!(w.ncols(), 3);
        for i in 0..2 {
            let row_sum: f64 = w.row(i).iter().sum();
            assert_relative_eq!(row_sum, [0.75, 0.25][i], epsilon = 1e-15);
        }
        for j in 0..3 {
            let col_sum: f64 = w.column(j).iter().sum();
            assert_relative_eq!(col_sum, [0.4, 0.1, 0.5][j], epsilon = 1e-15);
        }
        let trivial = reconstruct_product_weights(&[1.0], &[1.0]);
        assert_eq!(trivial[(0, 0)], 1.0);
        let quarters = reconstruct_product_weights(&[0.5, 0.5], &[0.5, 0.5]);
        assert!(quarters.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn duplicated_row_equals_doubled_count() {
        let base = Dataset::from_rows(
            &[vec![1.0, 0.5], vec![0.4, -1.0], vec![-1.2, 0.3], vec![0.2, 0.8]],
            &[1, 1, 0, 0],
        )
        .unwrap();
        // duplicate the first case row
        let dup = Dataset::from_rows(
            &[
                vec![1.0, 0.5],
                vec![1.0, 0.5],
                vec![0.4, -1.0],
                vec![-1.2, 0.3],
                vec![0.2, 0.8],
            ],
            &[1, 1, 1, 0, 0],
        )
        .unwrap();
        let counted = Dataset::new(
            base.x().clone(),
            base.y().to_vec(),
            base.rid().to_vec(),
            Some(vec![2.0, 1.0, 1.0, 1.0]),
        )
        .unwrap();
        let opts = SolverOptions::default();
        let w_dup = el_solve(&displacements(&dup).unwrap(), &opts).unwrap().w_tot;
        let w_cnt = el_solve(&displacements(&counted).unwrap(), &opts).unwrap().w_tot;
        assert!((w_dup - w_cnt).abs() < 1e-8, "{w_dup} vs {w_cnt}");
    }

    #[test]
    fn non_finite_rejected() {
        let disp = Displacements::from_rows(&[vec![f64::NAN]]);
        assert!(matches!(
            el_solve(&disp, &SolverOptions::default()),
            Err(Error::NonFinite)
        ));
    }
}
