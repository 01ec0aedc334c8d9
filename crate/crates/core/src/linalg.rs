//! Symmetric and SPD matrix utilities.
//!
//! [`jacobi_eigen`] is an accuracy-first eigensolver used as a reference
//! oracle; it is not differentiable. [`newton_schulz_sqrt`] is the
//! differentiable square root used inside the training path: trace
//! pre-normalised coupled Newton-Schulz iterations recorded on a [`Tape`].

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const DEFAULT_NS_ITERATIONS: usize = 5;

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_OFF_DIAGONAL_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Column `i` is the unit eigenvector for `eigenvalues[i]`.
    pub eigenvectors: Tensor,
}

impl EigenDecomposition {
    /// `U · diag(g(λ)) · Uᵀ`.
    pub fn reconstruct_with(&self, g: impl Fn(f64) -> f64) -> Tensor {
        let n = self.eigenvalues.len();
        let u = &self.eigenvectors;
        Tensor::from_fn(n, n, |i, j| {
            (0..n)
                .map(|k| u.get(i, k) * g(self.eigenvalues[k]) * u.get(j, k))
                .sum()
        })
    }

    pub fn reconstruct(&self) -> Tensor {
        self.reconstruct_with(|l| l)
    }

    /// Coordinates of `v` in the eigenbasis, `Uᵀv`.
    pub fn coefficients(&self, v: &[f64]) -> Vec<f64> {
        let n = self.eigenvalues.len();
        (0..n)
            .map(|k| (0..n).map(|i| self.eigenvectors.get(i, k) * v[i]).sum())
            .collect()
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
pub fn jacobi_eigen(a: &Tensor) -> Result<EigenDecomposition> {
    if !a.is_square() {
        return Err(Error::Dimension {
            op: "jacobi_eigen",
            left: a.shape(),
            right: (a.cols(), a.rows()),
        });
    }
    let n = a.rows();
    if n == 0 {
        return Err(Error::EmptyInput("jacobi_eigen"));
    }
    if !a.is_finite() {
        return Err(Error::numeric("non-finite entry in jacobi_eigen input"));
    }
    let scale = a.max_abs().max(1.0);
    if a.asymmetry() > SYMMETRY_TOL * scale {
        return Err(Error::contract(format!(
            "jacobi_eigen needs a symmetric matrix (asymmetry {:e})",
            a.asymmetry()
        )));
    }

    let mut m = a.clone();
    let mut v = Tensor::identity(n);
    let tol = JACOBI_OFF_DIAGONAL_TOL * a.frobenius_norm().max(1.0);
    let off = |m: &Tensor| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m.get(i, j) * m.get(i, j);
                }
            }
        }
        s.sqrt()
    };

    let mut converged = off(&m) <= tol;
    let mut sweeps = 0;
    while !converged {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::IterationLimit {
                op: "jacobi_eigen",
                limit: JACOBI_MAX_SWEEPS,
            });
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (m.get(k, p), m.get(k, q));
                    m.set(k, p, c * akp - s * akq);
                    m.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let (apk, aqk) = (m.get(p, k), m.get(q, k));
                    m.set(p, k, c * apk - s * aqk);
                    m.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let (vkp, vkq) = (v.get(k, p), v.get(k, q));
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
        sweeps += 1;
        converged = off(&m) <= tol;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(j, j).total_cmp(&m.get(i, i)));
    let eigenvalues = order.iter().map(|&i| m.get(i, i)).collect();
    let eigenvectors = Tensor::from_fn(n, n, |r, c| v.get(r, order[c]));
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// `(A + Aᵀ)/2 + εI`.
pub fn ridge_symmetrize(a: &Tensor, epsilon: f64) -> Result<Tensor> {
    if !a.is_square() {
        return Err(Error::Dimension {
            op: "ridge_symmetrize",
            left: a.shape(),
            right: (a.cols(), a.rows()),
        });
    }
    if !a.is_finite() || !epsilon.is_finite() {
        return Err(Error::numeric("non-finite input to ridge_symmetrize"));
    }
    if epsilon < 0.0 {
        return Err(Error::contract("ridge epsilon must be non-negative"));
    }
    let n = a.rows();
    Ok(Tensor::from_fn(n, n, |i, j| {
        let s = 0.5 * (a.get(i, j) + a.get(j, i));
        if i == j {
            s + epsilon
        } else {
            s
        }
    }))
}

fn check_ns_input(sigma: &Tensor, iterations: usize) -> Result<f64> {
    if !sigma.is_square() {
        return Err(Error::Dimension {
            op: "newton_schulz_sqrt",
            left: sigma.shape(),
            right: (sigma.cols(), sigma.rows()),
        });
    }
    if iterations == 0 {
        return Err(Error::contract("newton_schulz_sqrt needs at least one iteration"));
    }
    if !sigma.is_finite() {
        return Err(Error::numeric("non-finite entry in newton_schulz_sqrt input"));
    }
    let trace = sigma.trace();
    if trace.is_nan() || trace <= 0.0 {
        return Err(Error::contract(format!(
            "newton_schulz_sqrt needs a positive trace, got {trace:e}"
        )));
    }
    Ok(trace)
}

/// Coupled Newton-Schulz iteration state on plain tensors.
///
/// `y` converges to `(Σ/tr Σ)^{1/2}` and `z` to its inverse.
#[derive(Clone, Debug)]
pub struct NewtonSchulzState {
    pub y: Tensor,
    pub z: Tensor,
    pub iteration: usize,
    pub trace_scale: f64,
    normalized: Tensor,
}

impl NewtonSchulzState {
    pub fn new(sigma: &Tensor) -> Result<Self> {
        let trace = check_ns_input(sigma, 1)?;
        let normalized = sigma.scale(1.0 / trace);
        Ok(Self {
            y: normalized.clone(),
            z: Tensor::identity(sigma.rows()),
            iteration: 0,
            trace_scale: trace,
            normalized,
        })
    }

    pub fn step(&mut self) {
        let n = self.y.rows();
        let zy = self.z.matmul(&self.y).expect("square");
        let t = Tensor::identity(n).scale(3.0).sub(&zy).expect("square").scale(0.5);
        self.y = self.y.matmul(&t).expect("square");
        self.z = t.matmul(&self.z).expect("square");
        self.iteration += 1;
    }

    /// `‖Y·Y − Σ/tr(Σ)‖_F`.
    pub fn residual(&self) -> f64 {
        self.y
            .matmul(&self.y)
            .expect("square")
            .sub(&self.normalized)
            .expect("square")
            .frobenius_norm()
    }

    /// Post-compensated, symmetrised estimate `√tr(Σ) · Y`.
    pub fn estimate(&self) -> Tensor {
        let s = self.y.scale(self.trace_scale.sqrt());
        ridge_symmetrize(&s, 0.0).expect("finite")
    }

    /// Post-compensated estimate without the final symmetrisation.
    pub fn raw_estimate(&self) -> Tensor {
        self.y.scale(self.trace_scale.sqrt())
    }
}

/// Differentiable matrix square root of an SPD matrix via `iterations`
/// coupled Newton-Schulz steps.
///
/// The input is divided by its trace so every eigenvalue lies in `(0, 1]`,
/// which is what makes the iteration converge; the result is scaled back by
/// `√tr(Σ)` and symmetrised.
pub fn newton_schulz_sqrt(tape: &mut Tape, sigma: Var, iterations: usize) -> Result<Var> {
    check_ns_input(tape.value(sigma), iterations)?;
    let n = tape.shape(sigma).0;
    let trace = tape.trace(sigma)?;
    let inv_trace = tape.powf(trace, -1.0);
    let mut y = tape.mul_scalar(sigma, inv_trace)?;
    let mut z = tape.constant(Tensor::identity(n));
    let three = tape.constant(Tensor::identity(n).scale(3.0));
    for k in 0..iterations {
        let zy = tape.matmul(z, y)?;
        let d = tape.sub(three, zy)?;
        let t = tape.scale(d, 0.5);
        let next_y = tape.matmul(y, t)?;
        if k + 1 < iterations {
            z = tape.matmul(t, z)?;
        }
        y = next_y;
    }
    let root_trace = tape.powf(trace, 0.5);
    let out = tape.mul_scalar(y, root_trace)?;
    let out = tape.symmetrize(out)?;
    if !tape.value(out).is_finite() {
        return Err(Error::numeric("newton_schulz_sqrt produced non-finite values"));
    }
    Ok(out)
}

/// Value-only convenience wrapper over [`newton_schulz_sqrt`].
pub fn newton_schulz_sqrt_value(sigma: &Tensor, iterations: usize) -> Result<Tensor> {
    let mut tape = Tape::new();
    let s = tape.constant(sigma.clone());
    let out = newton_schulz_sqrt(&mut tape, s, iterations)?;
    Ok(tape.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{random_spd, random_symmetric};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: &Tensor, b: &Tensor, tol: f64) {
        let d = a.sub(b).unwrap().max_abs();
        assert!(d <= tol, "max diff {d:e} > {tol:e}\n{a:?}\n{b:?}");
    }

    fn orthogonality_error(u: &Tensor) -> f64 {
        let n = u.rows();
        u.transpose()
            .matmul(u)
            .unwrap()
            .sub(&Tensor::identity(n))
            .unwrap()
            .frobenius_norm()
    }

    #[test]
    fn diagonal_input() {
        let e = jacobi_eigen(&Tensor::diag(&[3.0, 1.0])).unwrap();
        assert_eq!(e.eigenvalues, vec![3.0, 1.0]);
        for i in 0..2 {
            for j in 0..2 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((e.eigenvectors.get(i, j).abs() - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn ascending_diagonal_is_reordered() {
        let e = jacobi_eigen(&Tensor::diag(&[1.0, 5.0, 3.0])).unwrap();
        assert_eq!(e.eigenvalues, vec![5.0, 3.0, 1.0]);
        assert!((e.eigenvectors.get(1, 0).abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn classic_two_by_two() {
        let a = Tensor::from_rows(&[[2.0, 1.0], [1.0, 2.0]]);
        let e = jacobi_eigen(&a).unwrap();
        assert!((e.eigenvalues[0] - 3.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let u = &e.eigenvectors;
        // column signs are arbitrary
        assert!((u.get(0, 0).abs() - h).abs() < 1e-14);
        assert!((u.get(0, 0) - u.get(1, 0)).abs() < 1e-14);
        assert!((u.get(0, 1) + u.get(1, 1)).abs() < 1e-14);
    }

    #[test]
    fn random_symmetric_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let a = random_symmetric(8, &mut rng);
            let e = jacobi_eigen(&a).unwrap();
            let rec = e.reconstruct().sub(&a).unwrap().frobenius_norm();
            assert!(rec / a.frobenius_norm().max(1.0) <= 1e-8, "reconstruction {rec:e}");
            assert!(orthogonality_error(&e.eigenvectors) <= 1e-8);
            assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let a = Tensor::from_rows(&[[1.0, 2.0], [0.0, 1.0]]);
        assert!(matches!(jacobi_eigen(&a), Err(Error::Contract(_))));
    }

    #[test]
    fn one_by_one() {
        let e = jacobi_eigen(&Tensor::scalar(-4.0)).unwrap();
        assert_eq!(e.eigenvalues, vec![-4.0]);
    }

    #[test]
    fn ridge_fixed_point_on_symmetric() {
        let a = Tensor::from_rows(&[[2.0, -1.0], [-1.0, 3.0]]);
        assert_eq!(ridge_symmetrize(&a, 0.0).unwrap(), a);
    }

    #[test]
    fn ridge_only_on_zeros() {
        let out = ridge_symmetrize(&Tensor::zeros(3, 3), 0.1).unwrap();
        assert_eq!(out, Tensor::identity(3).scale(0.1));
    }

    #[test]
    fn ridge_output_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = crate::testing::random_uniform(6, 6, &mut rng);
        let out = ridge_symmetrize(&a, 0.25).unwrap();
        let base = out.sub(&Tensor::identity(6).scale(0.25)).unwrap();
        assert!(base.asymmetry() <= 1e-15);
    }

    #[test]
    fn ridge_rejects_non_finite() {
        let a = Tensor::from_rows(&[[f64::NAN]]);
        assert!(matches!(ridge_symmetrize(&a, 0.0), Err(Error::Numeric(_))));
    }

    #[test]
    fn ns_identity_one_by_one_is_exact() {
        for k in 1..6 {
            let out = newton_schulz_sqrt_value(&Tensor::identity(1), k).unwrap();
            assert_eq!(out.item(), 1.0);
        }
    }

    #[test]
    fn ns_identity_converges_to_identity() {
        // Y0 = I/f, so finite iteration counts only approach I for f > 1
        for f in [2usize, 4, 8] {
            let out = newton_schulz_sqrt_value(&Tensor::identity(f), 20).unwrap();
            assert_close(&out, &Tensor::identity(f), 1e-12);
        }
    }

    #[test]
    fn ns_diagonal_square_root() {
        let out = newton_schulz_sqrt_value(&Tensor::diag(&[4.0, 9.0]), 5).unwrap();
        assert_close(&out, &Tensor::diag(&[2.0, 3.0]), 1e-3);
    }

    #[test]
    fn ns_matches_eigen_oracle_on_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let sigma = random_spd(16, 100.0, &mut rng);
            let root = newton_schulz_sqrt_value(&sigma, 25).unwrap();
            let norm = sigma.frobenius_norm();
            let sq = root.matmul(&root).unwrap().sub(&sigma).unwrap().frobenius_norm();
            assert!(sq / norm <= 1e-3, "square residual {:e}", sq / norm);
            let oracle = jacobi_eigen(&sigma).unwrap().reconstruct_with(f64::sqrt);
            let d = root.sub(&oracle).unwrap().frobenius_norm();
            assert!(d / norm <= 1e-2, "oracle distance {:e}", d / norm);
        }
    }

    #[test]
    fn ns_state_matches_tape_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sigma = random_spd(6, 50.0, &mut rng);
        let mut state = NewtonSchulzState::new(&sigma).unwrap();
        for _ in 0..5 {
            state.step();
        }
        let taped = newton_schulz_sqrt_value(&sigma, 5).unwrap();
        assert_close(&state.estimate(), &taped, 1e-12);
    }

    #[test]
    fn ns_residual_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..10 {
            let sigma = random_spd(8, 100.0, &mut rng);
            let mut state = NewtonSchulzState::new(&sigma).unwrap();
            let mut prev = state.residual();
            for _ in 0..5 {
                state.step();
                let r = state.residual();
                assert!(r <= prev + 1e-15, "residual rose {prev:e} -> {r:e}");
                prev = r;
            }
        }
    }

    #[test]
    fn ns_output_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let sigma = random_spd(10, 30.0, &mut rng);
        let mut state = NewtonSchulzState::new(&sigma).unwrap();
        for _ in 0..5 {
            state.step();
        }
        assert!(state.raw_estimate().asymmetry() <= 1e-6);
        assert!(newton_schulz_sqrt_value(&sigma, 5).unwrap().asymmetry() <= 1e-8);
    }

    #[test]
    fn ns_error_paths() {
        let bad = Tensor::from_rows(&[[f64::INFINITY, 0.0], [0.0, 1.0]]);
        assert!(matches!(newton_schulz_sqrt_value(&bad, 5), Err(Error::Numeric(_))));
        let neg = Tensor::diag(&[-1.0, -2.0]);
        assert!(matches!(newton_schulz_sqrt_value(&neg, 5), Err(Error::Contract(_))));
        assert!(matches!(
            newton_schulz_sqrt_value(&Tensor::identity(2), 0),
            Err(Error::Contract(_))
        ));
    }
}
