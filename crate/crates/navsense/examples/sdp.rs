//! The conic layer on its own: the smallest eigenvalue of a Hermitian
//! matrix as the SDP min tr(CX) s.t. tr(X) = 1, X >= 0.

use leo_navsense::conic::{Coefficient, ConicProblem, ConicSolver, Constraint, InteriorPoint, Sense};
use leo_navsense::geometry::CMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};

fn main() -> leo_navsense::error::Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let n = 6;
    let a = CMatrix::from_fn(n, n, |_, _| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
    let c = (&a + a.adjoint()) * Complex64::new(0.5, 0.0);

    let mut p = ConicProblem::new();
    let x = p.add_block(n, "X");
    p.set_objective(x, c.clone());
    p.add_constraint(Constraint {
        terms: vec![(x, Coefficient::identity(n))],
        scalars: vec![],
        sense: Sense::Eq,
        rhs: 1.0,
        label: "unit trace".into(),
    });

    let sol = InteriorPoint::default().solve(&p)?.require_optimal()?;
    let lambda_min = c.symmetric_eigenvalues().min();
    let eig = sol.blocks[0].symmetric_eigenvalues();
    println!("SDP objective   {:.12}", sol.objective);
    println!("lambda_min(C)   {:.12}", lambda_min);
    println!("{} iterations, gap {:.1e}, primal residual {:.1e}", sol.iterations, sol.gap, sol.primal_residual);
    println!("eigenvalues of X*: {:?}", eig.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>());
    Ok(())
}
