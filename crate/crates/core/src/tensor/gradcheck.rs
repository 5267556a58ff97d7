//! Central finite-difference checks of tape gradients.
//!
//! The numeric side only ever evaluates forward values, so it stays
//! independent of the backward rules it validates.

use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{basis_spmm, Matrix, SparseMatrix, Tape, Tensor, TensorError};

/// Step used for central differences.
pub const FD_STEP: f64 = 1e-6;

/// Outcome of one gradient check.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

/// `‖a − b‖∞ / max(‖a‖∞, ‖b‖∞, 1e-6)`.
pub fn relative_error(analytic: &Matrix, numeric: &Matrix) -> f64 {
    let scale = analytic.max_abs().max(numeric.max_abs()).max(1e-6);
    analytic.max_abs_diff(numeric) / scale
}

/// Compares tape gradients of a scalar function against central differences.
///
/// `f` receives one tensor per entry of `inputs` and must return a `1 x 1`
/// tensor. Returns the worst relative error over all inputs.
pub fn check<F, E>(inputs: &[Matrix], f: F) -> Result<f64, E>
where
    F: for<'t> Fn(&'t Tape, &[Tensor<'t>]) -> Result<Tensor<'t>, E>,
    E: From<TensorError>,
{
    Ok(check_each(inputs, f)?.into_iter().fold(0.0, f64::max))
}

/// Like [`check`], but reports the relative error of every input separately.
pub fn check_each<F, E>(inputs: &[Matrix], f: F) -> Result<Vec<f64>, E>
where
    F: for<'t> Fn(&'t Tape, &[Tensor<'t>]) -> Result<Tensor<'t>, E>,
    E: From<TensorError>,
{
    let tape = Tape::new();
    let leaves: Vec<Tensor<'_>> = inputs.iter().map(|m| tape.param(m.clone())).collect();
    let loss = f(&tape, &leaves)?;
    tape.backward(loss)?;
    let analytic: Vec<Matrix> = leaves
        .iter()
        .zip(inputs)
        .map(|(t, m)| {
            t.grad()
                .unwrap_or_else(|| Matrix::zeros(m.rows(), m.cols()))
        })
        .collect();

    let eval = |vals: &[Matrix]| -> Result<f64, E> {
        let tape = Tape::new();
        let ts: Vec<Tensor<'_>> = vals.iter().map(|m| tape.constant(m.clone())).collect();
        Ok(f(&tape, &ts)?.value().item())
    };

    let mut errors = Vec::with_capacity(inputs.len());
    let mut work: Vec<Matrix> = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        let mut numeric = Matrix::zeros(input.rows(), input.cols());
        for e in 0..input.len() {
            let orig = input.as_slice()[e];
            work[k].as_mut_slice()[e] = orig + FD_STEP;
            let plus = eval(&work)?;
            work[k].as_mut_slice()[e] = orig - FD_STEP;
            let minus = eval(&work)?;
            work[k].as_mut_slice()[e] = orig;
            numeric.as_mut_slice()[e] = (plus - minus) / (2.0 * FD_STEP);
        }
        errors.push(relative_error(&analytic[k], &numeric));
    }
    Ok(errors)
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

/// Uniform on `±[0.05, 1]`, keeping samples clear of the PReLU kink.
fn away_from_zero(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        let mag = rng.random_range(0.05..1.0);
        if rng.random_bool(0.5) {
            mag
        } else {
            -mag
        }
    })
}

fn random_sparse(rng: &mut ChaCha8Rng, rows: usize, cols: usize, density: f64) -> SparseMatrix {
    let mut trip = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if rng.random_bool(density) {
                trip.push((r, c, rng.random_range(-1.0..1.0)));
            }
        }
    }
    SparseMatrix::from_triplets(rows, cols, trip).expect("in-range triplets")
}

/// Projects an arbitrary-shaped output onto a scalar with fixed random weights.
fn project<'t>(tape: &'t Tape, out: Tensor<'t>, seed: u64) -> Result<Tensor<'t>, TensorError> {
    let (r, c) = out.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let w = tape.constant(uniform(&mut rng, r, c, -1.0, 1.0));
    out.mul(w)?.sum()
}

type ScalarFn<'a> = dyn for<'t> Fn(&'t Tape, &[Tensor<'t>]) -> Result<Tensor<'t>, TensorError> + 'a;

/// Runs the per-op suite on random `5 x 4` operands drawn from `seed`.
pub fn op_suite(seed: u64, tolerance: f64) -> Result<Vec<GradCheck>, TensorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, d) = (5, 4);
    let x = uniform(&mut rng, n, d, -1.0, 1.0);
    let y = uniform(&mut rng, n, d, -1.0, 1.0);
    let w = uniform(&mut rng, d, 3, -1.0, 1.0);
    let wt = uniform(&mut rng, 3, d, -1.0, 1.0);
    let row = uniform(&mut rng, 1, d, -1.0, 1.0);
    let s = uniform(&mut rng, 1, 1, 0.5, 1.5);
    let kinked = away_from_zero(&mut rng, n, d);
    let slope = Matrix::scalar(rng.random_range(0.05..0.5));
    let positive = uniform(&mut rng, n, d, 0.1, 2.0);
    let m = uniform(&mut rng, d, d, -1.0, 1.0);
    let g = uniform(&mut rng, 1, d, -1.0, 1.0);
    let sp = Rc::new(random_sparse(&mut rng, n, n, 0.4));
    let mats = Rc::new(vec![
        random_sparse(&mut rng, n, n, 0.4),
        random_sparse(&mut rng, n, n, 0.4),
    ]);
    let coeffs = uniform(&mut rng, 2, 3, -1.0, 1.0);
    let prods: Vec<Matrix> = (0..3).map(|_| uniform(&mut rng, n, d, -1.0, 1.0)).collect();
    let idx = vec![4, 0, 2, 2];
    let picks: Vec<usize> = (0..n).map(|_| rng.random_range(0..d)).collect();

    let mut out = Vec::new();
    let mut run = |name: &str, inputs: Vec<Matrix>, f: &ScalarFn<'_>| -> Result<(), TensorError> {
        let err = check(&inputs, |tape, ts| f(tape, ts))?;
        out.push(GradCheck {
            name: name.to_string(),
            max_rel_error: err,
            tolerance,
        });
        Ok(())
    };

    run("matmul", vec![x.clone(), w.clone()], &|t, v| {
        project(t, v[0].matmul(v[1])?, seed)
    })?;
    run("matmul_t", vec![x.clone(), wt.clone()], &|t, v| {
        project(t, v[0].matmul_t(v[1])?, seed)
    })?;
    run("transpose", vec![x.clone()], &|t, v| {
        project(t, v[0].transpose()?, seed)
    })?;
    {
        let sp = Rc::clone(&sp);
        run("spmm", vec![x.clone()], &move |t, v| {
            project(t, v[0].spmm_by(Rc::clone(&sp))?, seed)
        })?;
    }
    {
        let mats = Rc::clone(&mats);
        let mut inputs = vec![coeffs.clone()];
        inputs.extend(prods.iter().cloned());
        run("basis_spmm", inputs, &move |t, v| {
            project(t, basis_spmm(Rc::clone(&mats), v[0], &v[1..])?, seed)
        })?;
    }
    run("add", vec![x.clone(), y.clone()], &|t, v| {
        project(t, v[0].add(v[1])?, seed)
    })?;
    run(
        "add_row_broadcast",
        vec![x.clone(), row.clone()],
        &|t, v| project(t, v[0].add(v[1])?, seed),
    )?;
    run("sub", vec![x.clone(), y.clone()], &|t, v| {
        project(t, v[0].sub(v[1])?, seed)
    })?;
    run(
        "sub_row_broadcast",
        vec![x.clone(), row.clone()],
        &|t, v| project(t, v[0].sub(v[1])?, seed),
    )?;
    run("mul", vec![x.clone(), y.clone()], &|t, v| {
        project(t, v[0].mul(v[1])?, seed)
    })?;
    run("scale", vec![x.clone()], &|t, v| {
        project(t, v[0].scale(-1.7)?, seed)
    })?;
    run("add_scalar", vec![x.clone()], &|t, v| {
        project(t, v[0].add_scalar(0.3)?, seed)
    })?;
    run("scalar_mul", vec![s.clone(), x.clone()], &|t, v| {
        project(t, v[1].scalar_mul(v[0])?, seed)
    })?;
    run("row_l2_normalize", vec![x.clone()], &|t, v| {
        project(t, v[0].row_l2_normalize()?, seed)
    })?;
    run("prelu", vec![kinked.clone(), slope.clone()], &|t, v| {
        project(t, v[0].prelu(v[1])?, seed)
    })?;
    run("sigmoid", vec![x.clone()], &|t, v| {
        project(t, v[0].sigmoid()?, seed)
    })?;
    run("softmax_row", vec![x.clone()], &|t, v| {
        project(t, v[0].softmax_row()?, seed)
    })?;
    run("log_softmax_row", vec![x.clone()], &|t, v| {
        project(t, v[0].log_softmax_row()?, seed)
    })?;
    run("mean_rows", vec![x.clone()], &|t, v| {
        project(t, v[0].mean_rows()?, seed)
    })?;
    run(
        "bilinear",
        vec![x.clone(), m.clone(), g.clone()],
        &|t, v| project(t, v[0].bilinear(v[1], v[2])?, seed),
    )?;
    {
        let idx = idx.clone();
        run("gather_rows", vec![x.clone()], &move |t, v| {
            project(t, v[0].gather_rows(&idx)?, seed)
        })?;
    }
    {
        let picks = picks.clone();
        run("pick_per_row", vec![x.clone()], &move |t, v| {
            project(t, v[0].pick_per_row(&picks)?, seed)
        })?;
    }
    run("log_clamped", vec![positive.clone()], &|t, v| {
        project(t, v[0].log_clamped(1e-12, 1e12)?, seed)
    })?;
    run("sum", vec![x.clone()], &|t, v| {
        v[0].scale(1.3)?.mul(t.constant(y.clone()))?.sum()
    })?;
    run("mean", vec![x.clone()], &|t, v| {
        v[0].mul(t.constant(y.clone()))?.mean()
    })?;
    Ok(out)
}
