use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::bt::fill_stability;
use super::{Method, ReductionReport};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, RitzOptions, StateMatrix};
use crate::solvers::GramianFactors;
use crate::system::{project, BiorthPolicy, LtiSystem, ReducedModel};

#[derive(Debug, Clone)]
pub struct InterpOptions {
    pub max_iter: usize,
    /// On the relative change of the sorted shift set.
    pub tol: f64,
    pub seed: u64,
    /// Overrides the logarithmically spaced default.
    pub init_shifts: Option<Vec<Complex64>>,
    pub ritz: RitzOptions,
}

impl Default for InterpOptions {
    fn default() -> Self {
        InterpOptions {
            max_iter: 100,
            tol: 1e-6,
            seed: 2024,
            init_shifts: None,
            ritz: RitzOptions::default(),
        }
    }
}

/// One interpolation point per real shift or conjugate pair, with tangential directions.
#[derive(Debug, Clone)]
struct Point {
    sigma: Complex64,
    b: DVector<Complex64>,
    c: DVector<Complex64>,
}

fn is_real(z: Complex64) -> bool {
    z.im.abs() <= 1e-12 * z.norm()
}

/// `n` real shifts log-spaced over the real-part range of Ritz values of `A`.
fn default_shifts(a: &StateMatrix, n: usize, ritz: &RitzOptions) -> Result<Vec<Complex64>> {
    let ritz = linalg::ritz_values(a, ritz)?;
    let mags: Vec<f64> = ritz.iter().map(|z| -z.re).filter(|x| *x > 0.0 && x.is_finite()).collect();
    if mags.is_empty() {
        return Err(Error::InvalidArgument("no stable Ritz value found for shift initialization".into()));
    }
    let lo = mags.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mags.iter().copied().fold(0.0, f64::max);
    Ok((0..n)
        .map(|i| {
            let t = if n == 1 { 0.5 } else { i as f64 / (n - 1) as f64 };
            Complex64::new((lo.ln() + t * (hi.ln() - lo.ln())).exp(), 0.0)
        })
        .collect())
}

fn random_direction(len: usize, rng: &mut ChaCha8Rng) -> DVector<Complex64> {
    let v = DVector::from_fn(len, |_, _| {
        let x: f64 = StandardNormal.sample(rng);
        x
    });
    let norm = v.norm();
    v.map(|x| Complex64::new(if norm > 0.0 { x / norm } else { 1.0 }, 0.0))
}

/// Builds one-per-pair points from a shift set closed under conjugation.
fn initial_points(shifts: &[Complex64], q: usize, p: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shifts
        .iter()
        .filter(|s| is_real(**s) || s.im > 0.0)
        .map(|&s| Point {
            sigma: if is_real(s) { Complex64::new(s.re, 0.0) } else { s },
            b: random_direction(q, &mut rng),
            c: random_direction(p, &mut rng),
        })
        .collect()
}

fn expand_count(points: &[Point]) -> usize {
    points.iter().map(|pt| if pt.sigma.im == 0.0 { 1 } else { 2 }).sum()
}

/// Makes the largest entry real and positive; used for directions paired with real shifts.
fn phase_normalize(v: &DVector<Complex64>) -> DVector<f64> {
    let k = (0..v.len()).max_by(|&i, &j| v[i].norm().total_cmp(&v[j].norm()));
    match k {
        Some(k) if v[k].norm() > 0.0 => {
            let phase = v[k].conj() / v[k].norm();
            v.map(|z| (z * phase).re)
        }
        _ => v.map(|z| z.re),
    }
}

/// Columns `(σI − A)⁻¹ F d` (or with `Aᵀ`), split into real and imaginary parts for pairs.
fn rational_basis(a: &StateMatrix, f: &DMatrix<f64>, points: &[Point], dirs: impl Fn(&Point) -> DVector<Complex64>, transposed: bool) -> Result<DMatrix<f64>> {
    let big = a.nrows();
    let mut out = DMatrix::zeros(big, expand_count(points));
    let mut col = 0;
    for pt in points {
        let d = dirs(pt);
        if pt.sigma.im == 0.0 {
            let rhs = f * phase_normalize(&d);
            let lu = a.factor_shifted(-pt.sigma.re, transposed)?;
            let x = lu.solve(&DMatrix::from_column_slice(big, 1, rhs.as_slice()));
            out.set_column(col, &x.column(0));
            col += 1;
        } else {
            let rhs = linalg::rcmul(f, &DMatrix::from_column_slice(d.len(), 1, d.as_slice()));
            let lu = a.factor_shifted_complex(-pt.sigma, transposed)?;
            let x = lu.solve(&rhs);
            out.set_column(col, &x.column(0).map(|z| z.re));
            out.set_column(col + 1, &x.column(0).map(|z| z.im));
            col += 2;
        }
    }
    Ok(out)
}

/// Mirrored poles `−λ_i(Ar)` with tangential directions from the eigenvector
/// basis `Ar = XΛX⁻¹`: `b_i` the rows of `X⁻¹Br`, `c_i` the columns of `CrX`.
/// Poles in the right half-plane are reflected so every shift has positive real part.
fn next_points(ar: &DMatrix<f64>, br: &DMatrix<f64>, cr: &DMatrix<f64>) -> Result<(Vec<Point>, bool)> {
    let n = ar.nrows();
    let schur = linalg::complex_schur(ar)?;
    let y = linalg::triangular_eigenvectors(&schur.upper);
    let x = linalg::cmul(&schur.unitary, &y);
    let xinv = x.clone().lu().solve(&CMatrix::identity(n, n)).ok_or(Error::Singular("reduced eigenvector basis"))?;
    let bt = &xinv * linalg::to_complex(br);
    let ct = linalg::to_complex(cr) * &x;
    let lambda: Vec<Complex64> = (0..n).map(|i| schur.upper[(i, i)]).collect();
    let mut unstable = false;
    let mut points = Vec::new();
    for (i, &l) in lambda.iter().enumerate() {
        if l.re >= 0.0 {
            unstable = true;
        }
        let mut sigma = Complex64::new(l.re.abs(), -l.im);
        if is_real(sigma) {
            sigma.im = 0.0;
        } else if sigma.im < 0.0 {
            continue;
        }
        points.push(Point {
            sigma,
            b: bt.row(i).transpose(),
            c: ct.column(i).into_owned(),
        });
    }
    if expand_count(&points) != n {
        return Err(Error::InvalidArgument(format!(
            "reduced spectrum is not closed under conjugation ({} of {n} interpolation columns)",
            expand_count(&points)
        )));
    }
    Ok((points, unstable))
}

fn sorted_shift_set(points: &[Point]) -> Vec<Complex64> {
    let mut s: Vec<Complex64> = points
        .iter()
        .flat_map(|pt| {
            if pt.sigma.im == 0.0 {
                vec![pt.sigma]
            } else {
                vec![pt.sigma, pt.sigma.conj()]
            }
        })
        .collect();
    s.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    s
}

fn shift_change(old: &[Complex64], new: &[Complex64]) -> f64 {
    let num: f64 = old.iter().zip(new).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let den: f64 = new.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

fn validate(sys: &LtiSystem, n: usize) -> Result<()> {
    if n == 0 || n > sys.state_dim() {
        return Err(Error::InvalidArgument(format!(
            "interpolatory reduction needs 1 <= n <= N, got n={n}, N={}",
            sys.state_dim()
        )));
    }
    Ok(())
}

fn start_points(sys: &LtiSystem, n: usize, opts: &InterpOptions, seed: u64) -> Result<Vec<Point>> {
    let shifts = match &opts.init_shifts {
        Some(s) => s.clone(),
        None => default_shifts(&sys.a, n, &opts.ritz)?,
    };
    let pts = initial_points(&shifts, sys.input_dim(), sys.output_dim(), seed);
    if expand_count(&pts) != n {
        return Err(Error::InvalidArgument(format!(
            "initial shifts give {} interpolation columns, expected {n}",
            expand_count(&pts)
        )));
    }
    Ok(pts)
}

fn shifts_out(points: &[Point]) -> Vec<(f64, f64)> {
    sorted_shift_set(points).into_iter().map(|z| (z.re, z.im)).collect()
}

/// Iterative rational Krylov algorithm with tangential interpolation.
///
/// At a fixed point the shift set equals the mirrored reduced poles `{−λ_i(Ar)}`.
/// Returns the last iterate with `converged = false` after `max_iter` sweeps.
pub fn irka(sys: &LtiSystem, n: usize, opts: &InterpOptions) -> Result<(ReducedModel, ReductionReport)> {
    validate(sys, n)?;
    let ct = sys.c.transpose();
    let mut points = start_points(sys, n, opts, opts.seed)?;
    let mut report = ReductionReport::new(Method::Irka, n);
    report.seed = Some(opts.seed);
    report.converged = false;
    let mut rom = None;
    for it in 1..=opts.max_iter {
        let v = rational_basis(&sys.a, &sys.b, &points, |pt| pt.b.clone(), false)?;
        let w = rational_basis(&sys.a, &ct, &points, |pt| pt.c.clone(), true)?;
        let v = linalg::thin_q(&v);
        let w = linalg::thin_q(&w);
        let r = project(sys, &v, &w, BiorthPolicy::Rebiorthogonalize)?;
        let (next, unstable) = next_points(&r.ar, &r.br, &r.cr)?;
        if unstable {
            log::debug!("IRKA iteration {it}: reduced model has poles in the closed right half-plane");
        }
        let change = shift_change(&sorted_shift_set(&points), &sorted_shift_set(&next));
        report.iterations = it;
        points = next;
        rom = Some(r);
        if change < opts.tol {
            report.converged = true;
            break;
        }
    }
    let rom = rom.expect("at least one iteration");
    report.shifts = shifts_out(&points);
    fill_stability(&mut report, &rom)?;
    if !report.converged {
        log::warn!("IRKA did not converge within {} iterations", opts.max_iter);
    }
    if !report.hurwitz {
        log::warn!("IRKA returned a reduced model that is not Hurwitz");
    }
    Ok((rom, report))
}

/// `W = QV(VᵀQV)⁻¹` evaluated through the factor as `Uᵀ(UV)G⁻¹`, `G = (UV)ᵀ(UV)`.
fn constrained_left_basis(q: &GramianFactors, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let uv = &q.factor * v;
    let g = uv.tr_mul(&uv);
    let s = linalg::singular_values(&g);
    let smax = s.iter().copied().fold(0.0, f64::max);
    let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
    if s.is_empty() || smin <= 1e-14 * smax || smin == 0.0 {
        return Err(Error::SingularProjectedGramian(if smax > 0.0 { smin / smax } else { 0.0 }));
    }
    // W = Uᵀ(UV)G⁻¹ ⇔ G Wᵀ = (UV)ᵀU
    let wt = g.cholesky().ok_or(Error::SingularProjectedGramian(smin / smax))?.solve(&uv.tr_mul(&q.factor));
    Ok(wt.transpose())
}

/// Relative distance of `w` to `QV(VᵀQV)⁻¹`, with the reference computed from the
/// dense Gramian when available and from a QR of `UV` otherwise.
fn constraint_residual(q: &GramianFactors, v: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
    let reference = match &q.dense {
        Some(qd) => {
            let qv = qd * v;
            let vqv = v.tr_mul(&qv);
            vqv.lu().solve(&qv.transpose()).map(|x| x.transpose())
        }
        None => {
            let qr = (&q.factor * v).qr();
            let (qq, r) = (qr.q(), qr.r());
            // (UV) G⁻¹ = Q_r R⁻ᵀ
            r.solve_upper_triangular(&qq.transpose())
                .map(|x| q.factor.tr_mul(&x.transpose()))
        }
    };
    match reference {
        Some(wref) => (w - wref).norm() / w.norm().max(f64::MIN_POSITIVE),
        None => f64::INFINITY,
    }
}

/// Iterative SVD-rational Krylov: IRKA-type updates of `V` only, with `W` fixed by
/// the observability Gramian so that every iterate is Hurwitz.
pub fn isrk(sys: &LtiSystem, n: usize, q: &GramianFactors, opts: &InterpOptions) -> Result<(ReducedModel, ReductionReport)> {
    validate(sys, n)?;
    if q.state_dim() != sys.state_dim() {
        return Err(Error::dims("isrk Gramian factor", sys.state_dim(), q.state_dim()));
    }
    if q.rank() < n {
        return Err(Error::OrderExceedsRank { n, rank: q.rank() });
    }
    match isrk_run(sys, n, q, opts, opts.seed) {
        Err(Error::SingularProjectedGramian(rc)) => {
            let reseed = opts.seed.wrapping_add(1);
            log::warn!("ISRK: VᵀQV singular (rcond {rc:.3e}); restarting once with seed {reseed}");
            let mut retry = opts.clone();
            if let Some(s) = &opts.init_shifts {
                retry.init_shifts = Some(s.iter().map(|z| z * 1.1).collect());
            } else {
                let base = default_shifts(&sys.a, n, &opts.ritz)?;
                retry.init_shifts = Some(base.iter().map(|z| z * 1.1).collect());
            }
            isrk_run(sys, n, q, &retry, reseed)
        }
        other => other,
    }
}

fn isrk_run(sys: &LtiSystem, n: usize, q: &GramianFactors, opts: &InterpOptions, seed: u64) -> Result<(ReducedModel, ReductionReport)> {
    let mut points = start_points(sys, n, opts, seed)?;
    let mut report = ReductionReport::new(Method::Isrk, n);
    report.seed = Some(seed);
    report.converged = false;
    let mut rom = None;
    for it in 1..=opts.max_iter {
        let v = linalg::thin_q(&rational_basis(&sys.a, &sys.b, &points, |pt| pt.b.clone(), false)?);
        let w = constrained_left_basis(q, &v)?;
        report.constraint_residuals.push(constraint_residual(q, &v, &w));
        let r = project(sys, &v, &w, BiorthPolicy::Reject)?;
        let (next, _) = next_points(&r.ar, &r.br, &r.cr)?;
        let change = shift_change(&sorted_shift_set(&points), &sorted_shift_set(&next));
        report.iterations = it;
        points = next;
        rom = Some(r);
        if change < opts.tol {
            report.converged = true;
            break;
        }
    }
    let rom = rom.expect("at least one iteration");
    report.shifts = shifts_out(&points);
    fill_stability(&mut report, &rom)?;
    if !report.converged {
        log::warn!("ISRK did not converge within {} iterations", opts.max_iter);
    }
    Ok((rom, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::{GramianMode, Orientation};

    fn diag_example() -> LtiSystem {
        LtiSystem::new(
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::zeros(2),
        )
        .unwrap()
    }

    #[test]
    fn scalar_irka_is_exact() {
        let sys = LtiSystem::scalar(-3.0, Some(1.0), 2.0, 1.0);
        let (rom, rep) = irka(&sys, 1, &InterpOptions::default()).unwrap();
        assert!(rep.converged && rep.iterations <= 2, "{rep:?}");
        assert!((rom.ar[(0, 0)] + 3.0).abs() < 1e-12);
        assert!((rom.br[(0, 0)] * rom.cr[(0, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn irka_fixed_point_mirrors_pole() {
        let (rom, rep) = irka(&diag_example(), 1, &InterpOptions::default()).unwrap();
        assert!(rep.converged);
        let lambda = rom.ar[(0, 0)];
        assert!((rep.shifts[0].0 + lambda).abs() < 1e-8, "{:?} vs {lambda}", rep.shifts);
    }

    #[test]
    fn scalar_isrk_is_exact() {
        let sys = LtiSystem::scalar(-0.5, Some(1.0), 1.0, 1.0);
        let q = GramianFactors::observability(&sys.a, &sys.c, &GramianMode::Dense).unwrap();
        let (rom, rep) = isrk(&sys, 1, &q, &InterpOptions::default()).unwrap();
        assert!((rom.ar[(0, 0)] + 0.5).abs() < 1e-12);
        assert!(rep.constraint_residuals.iter().all(|&r| r <= 1e-10));
    }

    #[test]
    fn isrk_needs_observable_directions() {
        let sys = diag_example();
        let sys = LtiSystem::new(sys.a.clone(), sys.b.clone(), DMatrix::zeros(1, 2), sys.x0.clone()).unwrap();
        let q = GramianFactors::observability(&sys.a, &sys.c, &GramianMode::Dense).unwrap();
        let err = isrk(&sys, 1, &q, &InterpOptions::default()).unwrap_err();
        assert!(matches!(err, Error::OrderExceedsRank { n: 1, rank: 0 }), "{err}");
    }

    #[test]
    fn isrk_on_oscillatory_system() {
        let n = 12;
        let mut a = DMatrix::zeros(n, n);
        for k in 0..n / 2 {
            let (d, w) = (-0.1 - 0.2 * k as f64, 1.0 + k as f64);
            a[(2 * k, 2 * k)] = d;
            a[(2 * k + 1, 2 * k + 1)] = d;
            a[(2 * k, 2 * k + 1)] = w;
            a[(2 * k + 1, 2 * k)] = -w;
        }
        let b = DMatrix::from_fn(n, 1, |i, _| 1.0 / (1.0 + i as f64));
        let c = DMatrix::from_fn(1, n, |_, j| if j % 2 == 0 { 1.0 } else { 0.3 });
        let sys = LtiSystem::new(a, b, c, DVector::zeros(n)).unwrap();
        let q = GramianFactors::dense(&sys.a, &sys.c, Orientation::Observability).unwrap();
        let (rom, rep) = isrk(&sys, 4, &q, &InterpOptions::default()).unwrap();
        assert!(rep.hurwitz);
        assert!(rom.biorthogonality_error().unwrap() < 1e-10);
        assert!(rep.constraint_residuals.iter().all(|&r| r <= 1e-10), "{:?}", rep.constraint_residuals);
    }
}
