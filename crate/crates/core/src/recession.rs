//! Recession functions estimated along geodesic rays, the closed form for
//! log-sum-exp functions, and membership in `B(h)` over finite families of
//! directions.

use rayon::prelude::*;

use crate::boundary::{pairing, ray_point_from_identity, BoundaryPoint};
use crate::error::{Error, Result};
use crate::manifold::PdPoint;
use crate::numerics::{real_diag, rq_positive_raw};

/// Quotients above this are reported as an infinite recession value.
pub const DEFAULT_CAP: f64 = 1e6;

/// Slack allowed in halfspace tests.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// An objective on a product of copies of `P_n`.
pub trait Objective: Sync {
    fn eval(&self, points: &[PdPoint]) -> Result<f64>;

    /// Whether grid points may be evaluated in parallel.
    fn concurrent(&self) -> bool {
        true
    }
}

impl<F> Objective for F
where
    F: Fn(&[PdPoint]) -> Result<f64> + Sync,
{
    fn eval(&self, points: &[PdPoint]) -> Result<f64> {
        self(points)
    }
}

/// Wraps an objective that must be called from one thread at a time.
pub struct Sequential<F>(pub F);

impl<F> Objective for Sequential<F>
where
    F: Fn(&[PdPoint]) -> Result<f64> + Sync,
{
    fn eval(&self, points: &[PdPoint]) -> Result<f64> {
        (self.0)(points)
    }

    fn concurrent(&self) -> bool {
        false
    }
}

/// `{1, 2, 4, …, 2^10}`.
pub fn default_grid() -> Vec<f64> {
    (0..=10).map(|k| (1u64 << k) as f64).collect()
}

#[derive(Clone, Debug)]
pub struct RayProbe {
    pub bases: Vec<PdPoint>,
    pub directions: Vec<BoundaryPoint>,
    pub t_grid: Vec<f64>,
}

impl RayProbe {
    pub fn new(bases: Vec<PdPoint>, directions: Vec<BoundaryPoint>, t_grid: Vec<f64>) -> Result<Self> {
        if bases.len() != directions.len() {
            return Err(Error::DimensionMismatch { expected: bases.len(), found: directions.len() });
        }
        for (x, p) in bases.iter().zip(&directions) {
            if x.dim() != p.n() {
                return Err(Error::DimensionMismatch { expected: x.dim(), found: p.n() });
            }
        }
        if t_grid.is_empty() || t_grid[0] <= 0.0 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("t grid must be positive and strictly increasing".into()));
        }
        Ok(Self { bases, directions, t_grid })
    }

    /// Rays from the identity with the default grid.
    pub fn from_identity(directions: Vec<BoundaryPoint>) -> Self {
        let bases = directions.iter().map(|p| PdPoint::identity(p.n())).collect();
        Self { bases, directions, t_grid: default_grid() }
    }

    pub fn with_grid(mut self, t_grid: Vec<f64>) -> Result<Self> {
        self.t_grid = t_grid;
        Self::new(self.bases, self.directions, self.t_grid)
    }

    /// The ray position at time `t` in every factor.
    pub fn point(&self, t: f64) -> Result<Vec<PdPoint>> {
        self.bases.iter().zip(&self.directions).map(|(x, p)| ray_point(x, p, t)).collect()
    }
}

/// The point at time `t` on the ray from `x` in the class of `p`.
///
/// From the identity this is `u e^{tλ} u^dag`, kept in spectral form. From
/// another base it is `u b e^{tλ} b^dag u^dag` where `u^dag x^{1/2} = b k`,
/// which is formed densely and so only reaches moderate `t`.
pub fn ray_point(x: &PdPoint, p: &BoundaryPoint, t: f64) -> Result<PdPoint> {
    if x.dim() != p.n() {
        return Err(Error::DimensionMismatch { expected: x.dim(), found: p.n() });
    }
    if x.is_identity(0.0) {
        return Ok(ray_point_from_identity(p, t));
    }
    let (b, _) = rq_positive_raw(&(p.basis().adjoint() * x.half_factor()))?;
    let g = p.basis() * b;
    let e: Vec<f64> = p.lambda().iter().map(|l| (t * l).exp()).collect();
    PdPoint::new(&(&g * real_diag(&e) * g.adjoint()))
}

#[derive(Clone, Debug)]
pub struct RecessionEstimate {
    pub t_grid: Vec<f64>,
    pub values: Vec<f64>,
    /// `(f(c(t)) − f(c(0))) / t` on the grid.
    pub quotients: Vec<f64>,
    /// Slope over the last grid interval. Converges much faster than the
    /// quotient from the origin and never exceeds the recession value.
    pub estimate: f64,
    pub infinite: bool,
    /// Largest drop between consecutive quotients (zero if monotone).
    pub monotone_violation: f64,
}

impl RecessionEstimate {
    fn from_values(t_grid: Vec<f64>, f0: f64, values: Vec<f64>, cap: f64) -> Self {
        let quotients: Vec<f64> = t_grid.iter().zip(&values).map(|(t, v)| (v - f0) / t).collect();
        let monotone_violation =
            quotients.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
        let k = values.len();
        let estimate = if k >= 2 {
            (values[k - 1] - values[k - 2]) / (t_grid[k - 1] - t_grid[k - 2])
        } else {
            quotients[0]
        };
        let last = *quotients.last().expect("nonempty grid");
        Self { t_grid, values, quotients, estimate, infinite: last > cap || estimate > cap, monotone_violation }
    }

    pub fn final_quotient(&self) -> f64 {
        *self.quotients.last().expect("nonempty grid")
    }

    pub fn is_monotone(&self, slack: f64) -> bool {
        self.monotone_violation <= slack
    }
}

/// Evaluates `f` along the probe's ray and forms the difference quotients.
pub fn ray_quotients(f: &dyn Objective, probe: &RayProbe) -> Result<RecessionEstimate> {
    ray_quotients_capped(f, probe, DEFAULT_CAP)
}

pub fn ray_quotients_capped(f: &dyn Objective, probe: &RayProbe, cap: f64) -> Result<RecessionEstimate> {
    let f0 = f.eval(&probe.bases)?;
    let eval_at = |t: &f64| -> Result<f64> {
        let v = f.eval(&probe.point(*t)?)?;
        if v.is_nan() {
            return Err(Error::EvaluationFailure(format!("objective returned NaN at t = {t}")));
        }
        Ok(v)
    };
    let values: Vec<f64> = if f.concurrent() {
        probe.t_grid.par_iter().map(eval_at).collect::<Result<_>>()?
    } else {
        probe.t_grid.iter().map(eval_at).collect::<Result<_>>()?
    };
    Ok(RecessionEstimate::from_values(probe.t_grid.clone(), f0, values, cap))
}

/// The same probe for a function on `R^d` along `base + t·dir`.
pub fn ray_quotients_euclidean(
    f: &(dyn Fn(&[f64]) -> Result<f64> + Sync),
    base: &[f64],
    dir: &[f64],
    t_grid: &[f64],
) -> Result<RecessionEstimate> {
    if base.len() != dir.len() {
        return Err(Error::DimensionMismatch { expected: base.len(), found: dir.len() });
    }
    let at = |t: f64| -> Vec<f64> { base.iter().zip(dir).map(|(b, d)| b + t * d).collect() };
    let f0 = f(base)?;
    let values = t_grid.par_iter().map(|&t| f(&at(t))).collect::<Result<Vec<_>>>()?;
    Ok(RecessionEstimate::from_values(t_grid.to_vec(), f0, values, DEFAULT_CAP))
}

/// Recession function of `log Σ a_i e^{<w_i, x>}`: `max_i <w_i, p>`.
pub fn logsumexp_recession(terms: &[(Vec<f64>, f64)], p: &[f64]) -> Result<f64> {
    if terms.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let mut best = f64::NEG_INFINITY;
    for (w, a) in terms {
        if w.len() != p.len() {
            return Err(Error::DimensionMismatch { expected: p.len(), found: w.len() });
        }
        if *a <= 0.0 {
            return Err(Error::InvalidInput(format!("coefficient {a} is not positive")));
        }
        best = best.max(w.iter().zip(p).map(|(x, y)| x * y).sum());
    }
    Ok(best)
}

/// Pairing on a product of boundary cones.
pub fn product_pairing(p: &[BoundaryPoint], q: &[BoundaryPoint]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch { expected: p.len(), found: q.len() });
    }
    p.iter().zip(q).map(|(a, b)| pairing(a, b)).sum()
}

/// Finitely many constraints `<u, p> ≤ bound(u)`.
#[derive(Clone, Debug, Default)]
pub struct HalfspaceFamily {
    pub members: Vec<(Vec<BoundaryPoint>, f64)>,
}

impl HalfspaceFamily {
    pub fn new(members: Vec<(Vec<BoundaryPoint>, f64)>) -> Self {
        Self { members }
    }

    /// Bounds taken from a recession oracle `h`.
    pub fn from_oracle(
        directions: Vec<Vec<BoundaryPoint>>,
        h: impl Fn(&[BoundaryPoint]) -> Result<f64>,
    ) -> Result<Self> {
        let members = directions
            .into_iter()
            .map(|u| {
                let b = h(&u)?;
                Ok((u, b))
            })
            .collect::<Result<_>>()?;
        Ok(Self { members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct Membership {
    pub member: bool,
    pub worst_index: usize,
    /// `bound(u) − <u, p>` for the tightest member.
    pub worst_slack: f64,
}

pub fn halfspace_membership(family: &HalfspaceFamily, p: &[BoundaryPoint]) -> Result<Membership> {
    if family.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let slacks = family
        .members
        .par_iter()
        .map(|(u, bound)| Ok(bound - product_pairing(u, p)?))
        .collect::<Result<Vec<f64>>>()?;
    let (worst_index, worst_slack) = slacks
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty family");
    Ok(Membership { member: worst_slack >= -MEMBERSHIP_TOL, worst_index, worst_slack })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::busemann;
    use crate::manifold::distance;
    use crate::numerics::CMat;
    use crate::random::{random_boundary_point, random_pd_point, random_permutation, seeded};

    #[test]
    fn grid_and_probe_validation() {
        let g = default_grid();
        assert_eq!(g.len(), 11);
        assert_eq!(g[10], 1024.0);
        let p = BoundaryPoint::from_euclidean(&[1.0, 0.0]);
        let probe = RayProbe::from_identity(vec![p]);
        assert!(probe.clone().with_grid(vec![1.0, 1.0]).is_err());
        assert!(probe.with_grid(vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn busemann_quotients_in_a_common_apartment() {
        let mut rng = seeded(20);
        for _ in 0..20 {
            let perm = random_permutation(&mut rng, 3);
            let v = CMat::from_fn(3, 3, |r, c| (if perm[c] == r { 1.0 } else { 0.0 }).into());
            let q = BoundaryPoint::canonicalize(&crate::random::random_weights(&mut rng, 3, -1.0, 1.0), &CMat::identity(3, 3)).unwrap();
            let p = BoundaryPoint::canonicalize(&crate::random::random_weights(&mut rng, 3, -1.0, 1.0), &v).unwrap();
            let f = |x: &[PdPoint]| busemann(&q, &x[0]);
            let est = ray_quotients(&f, &RayProbe::from_identity(vec![p.clone()])).unwrap();
            let target = -pairing(&q, &p).unwrap();
            for qt in &est.quotients {
                assert!((qt - target).abs() < 1e-6);
            }
            assert!((est.estimate - target).abs() < 1e-6);
        }
    }

    #[test]
    fn squared_distance_diverges() {
        let mut rng = seeded(21);
        let p = random_boundary_point(&mut rng, 3, -1.0, 1.0);
        let sq = p.norm().powi(2);
        let f = |x: &[PdPoint]| Ok(0.5 * distance(&x[0], &PdPoint::identity(3))?.powi(2));
        let probe = RayProbe::from_identity(vec![p]);
        let est = ray_quotients(&f, &probe).unwrap();
        for (t, q) in est.t_grid.iter().zip(&est.quotients) {
            assert!((q - 0.5 * t * sq).abs() < 1e-6 * t);
        }
        assert!(est.is_monotone(1e-9));
        let est = ray_quotients_capped(&f, &probe, 10.0).unwrap();
        assert!(est.infinite);
    }

    #[test]
    fn constant_objective_has_zero_quotients() {
        let f = Sequential(|_: &[PdPoint]| Ok(3.5));
        let probe = RayProbe::from_identity(vec![BoundaryPoint::from_euclidean(&[2.0, -1.0])]);
        let est = ray_quotients(&f, &probe).unwrap();
        assert!(est.quotients.iter().all(|&q| q == 0.0));
        assert_eq!(est.estimate, 0.0);
        assert!(!est.infinite);
    }

    #[test]
    fn evaluation_failures_propagate() {
        let f = |_: &[PdPoint]| -> Result<f64> { Err(Error::EvaluationFailure("boom".into())) };
        let probe = RayProbe::from_identity(vec![BoundaryPoint::from_euclidean(&[1.0])]);
        assert!(matches!(ray_quotients(&f, &probe), Err(Error::EvaluationFailure(_))));
    }

    #[test]
    fn transported_ray_starts_at_base_and_stays_in_class() {
        let mut rng = seeded(22);
        for _ in 0..10 {
            let x = random_pd_point(&mut rng, 3, 1.0);
            let p = random_boundary_point(&mut rng, 3, -1.0, 1.0);
            let c0 = ray_point(&x, &p, 0.0).unwrap();
            assert!(distance(&c0, &x).unwrap() < 1e-9);
            // unit speed in the metric: d(c(0), c(t)) = t |λ|
            let c2 = ray_point(&x, &p, 2.0).unwrap();
            assert!((distance(&x, &c2).unwrap() - 2.0 * p.norm()).abs() < 1e-8);
            // the Busemann function of p decreases at rate |λ|² along it
            let d = busemann(&p, &c2).unwrap() - busemann(&p, &x).unwrap();
            assert!((d + 2.0 * p.norm().powi(2)).abs() < 1e-8);
        }
    }

    #[test]
    fn homogeneity_of_estimates() {
        use crate::operator_scaling::{kempf_ness, OperatorTuple};
        let mut rng = seeded(23);
        let a = OperatorTuple::new(vec![crate::random::random_complex(&mut rng, 2, 2)]).unwrap();
        let p = random_boundary_point(&mut rng, 2, -1.0, 1.0);
        let q = random_boundary_point(&mut rng, 2, -1.0, 1.0);
        let f = |x: &[PdPoint]| kempf_ness(&a, &x[0], &x[1]);
        let est = |c: f64| {
            let probe = RayProbe::from_identity(vec![p.scaled(c).unwrap(), q.scaled(c).unwrap()]);
            ray_quotients(&f, &probe).unwrap().estimate
        };
        let e1 = est(1.0);
        for c in [0.5, 3.0] {
            assert!((est(c) - c * e1).abs() < 1e-6);
        }
    }

    #[test]
    fn logsumexp_examples() {
        assert_eq!(logsumexp_recession(&[(vec![1.0, 0.0], 1.0)], &[2.0, 3.0]).unwrap(), 2.0);
        let terms = vec![(vec![1.0, 0.0], 0.5), (vec![0.0, 1.0], 2.0)];
        assert_eq!(logsumexp_recession(&terms, &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(logsumexp_recession(&terms, &[1.0, 2.0]).unwrap(), 2.0);
        assert!(matches!(logsumexp_recession(&[], &[1.0]), Err(Error::EmptyFamily)));
    }

    #[test]
    fn logsumexp_recession_matches_ray_probe() {
        let terms: Vec<(Vec<f64>, f64)> = vec![(vec![1.0, -0.5], 0.3), (vec![0.2, 0.9], 2.0), (vec![-1.0, 0.1], 1.0)];
        let f = |x: &[f64]| -> Result<f64> {
            let e: Vec<f64> =
                terms.iter().map(|(w, a)| a.ln() + w[0] * x[0] + w[1] * x[1]).collect();
            Ok(crate::numerics::log_sum_exp(&e))
        };
        for p in [[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0], [0.5, -2.0]] {
            let est = ray_quotients_euclidean(&f, &[0.0, 0.0], &p, &default_grid()).unwrap();
            let exact = logsumexp_recession(&terms, &p).unwrap();
            assert!((est.estimate - exact).abs() < 1e-6, "{p:?}");
            assert!(est.is_monotone(1e-9));
            assert!(est.final_quotient() <= exact + 1e-12);
        }
    }

    #[test]
    fn membership_examples() {
        let mut rng = seeded(24);
        let u = random_boundary_point(&mut rng, 3, -1.0, 1.0);
        let p = random_boundary_point(&mut rng, 3, -1.0, 1.0);
        let zero = BoundaryPoint::zero(3);
        let fam = HalfspaceFamily::new(vec![(vec![u.clone()], 0.0), (vec![p.clone()], 1.0)]);
        assert!(halfspace_membership(&fam, &[zero.clone()]).unwrap().member);
        let fam = HalfspaceFamily::new(vec![(vec![u.clone()], -0.1)]);
        assert!(!halfspace_membership(&fam, &[zero]).unwrap().member);

        let fam = HalfspaceFamily::from_oracle(vec![vec![u.clone()]], |d| pairing(&d[0], &p)).unwrap();
        let m = halfspace_membership(&fam, &[p]).unwrap();
        assert!(m.member);
        assert!(m.worst_slack.abs() < 1e-12);
        assert!(matches!(
            halfspace_membership(&HalfspaceFamily::default(), &[u]),
            Err(Error::EmptyFamily)
        ));
    }
}
