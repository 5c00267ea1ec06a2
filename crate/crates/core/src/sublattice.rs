//! Functions on finite families of subspaces of `C^n`: submodularity,
//! the Lovász extension to weighted flags, and base-polyhedron membership.

use std::sync::Arc;

use rayon::prelude::*;

use crate::boundary::{subspace_pairing, BoundaryPoint};
use crate::error::{Error, Result};
use crate::numerics::{subspace_meet_join, CMat, SubspaceBasis};
use crate::operator_scaling::{perp_a, OperatorTuple};

/// Inequalities may fail by this much before they count as violated.
pub const LATTICE_TOL: f64 = 1e-9;

/// Projector distance below which two members are the same subspace.
pub const DEDUP_TOL: f64 = 1e-8;

type Oracle = dyn Fn(&SubspaceBasis) -> f64 + Send + Sync;

/// A function `ρ` on subspaces of `C^n`, normalised so that `ρ({0}) = 0`.
#[derive(Clone)]
pub struct LatticeFunction {
    n: usize,
    oracle: Arc<Oracle>,
    offset: f64,
    concurrent: bool,
}

impl std::fmt::Debug for LatticeFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LatticeFunction").field("n", &self.n).field("offset", &self.offset).finish()
    }
}

impl LatticeFunction {
    pub fn new(n: usize, oracle: impl Fn(&SubspaceBasis) -> f64 + Send + Sync + 'static) -> Self {
        let offset = oracle(&SubspaceBasis::zero(n));
        Self { n, oracle: Arc::new(oracle), offset, concurrent: true }
    }

    /// An oracle that must not be called concurrently.
    pub fn sequential(n: usize, oracle: impl Fn(&SubspaceBasis) -> f64 + Send + Sync + 'static) -> Self {
        Self { concurrent: false, ..Self::new(n, oracle) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn eval(&self, x: &SubspaceBasis) -> f64 {
        (self.oracle)(x) - self.offset
    }

    /// `dim X`.
    pub fn dimension(n: usize) -> Self {
        Self::new(n, |x| x.dim() as f64)
    }

    /// `X ↦ −<X, q>`.
    pub fn neg_pairing(q: BoundaryPoint) -> Self {
        Self::new(q.n(), move |x| -subspace_pairing(x, &q).expect("ambient dimensions match"))
    }

    /// `X ↦ n − <perp_A X, q>`, the function whose base polyhedron
    /// describes the approximately scalable `p` for a fixed `q`.
    pub fn franks_rank(a: OperatorTuple, q: BoundaryPoint) -> Self {
        let n = a.n();
        Self::new(n, move |x| {
            let y = perp_a(&a, x).expect("ambient dimensions match");
            n as f64 - subspace_pairing(&y, &q).expect("ambient dimensions match")
        })
    }
}

/// A finite set of subspaces of `C^n` containing `{0}` and `C^n`, without
/// duplicates. `sample` is set when the set is not closed under meet and
/// join.
#[derive(Clone, Debug)]
pub struct SubspaceFamily {
    ambient: usize,
    members: Vec<SubspaceBasis>,
    sample: bool,
}

impl SubspaceFamily {
    pub fn new(ambient: usize, members: Vec<SubspaceBasis>) -> Result<Self> {
        let mut fam = Self::sample(ambient, members)?;
        fam.sample = !fam.is_closed();
        Ok(fam)
    }

    /// Like [`SubspaceFamily::new`] but skips the closure check and marks
    /// the family as a sample.
    pub fn sample(ambient: usize, members: Vec<SubspaceBasis>) -> Result<Self> {
        let mut fam = Self { ambient, members: Vec::new(), sample: true };
        fam.insert(SubspaceBasis::zero(ambient))?;
        for m in members {
            fam.insert(m)?;
        }
        fam.insert(SubspaceBasis::full(ambient))?;
        Ok(fam)
    }

    pub fn is_sample(&self) -> bool {
        self.sample
    }

    /// All `2^n` coordinate subspaces of a frame.
    pub fn coordinate(frame: &CMat) -> Self {
        let n = frame.ncols();
        let members = (0u32..(1 << n))
            .map(|mask| {
                let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
                SubspaceBasis::frame_columns(frame, &idx)
            })
            .collect();
        let mut fam = Self::sample(n, members).expect("frame columns live in C^n");
        fam.sample = false;
        fam
    }

    /// Adds `x` unless an equal subspace is present; returns its index.
    /// Does not update the sample flag.
    pub fn insert(&mut self, x: SubspaceBasis) -> Result<usize> {
        if x.ambient_dim() != self.ambient {
            return Err(Error::DimensionMismatch { expected: self.ambient, found: x.ambient_dim() });
        }
        if let Some(i) = self.position(&x) {
            return Ok(i);
        }
        self.members.push(x);
        Ok(self.members.len() - 1)
    }

    pub fn position(&self, x: &SubspaceBasis) -> Option<usize> {
        self.members
            .iter()
            .position(|m| m.dim() == x.dim() && m.projector_distance(x) < DEDUP_TOL)
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn members(&self) -> &[SubspaceBasis] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Whether meets and joins of members are members.
    pub fn is_closed(&self) -> bool {
        let m = &self.members;
        (0..m.len()).all(|i| {
            (i + 1..m.len()).all(|j| {
                let (meet, join) = subspace_meet_join(&m[i], &m[j]).expect("same ambient");
                self.position(&meet).is_some() && self.position(&join).is_some()
            })
        })
    }
}

#[derive(Clone, Debug)]
pub struct SubmodularViolation {
    pub x: SubspaceBasis,
    pub y: SubspaceBasis,
    pub meet: SubspaceBasis,
    pub join: SubspaceBasis,
    /// `ρ(X) + ρ(Y) − ρ(X∩Y) − ρ(X+Y)`, below `−LATTICE_TOL`.
    pub deficit: f64,
}

#[derive(Clone, Debug)]
pub struct SubmodularityReport {
    pub ok: bool,
    pub pairs_checked: usize,
    pub min_deficit: f64,
    pub violations: Vec<SubmodularViolation>,
}

fn check_pair(rho: &LatticeFunction, x: &SubspaceBasis, y: &SubspaceBasis) -> Result<(f64, SubmodularViolation)> {
    let (meet, join) = subspace_meet_join(x, y)?;
    let deficit = rho.eval(x) + rho.eval(y) - rho.eval(&meet) - rho.eval(&join);
    Ok((deficit, SubmodularViolation { x: x.clone(), y: y.clone(), meet, join, deficit }))
}

/// `ρ(X) + ρ(Y) ≥ ρ(X ∩ Y) + ρ(X + Y)` on the given pairs.
pub fn submodularity_check_pairs(rho: &LatticeFunction, pairs: &[(SubspaceBasis, SubspaceBasis)]) -> Result<SubmodularityReport> {
    let results: Vec<(f64, SubmodularViolation)> = if rho.concurrent {
        pairs.par_iter().map(|(x, y)| check_pair(rho, x, y)).collect::<Result<_>>()?
    } else {
        pairs.iter().map(|(x, y)| check_pair(rho, x, y)).collect::<Result<_>>()?
    };
    let min_deficit = results.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let violations: Vec<SubmodularViolation> =
        results.into_iter().filter(|r| r.0 < -LATTICE_TOL).map(|r| r.1).collect();
    Ok(SubmodularityReport { ok: violations.is_empty(), pairs_checked: pairs.len(), min_deficit, violations })
}

/// Submodularity on all pairs of family members.
pub fn submodularity_check(rho: &LatticeFunction, family: &SubspaceFamily) -> Result<SubmodularityReport> {
    let m = family.members();
    let pairs: Vec<(SubspaceBasis, SubspaceBasis)> = (0..m.len())
        .flat_map(|i| (i + 1..m.len()).map(move |j| (i, j)))
        .map(|(i, j)| (m[i].clone(), m[j].clone()))
        .collect();
    submodularity_check_pairs(rho, &pairs)
}

/// `ρ̄(p) = Σ_i (λ_i − λ_{i+1}) ρ(U_i)`.
pub fn lovasz(rho: &LatticeFunction, p: &BoundaryPoint) -> Result<f64> {
    if p.n() != rho.n() {
        return Err(Error::DimensionMismatch { expected: rho.n(), found: p.n() });
    }
    Ok(p.formal_sum().terms.iter().map(|(u, a)| a * rho.eval(u)).sum())
}

#[derive(Clone, Debug)]
pub struct BaseMembership {
    pub member: bool,
    pub worst_index: usize,
    /// `ρ(X) − <X, p>` for the tightest member.
    pub worst_slack: f64,
    /// `<C^n, p> − ρ(C^n)`.
    pub top_gap: f64,
}

/// `<X, p> ≤ ρ(X)` for every member and `<C^n, p> = ρ(C^n)`.
pub fn base_membership(rho: &LatticeFunction, p: &BoundaryPoint, family: &SubspaceFamily) -> Result<BaseMembership> {
    if p.n() != family.ambient() || rho.n() != family.ambient() {
        return Err(Error::DimensionMismatch { expected: family.ambient(), found: p.n() });
    }
    let slack = |x: &SubspaceBasis| -> Result<f64> { Ok(rho.eval(x) - subspace_pairing(x, p)?) };
    let slacks: Vec<f64> = if rho.concurrent {
        family.members().par_iter().map(slack).collect::<Result<_>>()?
    } else {
        family.members().iter().map(slack).collect::<Result<_>>()?
    };
    let (worst_index, worst_slack) = slacks
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(Error::EmptyFamily)?;
    let full = SubspaceBasis::full(family.ambient());
    let top_gap = subspace_pairing(&full, p)? - rho.eval(&full);
    Ok(BaseMembership {
        member: worst_slack >= -LATTICE_TOL && top_gap.abs() <= LATTICE_TOL,
        worst_index,
        worst_slack,
        top_gap,
    })
}
