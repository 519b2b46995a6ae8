use super::sparse::{SparseMatrix, TripletBuilder};
use crate::error::{Error, Result};
use crate::geometry::PeriodicPair;

/// Linear system together with the map back to the unconstrained numbering.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    pub reduction: Option<Reduction>,
}

/// Record of how a full system was reduced.
#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    /// Reduced index of every full dof; `None` for eliminated (Dirichlet or inactive) dofs.
    pub map: Vec<Option<usize>>,
    /// Number of reduced primal unknowns (excluding the multiplier).
    pub primal_dim: usize,
    /// Whether a zero-mean Lagrange multiplier was appended as the last unknown.
    pub multiplier: bool,
}

impl LinearSystem {
    pub fn new(matrix: SparseMatrix, rhs: Vec<f64>) -> Self {
        assert_eq!(matrix.dim(), rhs.len());
        LinearSystem {
            matrix,
            rhs,
            reduction: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    pub fn has_multiplier(&self) -> bool {
        self.reduction.as_ref().is_some_and(|r| r.multiplier)
    }

    /// Maps a reduced solution back to full size; eliminated dofs get zero.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        match &self.reduction {
            None => x.to_vec(),
            Some(r) => r.map.iter().map(|m| m.map_or(0.0, |k| x[k])).collect(),
        }
    }
}

/// Constraint specification for [`apply_constraints`].
#[derive(Debug, Clone, Default)]
pub struct Constraints<'a> {
    /// Dofs fixed to zero (homogeneous Dirichlet data or dofs outside the active phase).
    pub fixed: &'a [usize],
    pub periodic: &'a [PeriodicPair],
    /// Weights w with Σ wᵢ uᵢ = 0 enforced through a Lagrange multiplier.
    pub zero_mean: Option<&'a [f64]>,
}

/// Eliminates fixed dofs, folds periodic slaves into masters and optionally
/// appends a zero-mean multiplier row. The result is Pᵀ K P (bordered).
pub fn apply_constraints(sys: &LinearSystem, c: &Constraints) -> Result<LinearSystem> {
    let n = sys.dim();
    let mut fixed = vec![false; n];
    for &v in c.fixed {
        fixed[v] = true;
    }
    let mut master_of: Vec<Option<usize>> = vec![None; n];
    for p in c.periodic {
        if let Some(prev) = master_of[p.slave] {
            if prev != p.master {
                return Err(Error::ConstraintConflict(format!(
                    "dof {} is slave of both {} and {}",
                    p.slave, prev, p.master
                )));
            }
        }
        master_of[p.slave] = Some(p.master);
    }
    // resolve chains to their root master
    let mut root = vec![0usize; n];
    for v in 0..n {
        let mut r = v;
        let mut steps = 0;
        while let Some(m) = master_of[r] {
            r = m;
            steps += 1;
            if steps > n {
                return Err(Error::ConstraintConflict(format!("periodic cycle through dof {v}")));
            }
        }
        root[v] = r;
    }
    for v in 0..n {
        if root[v] != v && fixed[v] != fixed[root[v]] {
            return Err(Error::ConstraintConflict(format!(
                "dof {v} and its periodic master {} disagree on the Dirichlet condition",
                root[v]
            )));
        }
    }
    let mut map: Vec<Option<usize>> = vec![None; n];
    let mut next = 0;
    for v in 0..n {
        if !fixed[v] && root[v] == v {
            map[v] = Some(next);
            next += 1;
        }
    }
    for v in 0..n {
        if !fixed[v] && root[v] != v {
            map[v] = map[root[v]];
        }
    }
    let primal_dim = next;
    let dim = primal_dim + usize::from(c.zero_mean.is_some());
    let mut b = TripletBuilder::with_capacity(dim, sys.matrix.nnz());
    for (i, j, v) in sys.matrix.iter() {
        if let (Some(ri), Some(rj)) = (map[i], map[j]) {
            b.add(ri, rj, v);
        }
    }
    let mut rhs = vec![0.0; dim];
    for v in 0..n {
        if let Some(r) = map[v] {
            rhs[r] += sys.rhs[v];
        }
    }
    if let Some(w) = c.zero_mean {
        let mut folded = vec![0.0; primal_dim];
        for v in 0..n {
            if let Some(r) = map[v] {
                folded[r] += w[v];
            }
        }
        for (r, &wr) in folded.iter().enumerate() {
            if wr != 0.0 {
                b.add(r, primal_dim, wr);
                b.add(primal_dim, r, wr);
            }
        }
    }
    Ok(LinearSystem {
        matrix: b.build(),
        rhs,
        reduction: Some(Reduction {
            map,
            primal_dim,
            multiplier: c.zero_mean.is_some(),
        }),
    })
}
