use std::io::Write;

/// Accumulates `(row, col, value)` triplets; duplicates are summed on build.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    dim: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(dim: usize) -> Self {
        TripletBuilder {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, cap: usize) -> Self {
        TripletBuilder {
            dim,
            entries: Vec::with_capacity(cap),
        }
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.dim && col < self.dim);
        self.entries.push((row, col, value));
    }

    pub fn extend_from(&mut self, m: &SparseMatrix, scale: f64) {
        for (i, j, v) in m.iter() {
            self.add(i, j, scale * v);
        }
    }

    pub fn build(mut self) -> SparseMatrix {
        // stable: duplicates are summed in insertion order, so mirrored entries match bitwise
        self.entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; self.dim + 1];
        let mut cols = Vec::with_capacity(self.entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in self.entries {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut m = SparseMatrix {
            dim: self.dim,
            row_ptr,
            cols,
            vals,
            symmetric: false,
        };
        m.symmetric = m.max_asymmetry() == 0.0;
        m
    }
}

/// Square compressed-row matrix. `symmetric` records exact structural and numerical symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    symmetric: bool,
}

impl SparseMatrix {
    pub fn zeros(dim: usize) -> Self {
        TripletBuilder::new(dim).build()
    }

    pub fn identity(dim: usize) -> Self {
        let mut b = TripletBuilder::new(dim);
        for i in 0..dim {
            b.add(i, i, 1.0);
        }
        b.build()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.dim) {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *yi = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// vᵀ M u.
    pub fn bilinear(&self, v: &[f64], u: &[f64]) -> f64 {
        (0..self.dim)
            .map(|i| v[i] * self.row(i).map(|(j, a)| a * u[j]).sum::<f64>())
            .sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut b = TripletBuilder::with_capacity(self.dim, self.nnz());
        for (i, j, v) in self.iter() {
            b.add(j, i, v);
        }
        b.build()
    }

    pub fn scaled(&self, s: f64) -> SparseMatrix {
        let mut m = self.clone();
        for v in &mut m.vals {
            *v *= s;
        }
        m
    }

    /// Σ cₖ Mₖ over matrices of equal dimension.
    pub fn linear_combination(terms: &[(f64, &SparseMatrix)]) -> SparseMatrix {
        let dim = terms.first().map_or(0, |t| t.1.dim);
        let mut b = TripletBuilder::new(dim);
        for (c, m) in terms {
            assert_eq!(m.dim, dim);
            b.extend_from(m, *c);
        }
        b.build()
    }

    /// max |Mᵢⱼ − Mⱼᵢ|.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, j, v) in self.iter() {
            if j > i {
                worst = worst.max((v - self.get(j, i)).abs());
            } else if j < i && !self.has_entry(j, i) {
                worst = worst.max(v.abs());
            }
        }
        worst
    }

    fn has_entry(&self, i: usize, j: usize) -> bool {
        self.cols[self.row_ptr[i]..self.row_ptr[i + 1]]
            .binary_search(&j)
            .is_ok()
    }

    /// Sub-matrix of the leading `n` rows and columns.
    pub fn leading_block(&self, n: usize) -> SparseMatrix {
        let mut b = TripletBuilder::new(n);
        for i in 0..n {
            for (j, v) in self.row(i) {
                if j < n {
                    b.add(i, j, v);
                }
            }
        }
        b.build()
    }

    /// Row/column reordering: entry (i, j) moves to (inv[i], inv[j]) where `perm[new] = old`.
    pub fn permuted(&self, perm: &[usize]) -> SparseMatrix {
        let mut inv = vec![0usize; self.dim];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut b = TripletBuilder::with_capacity(self.dim, self.nnz());
        for (i, j, v) in self.iter() {
            b.add(inv[i], inv[j], v);
        }
        b.build()
    }

    /// Coordinate text format: header line, then one `row col value` line per entry.
    pub fn write_coo<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {} {}", self.dim, self.dim, self.nnz())?;
        for (i, j, v) in self.iter() {
            writeln!(w, "{i} {j} {v:e}")?;
        }
        Ok(())
    }
}
