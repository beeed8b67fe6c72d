use super::StripGrid;

/// Symmetric dense block on a subset of nodes (nonlocal perturbations).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseBlock {
    /// Ascending node indices.
    pub nodes: Vec<usize>,
    /// Row-major `m x m` values, exactly symmetric.
    pub values: Vec<f64>,
}

impl DenseBlock {
    fn apply_add(&self, x: &[f64], y: &mut [f64]) {
        let m = self.nodes.len();
        let xs: Vec<f64> = self.nodes.iter().map(|&i| x[i]).collect();
        for p in 0..m {
            let row = &self.values[p * m..(p + 1) * m];
            y[self.nodes[p]] += row.iter().zip(&xs).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

/// Symmetric sparse matrix on a [`StripGrid`]: a lower band plus optional dense blocks.
///
/// The band holds `A[i][i-k]` for `k = 0..=bw`; column-major node ordering
/// keeps the five-point stencil (and the mixed-derivative cells) within `bw = ny + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteOperator {
    grid: StripGrid,
    bw: usize,
    band: Vec<f64>,
    blocks: Vec<DenseBlock>,
}

impl DiscreteOperator {
    pub fn zeros(grid: StripGrid) -> Self {
        let bw = grid.ny + 1;
        let n = grid.dim();
        Self {
            grid,
            bw,
            band: vec![0.0; n * (bw + 1)],
            blocks: Vec::new(),
        }
    }

    pub fn grid(&self) -> &StripGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// Stored half-bandwidth of the banded part.
    pub fn band_width(&self) -> usize {
        self.bw
    }

    pub fn blocks(&self) -> &[DenseBlock] {
        &self.blocks
    }

    /// Largest `|i - j|` over nonzero entries, dense blocks included.
    pub fn bandwidth(&self) -> usize {
        let mut w = 0;
        let n = self.dim();
        for i in 0..n {
            for k in (w + 1)..=self.bw.min(i) {
                if self.band[i * (self.bw + 1) + k] != 0.0 {
                    w = w.max(k);
                }
            }
        }
        for b in &self.blocks {
            let m = b.nodes.len();
            for p in 0..m {
                for q in 0..p {
                    if b.values[p * m + q] != 0.0 {
                        w = w.max(b.nodes[p] - b.nodes[q]);
                    }
                }
            }
        }
        w
    }

    /// Adds `v` to the symmetric pair `(i, j)` (once on the diagonal).
    pub fn add_entry(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let k = r - c;
        assert!(k <= self.bw, "entry ({i}, {j}) outside the band");
        self.band[r * (self.bw + 1) + k] += v;
    }

    pub fn add_diagonal(&mut self, i: usize, v: f64) {
        self.band[i * (self.bw + 1)] += v;
    }

    pub fn shift_diagonal(&mut self, sigma: f64) {
        for i in 0..self.dim() {
            self.band[i * (self.bw + 1)] += sigma;
        }
    }

    /// Copy with every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.band.iter_mut().for_each(|v| *v *= factor);
        for b in &mut out.blocks {
            b.values.iter_mut().for_each(|v| *v *= factor);
        }
        out
    }

    pub fn push_block(&mut self, block: DenseBlock) {
        self.blocks.push(block);
    }

    /// Banded entry `A[i][i-k]` (dense blocks excluded).
    #[inline]
    pub fn band_entry(&self, i: usize, k: usize) -> f64 {
        self.band[i * (self.bw + 1) + k]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let mut v = if r - c <= self.bw {
            self.band_entry(r, r - c)
        } else {
            0.0
        };
        for b in &self.blocks {
            if let (Ok(p), Ok(q)) = (b.nodes.binary_search(&i), b.nodes.binary_search(&j)) {
                v += b.values[p * b.nodes.len() + q];
            }
        }
        v
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        assert_eq!(x.len(), n);
        assert_eq!(y.len(), n);
        let w = self.bw + 1;
        for i in 0..n {
            let row = &self.band[i * w..(i + 1) * w];
            let mut acc = row[0] * x[i];
            for k in 1..=self.bw.min(i) {
                acc += row[k] * x[i - k];
            }
            y[i] = acc;
        }
        for i in 0..n {
            let row = &self.band[i * w..(i + 1) * w];
            let xi = x[i];
            for k in 1..=self.bw.min(i) {
                y[i - k] += row[k] * xi;
            }
        }
        for b in &self.blocks {
            b.apply_add(x, y);
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply(x, &mut y);
        y
    }

    /// Entry-wise sum of two operators on the same grid.
    pub fn add(&self, other: &DiscreteOperator) -> DiscreteOperator {
        assert_eq!(self.grid, other.grid, "operators live on different grids");
        let mut out = self.clone();
        out.band.iter_mut().zip(&other.band).for_each(|(a, b)| *a += b);
        out.blocks.extend(other.blocks.iter().cloned());
        out
    }

    /// Row-major dense copy; intended for small grids only.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dim();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..=self.bw.min(i) {
                let v = self.band_entry(i, k);
                a[i * n + i - k] += v;
                if k > 0 {
                    a[(i - k) * n + i] += v;
                }
            }
        }
        for b in &self.blocks {
            let m = b.nodes.len();
            for p in 0..m {
                for q in 0..m {
                    a[b.nodes[p] * n + b.nodes[q]] += b.values[p * m + q];
                }
            }
        }
        a
    }

    /// Is every stored entry zero?
    pub fn is_zero(&self) -> bool {
        self.band.iter().all(|&v| v == 0.0)
            && self.blocks.iter().all(|b| b.values.iter().all(|&v| v == 0.0))
    }

    /// Index of the first nonzero column in each row of the lower triangle
    /// (profile of the matrix, dense blocks included).
    pub fn row_starts(&self) -> Vec<usize> {
        let n = self.dim();
        let mut first: Vec<usize> = (0..n)
            .map(|i| {
                let mut f = i;
                for k in (1..=self.bw.min(i)).rev() {
                    if self.band_entry(i, k) != 0.0 {
                        f = i - k;
                        break;
                    }
                }
                f
            })
            .collect();
        for b in &self.blocks {
            if let Some(&lo) = b.nodes.first() {
                for &i in &b.nodes {
                    first[i] = first[i].min(lo);
                }
            }
        }
        first
    }

    /// Gershgorin enclosure of the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.dim();
        let mut radius = vec![0.0; n];
        for i in 0..n {
            for k in 1..=self.bw.min(i) {
                let v = self.band_entry(i, k).abs();
                radius[i] += v;
                radius[i - k] += v;
            }
        }
        let mut diag: Vec<f64> = (0..n).map(|i| self.band_entry(i, 0)).collect();
        for b in &self.blocks {
            let m = b.nodes.len();
            for p in 0..m {
                for q in 0..m {
                    if p == q {
                        diag[b.nodes[p]] += b.values[p * m + q];
                    } else {
                        radius[b.nodes[p]] += b.values[p * m + q].abs();
                    }
                }
            }
        }
        let lo = (0..n).map(|i| diag[i] - radius[i]).fold(f64::INFINITY, f64::min);
        let hi = (0..n).map(|i| diag[i] + radius[i]).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}
