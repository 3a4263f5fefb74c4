//! Influence tensors as matrix product operators.
//!
//! For one bath, the influence functional on the discretized path factors
//! into pair nodes that are diagonal in the eigenbasis of the coupling
//! operator: the node linking later column `m` to earlier column `k` only
//! depends on the two Liouville eigen-indices, through the kernel
//! coefficient `b[m - k]`. A fixed earlier time defines a row; a row is an
//! MPO over columns whose bond carries the earlier-time index. Rows are
//! multiplied together with SVD compression to form the full influence
//! MPO, or consumed column-by-column during streamed propagation.
//!
//! Chain node convention: rank-4 `[left, down, up, right]`, where `down`
//! is the incoming path leg at that column and `up` the outgoing one.
//! Nodes are stored left to right in order of decreasing column.

use byteorder::{ReadBytesExt, WriteBytesExt, LE};
use ndarray::{Array1, Array2};
use num_complex::Complex;
use std::io::{Read, Write};
use thiserror::Error;

use crate::baths::InfluenceKernel;
use crate::scalar::{re, Scalar};
use crate::system::CouplingBasis;
use crate::tensors::{contract, group_legs, svd_truncate, DenseTensor, TensorError};

#[derive(Debug, Error)]
pub enum ProcessTensorError {
    #[error("node at column {column} expected rank 4, got rank {rank}")]
    BadNode { column: usize, rank: usize },
    #[error("chains are not aligned: columns {a} vs {b}")]
    Misaligned { a: usize, b: usize },
    #[error("row may extend the chain by at most one column (chain right {chain}, row right {row})")]
    BadExtension { chain: usize, row: usize },
    #[error("bad or corrupt process tensor file: {0}")]
    BadFile(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("i/o failed: {0}")]
    Io(#[from] std::io::Error),
}

/// One influence node: the pairwise factor between a later and an earlier
/// column in the coupling eigenbasis, as a matrix over (later, earlier)
/// Liouville eigen-indices. `separation = 0` is the on-site (time-ordered
/// half cell) factor, diagonal by construction.
#[derive(Debug, Clone)]
pub struct InfluenceNode<T: Scalar> {
    pub separation: usize,
    /// `values[(u, v)] = exp(-m_u (m_v Re b - i p_v Im b))` with `u` the
    /// later and `v` the earlier index.
    pub values: Array2<Complex<T>>,
}

impl<T: Scalar> InfluenceNode<T> {
    /// Dense tensor form: rank 4 `[later_in, later_out, earlier_in,
    /// earlier_out]` for positive separation, rank 2 `[in, out]` on site.
    pub fn as_tensor(&self) -> DenseTensor<T> {
        let n = self.values.nrows();
        if self.separation == 0 {
            DenseTensor::from_fn(&[n, n], |ix| {
                if ix[0] == ix[1] {
                    self.values[(ix[0], ix[0])]
                } else {
                    Complex::new(T::zero(), T::zero())
                }
            })
        } else {
            DenseTensor::from_fn(&[n, n, n, n], |ix| {
                if ix[0] == ix[1] && ix[2] == ix[3] {
                    self.values[(ix[0], ix[2])]
                } else {
                    Complex::new(T::zero(), T::zero())
                }
            })
        }
    }
}

/// Influence node for the given kernel separation.
pub fn influence_node<T: Scalar>(
    kernel: &InfluenceKernel<T>,
    basis: &CouplingBasis<T>,
    separation: usize,
) -> InfluenceNode<T> {
    let b = kernel.coeff(separation);
    let minus = basis.minus_diag();
    let plus = basis.plus_diag();
    let n = minus.len();
    let values = Array2::from_shape_fn((n, n), |(u, v)| {
        let exponent = Complex::new(-minus[u] * minus[v] * b.re, -minus[u] * plus[v] * b.im);
        exponent.exp()
    });
    InfluenceNode { separation, values }
}

fn identity_node<T: Scalar>(d2: usize) -> DenseTensor<T> {
    DenseTensor::from_fn(&[1, d2, d2, 1], |ix| {
        if ix[1] == ix[2] {
            re(T::one())
        } else {
            re(T::zero())
        }
    })
}

/// Move a dangling leg one node to the right along a chain, splitting with
/// an SVD truncated at `chi`.
///
/// `a` is rank 5 `[left, down, up, extra, right]`; `b` is the rank-4
/// neighbor `[left, down, up, right]` with `b.left == a.right`. Returns
/// the rank-4 replacement for `a` and the rank-5 replacement for `b`, now
/// carrying the extra leg. The pair's joint contraction is preserved up
/// to the discarded singular weight (exactly for `chi = 0`).
pub fn move_leg<T: Scalar>(
    a: &DenseTensor<T>,
    b: &DenseTensor<T>,
    chi: T,
) -> Result<(DenseTensor<T>, DenseTensor<T>, T), ProcessTensorError> {
    if a.rank() != 5 {
        return Err(ProcessTensorError::BadNode {
            column: 0,
            rank: a.rank(),
        });
    }
    if b.rank() != 4 {
        return Err(ProcessTensorError::BadNode {
            column: 1,
            rank: b.rank(),
        });
    }
    // Split a: (left, down, up) x (extra, right).
    let (m, _) = group_legs(a, &[0, 1, 2], &[3, 4])?;
    let svd = svd_truncate(&m, chi)?;
    let bond = svd.bond_dim();
    let carry_m = svd.right_weighted();
    let a_new = DenseTensor::new(
        svd.left
            .into_dyn()
            .into_shape(ndarray::IxDyn(&[a.dim(0), a.dim(1), a.dim(2), bond]))
            .unwrap(),
    );
    // Carry diag(s) . vt, shaped [bond, extra, right], into b.
    let carry = DenseTensor::new(
        carry_m
            .into_dyn()
            .into_shape(ndarray::IxDyn(&[bond, a.dim(3), a.dim(4)]))
            .unwrap(),
    );
    // carry[bond, extra, r] . b[r, down, up, right] -> [bond, extra, down, up, right]
    let merged = contract(&carry, &[2], b, &[0])?;
    // Reorder to [bond, down, up, extra, right].
    let b_new = merged.permuted(&[0, 2, 3, 1, 4]);
    Ok((a_new, b_new, svd.discarded_weight))
}

/// Build the row MPO for earlier time `k0` of a bath: nodes for columns
/// `mmax` down to `k0`, bond carrying the earlier-time eigen-index, then
/// compressed at `chi`. Bond dimension after construction is at most d^2.
pub fn build_row_mpo<T: Scalar>(
    kernel: &InfluenceKernel<T>,
    basis: &CouplingBasis<T>,
    k0: usize,
    mmax: usize,
    chi: T,
) -> Result<ProcessTensorMpo<T>, ProcessTensorError> {
    assert!(mmax >= k0);
    let d2 = basis.minus_diag().len();
    let mut nodes = Vec::with_capacity(mmax - k0 + 1);
    for m in (k0..=mmax).rev() {
        let node = influence_node(kernel, basis, m - k0);
        if m == k0 {
            // Rightmost node: earlier leg equals the on-site path leg. The
            // left bond carries it, unless this is a single-node row.
            let left = if mmax == k0 { 1 } else { d2 };
            let t = DenseTensor::from_fn(&[left, d2, d2, 1], |ix| {
                if (left == 1 || ix[0] == ix[1]) && ix[1] == ix[2] {
                    node.values[(ix[1], ix[1])]
                } else {
                    re(T::zero())
                }
            });
            nodes.push(t);
        } else {
            let left = if m == mmax { 1 } else { d2 };
            let t = DenseTensor::from_fn(&[left, d2, d2, d2], |ix| {
                let (l, d, u, r) = (ix[0], ix[1], ix[2], ix[3]);
                if d == u && (left == 1 || l == r) {
                    node.values[(u, r)]
                } else {
                    re(T::zero())
                }
            });
            nodes.push(t);
        }
    }
    let mut mpo = ProcessTensorMpo {
        nodes,
        right_column: k0,
        max_bond: 0,
        cum_discarded: T::zero(),
    };
    mpo.compress(chi)?;
    Ok(mpo)
}

/// An MPO over path columns: either one row, a partial product of rows, or
/// the remainder chain carried during streamed propagation.
#[derive(Debug, Clone)]
pub struct ProcessTensorMpo<T: Scalar> {
    /// Left to right in order of decreasing column; contiguous columns.
    pub nodes: Vec<DenseTensor<T>>,
    /// Column of the rightmost node.
    pub right_column: usize,
    /// Largest bond dimension seen across the object's history.
    pub max_bond: usize,
    /// Sum of relative discarded SVD weights across the object's history.
    pub cum_discarded: T,
}

impl<T: Scalar> ProcessTensorMpo<T> {
    pub fn empty(right_column: usize) -> Self {
        Self {
            nodes: Vec::new(),
            right_column,
            max_bond: 0,
            cum_discarded: T::zero(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Column of the leftmost node (inclusive), if any.
    pub fn left_column(&self) -> Option<usize> {
        if self.nodes.is_empty() {
            None
        } else {
            Some(self.right_column + self.nodes.len() - 1)
        }
    }

    pub fn node_at(&self, column: usize) -> Option<&DenseTensor<T>> {
        let left = self.left_column()?;
        if column < self.right_column || column > left {
            return None;
        }
        Some(&self.nodes[left - column])
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.nodes.iter().map(|n| n.dim(3)).collect()
    }

    /// Remove and return the rightmost node, advancing `right_column`.
    /// Returns `None` when the chain has run out of memory, in which case
    /// the node is an implicit identity.
    pub fn pop_right(&mut self) -> Option<DenseTensor<T>> {
        let node = self.nodes.pop();
        self.right_column += 1;
        node
    }

    /// Multiply `row` into this chain, column-aligned; `row` is applied
    /// after (on top of) the existing product. The row may extend further
    /// right by at most one column and further left arbitrarily.
    pub fn extend(&mut self, row: &ProcessTensorMpo<T>, chi: T) -> Result<(), ProcessTensorError> {
        if self.nodes.is_empty() {
            if row.right_column > self.right_column {
                return Err(ProcessTensorError::BadExtension {
                    chain: self.right_column,
                    row: row.right_column,
                });
            }
            self.nodes = row.nodes.clone();
            self.right_column = row.right_column;
            self.compress(chi)?;
            return Ok(());
        }
        if row.right_column + 1 < self.right_column {
            return Err(ProcessTensorError::BadExtension {
                chain: self.right_column,
                row: row.right_column,
            });
        }
        let d2 = self.nodes[0].dim(1);
        let new_right = self.right_column.min(row.right_column);
        let new_left = self
            .left_column()
            .unwrap()
            .max(row.left_column().unwrap_or(0));
        let mut nodes = Vec::with_capacity(new_left - new_right + 1);
        let id = identity_node::<T>(d2);
        for c in (new_right..=new_left).rev() {
            let a = self.node_at(c);
            let b = row.node_at(c);
            let merged = match (a, b) {
                (Some(a), Some(b)) => multiply_nodes(a, b)?,
                (Some(a), None) => multiply_nodes(a, &id)?,
                (None, Some(b)) => multiply_nodes(&id, b)?,
                (None, None) => unreachable!("chains are contiguous"),
            };
            nodes.push(merged);
        }
        // The loop ran from high to low column, which is left to right.
        self.nodes = nodes;
        self.right_column = new_right;
        self.compress(chi)
    }

    /// Two-sided SVD sweep: orthogonalize left to right, then truncate
    /// right to left at `chi`.
    pub fn compress(&mut self, chi: T) -> Result<(), ProcessTensorError> {
        let n = self.nodes.len();
        if n == 0 {
            return Ok(());
        }
        for b in self.bond_dims() {
            self.max_bond = self.max_bond.max(b);
        }
        if n == 1 {
            return Ok(());
        }
        // Left to right: exact (chi = 0), establishes canonical form.
        for i in 0..n - 1 {
            let node = &self.nodes[i];
            let (m, _) = group_legs(node, &[0, 1, 2], &[3])?;
            let svd = svd_truncate(&m, T::zero())?;
            let bond = svd.bond_dim();
            let carry = DenseTensor::from_matrix(svd.right_weighted());
            self.nodes[i] = DenseTensor::new(
                svd.left
                    .into_dyn()
                    .into_shape(ndarray::IxDyn(&[
                        node.dim(0),
                        node.dim(1),
                        node.dim(2),
                        bond,
                    ]))
                    .unwrap(),
            );
            self.nodes[i + 1] = contract(&carry, &[1], &self.nodes[i + 1], &[0])?;
        }
        // Right to left: truncate.
        for i in (1..n).rev() {
            let node = &self.nodes[i];
            let (m, _) = group_legs(node, &[0], &[1, 2, 3])?;
            let svd = svd_truncate(&m, chi)?;
            let bond = svd.bond_dim();
            self.cum_discarded += svd.discarded_weight;
            let carry = DenseTensor::from_matrix(svd.left_weighted());
            self.nodes[i] = DenseTensor::new(
                svd.right
                    .into_dyn()
                    .into_shape(ndarray::IxDyn(&[
                        bond,
                        node.dim(1),
                        node.dim(2),
                        node.dim(3),
                    ]))
                    .unwrap(),
            );
            self.nodes[i - 1] = contract(&self.nodes[i - 1], &[3], &carry, &[0])?;
        }
        for b in self.bond_dims() {
            self.max_bond = self.max_bond.max(b);
        }
        Ok(())
    }

    /// Contract every node's path legs with the normalized trace cap
    /// `vec(I)/sqrt(d)` on both sides; returns the vector living on the
    /// rightmost bond (the chain's left end closes on a dim-1 leg).
    pub fn cap_all(&self, cap: &Array1<Complex<T>>) -> Result<Array1<Complex<T>>, ProcessTensorError> {
        let capt = DenseTensor::new(
            Array1::from(cap.to_vec())
                .into_dyn(),
        );
        // Start from the left end: dim-1 left leg.
        let mut acc = DenseTensor::from_fn(&[1], |_| re(T::one()));
        for node in &self.nodes {
            // acc[l] node[l,d,u,r] cap[d] cap[u] -> [r]
            let t = contract(&acc, &[0], node, &[0])?;
            let t = contract(&capt, &[0], &t, &[0])?;
            let t = contract(&capt, &[0], &t, &[0])?;
            acc = t;
        }
        Ok(Array1::from_iter(acc.data.iter().copied()))
    }

    /// Fully contract the MPO into a dense diagonal-free tensor with legs
    /// `[down_left..down_right, up_left..up_right]`. Test-sized chains only.
    pub fn to_dense(&self) -> Result<DenseTensor<T>, ProcessTensorError> {
        let n = self.nodes.len();
        assert!(n > 0);
        let mut acc = self.nodes[0].clone();
        for node in &self.nodes[1..] {
            // acc[..., r] node[r=l, d, u, r'] -> [..., d, u, r']
            let last = acc.rank() - 1;
            acc = contract(&acc, &[last], node, &[0])?;
        }
        // acc: [l=1, d0, u0, d1, u1, ..., r=1]
        let acc = acc.squeezed(0)?;
        let acc = acc.squeezed(acc.rank() - 1)?;
        // Separate downs and ups.
        let pairs = acc.rank() / 2;
        let mut perm: Vec<usize> = (0..pairs).map(|i| 2 * i).collect();
        perm.extend((0..pairs).map(|i| 2 * i + 1));
        Ok(acc.permuted(&perm))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), ProcessTensorError> {
        w.write_all(b"TEMPOMPO")?;
        w.write_u32::<LE>(1)?;
        w.write_u64::<LE>(self.right_column as u64)?;
        w.write_u64::<LE>(self.nodes.len() as u64)?;
        for node in &self.nodes {
            for i in 0..4 {
                w.write_u64::<LE>(node.dim(i) as u64)?;
            }
            for z in node.data.iter() {
                w.write_f64::<LE>(z.re.to_f64().unwrap())?;
                w.write_f64::<LE>(z.im.to_f64().unwrap())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, ProcessTensorError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != b"TEMPOMPO" {
            return Err(ProcessTensorError::BadFile("bad magic".into()));
        }
        let version = r.read_u32::<LE>()?;
        if version != 1 {
            return Err(ProcessTensorError::BadFile(format!(
                "unsupported version {version}"
            )));
        }
        let right_column = r.read_u64::<LE>()? as usize;
        let n_nodes = r.read_u64::<LE>()? as usize;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let mut dims = [0usize; 4];
            for d in &mut dims {
                *d = r.read_u64::<LE>()? as usize;
                if *d == 0 || *d > 1 << 24 {
                    return Err(ProcessTensorError::BadFile(format!("bad dim {d}")));
                }
            }
            let len = dims.iter().product::<usize>();
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                let re_part = r.read_f64::<LE>()?;
                let im_part = r.read_f64::<LE>()?;
                data.push(Complex::new(T::of(re_part), T::of(im_part)));
            }
            nodes.push(DenseTensor::new(
                ndarray::ArrayD::from_shape_vec(ndarray::IxDyn(&dims), data)
                    .map_err(|e| ProcessTensorError::BadFile(e.to_string()))?,
            ));
        }
        let mut mpo = Self {
            nodes,
            right_column,
            max_bond: 0,
            cum_discarded: T::zero(),
        };
        for b in mpo.bond_dims() {
            mpo.max_bond = mpo.max_bond.max(b);
        }
        Ok(mpo)
    }
}

/// Operator product of two chain nodes at the same column: `b` acts after
/// `a` on the path leg; bonds merge pairwise.
fn multiply_nodes<T: Scalar>(
    a: &DenseTensor<T>,
    b: &DenseTensor<T>,
) -> Result<DenseTensor<T>, ProcessTensorError> {
    // a[l1, d, m, r1] . b[l2, m, u, r2] -> [l1, d, r1, l2, u, r2]
    let t = contract(a, &[2], b, &[1])?;
    // -> [(l1 l2), d, u, (r1 r2)]
    let t = t.permuted(&[0, 3, 1, 4, 2, 5]);
    let (l1, l2, d, u, r1, r2) = (
        t.dim(0),
        t.dim(1),
        t.dim(2),
        t.dim(3),
        t.dim(4),
        t.dim(5),
    );
    Ok(DenseTensor::new(
        t.data
            .into_shape(ndarray::IxDyn(&[l1 * l2, d, u, r1 * r2]))
            .unwrap(),
    ))
}

/// Build the complete influence MPO for one bath over columns `0..n`,
/// multiplying rows from the latest (shortest) to the earliest, with
/// compression at `chi`. Used by oracle comparisons and serialization; the
/// propagation loop consumes rows in streamed form instead.
pub fn build_influence_mpo<T: Scalar>(
    kernel: &InfluenceKernel<T>,
    basis: &CouplingBasis<T>,
    n: usize,
    chi: T,
) -> Result<ProcessTensorMpo<T>, ProcessTensorError> {
    assert!(n > 0);
    let jmax = kernel.len().saturating_sub(1);
    let mut pt = ProcessTensorMpo::empty(n - 1);
    for k0 in (0..n).rev() {
        if kernel.ratio > 1 && k0 % kernel.ratio != 0 {
            continue;
        }
        let mmax = (k0 + jmax).min(n - 1);
        let row = build_row_mpo(kernel, basis, k0, mmax, chi)?;
        pt.extend(&row, chi)?;
    }
    Ok(pt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baths::{build_kernel, BathModel, BathSpec, CellRule, OuterGrid};
    use crate::system::{sigma_x, CouplingBasis};

    fn test_kernel(n: usize) -> (InfluenceKernel<f64>, CouplingBasis<f64>) {
        let bath = BathSpec {
            model: BathModel::Mode { omega: 1.3, g: 0.5 },
            temperature: 0.7,
            coupling_index: 0,
        };
        let kernel =
            build_kernel(&bath, 0.2, 1, None, n, CellRule::Exact, OuterGrid::Fine).unwrap();
        let basis = CouplingBasis::new(&sigma_x::<f64>()).unwrap();
        (kernel, basis)
    }

    /// Dense influence functional over `n` columns by direct element-wise
    /// products: the oracle for every MPO construction here.
    fn dense_influence(
        kernel: &InfluenceKernel<f64>,
        basis: &CouplingBasis<f64>,
        n: usize,
    ) -> Vec<Complex<f64>> {
        let minus = basis.minus_diag();
        let plus = basis.plus_diag();
        let d2 = minus.len();
        let total = d2.pow(n as u32);
        let mut out = vec![Complex::new(1.0, 0.0); total];
        for (flat, v) in out.iter_mut().enumerate() {
            // Path indices, column 0 fastest.
            let idx: Vec<usize> = (0..n).map(|c| (flat / d2.pow(c as u32)) % d2).collect();
            for k0 in 0..n {
                if kernel.ratio > 1 && k0 % kernel.ratio != 0 {
                    continue;
                }
                for m in k0..n {
                    let b = kernel.coeff(m - k0);
                    let (u, w) = (idx[m], idx[k0]);
                    let e = Complex::new(
                        -minus[u] * minus[w] * b.re,
                        -minus[u] * plus[w] * b.im,
                    );
                    *v *= e.exp();
                }
            }
        }
        out
    }

    /// Flatten an MPO to the diagonal of its dense form, path index with
    /// column 0 fastest (chains store leftmost = highest column).
    fn mpo_diagonal(pt: &ProcessTensorMpo<f64>, n: usize, d2: usize) -> Vec<Complex<f64>> {
        let dense = pt.to_dense().unwrap().data;
        let total = d2.pow(n as u32);
        let mut out = Vec::with_capacity(total);
        for flat in 0..total {
            let mut ix = Vec::with_capacity(2 * n);
            // Dense legs: downs then ups, both ordered high column first.
            for c in (0..n).rev() {
                ix.push((flat / d2.pow(c as u32)) % d2);
            }
            let downs = ix.clone();
            ix.extend(downs);
            out.push(dense[ndarray::IxDyn(&ix)]);
        }
        out
    }

    #[test]
    fn influence_node_on_site_is_diagonal_and_capped_to_one() {
        let (kernel, basis) = test_kernel(4);
        let node = influence_node(&kernel, &basis, 0);
        // Diagonal Liouville slots (i = j) have zero commutator eigenvalue:
        // the factor is exactly 1, which is what makes trace caps work.
        let minus = basis.minus_diag();
        for (u, &m) in minus.iter().enumerate() {
            if m == 0.0 {
                assert!((node.values[(u, u)] - Complex::new(1.0, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn row_mpo_matches_dense_row() {
        let (kernel, basis) = test_kernel(4);
        let n = 4;
        let row = build_row_mpo(&kernel, &basis, 0, n - 1, 0.0).unwrap();
        assert!(row.bond_dims().iter().all(|&b| b <= 4));
        // Oracle: single-row dense influence (only k0 = 0 terms).
        let minus = basis.minus_diag();
        let plus = basis.plus_diag();
        let diag = mpo_diagonal(&row, n, 4);
        for flat in 0..4usize.pow(n as u32) {
            let idx: Vec<usize> = (0..n).map(|c| (flat / 4usize.pow(c as u32)) % 4).collect();
            let mut want = Complex::new(1.0, 0.0);
            for m in 0..n {
                let b = kernel.coeff(m);
                want *= Complex::new(
                    -minus[idx[m]] * minus[idx[0]] * b.re,
                    -minus[idx[m]] * plus[idx[0]] * b.im,
                )
                .exp();
            }
            assert!(
                (diag[flat] - want).norm() < 1e-12,
                "flat={flat}: {} vs {want}",
                diag[flat]
            );
        }
        // Off-diagonal (down != up) entries must vanish.
        let dense = row.to_dense().unwrap();
        let mut ix = vec![0usize; 2 * n];
        ix[0] = 1; // up leg differs from down leg at one column
        assert!(dense.data[ndarray::IxDyn(&ix)].norm() < 1e-12);
    }

    #[test]
    fn full_influence_mpo_matches_dense_oracle() {
        let n = 3;
        let (kernel, basis) = test_kernel(n);
        let pt = build_influence_mpo(&kernel, &basis, n, 0.0).unwrap();
        let want = dense_influence(&kernel, &basis, n);
        let got = mpo_diagonal(&pt, n, 4);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).norm() < 1e-11, "{g} vs {w}");
        }
    }

    #[test]
    fn truncated_mpo_stays_close() {
        let n = 3;
        let (kernel, basis) = test_kernel(n);
        let pt = build_influence_mpo(&kernel, &basis, n, 1e-10).unwrap();
        let want = dense_influence(&kernel, &basis, n);
        let got = mpo_diagonal(&pt, n, 4);
        let err: f64 = got
            .iter()
            .zip(&want)
            .map(|(g, w)| (g - w).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-7, "truncation error too large: {err}");
        assert!(pt.cum_discarded < 1e-6);
    }

    #[test]
    fn move_leg_preserves_pair_contraction() {
        // Deterministic data; exact SVD must preserve the joint tensor.
        let mut k = 0.0_f64;
        let mut fill = |sh: &[usize]| {
            DenseTensor::<f64>::from_fn(sh, |_| {
                k += 1.0;
                Complex::new((1.1 * k).sin(), (0.3 * k).cos())
            })
        };
        let a = fill(&[2, 3, 3, 4, 5]);
        let b = fill(&[5, 3, 3, 2]);
        let before = contract(&a, &[4], &b, &[0]).unwrap();
        let (a2, b2, discarded) = move_leg(&a, &b, 0.0).unwrap();
        assert_eq!(a2.rank(), 4);
        assert_eq!(b2.rank(), 5);
        assert!(discarded < 1e-13);
        // after: a2[l,d,u,s] b2[s,d',u',e,r] -> [l,d,u,d',u',e,r];
        // before: [l,d,u,e, d',u',r] -- match legs explicitly.
        let after = contract(&a2, &[3], &b2, &[0]).unwrap();
        let after = after.permuted(&[0, 1, 2, 5, 3, 4, 6]);
        let diff = (&after.data - &before.data)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12, "pair contraction changed by {diff}");
    }

    #[test]
    fn move_leg_with_identity_neighbor_shifts_leg() {
        let a = DenseTensor::<f64>::from_fn(&[1, 2, 2, 3, 1], |ix| {
            Complex::new((ix[1] + 2 * ix[2] + 5 * ix[3]) as f64, 0.0)
        });
        let b = identity_node::<f64>(2);
        let (_, b2, _) = move_leg(&a, &b, 0.0).unwrap();
        assert_eq!(b2.dim(3), 3);
    }

    #[test]
    fn serialization_roundtrip() {
        let (kernel, basis) = test_kernel(3);
        let pt = build_influence_mpo(&kernel, &basis, 3, 0.0).unwrap();
        let mut buf = Vec::new();
        pt.write_to(&mut buf).unwrap();
        let back = ProcessTensorMpo::<f64>::read_from(buf.as_slice()).unwrap();
        assert_eq!(back.nodes.len(), pt.nodes.len());
        assert_eq!(back.right_column, pt.right_column);
        for (a, b) in pt.nodes.iter().zip(&back.nodes) {
            assert_eq!(a.shape(), b.shape());
            let diff = (&a.data - &b.data).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert_eq!(diff, 0.0);
        }
    }

    #[test]
    fn corrupt_file_rejected() {
        let bad = b"NOTAMPO!rubbish".to_vec();
        assert!(ProcessTensorMpo::<f64>::read_from(bad.as_slice()).is_err());
    }

    #[test]
    fn capping_whole_chain_gives_unit_scalar() {
        // All path legs capped: influence must integrate to exactly 1
        // (trace preservation of the influence functional).
        let n = 4;
        let (kernel, basis) = test_kernel(n);
        let pt = build_influence_mpo(&kernel, &basis, n, 0.0).unwrap();
        let d = 2.0_f64;
        let cap = Array1::from_shape_fn(4, |u| {
            if u == 0 || u == 3 {
                Complex::new(1.0 / d.sqrt(), 0.0)
            } else {
                Complex::new(0.0, 0.0)
            }
        });
        let v = pt.cap_all(&cap).unwrap();
        assert_eq!(v.len(), 1);
        // Each capped column contributes d * (1/sqrt(d))^2 = 1.
        assert!(
            (v[0] - Complex::new(1.0, 0.0)).norm() < 1e-10,
            "cap contraction = {}",
            v[0]
        );
    }
}
