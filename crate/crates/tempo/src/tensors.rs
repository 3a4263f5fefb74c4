//! Dense complex tensors with named-by-position legs, pairwise contraction,
//! leg grouping, and truncated SVD. This is the entire tensor-network
//! substrate: everything above it (influence MPOs, propagation) is expressed
//! in terms of `contract`, `group_legs`, and `svd_truncate`.

use ndarray::{Array2, ArrayD, Dimension, IxDyn};
use num_complex::Complex;
use thiserror::Error;

use crate::scalar::{LinalgError, Scalar};

#[derive(Debug, Clone, Error)]
pub enum TensorError {
    #[error("leg index {leg} out of range for rank-{rank} tensor")]
    LegOutOfRange { leg: usize, rank: usize },
    #[error("duplicate leg index {leg} in contraction or grouping list")]
    DuplicateLeg { leg: usize },
    #[error("contraction lists have different lengths ({a} vs {b})")]
    ListLengthMismatch { a: usize, b: usize },
    #[error("leg dimension mismatch: leg {leg_a} (dim {dim_a}) vs leg {leg_b} (dim {dim_b})")]
    DimMismatch {
        leg_a: usize,
        dim_a: usize,
        leg_b: usize,
        dim_b: usize,
    },
    #[error("grouping must mention every leg exactly once")]
    IncompletePartition,
    #[error("expected a rank-{expected} tensor, got rank {got}")]
    RankMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Dense tensor over `Complex<T>`. Legs are identified by axis position.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor<T: Scalar> {
    pub data: ArrayD<Complex<T>>,
}

impl<T: Scalar> DenseTensor<T> {
    pub fn new(data: ArrayD<Complex<T>>) -> Self {
        Self { data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            data: ArrayD::zeros(IxDyn(shape)),
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> Complex<T>) -> Self {
        Self {
            data: ArrayD::from_shape_fn(IxDyn(shape), |ix| f(ix.slice())),
        }
    }

    pub fn from_matrix(m: Array2<Complex<T>>) -> Self {
        Self {
            data: m.into_dyn(),
        }
    }

    pub fn rank(&self) -> usize {
        self.data.ndim()
    }

    pub fn shape(&self) -> &[usize] {
        self.data.shape()
    }

    pub fn dim(&self, leg: usize) -> usize {
        self.data.shape()[leg]
    }

    /// Frobenius norm.
    pub fn norm(&self) -> T {
        self.data
            .iter()
            .map(|z| z.norm_sqr())
            .fold(T::zero(), |a, b| a + b)
            .sqrt()
    }

    /// Reorder legs: axis `i` of the result is axis `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let view = self.data.view().permuted_axes(IxDyn(perm));
        Self {
            data: view.as_standard_layout().to_owned(),
        }
    }

    /// Reinterpret as a matrix; fails unless rank is exactly 2.
    pub fn as_matrix(&self) -> Result<Array2<Complex<T>>, TensorError> {
        self.data
            .view()
            .into_dimensionality()
            .map(|v| v.to_owned())
            .map_err(|_| TensorError::RankMismatch {
                expected: 2,
                got: self.rank(),
            })
    }

    /// Drop a length-1 leg.
    pub fn squeezed(&self, leg: usize) -> Result<Self, TensorError> {
        if leg >= self.rank() {
            return Err(TensorError::LegOutOfRange {
                leg,
                rank: self.rank(),
            });
        }
        if self.dim(leg) != 1 {
            return Err(TensorError::DimMismatch {
                leg_a: leg,
                dim_a: self.dim(leg),
                leg_b: leg,
                dim_b: 1,
            });
        }
        let mut data = self.data.clone();
        data.index_axis_inplace(ndarray::Axis(leg), 0);
        Ok(Self { data })
    }

    /// Insert a new length-1 leg at `pos`.
    pub fn unsqueezed(&self, pos: usize) -> Self {
        let mut data = self.data.clone();
        data.insert_axis_inplace(ndarray::Axis(pos));
        Self { data }
    }

    pub fn scaled(&self, c: Complex<T>) -> Self {
        Self {
            data: self.data.mapv(|z| z * c),
        }
    }
}

fn check_legs(legs: &[usize], rank: usize) -> Result<(), TensorError> {
    for (i, &leg) in legs.iter().enumerate() {
        if leg >= rank {
            return Err(TensorError::LegOutOfRange { leg, rank });
        }
        if legs[..i].contains(&leg) {
            return Err(TensorError::DuplicateLeg { leg });
        }
    }
    Ok(())
}

fn complement(legs: &[usize], rank: usize) -> Vec<usize> {
    (0..rank).filter(|i| !legs.contains(i)).collect()
}

/// Contract `a` and `b` over the paired legs `legs_a[i] <-> legs_b[i]`.
/// Result legs: uncontracted legs of `a` in order, then those of `b`.
pub fn contract<T: Scalar>(
    a: &DenseTensor<T>,
    legs_a: &[usize],
    b: &DenseTensor<T>,
    legs_b: &[usize],
) -> Result<DenseTensor<T>, TensorError> {
    if legs_a.len() != legs_b.len() {
        return Err(TensorError::ListLengthMismatch {
            a: legs_a.len(),
            b: legs_b.len(),
        });
    }
    check_legs(legs_a, a.rank())?;
    check_legs(legs_b, b.rank())?;
    for (&la, &lb) in legs_a.iter().zip(legs_b) {
        if a.dim(la) != b.dim(lb) {
            return Err(TensorError::DimMismatch {
                leg_a: la,
                dim_a: a.dim(la),
                leg_b: lb,
                dim_b: b.dim(lb),
            });
        }
    }

    let keep_a = complement(legs_a, a.rank());
    let keep_b = complement(legs_b, b.rank());
    let ka: usize = keep_a.iter().map(|&l| a.dim(l)).product();
    let kb: usize = keep_b.iter().map(|&l| b.dim(l)).product();
    let kc: usize = legs_a.iter().map(|&l| a.dim(l)).product();

    let perm_a: Vec<usize> = keep_a.iter().chain(legs_a).copied().collect();
    let perm_b: Vec<usize> = legs_b.iter().chain(&keep_b).copied().collect();

    let ma = a
        .permuted(&perm_a)
        .data
        .into_shape((ka, kc))
        .expect("permuted tensor is contiguous");
    let mb = b
        .permuted(&perm_b)
        .data
        .into_shape((kc, kb))
        .expect("permuted tensor is contiguous");
    let ma: Array2<Complex<T>> = ma.into_dimensionality().unwrap();
    let mb: Array2<Complex<T>> = mb.into_dimensionality().unwrap();
    let mc = ma.dot(&mb);

    let mut shape: Vec<usize> = keep_a.iter().map(|&l| a.dim(l)).collect();
    shape.extend(keep_b.iter().map(|&l| b.dim(l)));
    if shape.is_empty() {
        // Full contraction: rank-0 tensor.
        let mut out = DenseTensor::zeros(&[]);
        out.data[IxDyn(&[])] = mc[(0, 0)];
        return Ok(out);
    }
    Ok(DenseTensor::new(
        mc.into_dyn().into_shape(IxDyn(&shape)).unwrap(),
    ))
}

/// Record of how legs were fused into a matrix, sufficient to undo it.
#[derive(Debug, Clone)]
pub struct LegGrouping {
    perm: Vec<usize>,
    row_dims: Vec<usize>,
    col_dims: Vec<usize>,
}

impl LegGrouping {
    pub fn row_dim(&self) -> usize {
        self.row_dims.iter().product()
    }

    pub fn col_dim(&self) -> usize {
        self.col_dims.iter().product()
    }
}

/// Fuse `rows` into a single row index and `cols` into a single column
/// index. Every leg must appear exactly once across the two lists.
pub fn group_legs<T: Scalar>(
    t: &DenseTensor<T>,
    rows: &[usize],
    cols: &[usize],
) -> Result<(Array2<Complex<T>>, LegGrouping), TensorError> {
    let rank = t.rank();
    check_legs(rows, rank)?;
    check_legs(cols, rank)?;
    if rows.len() + cols.len() != rank || rows.iter().any(|l| cols.contains(l)) {
        return Err(TensorError::IncompletePartition);
    }
    let perm: Vec<usize> = rows.iter().chain(cols).copied().collect();
    let row_dims: Vec<usize> = rows.iter().map(|&l| t.dim(l)).collect();
    let col_dims: Vec<usize> = cols.iter().map(|&l| t.dim(l)).collect();
    let nr: usize = row_dims.iter().product();
    let nc: usize = col_dims.iter().product();
    let m = t
        .permuted(&perm)
        .data
        .into_shape((nr, nc))
        .unwrap()
        .into_dimensionality()
        .unwrap();
    Ok((
        m,
        LegGrouping {
            perm,
            row_dims,
            col_dims,
        },
    ))
}

/// Invert `group_legs`: restore the original leg order and dimensions.
pub fn ungroup_legs<T: Scalar>(m: &Array2<Complex<T>>, g: &LegGrouping) -> DenseTensor<T> {
    let mut shape = g.row_dims.clone();
    shape.extend(&g.col_dims);
    let t = DenseTensor::new(m.clone().into_dyn().into_shape(IxDyn(&shape)).unwrap());
    // Inverse permutation: leg g.perm[i] of the original sits at axis i now.
    let mut inv = vec![0usize; g.perm.len()];
    for (i, &p) in g.perm.iter().enumerate() {
        inv[p] = i;
    }
    t.permuted(&inv)
}

/// Result of a truncated SVD `m ~= left . diag(values) . right`.
#[derive(Debug, Clone)]
pub struct SvdResult<T: Scalar> {
    pub left: Array2<Complex<T>>,
    pub values: Vec<T>,
    pub right: Array2<Complex<T>>,
    /// Relative weight of the dropped part: `sqrt(sum s_drop^2 / sum s^2)`.
    pub discarded_weight: T,
}

impl<T: Scalar> SvdResult<T> {
    pub fn bond_dim(&self) -> usize {
        self.values.len()
    }

    /// `left . diag(values)`, the usual carry-left factor.
    pub fn left_weighted(&self) -> Array2<Complex<T>> {
        let mut m = self.left.clone();
        for (j, &s) in self.values.iter().enumerate() {
            m.column_mut(j).mapv_inplace(|z| z * s);
        }
        m
    }

    /// `diag(values) . right`, the usual carry-right factor.
    pub fn right_weighted(&self) -> Array2<Complex<T>> {
        let mut m = self.right.clone();
        for (i, &s) in self.values.iter().enumerate() {
            m.row_mut(i).mapv_inplace(|z| z * s);
        }
        m
    }
}

/// SVD with relative truncation: singular values below `chi * s_max` are
/// dropped. `chi = 0` keeps everything; at least one value is always kept.
pub fn svd_truncate<T: Scalar>(
    m: &Array2<Complex<T>>,
    chi: T,
) -> Result<SvdResult<T>, TensorError> {
    let (u, s, vt) = T::svd(m.clone())?;
    let total: T = s.iter().map(|&x| x * x).sum();
    let smax = s.first().copied().unwrap_or_else(T::zero);
    // Even at chi = 0, drop pure numerical noise so that exactly
    // rank-deficient tensors do not inflate bond dimensions.
    let thresh = chi.max(T::eps() * T::of(50.0));
    let mut keep = s.iter().take_while(|&&x| x > thresh * smax).count();
    keep = keep.max(1).min(s.len());
    let dropped: T = s.iter().skip(keep).map(|&x| x * x).sum();
    let discarded_weight = if total > T::zero() {
        (dropped / total).sqrt()
    } else {
        T::zero()
    };
    Ok(SvdResult {
        left: u.slice(ndarray::s![.., ..keep]).to_owned(),
        values: s.iter().take(keep).copied().collect(),
        right: vt.slice(ndarray::s![..keep, ..]).to_owned(),
        discarded_weight,
    })
}
