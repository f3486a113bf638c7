//! State-space subsystems and the block-diagonal aggregate plant.

use crate::error::{Error, Result};
use crate::linalg::{all_finite, block_diag, Matrix};

/// One continuous-time LTI subsystem `G(s) = C (sI - A)^{-1} B + D`.
///
/// `A` is `n x n`, `B` is `n x m`, `C` is `p x n` and `D` is `p x m`.
/// `n = 0` is allowed and describes a static gain.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    d: Matrix,
    pub label: String,
}

impl StateSpaceModel {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, d: Matrix) -> Result<Self> {
        let n = a.nrows();
        let (p, m) = d.shape();
        let check = |ok: bool, what: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::DimensionMismatch(format!(
                    "{what}: A {:?}, B {:?}, C {:?}, D {:?}",
                    a.shape(),
                    b.shape(),
                    c.shape(),
                    d.shape()
                )))
            }
        };
        check(a.ncols() == n, "A must be square")?;
        check(b.shape() == (n, m), "B must be n x m")?;
        check(c.shape() == (p, n), "C must be p x n")?;
        if !(all_finite(&a) && all_finite(&b) && all_finite(&c) && all_finite(&d)) {
            return Err(Error::InvalidParameter("non-finite matrix entry".into()));
        }
        Ok(Self {
            a,
            b,
            c,
            d,
            label: String::new(),
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Static gain with no states.
    pub fn static_gain(d: Matrix) -> Result<Self> {
        let (p, m) = d.shape();
        Self::new(Matrix::zeros(0, 0), Matrix::zeros(0, m), Matrix::zeros(p, 0), d)
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }
    pub fn b(&self) -> &Matrix {
        &self.b
    }
    pub fn c(&self) -> &Matrix {
        &self.c
    }
    pub fn d(&self) -> &Matrix {
        &self.d
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }
    pub fn inputs(&self) -> usize {
        self.d.ncols()
    }
    pub fn outputs(&self) -> usize {
        self.d.nrows()
    }

    pub fn into_parts(self) -> (Matrix, Matrix, Matrix, Matrix) {
        (self.a, self.b, self.c, self.d)
    }
}

/// `G(s) = diag(G_1(s), ..., G_q(s))` with its aggregate realization.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDiagonalPlant {
    subsystems: Vec<StateSpaceModel>,
    aggregate: StateSpaceModel,
    state_offsets: Vec<usize>,
    input_offsets: Vec<usize>,
    output_offsets: Vec<usize>,
}

fn offsets(sizes: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut out = vec![0];
    for s in sizes {
        out.push(out.last().unwrap() + s);
    }
    out
}

impl BlockDiagonalPlant {
    /// Stack subsystems block-diagonally.
    pub fn aggregate(subsystems: Vec<StateSpaceModel>) -> Result<Self> {
        if subsystems.is_empty() {
            return Err(Error::EmptyNetwork);
        }
        let a = block_diag(&subsystems.iter().map(|s| s.a()).collect::<Vec<_>>());
        let b = block_diag(&subsystems.iter().map(|s| s.b()).collect::<Vec<_>>());
        let c = block_diag(&subsystems.iter().map(|s| s.c()).collect::<Vec<_>>());
        let d = block_diag(&subsystems.iter().map(|s| s.d()).collect::<Vec<_>>());
        let aggregate = StateSpaceModel::new(a, b, c, d)?.with_label("G");
        Ok(Self {
            state_offsets: offsets(subsystems.iter().map(|s| s.order())),
            input_offsets: offsets(subsystems.iter().map(|s| s.inputs())),
            output_offsets: offsets(subsystems.iter().map(|s| s.outputs())),
            subsystems,
            aggregate,
        })
    }

    /// Number of subsystems `q`.
    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    pub fn subsystems(&self) -> &[StateSpaceModel] {
        &self.subsystems
    }

    /// Zero-based access.
    pub fn subsystem(&self, i: usize) -> &StateSpaceModel {
        &self.subsystems[i]
    }

    /// One-based extraction of the `i`-th diagonal block, `1 <= i <= q`.
    pub fn extract_subsystem(&self, i: usize) -> Result<StateSpaceModel> {
        if i == 0 || i > self.len() {
            return Err(Error::IndexOutOfRange {
                what: "subsystem",
                index: i,
                len: self.len(),
            });
        }
        Ok(self.subsystems[i - 1].clone())
    }

    pub fn as_state_space(&self) -> &StateSpaceModel {
        &self.aggregate
    }

    pub fn a(&self) -> &Matrix {
        self.aggregate.a()
    }
    pub fn b(&self) -> &Matrix {
        self.aggregate.b()
    }
    pub fn c(&self) -> &Matrix {
        self.aggregate.c()
    }
    pub fn d(&self) -> &Matrix {
        self.aggregate.d()
    }

    /// Total state dimension `n`.
    pub fn order(&self) -> usize {
        *self.state_offsets.last().unwrap()
    }
    /// Total input dimension `m`.
    pub fn inputs(&self) -> usize {
        *self.input_offsets.last().unwrap()
    }
    /// Total output dimension `p`.
    pub fn outputs(&self) -> usize {
        *self.output_offsets.last().unwrap()
    }

    pub fn state_dims(&self) -> Vec<usize> {
        self.subsystems.iter().map(|s| s.order()).collect()
    }
    pub fn input_dims(&self) -> Vec<usize> {
        self.subsystems.iter().map(|s| s.inputs()).collect()
    }
    pub fn output_dims(&self) -> Vec<usize> {
        self.subsystems.iter().map(|s| s.outputs()).collect()
    }

    /// Offsets into the aggregate state vector, length `q + 1`.
    pub fn state_offsets(&self) -> &[usize] {
        &self.state_offsets
    }
    pub fn input_offsets(&self) -> &[usize] {
        &self.input_offsets
    }
    pub fn output_offsets(&self) -> &[usize] {
        &self.output_offsets
    }

    /// True when `other` has the same number of subsystems and the same
    /// per-subsystem input and output dimensions.
    pub fn same_io_partition(&self, other: &BlockDiagonalPlant) -> bool {
        self.input_dims() == other.input_dims() && self.output_dims() == other.output_dims()
    }
}

/// Target order `r_i` per subsystem.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OrderVector(pub Vec<usize>);

impl OrderVector {
    pub fn new(orders: Vec<usize>) -> Self {
        Self(orders)
    }

    /// Full orders of a plant.
    pub fn full(plant: &BlockDiagonalPlant) -> Self {
        Self(plant.state_dims())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// `r = r_1 + ... + r_q`.
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn validate(&self, plant: &BlockDiagonalPlant) -> Result<()> {
        if self.0.len() != plant.len() {
            return Err(Error::InvalidOrder(format!(
                "{} orders given for {} subsystems",
                self.0.len(),
                plant.len()
            )));
        }
        for (i, (&r, n)) in self.0.iter().zip(plant.state_dims()).enumerate() {
            if r > n {
                return Err(Error::InvalidOrder(format!(
                    "subsystem {}: order {r} exceeds {n}",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for OrderVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|r| r.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}
