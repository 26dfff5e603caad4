//! Data model for sensitivity-test lists: predictor rows, binary responses,
//! row ids and optional count weights, plus the Case-minus-Non-Case
//! displacement matrix that every overlap test in this crate runs on.

use std::io::Read;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when counting singular values for a matrix rank.
pub const RANK_TOL: f64 = 1e-8;

/// A sensitivity-test list: an `n x d` predictor matrix with binary
/// responses, distinct row ids and optional nonnegative count weights.
///
/// Rows with `y = 1` are Cases, rows with `y = 0` are Non-Cases. All fields
/// are immutable after construction; operations that "modify" a dataset
/// return a new one.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: Vec<u8>,
    rid: Vec<String>,
    counts: Option<Vec<f64>>,
}

/// Serde mirror of the JSON wire format.
#[derive(Serialize, Deserialize)]
struct DatasetJson {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    rid: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    counts: Option<Vec<f64>>,
}

/// Input formats accepted by [`load_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Dataset {
    /// Build a dataset, checking every invariant: equal row counts, binary
    /// responses, nonnegative counts and pairwise-distinct row ids.
    pub fn new(
        x: DMatrix<f64>,
        y: Vec<u8>,
        rid: Vec<String>,
        counts: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = x.nrows();
        if y.len() != n {
            return Err(Error::Validation {
                field: "y".into(),
                msg: format!("expected {} responses, got {}", n, y.len()),
            });
        }
        if rid.len() != n {
            return Err(Error::Validation {
                field: "rid".into(),
                msg: format!("expected {} row ids, got {}", n, rid.len()),
            });
        }
        if let Some(c) = &counts {
            if c.len() != n {
                return Err(Error::Validation {
                    field: "counts".into(),
                    msg: format!("expected {} counts, got {}", n, c.len()),
                });
            }
            if let Some(bad) = c.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::Validation {
                    field: "counts".into(),
                    msg: format!("count {bad} is negative or non-finite"),
                });
            }
        }
        if let Some(bad) = y.iter().find(|v| **v > 1) {
            return Err(Error::Validation {
                field: "y".into(),
                msg: format!("response {bad} is not 0 or 1"),
            });
        }
        let mut seen = std::collections::HashSet::new();
        for id in &rid {
            if !seen.insert(id.as_str()) {
                return Err(Error::Validation {
                    field: "rid".into(),
                    msg: format!("duplicate row id `{id}`"),
                });
            }
        }
        Ok(Dataset { x, y, rid, counts })
    }

    /// Convenience constructor from row-major predictor data and 0/1
    /// responses; ids are generated as `r1..rn` and counts default to 1.
    pub fn from_rows(rows: &[Vec<f64>], y: &[u8]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Validation {
                field: "x".into(),
                msg: "ragged predictor rows".into(),
            });
        }
        let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
        let rid = (1..=n).map(|i| format!("r{i}")).collect();
        Dataset::new(x, y.to_vec(), rid, None)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }

    pub fn rid(&self) -> &[String] {
        &self.rid
    }

    pub fn counts(&self) -> Option<&[f64]> {
        self.counts.as_deref()
    }

    /// Count weight of row `i` (1 when counts are absent).
    pub fn count(&self, i: usize) -> f64 {
        self.counts.as_ref().map_or(1.0, |c| c[i])
    }

    /// Predictor row `i` as a plain vector.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    /// Indices of Case rows, in dataset order.
    pub fn case_rows(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.y[i] == 1).collect()
    }

    /// Indices of Non-Case rows, in dataset order.
    pub fn noncase_rows(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.y[i] == 0).collect()
    }

    pub fn n1(&self) -> usize {
        self.y.iter().filter(|&&v| v == 1).count()
    }

    pub fn n0(&self) -> usize {
        self.y.iter().filter(|&&v| v == 0).count()
    }

    /// New dataset keeping only `rows` (in the given order), with rid
    /// bindings preserved.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let x = DMatrix::from_fn(rows.len(), self.dim(), |i, j| self.x[(rows[i], j)]);
        let y = rows.iter().map(|&i| self.y[i]).collect();
        let rid = rows.iter().map(|&i| self.rid[i].clone()).collect();
        let counts = self
            .counts
            .as_ref()
            .map(|c| rows.iter().map(|&i| c[i]).collect());
        Dataset { x, y, rid, counts }
    }

    /// New dataset with run `i` removed.
    pub fn without_run(&self, i: usize) -> Dataset {
        let keep: Vec<usize> = (0..self.n()).filter(|&k| k != i).collect();
        self.subset(&keep)
    }

    /// New dataset with all responses flipped (Cases become Non-Cases).
    pub fn flipped(&self) -> Dataset {
        let y = self.y.iter().map(|&v| 1 - v).collect();
        Dataset {
            x: self.x.clone(),
            y,
            rid: self.rid.clone(),
            counts: self.counts.clone(),
        }
    }

    /// New dataset with predictors replaced by `x` (same shape contract as
    /// the original row count).
    pub fn with_x(&self, x: DMatrix<f64>) -> Dataset {
        assert_eq!(x.nrows(), self.n());
        Dataset {
            x,
            y: self.y.clone(),
            rid: self.rid.clone(),
            counts: self.counts.clone(),
        }
    }

    /// Apply an affine predictor map `x -> x * a + b` to every row.
    pub fn affine_map(&self, a: &DMatrix<f64>, b: &[f64]) -> Dataset {
        assert_eq!(a.nrows(), self.dim());
        let mut x = &self.x * a;
        for i in 0..x.nrows() {
            for j in 0..x.ncols() {
                x[(i, j)] += b[j];
            }
        }
        self.with_x(x)
    }

    /// New dataset with rows sorted Case block first, ascending rid within
    /// each block.
    pub fn cases_first(&self) -> Dataset {
        let mut order: Vec<usize> = (0..self.n()).collect();
        order.sort_by(|&a, &b| {
            self.y[b]
                .cmp(&self.y[a])
                .then_with(|| self.rid[a].cmp(&self.rid[b]))
        });
        self.subset(&order)
    }

    /// The extended matrix `E = (1, X)` of this dataset.
    pub fn extended(&self) -> DMatrix<f64> {
        let n = self.n();
        let d = self.dim();
        DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { self.x[(i, j - 1)] })
    }

    /// Serialize as CSV with header `rid,x1,...,xd,y[,count]`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rid");
        for j in 1..=self.dim() {
            out.push_str(&format!(",x{j}"));
        }
        out.push_str(",y");
        if self.counts.is_some() {
            out.push_str(",count");
        }
        out.push('\n');
        for i in 0..self.n() {
            out.push_str(&self.rid[i]);
            for j in 0..self.dim() {
                out.push_str(&format!(",{}", fmt_num(self.x[(i, j)])));
            }
            out.push_str(&format!(",{}", self.y[i]));
            if let Some(c) = &self.counts {
                out.push_str(&format!(",{}", fmt_num(c[i])));
            }
            out.push('\n');
        }
        out
    }

    /// Serialize as the JSON wire object `{"x", "y", "rid", "counts"?}`.
    pub fn to_json(&self) -> String {
        let mirror = DatasetJson {
            x: (0..self.n()).map(|i| self.row(i)).collect(),
            y: self.y.iter().map(|&v| v as f64).collect(),
            rid: self.rid.clone(),
            counts: self.counts.clone(),
        };
        serde_json::to_string(&mirror).expect("dataset serialization cannot fail")
    }
}

fn fmt_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Load and validate a dataset from a byte stream.
///
/// CSV expects the header `rid,x1,...,xd,y[,count]`; JSON expects the object
/// `{"x": [[...]], "y": [...], "rid": [...], "counts": [...]?}`.
pub fn load_dataset(mut source: impl Read, format: Format) -> Result<Dataset> {
    let mut buf = String::new();
    source.read_to_string(&mut buf)?;
    match format {
        Format::Csv => parse_csv(&buf),
        Format::Json => parse_json(&buf),
    }
}

fn parse_csv(text: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.first() != Some(&"rid") {
        return Err(Error::Parse {
            line: 1,
            msg: "header must start with `rid`".into(),
        });
    }
    let mut d = 0;
    while d + 1 < cols.len() && cols[d + 1] == format!("x{}", d + 1) {
        d += 1;
    }
    let y_col = d + 1;
    if cols.get(y_col) != Some(&"y") {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected column `y` after x1..x{d}"),
        });
    }
    let has_count = match cols.get(y_col + 1) {
        None => false,
        Some(&"count") if cols.len() == y_col + 2 => true,
        Some(other) => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unexpected trailing column `{other}`"),
            })
        }
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut y = Vec::new();
    let mut rid = Vec::new();
    let mut counts = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // header occupies line 1
        let record = record.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        let expect = y_col + 1 + has_count as usize;
        if record.len() != expect {
            return Err(Error::Parse {
                line,
                msg: format!("expected {expect} fields, got {}", record.len()),
            });
        }
        rid.push(record[0].to_string());
        let mut row = Vec::with_capacity(d);
        for j in 1..=d {
            row.push(parse_f64(&record[j], line, &format!("x{j}"))?);
        }
        rows.push(row);
        let yv = parse_f64(&record[y_col], line, "y")?;
        if yv != 0.0 && yv != 1.0 {
            return Err(Error::Validation {
                field: "y".into(),
                msg: format!("line {line}: response {yv} is not 0 or 1"),
            });
        }
        y.push(yv as u8);
        if has_count {
            counts.push(parse_f64(&record[y_col + 1], line, "count")?);
        }
    }

    let n = rows.len();
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    Dataset::new(x, y, rid, if has_count { Some(counts) } else { None })
}

fn parse_f64(s: &str, line: usize, field: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| Error::Parse {
        line,
        msg: format!("field `{field}`: `{s}` is not a number"),
    })
}

fn parse_json(text: &str) -> Result<Dataset> {
    let mirror: DatasetJson = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    let n = mirror.x.len();
    let d = mirror.x.first().map_or(0, Vec::len);
    if mirror.x.iter().any(|r| r.len() != d) {
        return Err(Error::Validation {
            field: "x".into(),
            msg: "ragged predictor rows".into(),
        });
    }
    let mut y = Vec::with_capacity(n);
    for v in &mirror.y {
        if *v != 0.0 && *v != 1.0 {
            return Err(Error::Validation {
                field: "y".into(),
                msg: format!("response {v} is not 0 or 1"),
            });
        }
        y.push(*v as u8);
    }
    let x = DMatrix::from_fn(n, d, |i, j| mirror.x[i][j]);
    Dataset::new(x, y, mirror.rid, mirror.counts)
}

/// The matrix of all Case-minus-Non-Case predictor differences, one row per
/// (Case, Non-Case) pair, enumerated Case-major in original row order.
#[derive(Debug, Clone)]
pub struct Displacements {
    delta: Vec<f64>,
    dim: usize,
    n1: usize,
    n0: usize,
    pairs: Vec<(u32, u32)>,
    weights: Option<Vec<f64>>,
}

impl Displacements {
    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    /// Displacement row `k` (the pair `pairs[k]`).
    pub fn row(&self, k: usize) -> &[f64] {
        &self.delta[k * self.dim..(k + 1) * self.dim]
    }

    /// Raw row-major storage of the displacement matrix.
    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    /// Group-relative (case index, non-case index) for each row, 0-based.
    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    /// Pair weight: product of the two row counts (1 when counts absent).
    pub fn weight(&self, k: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[k])
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Sum of pair weights (the effective N of the EL problem).
    pub fn total_weight(&self) -> f64 {
        self.weights
            .as_ref()
            .map_or(self.n_pairs() as f64, |w| w.iter().sum())
    }

    /// Build displacements directly from a raw row-major matrix; used by
    /// tests and the LP oracles.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let mut delta = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            delta.extend_from_slice(r);
        }
        Displacements {
            delta,
            dim,
            n1: rows.len(),
            n0: 1,
            pairs: (0..rows.len()).map(|i| (i as u32, 0)).collect(),
            weights: None,
        }
    }

    /// The displacement matrix as a nalgebra matrix (small inputs only).
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_pairs(), self.dim, |i, j| self.delta[i * self.dim + j])
    }
}

/// Compute the displacement matrix of `ds`.
///
/// Fails with [`Error::NoMixedResults`] when the responses are all the same.
/// When counts are present, each pair carries the product of its row counts.
pub fn displacements(ds: &Dataset) -> Result<Displacements> {
    let cases = ds.case_rows();
    let noncases = ds.noncase_rows();
    if cases.is_empty() || noncases.is_empty() {
        return Err(Error::NoMixedResults);
    }
    let d = ds.dim();
    let n_pairs = cases.len() * noncases.len();
    let mut delta = Vec::with_capacity(n_pairs * d);
    let mut pairs = Vec::with_capacity(n_pairs);
    let weighted = ds.counts().is_some();
    let mut weights = if weighted { Vec::with_capacity(n_pairs) } else { Vec::new() };
    for (ci, &i) in cases.iter().enumerate() {
        for (nj, &j) in noncases.iter().enumerate() {
            for k in 0..d {
                delta.push(ds.x()[(i, k)] - ds.x()[(j, k)]);
            }
            pairs.push((ci as u32, nj as u32));
            if weighted {
                weights.push(ds.count(i) * ds.count(j));
            }
        }
    }
    Ok(Displacements {
        delta,
        dim: d,
        n1: cases.len(),
        n0: noncases.len(),
        pairs,
        weights: if weighted { Some(weights) } else { None },
    })
}

/// Numerical rank: number of singular values above `tol` times the largest.
/// An all-zero (or empty) matrix has rank 0.
pub fn matrix_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let svals = m.clone().singular_values();
    let max = svals.iter().cloned().fold(0.0_f64, f64::max);
    if max == 0.0 {
        return 0;
    }
    svals.iter().filter(|&&s| s > tol * max).count()
}

/// Rank of the displacement matrix at the default tolerance.
pub fn displacement_rank(d: &Displacements) -> usize {
    // Rank via the Gram matrix delta^T delta: d x d regardless of pair count.
    let dim = d.dim();
    let mut gram = DMatrix::zeros(dim, dim);
    for k in 0..d.n_pairs() {
        let row = d.row(k);
        for a in 0..dim {
            for b in a..dim {
                gram[(a, b)] += row[a] * row[b];
            }
        }
    }
    for a in 0..dim {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    if dim == 0 {
        return 0;
    }
    let svals = gram.singular_values();
    let max = svals.iter().cloned().fold(0.0_f64, f64::max);
    if max == 0.0 {
        return 0;
    }
    // Singular values of the Gram matrix are squares of delta's.
    svals.iter().filter(|&&s| s > RANK_TOL * RANK_TOL * max).count()
}

/// Rows permuted by a seeded pseudo-random permutation; rid bindings move
/// with their rows. Deterministic for a fixed seed.
pub fn shuffle(ds: &Dataset, seed: u64) -> Dataset {
    let mut order: Vec<usize> = (0..ds.n()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    ds.subset(&order)
}
