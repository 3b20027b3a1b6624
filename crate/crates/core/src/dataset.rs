//! Datasets: construction, synthetic sampling, CSV round-trip, and splits.
//!
//! A [`Dataset`] is an `n x d` matrix of feature rows with an optional label
//! per row. Synthetic data is drawn uniformly from the unit ball so that
//! per-sample gradient bounds derived from `||x|| <= 1` hold by construction.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// An `n x d` sample matrix with optional real labels.
///
/// Immutable after construction; all rows are finite. Uniform-ball sampling
/// additionally guarantees `||x_i|| <= 1` for every row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    samples: Array2<f64>,
    labels: Option<Array1<f64>>,
}

impl Dataset {
    pub fn new(samples: Array2<f64>, labels: Option<Array1<f64>>) -> Result<Self> {
        let (n, d) = samples.dim();
        if n == 0 || d == 0 {
            return Err(Error::invalid(format!(
                "dataset must be non-empty, got n={n}, d={d}"
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains a non-finite feature"));
        }
        if let Some(y) = &labels {
            if y.len() != n {
                return Err(Error::invalid(format!(
                    "label count {} does not match sample count {n}",
                    y.len()
                )));
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("dataset contains a non-finite label"));
            }
        }
        Ok(Dataset { samples, labels })
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false // construction rejects n = 0
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.samples.row(i)
    }

    pub fn label(&self, i: usize) -> Option<f64> {
        self.labels.as_ref().map(|y| y[i])
    }

    pub fn has_labels(&self) -> bool {
        self.labels.is_some()
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    /// Mean feature row, `(1/n) sum_i x_i`.
    pub fn mean_row(&self) -> Array1<f64> {
        let mut m = Array1::zeros(self.dim());
        for row in self.samples.rows() {
            m += &row;
        }
        m / self.len() as f64
    }
}

/// Draw one point uniformly from the unit ball in `d` dimensions: a uniform
/// direction (normalized Gaussian) scaled by `U^(1/d)`, which is the radius
/// CDF inverse for the uniform ball measure.
pub(crate) fn unit_ball_point(d: usize, rng: &mut impl Rng) -> Array1<f64> {
    loop {
        let g: Array1<f64> = (0..d)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = g.dot(&g).sqrt();
        if norm > 1e-12 {
            let u: f64 = rng.random::<f64>();
            let radius = u.powf(1.0 / d as f64);
            return g * (radius / norm);
        }
        // A zero-norm Gaussian draw is astronomically unlikely; resample.
    }
}

/// Sample `n` points uniformly from the unit ball in `d` dimensions.
///
/// Deterministic given `rng`: the same stream reproduces the same matrix
/// bit-for-bit. For any `d`, `E||x||^2 = d/(d+2)`.
pub fn sample_unit_ball(d: usize, n: usize, rng: &RngStream) -> Result<Dataset> {
    if d == 0 || n == 0 {
        return Err(Error::invalid(format!(
            "sample_unit_ball needs d >= 1 and n >= 1, got d={d}, n={n}"
        )));
    }
    let mut r = rng.rng();
    let mut samples = Array2::zeros((n, d));
    for i in 0..n {
        let p = unit_ball_point(d, &mut r);
        samples.row_mut(i).assign(&p);
    }
    Dataset::new(samples, None)
}

/// Serialize a dataset as CSV: a `# d=<d> labeled=<0|1>` header line, then one
/// row per sample (`d` feature columns, plus a trailing label column when
/// labeled). Floats are printed in shortest round-trip form, so
/// `read_csv(write_csv(ds)) == ds` exactly.
pub fn write_csv(data: &Dataset, mut w: impl std::io::Write) -> Result<()> {
    writeln!(
        w,
        "# d={} labeled={}",
        data.dim(),
        if data.has_labels() { 1 } else { 0 }
    )?;
    for i in 0..data.len() {
        let mut fields: Vec<String> = data.row(i).iter().map(|v| format!("{v}")).collect();
        if let Some(y) = data.label(i) {
            fields.push(format!("{y}"));
        }
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Parse a dataset from the CSV form produced by [`write_csv`].
///
/// Errors carry the 1-based row index of the offending line.
pub fn read_csv(r: impl std::io::Read) -> Result<Dataset> {
    let text = std::io::read_to_string(r)?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        row: 1,
        reason: "empty input, expected `# d=<d> labeled=<0|1>` header".into(),
    })?;
    let (d, labeled) = parse_header(header).map_err(|reason| Error::Parse { row: 1, reason })?;

    let width = d + usize::from(labeled);
    let mut rows: Vec<f64> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for (idx, line) in lines {
        let row = idx + 1; // 1-based, counting the header
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(Error::Parse {
                row,
                reason: format!("expected {width} fields, found {}", fields.len()),
            });
        }
        for (j, f) in fields.iter().enumerate() {
            let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                row,
                reason: format!("field {} is not a number: {f:?}", j + 1),
            })?;
            if j < d {
                rows.push(v);
            } else {
                labels.push(v);
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Parse {
            row: 1,
            reason: "no data rows".into(),
        });
    }
    let samples = Array2::from_shape_vec((n, d), rows)
        .expect("row-major reshape cannot fail for validated dimensions");
    let labels = if labeled {
        Some(Array1::from_vec(labels))
    } else {
        None
    };
    Dataset::new(samples, labels)
}

fn parse_header(line: &str) -> std::result::Result<(usize, bool), String> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| format!("header must start with '#', got {line:?}"))?;
    let mut d: Option<usize> = None;
    let mut labeled: Option<bool> = None;
    for tok in body.split_whitespace() {
        if let Some(v) = tok.strip_prefix("d=") {
            d = Some(v.parse().map_err(|_| format!("bad d value {v:?}"))?);
        } else if let Some(v) = tok.strip_prefix("labeled=") {
            labeled = Some(match v {
                "0" => false,
                "1" => true,
                _ => return Err(format!("labeled must be 0 or 1, got {v:?}")),
            });
        } else {
            return Err(format!("unrecognized header token {tok:?}"));
        }
    }
    match (d, labeled) {
        (Some(d), Some(l)) if d > 0 => Ok((d, l)),
        (Some(0), _) => Err("d must be >= 1".into()),
        _ => Err("header must contain d=<d> and labeled=<0|1>".into()),
    }
}

/// Split into disjoint train/test parts of sizes `ceil(fraction*n)` and
/// `n - ceil(fraction*n)`, assigning rows by a seeded permutation.
///
/// `fraction` must lie in (0,1) and both parts must be non-empty.
pub fn train_test_split(
    data: &Dataset,
    fraction: f64,
    rng: &RngStream,
) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!(
            "split fraction must lie in (0,1), got {fraction}"
        )));
    }
    let n = data.len();
    let n_train = (fraction * n as f64).ceil() as usize;
    let n_test = n - n_train;
    if n_train == 0 || n_test == 0 {
        return Err(Error::invalid(format!(
            "split sizes {n_train}/{n_test} from n={n}, fraction={fraction}: both parts must be non-empty"
        )));
    }

    // Fisher-Yates permutation driven by the stream.
    let mut perm: Vec<usize> = (0..n).collect();
    let mut r = rng.rng();
    for i in (1..n).rev() {
        let j = r.random_range(0..=i);
        perm.swap(i, j);
    }

    let take = |idx: &[usize]| -> Result<Dataset> {
        let mut samples = Array2::zeros((idx.len(), data.dim()));
        let mut labels = data.has_labels().then(|| Array1::zeros(idx.len()));
        for (out, &i) in idx.iter().enumerate() {
            samples.row_mut(out).assign(&data.row(i));
            if let Some(y) = labels.as_mut() {
                y[out] = data.label(i).expect("labeled dataset has a label per row");
            }
        }
        Dataset::new(samples, labels)
    };
    Ok((take(&perm[..n_train])?, take(&perm[n_train..])?))
}
