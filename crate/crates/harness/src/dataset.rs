//! Datasets: text loaders, writers and seeded synthesis.
//!
//! Dense CSV rows are `label,x_1,...,x_d` with no header. Sparse files start
//! with a `#d=<dim> #k=<classes>` line, followed by rows of
//! `label idx:val idx:val ...` with 0-based strictly increasing indices.
//!
//! Real MNIST or IMDB data enter through these two formats; nothing is
//! downloaded. Synthetic sets record their recipe and seed in `provenance`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use dasgrad_core::{DenseVector, Example, Features, Problem, ProblemKind, Rng, SparseVector};

use crate::error::HarnessError;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub d: usize,
    pub k: usize,
    pub provenance: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        for ex in &self.examples {
            counts[ex.label] += 1;
        }
        counts
    }

    /// Appends a constant `1` feature to every example, giving linear
    /// models a per-class intercept.
    pub fn with_intercept(mut self) -> Self {
        let d = self.d;
        for ex in &mut self.examples {
            ex.features = match &ex.features {
                Features::Dense(v) => {
                    let mut values = v.as_slice().to_vec();
                    values.push(1.0);
                    Features::Dense(values.into())
                }
                Features::Sparse(s) => {
                    let mut indices = s.indices().to_vec();
                    let mut values = s.values().to_vec();
                    indices.push(d);
                    values.push(1.0);
                    Features::Sparse(
                        SparseVector::new(d + 1, indices, values).expect("appended index is the largest"),
                    )
                }
            };
        }
        self.d = d + 1;
        self.provenance.push_str(" +intercept");
        self
    }

    pub fn into_problem(self, kind: ProblemKind, l2_lambda: f64) -> Result<Problem, HarnessError> {
        let k = if kind == ProblemKind::Centroid { 1 } else { self.k };
        Ok(Problem::new(kind, self.examples, l2_lambda, k)?)
    }
}

fn parse_f64(field: &str, line: usize) -> Result<f64, HarnessError> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| HarnessError::parse(line, format!("non-numeric field {field:?}")))?;
    if !v.is_finite() {
        return Err(HarnessError::parse(line, format!("non-finite value {field:?}")));
    }
    Ok(v)
}

fn parse_label(field: &str, line: usize) -> Result<usize, HarnessError> {
    field.trim().parse().map_err(|_| HarnessError::parse(line, format!("invalid label {field:?}")))
}

/// Reads a headerless dense CSV. `d` comes from the first row and the class
/// count is one more than the largest label.
pub fn load_dense_csv(path: &Path) -> Result<Dataset, HarnessError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| HarnessError::io(path, e))?;
    let mut examples = Vec::new();
    let mut d = None;
    for (row, record) in reader.records().enumerate() {
        let line = row + 1;
        let record = record.map_err(|e| HarnessError::parse(line, e.to_string()))?;
        if record.len() < 2 {
            return Err(HarnessError::parse(line, "row needs a label and at least one feature"));
        }
        let dim = *d.get_or_insert(record.len() - 1);
        if record.len() - 1 != dim {
            return Err(HarnessError::parse(
                line,
                format!("expected {dim} features, found {}", record.len() - 1),
            ));
        }
        let label = parse_label(&record[0], line)?;
        let values = record.iter().skip(1).map(|f| parse_f64(f, line)).collect::<Result<Vec<_>, _>>()?;
        examples.push(Example::dense(values, label));
    }
    let d = d.ok_or_else(|| HarnessError::parse(0, "empty dataset"))?;
    let k = examples.iter().map(|e| e.label).max().unwrap_or(0) + 1;
    Ok(Dataset { examples, d, k: k.max(2), provenance: format!("dense-csv:{}", path.display()) })
}

/// Writes `label,x_1,...` rows with shortest round-trip float formatting.
pub fn write_dense_csv(dataset: &Dataset, path: &Path) -> Result<(), HarnessError> {
    let mut out = String::new();
    for ex in &dataset.examples {
        write!(out, "{}", ex.label).unwrap();
        for v in ex.features.to_dense().iter() {
            write!(out, ",{v:?}").unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| HarnessError::io(path, e))
}

fn parse_sparse_header(line: &str) -> Option<(usize, usize)> {
    let mut d = None;
    let mut k = None;
    for token in line.split_whitespace() {
        if let Some(v) = token.strip_prefix("#d=") {
            d = v.parse().ok();
        } else if let Some(v) = token.strip_prefix("#k=") {
            k = v.parse().ok();
        }
    }
    Some((d?, k?))
}

/// Reads the sparse text format. Labels must lie below the declared class
/// count and indices below the declared dimension.
pub fn load_sparse(path: &Path) -> Result<Dataset, HarnessError> {
    let file = fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| HarnessError::io(path, e))?
        .ok_or_else(|| HarnessError::parse(1, "missing #d=<dim> #k=<classes> header"))?;
    let (d, k) =
        parse_sparse_header(&header).ok_or_else(|| HarnessError::parse(1, "missing #d=<dim> #k=<classes> header"))?;
    let mut examples = Vec::new();
    for (row, line) in lines.enumerate() {
        let line_no = row + 2;
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label = parse_label(tokens.next().unwrap_or(""), line_no)?;
        if label >= k {
            return Err(HarnessError::parse(line_no, format!("label {label} outside 0..{k}")));
        }
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for token in tokens {
            let (idx, val) = token
                .split_once(':')
                .ok_or_else(|| HarnessError::parse(line_no, format!("expected idx:val, found {token:?}")))?;
            let idx: usize =
                idx.parse().map_err(|_| HarnessError::parse(line_no, format!("invalid index {idx:?}")))?;
            if idx >= d {
                return Err(HarnessError::parse(line_no, format!("index {idx} outside dimension {d}")));
            }
            if indices.last().is_some_and(|prev| *prev >= idx) {
                return Err(HarnessError::parse(line_no, "indices must be strictly increasing"));
            }
            let val = parse_f64(val, line_no)?;
            if val != 0.0 {
                indices.push(idx);
                values.push(val);
            }
        }
        let sparse = SparseVector::new(d, indices, values).map_err(|e| HarnessError::parse(line_no, e.to_string()))?;
        examples.push(Example::sparse(sparse, label));
    }
    if examples.is_empty() {
        return Err(HarnessError::parse(1, "empty dataset"));
    }
    Ok(Dataset { examples, d, k, provenance: format!("sparse:{}", path.display()) })
}

pub fn write_sparse(dataset: &Dataset, path: &Path) -> Result<(), HarnessError> {
    let mut out = format!("#d={} #k={}\n", dataset.d, dataset.k);
    for ex in &dataset.examples {
        write!(out, "{}", ex.label).unwrap();
        let sparse = match &ex.features {
            Features::Sparse(s) => s.clone(),
            Features::Dense(x) => SparseVector::from_dense(x.as_slice()),
        };
        for (i, v) in sparse.iter() {
            write!(out, " {i}:{v:?}").unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| HarnessError::io(path, e))
}

/// `n` points drawn i.i.d. from `N(0, σ² I_d)`, all labelled 0.
pub fn synth_centroid(n: usize, d: usize, sigma: f64, seed: u64) -> Dataset {
    assert!(n >= 1 && d >= 1, "synth_centroid needs n, d >= 1");
    let mut rng = Rng::new(seed);
    let examples = (0..n)
        .map(|_| Example::dense((0..d).map(|_| sigma * rng.gaussian()).collect::<Vec<_>>(), 0))
        .collect();
    Dataset { examples, d, k: 1, provenance: format!("synth-centroid n={n} d={d} sigma={sigma} seed={seed}") }
}

/// Gaussian class mixture: `K` centers with minimum pairwise distance equal
/// to `margin`, unit-variance isotropic noise around each center.
#[derive(Debug, Clone)]
pub struct ClassMixture {
    pub centers: Vec<DenseVector>,
    pub d: usize,
    pub margin: f64,
    pub seed: u64,
}

impl ClassMixture {
    pub fn new(d: usize, k: usize, margin: f64, seed: u64) -> Self {
        assert!(k >= 2 && d >= 1, "mixture needs K >= 2 and d >= 1");
        let mut rng = Rng::new(seed);
        let mut centers: Vec<DenseVector> =
            (0..k).map(|_| (0..d).map(|_| rng.gaussian()).collect::<Vec<_>>().into()).collect();
        let mut min_dist = f64::INFINITY;
        for a in 0..k {
            for b in a + 1..k {
                let mut diff = centers[a].clone();
                diff.axpy(-1.0, &centers[b]);
                min_dist = min_dist.min(diff.norm());
            }
        }
        let scale = if min_dist > 0.0 { margin / min_dist } else { 0.0 };
        for c in &mut centers {
            c.scale(scale);
        }
        Self { centers, d, margin, seed }
    }

    pub fn k(&self) -> usize {
        self.centers.len()
    }

    /// Draws one example of class `label`; each coordinate is zeroed with
    /// probability `sparsity`.
    pub fn sample(&self, label: usize, sparsity: f64, rng: &mut Rng) -> Example {
        let center = &self.centers[label];
        let values: Vec<f64> = (0..self.d)
            .map(|h| {
                let v = center[h] + rng.gaussian();
                if sparsity > 0.0 && rng.bernoulli(sparsity) {
                    0.0
                } else {
                    v
                }
            })
            .collect();
        if sparsity > 0.5 {
            Example::sparse(SparseVector::from_dense(&values), label)
        } else {
            Example::dense(values, label)
        }
    }

    /// `n` examples with labels cycling `0, 1, ..., K-1`.
    pub fn sample_balanced(&self, n: usize, sparsity: f64, rng: &mut Rng) -> Vec<Example> {
        (0..n).map(|i| self.sample(i % self.k(), sparsity, rng)).collect()
    }
}

/// Seeded synthetic classification set: `n` examples over `K` classes in
/// `d` dimensions, class centers separated by `margin`, balanced labels.
pub fn synth_classification(n: usize, d: usize, k: usize, margin: f64, sparsity: f64, seed: u64) -> Dataset {
    assert!(n >= k && k >= 2, "synth_classification needs n >= K >= 2");
    assert!(margin >= 0.0 && (0.0..=1.0).contains(&sparsity));
    let mixture = ClassMixture::new(d, k, margin, seed);
    let mut rng = Rng::new(seed ^ 0x5eed_da7a);
    let examples = mixture.sample_balanced(n, sparsity, &mut rng);
    Dataset {
        examples,
        d,
        k,
        provenance: format!(
            "synth-classification n={n} d={d} k={k} margin={margin} sparsity={sparsity} seed={seed}"
        ),
    }
}

/// Keeps each example whose label is in `drop_labels` with probability
/// `keep_fraction`; other examples are untouched and order is preserved.
pub fn unbalance(
    dataset: &Dataset,
    drop_labels: &BTreeSet<usize>,
    keep_fraction: f64,
    seed: u64,
) -> Result<Dataset, HarnessError> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(HarnessError::Config("keep_fraction must lie in (0, 1]".into()));
    }
    let mut rng = Rng::new(seed);
    let examples: Vec<Example> = dataset
        .examples
        .iter()
        .filter(|ex| !drop_labels.contains(&ex.label) || rng.bernoulli(keep_fraction))
        .cloned()
        .collect();
    if examples.is_empty() {
        return Err(HarnessError::Config("unbalancing removed every example".into()));
    }
    let dropped: Vec<String> = drop_labels.iter().map(usize::to_string).collect();
    Ok(Dataset {
        examples,
        d: dataset.d,
        k: dataset.k,
        provenance: format!(
            "{} | unbalanced drop={} keep={keep_fraction} seed={seed}",
            dataset.provenance,
            dropped.join("+")
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use dasgrad_core::metrics::gradient_norm_variance;

    fn temp_file(contents: &str) -> tempfile::NamedTempFile {
        let file = tempfile::NamedTempFile::new().unwrap();
        fs::write(file.path(), contents).unwrap();
        file
    }

    #[test]
    fn dense_two_rows() {
        let f = temp_file("1,0.5,2.0\n0,1.0,0.0\n");
        let ds = load_dense_csv(f.path()).unwrap();
        assert_eq!((ds.len(), ds.d, ds.k), (2, 2, 2));
        assert_eq!(ds.examples[0].label, 1);
        assert_eq!(ds.examples[0].features.to_dense().as_slice(), &[0.5, 2.0]);
    }

    #[test]
    fn dense_errors_carry_line_numbers() {
        assert!(load_dense_csv(temp_file("").path()).is_err());
        let err = load_dense_csv(temp_file("1,0.5,2.0\n0,1.0\n").path()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = load_dense_csv(temp_file("1,0.5\n0,abc\n").path()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(load_dense_csv(temp_file("x,0.5\n").path()).is_err());
    }

    #[test]
    fn dense_round_trip() {
        let ds = synth_classification(30, 4, 3, 2.0, 0.0, 1);
        let f = tempfile::NamedTempFile::new().unwrap();
        write_dense_csv(&ds, f.path()).unwrap();
        let back = load_dense_csv(f.path()).unwrap();
        assert_eq!(back.examples, ds.examples);
    }

    #[test]
    fn sparse_single_row() {
        let ds = load_sparse(temp_file("#d=4 #k=2\n1 0:1.5 3:2.0\n").path()).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.examples[0].features.nnz(), 2);
        assert_eq!(ds.examples[0].features.to_dense().as_slice(), &[1.5, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn sparse_errors() {
        assert!(load_sparse(temp_file("#d=4 #k=2\n1 0:1.5 0:2.0\n").path()).is_err());
        assert!(load_sparse(temp_file("#d=4 #k=2\n1 2:1.5 1:2.0\n").path()).is_err());
        assert!(load_sparse(temp_file("#d=4 #k=2\n1 4:1.5\n").path()).is_err());
        assert!(load_sparse(temp_file("1 0:1.5\n").path()).is_err());
        assert!(load_sparse(temp_file("#d=4 #k=2\n2 0:1.5\n").path()).is_err());
    }

    #[test]
    fn sparse_densifies_to_dense_ingestion() {
        let ds = synth_classification(20, 12, 2, 1.0, 0.7, 5);
        let sf = tempfile::NamedTempFile::new().unwrap();
        let df = tempfile::NamedTempFile::new().unwrap();
        write_sparse(&ds, sf.path()).unwrap();
        write_dense_csv(&ds, df.path()).unwrap();
        let sparse = load_sparse(sf.path()).unwrap();
        let dense = load_dense_csv(df.path()).unwrap();
        for (a, b) in sparse.examples.iter().zip(&dense.examples) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.features.to_dense(), b.features.to_dense());
        }
    }

    #[test]
    fn centroid_synthesis() {
        let ds = synth_centroid(50, 3, 0.0, 9);
        let p = ds.into_problem(ProblemKind::Centroid, 0.0).unwrap();
        assert!(p.examples().iter().all(|e| e.features.to_dense().norm() == 0.0));
        for theta in [[0.0, 0.0, 0.0], [1.0, -2.0, 0.5]] {
            assert_eq!(gradient_norm_variance(&p, &theta.into()).unwrap(), 0.0);
        }
        assert_eq!(synth_centroid(10, 2, 1.0, 4), synth_centroid(10, 2, 1.0, 4));
    }

    #[test]
    fn centroid_sample_variance() {
        let ds = synth_centroid(100_000, 1, 1.0, 13);
        let xs: Vec<f64> = ds.examples.iter().map(|e| e.features.to_dense()[0]).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64;
        assert!((0.98..=1.02).contains(&var), "{var}");
    }

    #[test]
    fn classification_centers_respect_margin() {
        let mix = ClassMixture::new(5, 6, 3.0, 2);
        for a in 0..6 {
            for b in a + 1..6 {
                let mut diff = mix.centers[a].clone();
                diff.axpy(-1.0, &mix.centers[b]);
                assert!(diff.norm() >= 3.0 - 1e-12);
            }
        }
    }

    #[test]
    fn fully_sparse_features_are_zero() {
        let ds = synth_classification(40, 5, 4, 3.0, 1.0, 3);
        assert!(ds.examples.iter().all(|e| e.features.nnz() == 0));
    }

    #[test]
    fn sparsity_rate() {
        let ds = synth_classification(20, 10_000, 2, 1.0, 0.9, 8);
        let avg = ds.examples.iter().map(|e| e.features.nnz()).sum::<usize>() as f64 / 20.0;
        // Per-example sd is 30; the mean over 20 examples has sd ~6.7.
        assert!((avg - 1000.0).abs() <= 4.0 * 30.0 / (20f64).sqrt(), "{avg}");
    }

    #[test]
    fn unbalance_behaviour() {
        let ds = synth_classification(4000, 2, 4, 1.0, 0.0, 6);
        let same = unbalance(&ds, &BTreeSet::from([1, 3]), 1.0, 1).unwrap();
        assert_eq!(same.examples, ds.examples);
        let un = unbalance(&ds, &BTreeSet::from([1, 3]), 0.1, 1).unwrap();
        let before = ds.label_counts();
        let after = un.label_counts();
        assert_eq!(after[0], before[0]);
        assert_eq!(after[2], before[2]);
        // 1000 examples of each dropped label; binomial sd = sqrt(1000 * 0.1 * 0.9) ≈ 9.5.
        for c in [1, 3] {
            assert!((after[c] as f64 - 100.0).abs() <= 4.0 * 9.49, "{}", after[c]);
        }
        assert!(unbalance(&ds, &BTreeSet::from([0]), 0.0, 1).is_err());
        let only = synth_classification(2, 2, 2, 1.0, 0.0, 1);
        let mut tiny = only.clone();
        tiny.examples.retain(|e| e.label == 0);
        assert!(unbalance(&tiny, &BTreeSet::from([0]), 1e-300, 1).is_err());
    }
}
