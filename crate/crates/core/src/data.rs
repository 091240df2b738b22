//! Datasets and file formats: real-valued point sets, bag-of-words
//! corpora, label vectors, and the synthetic generator.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Cluster labels, one per observation. Values are arbitrary integers;
/// only equality matters.
pub type LabelVector = Vec<i64>;

/// N real-valued observations, row-major. Univariate data has one
/// column; extra columns are treated as independent dimensions.
#[derive(Debug, Clone)]
pub struct PointSet {
    values: Vec<f64>,
    dims: usize,
    labels: Option<LabelVector>,
}

impl PointSet {
    pub fn new(values: Vec<f64>, dims: usize) -> Result<Self> {
        if dims == 0 {
            return Err(Error::domain("point set needs at least 1 dimension"));
        }
        if values.len() % dims != 0 {
            return Err(Error::domain(format!(
                "value count {} is not a multiple of dims {dims}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite value {bad}")));
        }
        Ok(PointSet {
            values,
            dims,
            labels: None,
        })
    }

    pub fn from_1d(values: Vec<f64>) -> Result<Self> {
        PointSet::new(values, 1)
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dims..(i + 1) * self.dims]
    }

    pub fn attach_labels(&mut self, labels: LabelVector) -> Result<()> {
        if labels.len() != self.len() {
            return Err(Error::domain(format!(
                "label count {} does not match point count {}",
                labels.len(),
                self.len()
            )));
        }
        self.labels = Some(labels);
        Ok(())
    }

    pub fn labels(&self) -> Option<&LabelVector> {
        self.labels.as_ref()
    }
}

/// Bag-of-words corpus: per document, (word id, count) pairs over a
/// fixed vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    docs: Vec<Vec<(u32, u32)>>,
    vocab_size: usize,
}

impl Corpus {
    pub fn new(docs: Vec<Vec<(u32, u32)>>, vocab_size: usize) -> Result<Self> {
        for (m, doc) in docs.iter().enumerate() {
            for &(w, c) in doc {
                if w as usize >= vocab_size {
                    return Err(Error::domain(format!(
                        "document {m}: word id {w} outside vocabulary of size {vocab_size}"
                    )));
                }
                if c == 0 {
                    return Err(Error::domain(format!(
                        "document {m}: word id {w} has count 0"
                    )));
                }
            }
        }
        Ok(Corpus { docs, vocab_size })
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn doc(&self, m: usize) -> &[(u32, u32)] {
        &self.docs[m]
    }

    pub fn token_total(&self) -> u64 {
        self.docs
            .iter()
            .flat_map(|d| d.iter().map(|&(_, c)| c as u64))
            .sum()
    }

    /// Word ids of document `m` with counts expanded, in file order.
    pub fn doc_tokens(&self, m: usize) -> Vec<u32> {
        let mut out = Vec::new();
        for &(w, c) in &self.docs[m] {
            for _ in 0..c {
                out.push(w);
            }
        }
        out
    }

    /// Split off the last `test_frac` of documents (by order) as a test
    /// set; the rest is the training set. Both share the vocabulary.
    pub fn split_tail(&self, test_frac: f64) -> Result<(Corpus, Corpus)> {
        if !(0.0..1.0).contains(&test_frac) {
            return Err(Error::domain(format!(
                "test fraction must be in [0, 1), got {test_frac}"
            )));
        }
        let m = self.docs.len();
        let test_count = ((m as f64) * test_frac).round() as usize;
        let train_count = m - test_count;
        let train = Corpus {
            docs: self.docs[..train_count].to_vec(),
            vocab_size: self.vocab_size,
        };
        let test = Corpus {
            docs: self.docs[train_count..].to_vec(),
            vocab_size: self.vocab_size,
        };
        Ok((train, test))
    }
}

/// Draw `k` component means from Uniform(mean_low, mean_high), then `n`
/// points from an equal-weight mixture of Normal(mean, var). Returns
/// the points and the true component labels.
pub fn gen_synth(
    n: usize,
    k: usize,
    mean_low: f64,
    mean_high: f64,
    var: f64,
    seed: u64,
) -> Result<(PointSet, LabelVector)> {
    if k == 0 || n < k {
        return Err(Error::domain(format!(
            "need n >= k >= 1, got n={n} k={k}"
        )));
    }
    if !(mean_low < mean_high) {
        return Err(Error::domain(format!(
            "need mean_low < mean_high, got {mean_low} >= {mean_high}"
        )));
    }
    if !(var > 0.0) {
        return Err(Error::domain(format!("variance must be positive, got {var}")));
    }
    let mut stream = RngStream::new(seed, 0);
    let means: Vec<f64> = (0..k)
        .map(|_| mean_low + (mean_high - mean_low) * stream.uniform())
        .collect();
    let sd = var.sqrt();
    let mut values = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let c = stream.uniform_index(k);
        values.push(stream.normal(means[c], sd));
        labels.push(c as i64);
    }
    Ok((PointSet::from_1d(values)?, labels))
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Read a CSV of real observations, one row per point, comma-separated
/// columns, optional single header line.
pub fn read_points_csv(path: impl AsRef<Path>) -> Result<PointSet> {
    let file = File::open(path.as_ref())?;
    let reader = BufReader::new(file);
    let mut values: Vec<f64> = Vec::new();
    let mut dims = 0usize;
    let mut saw_data = false;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> =
            fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(row) => {
                if !saw_data {
                    dims = row.len();
                    saw_data = true;
                } else if row.len() != dims {
                    return Err(parse_err(
                        lineno,
                        format!("expected {dims} columns, found {}", row.len()),
                    ));
                }
                if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
                    return Err(parse_err(lineno, format!("non-finite value {bad}")));
                }
                values.extend(row);
            }
            Err(e) => {
                // a single unparsable first line is a header
                if !saw_data && lineno == 1 {
                    continue;
                }
                return Err(parse_err(lineno, format!("bad number: {e}")));
            }
        }
    }
    if !saw_data {
        return Err(Error::domain("no data"));
    }
    PointSet::new(values, dims)
}

pub fn write_points_csv(path: impl AsRef<Path>, points: &PointSet) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    for i in 0..points.len() {
        let row: Vec<String> = points.point(i).iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Read labels, one integer per line.
pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelVector> {
    let file = File::open(path.as_ref())?;
    let reader = BufReader::new(file);
    let mut labels = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r').trim();
        if line.is_empty() {
            continue;
        }
        let v: i64 = line
            .parse()
            .map_err(|e| parse_err(lineno, format!("bad label: {e}")))?;
        labels.push(v);
    }
    if labels.is_empty() {
        return Err(Error::domain("no data"));
    }
    Ok(labels)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[i64]) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    for l in labels {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

/// Read a bag-of-words file in the UCI sparse format: three header
/// lines (D, W, NNZ), then one "docID wordID count" triple per line,
/// ids 1-indexed. Ids are converted to 0-indexed.
pub fn read_bow(path: impl AsRef<Path>) -> Result<Corpus> {
    let file = File::open(path.as_ref())?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let mut next_content = |expect: &str| -> Result<(usize, String)> {
        for (idx, line) in lines.by_ref() {
            let lineno = idx + 1;
            let line = line?;
            let line = line.trim_end_matches('\r').trim().to_string();
            if !line.is_empty() {
                return Ok((lineno, line));
            }
        }
        Err(Error::domain(format!("missing {expect}")))
    };

    let (ln, d_line) = next_content("document count")?;
    let num_docs: usize = d_line
        .parse()
        .map_err(|e| parse_err(ln, format!("bad document count: {e}")))?;
    let (ln, w_line) = next_content("vocabulary size")?;
    let vocab: usize = w_line
        .parse()
        .map_err(|e| parse_err(ln, format!("bad vocabulary size: {e}")))?;
    let (ln, nnz_line) = next_content("entry count")?;
    let nnz: usize = nnz_line
        .parse()
        .map_err(|e| parse_err(ln, format!("bad entry count: {e}")))?;

    let mut docs: Vec<Vec<(u32, u32)>> = vec![Vec::new(); num_docs];
    let mut seen = 0usize;
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r').trim().to_string();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(parse_err(
                lineno,
                format!("expected 'docID wordID count', found {} fields", parts.len()),
            ));
        }
        let doc: usize = parts[0]
            .parse()
            .map_err(|e| parse_err(lineno, format!("bad docID: {e}")))?;
        let word: usize = parts[1]
            .parse()
            .map_err(|e| parse_err(lineno, format!("bad wordID: {e}")))?;
        let count: u32 = parts[2]
            .parse()
            .map_err(|e| parse_err(lineno, format!("bad count: {e}")))?;
        if doc == 0 || doc > num_docs {
            return Err(parse_err(
                lineno,
                format!("docID {doc} outside 1..={num_docs}"),
            ));
        }
        if word == 0 || word > vocab {
            return Err(parse_err(
                lineno,
                format!("wordID {word} outside 1..={vocab}"),
            ));
        }
        if count == 0 {
            return Err(parse_err(lineno, "count must be >= 1"));
        }
        docs[doc - 1].push((word as u32 - 1, count));
        seen += 1;
    }
    if seen != nnz {
        return Err(Error::domain(format!(
            "entry count mismatch: header says {nnz}, file has {seen}"
        )));
    }
    Corpus::new(docs, vocab)
}

pub fn write_bow(path: impl AsRef<Path>, corpus: &Corpus) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    let nnz: usize = (0..corpus.num_docs()).map(|m| corpus.doc(m).len()).sum();
    writeln!(w, "{}", corpus.num_docs())?;
    writeln!(w, "{}", corpus.vocab_size())?;
    writeln!(w, "{nnz}")?;
    for m in 0..corpus.num_docs() {
        for &(word, count) in corpus.doc(m) {
            writeln!(w, "{} {} {}", m + 1, word + 1, count)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn gen_synth_deterministic() {
        let (a, la) = gen_synth(100, 3, 0.0, 10.0, 0.01, 7).unwrap();
        let (b, lb) = gen_synth(100, 3, 0.0, 10.0, 0.01, 7).unwrap();
        assert_eq!(la, lb);
        for i in 0..a.len() {
            assert_eq!(a.point(i), b.point(i));
        }
    }

    #[test]
    fn gen_synth_single_component_variance() {
        let (pts, labels) = gen_synth(1_000_000, 1, 0.0, 10.0, 0.01, 11).unwrap();
        assert!(labels.iter().all(|&l| l == 0));
        let n = pts.len() as f64;
        let mean: f64 = (0..pts.len()).map(|i| pts.point(i)[0]).sum::<f64>() / n;
        let var: f64 = (0..pts.len())
            .map(|i| (pts.point(i)[0] - mean).powi(2))
            .sum::<f64>()
            / n;
        assert!((0.0097..=0.0103).contains(&var), "sample var {var}");
    }

    #[test]
    fn gen_synth_component_means_track_draws() {
        let (pts, labels) = gen_synth(200_000, 5, 0.0, 10.0, 0.01, 3).unwrap();
        // per-component empirical mean should be within 3 sd of its mean
        let k = 5;
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for i in 0..pts.len() {
            let c = labels[i] as usize;
            sums[c] += pts.point(i)[0];
            counts[c] += 1;
        }
        // recover the drawn means: same stream layout as gen_synth
        let mut stream = RngStream::new(3, 0);
        let means: Vec<f64> = (0..k).map(|_| 10.0 * stream.uniform()).collect();
        for c in 0..k {
            let emp = sums[c] / counts[c] as f64;
            let tol = 3.0 * (0.01f64).sqrt() / (counts[c] as f64).sqrt();
            assert!(
                (emp - means[c]).abs() < tol,
                "component {c}: emp {emp} vs drawn {}",
                means[c]
            );
        }
    }

    #[test]
    fn gen_synth_rejects_bad_args() {
        assert!(gen_synth(1, 2, 0.0, 1.0, 0.1, 0).is_err());
        assert!(gen_synth(5, 0, 0.0, 1.0, 0.1, 0).is_err());
        assert!(gen_synth(5, 2, 1.0, 0.0, 0.1, 0).is_err());
        assert!(gen_synth(5, 2, 0.0, 1.0, 0.0, 0).is_err());
    }

    #[test]
    fn points_csv_roundtrip() {
        let pts = PointSet::new(vec![1.5, -2.0, 0.25, 3.0], 2).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_points_csv(f.path(), &pts).unwrap();
        let back = read_points_csv(f.path()).unwrap();
        assert_eq!(back.dims(), 2);
        assert_eq!(back.len(), 2);
        assert_eq!(back.point(0), pts.point(0));
        assert_eq!(back.point(1), pts.point(1));
    }

    #[test]
    fn points_csv_header_and_crlf() {
        let f = tmp("x,y\r\n1.0,2.0\r\n3.0,4.0\r\n");
        let pts = read_points_csv(f.path()).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts.point(1), &[3.0, 4.0]);
    }

    #[test]
    fn points_csv_bad_line_numbered() {
        let f = tmp("1.0\n2.0\nnope\n");
        match read_points_csv(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn points_csv_empty_is_no_data() {
        let f = tmp("");
        match read_points_csv(f.path()) {
            Err(Error::Domain(msg)) => assert!(msg.contains("no data")),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn points_csv_ragged_rows_error() {
        let f = tmp("1.0,2.0\n3.0\n");
        match read_points_csv(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn labels_roundtrip() {
        let f = tempfile::NamedTempFile::new().unwrap();
        write_labels(f.path(), &[3, -1, 0, 3]).unwrap();
        assert_eq!(read_labels(f.path()).unwrap(), vec![3, -1, 0, 3]);
    }

    #[test]
    fn bow_parse_example() {
        let f = tmp("2\n3\n2\n1 1 2\n2 3 1\n");
        let c = read_bow(f.path()).unwrap();
        assert_eq!(c.num_docs(), 2);
        assert_eq!(c.vocab_size(), 3);
        assert_eq!(c.token_total(), 3);
        assert_eq!(c.doc(0), &[(0, 2)]);
        assert_eq!(c.doc(1), &[(2, 1)]);
    }

    #[test]
    fn bow_word_out_of_range() {
        let f = tmp("1\n3\n1\n1 4 1\n");
        match read_bow(f.path()) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 4);
                assert!(msg.contains("wordID"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bow_roundtrip_exact() {
        let f = tmp("3\n5\n4\n1 1 2\n1 5 1\n2 2 7\n3 4 1\n");
        let c = read_bow(f.path()).unwrap();
        let g = tempfile::NamedTempFile::new().unwrap();
        write_bow(g.path(), &c).unwrap();
        let back = read_bow(g.path()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn bow_nnz_mismatch() {
        let f = tmp("1\n3\n2\n1 1 1\n");
        assert!(read_bow(f.path()).is_err());
    }

    #[test]
    fn corpus_split_last_fraction() {
        let docs: Vec<Vec<(u32, u32)>> = (0..10).map(|i| vec![(i as u32 % 3, 1)]).collect();
        let c = Corpus::new(docs, 3).unwrap();
        let (train, test) = c.split_tail(0.1).unwrap();
        assert_eq!(train.num_docs(), 9);
        assert_eq!(test.num_docs(), 1);
        assert_eq!(test.doc(0), c.doc(9));
        assert_eq!(train.vocab_size(), 3);
    }

    #[test]
    fn doc_tokens_expand_counts() {
        let c = Corpus::new(vec![vec![(1, 2), (0, 1)]], 2).unwrap();
        assert_eq!(c.doc_tokens(0), vec![1, 1, 0]);
    }

    #[test]
    fn pointset_rejects_nonfinite() {
        assert!(PointSet::from_1d(vec![1.0, f64::NAN]).is_err());
        assert!(PointSet::new(vec![1.0, 2.0, 3.0], 2).is_err());
    }

    #[test]
    fn labels_attach_length_check() {
        let mut pts = PointSet::from_1d(vec![1.0, 2.0]).unwrap();
        assert!(pts.attach_labels(vec![1]).is_err());
        assert!(pts.attach_labels(vec![1, 2]).is_ok());
        assert_eq!(pts.labels().unwrap(), &vec![1, 2]);
    }
}
