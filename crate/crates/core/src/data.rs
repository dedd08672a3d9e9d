//! Source-level observations, dataset validation, CSV ingestion and outcome
//! transformations.
//!
//! A [`Dataset`] holds one [`SourceObservation`] per data source: the direct
//! estimate `y`, its estimated standard error `s` and, optionally, a row of
//! source-level covariates. When covariates are present the row stored on each
//! observation is the full design row, including the leading intercept entry.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One source's summary measure and its uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceObservation {
    pub source_id: String,
    pub y: f64,
    pub s: f64,
    /// Design row (including the intercept entry when one is used).
    pub x: Option<Vec<f64>>,
}

impl SourceObservation {
    pub fn new(source_id: impl Into<String>, y: f64, s: f64) -> Self {
        Self {
            source_id: source_id.into(),
            y,
            s,
            x: None,
        }
    }

    pub fn with_covariates(mut self, x: Vec<f64>) -> Self {
        self.x = Some(x);
        self
    }

    pub fn log_s(&self) -> f64 {
        self.s.ln()
    }

    /// Design row used by the regression forms; intercept-only when the
    /// observation carries no covariates.
    pub fn design_row(&self) -> &[f64] {
        const INTERCEPT: [f64; 1] = [1.0];
        match &self.x {
            Some(x) => x,
            None => &INTERCEPT,
        }
    }

    fn check(&self) -> Result<()> {
        let non_finite = |field: &str| Error::NonFiniteValue {
            source_id: self.source_id.clone(),
            field: field.to_string(),
        };
        if !self.y.is_finite() {
            return Err(non_finite("y"));
        }
        if !self.s.is_finite() {
            return Err(non_finite("s"));
        }
        if self.s <= 0.0 {
            return Err(Error::NonPositiveUncertainty(self.source_id.clone()));
        }
        if let Some(x) = &self.x {
            if let Some(j) = x.iter().position(|v| !v.is_finite()) {
                return Err(non_finite(&format!("x[{j}]")));
            }
        }
        Ok(())
    }
}

/// A validated collection of source observations sharing one covariate schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    observations: Vec<SourceObservation>,
    p: usize,
    intercept: bool,
}

impl Dataset {
    /// Builds a dataset, checking every per-observation invariant, id
    /// uniqueness and covariate dimensions. Size requirements for model fits
    /// are checked by [`validate`].
    pub fn new(observations: Vec<SourceObservation>) -> Result<Self> {
        let intercept = !observations.is_empty()
            && observations
                .iter()
                .all(|o| o.x.as_ref().is_some_and(|x| x.first() == Some(&1.0)));
        Self::with_intercept_flag(observations, intercept)
    }

    fn with_intercept_flag(observations: Vec<SourceObservation>, intercept: bool) -> Result<Self> {
        let p = observations
            .first()
            .and_then(|o| o.x.as_ref())
            .map_or(0, Vec::len);
        let mut seen = HashSet::with_capacity(observations.len());
        for obs in &observations {
            obs.check()?;
            let found = obs.x.as_ref().map_or(0, Vec::len);
            if found != p {
                return Err(Error::CovariateDimensionMismatch {
                    source_id: obs.source_id.clone(),
                    expected: p,
                    found,
                });
            }
            if !seen.insert(obs.source_id.as_str()) {
                return Err(Error::DuplicateSourceId(obs.source_id.clone()));
            }
        }
        Ok(Self {
            observations,
            p,
            intercept,
        })
    }

    /// Convenience constructor for covariate-free data.
    pub fn from_ys(y: &[f64], s: &[f64]) -> Result<Self> {
        assert_eq!(y.len(), s.len(), "y and s must have equal length");
        let obs = y
            .iter()
            .zip(s)
            .enumerate()
            .map(|(i, (&y, &s))| SourceObservation::new(format!("s{}", i + 1), y, s))
            .collect();
        Self::new(obs)
    }

    pub fn observations(&self) -> &[SourceObservation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Covariate count (zero when the dataset has no covariates).
    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of regression coefficients used by the models: `p`, or one
    /// (the population mean) without covariates.
    pub fn n_coefficients(&self) -> usize {
        self.p.max(1)
    }

    pub fn has_covariates(&self) -> bool {
        self.p > 0
    }

    /// Whether the first design column is an intercept added at ingestion.
    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    pub fn y(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.y).collect()
    }

    pub fn s(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.s).collect()
    }

    pub fn log_s(&self) -> Vec<f64> {
        self.observations.iter().map(SourceObservation::log_s).collect()
    }

    /// Design matrix rows (intercept-only when there are no covariates).
    pub fn design_rows(&self) -> Vec<&[f64]> {
        self.observations.iter().map(SourceObservation::design_row).collect()
    }

    /// Returns a copy with every `y` replaced by `f(i, y)`.
    pub fn map_y(&self, mut f: impl FnMut(usize, f64) -> f64) -> Result<Self> {
        let obs = self
            .observations
            .iter()
            .enumerate()
            .map(|(i, o)| SourceObservation {
                y: f(i, o.y),
                ..o.clone()
            })
            .collect();
        Self::with_intercept_flag(obs, self.intercept)
    }

    /// Returns the subset of observations at `indices` (repeats allowed) with
    /// ids made unique by suffixing the draw position.
    pub fn resample(&self, indices: &[usize]) -> Self {
        let observations = indices
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                let o = &self.observations[i];
                SourceObservation {
                    source_id: format!("{}#{k}", o.source_id),
                    ..o.clone()
                }
            })
            .collect();
        Self {
            observations,
            p: self.p,
            intercept: self.intercept,
        }
    }

    /// Checks that the dataset is large enough for a model fit: `n >= 2`, and
    /// `n >= p + 2` when covariates are present.
    pub fn require_fit_size(&self) -> Result<()> {
        let n = self.len();
        let required = if self.p > 0 { self.p + 2 } else { 2 };
        if n < required {
            return Err(Error::TooFewSources { required, found: n });
        }
        Ok(())
    }
}

/// Re-checks every dataset invariant, including the minimum size for fitting.
pub fn validate(dataset: &Dataset) -> Result<Dataset> {
    let checked = Dataset::with_intercept_flag(dataset.observations.clone(), dataset.intercept)?;
    checked.require_fit_size()?;
    Ok(checked)
}

/// Outcome transformation applied before combining.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformSpec {
    Identity,
    Log,
    Logit,
}

impl std::str::FromStr for TransformSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "identity" => Ok(Self::Identity),
            "log" => Ok(Self::Log),
            "logit" => Ok(Self::Logit),
            other => Err(format!("unknown transform `{other}`")),
        }
    }
}

/// Applies `g` to `y` and propagates the standard error with the delta method,
/// `s' = |g'(y)| s`, using `s` as the plug-in for the latent sd.
pub fn transform_outcome(obs: &SourceObservation, spec: TransformSpec) -> Result<SourceObservation> {
    let y = obs.y;
    let (y_new, slope) = match spec {
        TransformSpec::Identity => return Ok(obs.clone()),
        TransformSpec::Log => {
            if y <= 0.0 {
                return Err(Error::DomainViolation(obs.source_id.clone()));
            }
            (y.ln(), 1.0 / y)
        }
        TransformSpec::Logit => {
            if y <= 0.0 || y >= 1.0 {
                return Err(Error::DomainViolation(obs.source_id.clone()));
            }
            ((y / (1.0 - y)).ln(), 1.0 / (y * (1.0 - y)))
        }
    };
    Ok(SourceObservation {
        y: y_new,
        s: slope.abs() * obs.s,
        ..obs.clone()
    })
}

/// Applies [`transform_outcome`] to every observation.
pub fn transform_dataset(dataset: &Dataset, spec: TransformSpec) -> Result<Dataset> {
    let obs = dataset
        .observations()
        .iter()
        .map(|o| transform_outcome(o, spec))
        .collect::<Result<Vec<_>>>()?;
    Dataset::with_intercept_flag(obs, dataset.intercept)
}

/// Options for reading a dataset from CSV.
#[derive(Debug, Clone, Copy)]
pub struct CsvOptions {
    /// Prepend an intercept column of ones when covariate columns exist.
    pub add_intercept: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            add_intercept: true,
        }
    }
}

/// Reads a dataset with columns `source_id,y,s[,x1..xp]`.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    load_csv_with(path, CsvOptions::default())
}

pub fn load_csv_with(path: impl AsRef<Path>, options: CsvOptions) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, options)
}

/// Parses CSV text from any reader; see [`load_csv`].
pub fn read_csv<R: std::io::Read>(reader: R, options: CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::ParseError {
            line: 1,
            message: e.to_string(),
        })?
        .clone();

    let find = |name: &str| headers.iter().position(|h| h == name);
    let id_col = find("source_id").ok_or_else(|| Error::SchemaError("missing column `source_id`".into()))?;
    let y_col = find("y").ok_or_else(|| Error::SchemaError("missing column `y`".into()))?;
    let s_col = find("s").ok_or_else(|| Error::SchemaError("missing column `s`".into()))?;

    let mut x_cols: Vec<(usize, usize)> = Vec::new();
    for (idx, h) in headers.iter().enumerate() {
        if idx == id_col || idx == y_col || idx == s_col {
            continue;
        }
        match h.strip_prefix('x').and_then(|k| k.parse::<usize>().ok()) {
            Some(k) if k >= 1 => x_cols.push((k, idx)),
            _ => return Err(Error::SchemaError(format!("unexpected column `{h}`"))),
        }
    }
    x_cols.sort_unstable();
    for (expected, (k, _)) in (1..).zip(&x_cols) {
        if *k != expected {
            return Err(Error::SchemaError(format!(
                "covariate columns must be x1..xp without gaps (missing x{expected})"
            )));
        }
    }

    let mut observations = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::ParseError {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let num = |col: usize, name: &str| -> Result<f64> {
            let raw = record.get(col).unwrap_or("");
            raw.parse::<f64>().map_err(|_| Error::ParseError {
                line,
                message: format!("column `{name}`: cannot parse `{raw}` as a number"),
            })
        };
        let source_id = record.get(id_col).unwrap_or("").to_string();
        if source_id.is_empty() {
            return Err(Error::ParseError {
                line,
                message: "empty source_id".into(),
            });
        }
        let y = num(y_col, "y")?;
        let s = num(s_col, "s")?;
        let x = if x_cols.is_empty() {
            None
        } else {
            let mut row = Vec::with_capacity(x_cols.len() + 1);
            if options.add_intercept {
                row.push(1.0);
            }
            for (k, col) in &x_cols {
                row.push(num(*col, &format!("x{k}"))?);
            }
            Some(row)
        };
        observations.push(SourceObservation { source_id, y, s, x });
    }
    Dataset::with_intercept_flag(observations, options.add_intercept && !x_cols.is_empty())
}

/// Writes the dataset in the same schema [`load_csv`] reads. The automatic
/// intercept column is not written.
pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_csv(dataset, file)
}

pub fn write_csv<W: std::io::Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let skip = usize::from(dataset.has_intercept());
    let n_x = dataset.p().saturating_sub(skip);
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["source_id".to_string(), "y".into(), "s".into()];
    header.extend((1..=n_x).map(|k| format!("x{k}")));
    let io = |e: csv::Error| Error::Io(e.to_string());
    wtr.write_record(&header).map_err(io)?;
    for o in dataset.observations() {
        let mut rec = vec![o.source_id.clone(), o.y.to_string(), o.s.to_string()];
        if let Some(x) = &o.x {
            rec.extend(x[skip..].iter().map(f64::to_string));
        }
        wtr.write_record(&rec).map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(id: &str, y: f64, s: f64) -> SourceObservation {
        SourceObservation::new(id, y, s)
    }

    #[test]
    fn valid_dataset_passes_through() {
        let ds = Dataset::new(vec![obs("A", 1.0, 1.0), obs("B", 2.0, 2.0)]).unwrap();
        let checked = validate(&ds).unwrap();
        assert_eq!(checked, ds);
        assert_eq!(checked.p(), 0);
    }

    #[test]
    fn zero_uncertainty_is_rejected() {
        let err = Dataset::new(vec![obs("A", 1.0, 0.0)]).unwrap_err();
        assert_eq!(err, Error::NonPositiveUncertainty("A".into()));
    }

    #[test]
    fn mismatched_covariates_are_rejected() {
        let err = Dataset::new(vec![
            obs("A", 1.0, 1.0).with_covariates(vec![1.0, 0.0]),
            obs("B", 2.0, 1.0).with_covariates(vec![1.0]),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::CovariateDimensionMismatch { .. }));
    }

    #[test]
    fn duplicate_ids_and_non_finite_values() {
        let err = Dataset::new(vec![obs("A", 1.0, 1.0), obs("A", 2.0, 1.0)]).unwrap_err();
        assert_eq!(err, Error::DuplicateSourceId("A".into()));
        let err = Dataset::new(vec![obs("A", f64::NAN, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteValue { ref field, .. } if field == "y"));
    }

    #[test]
    fn fit_size_requirements() {
        let one = Dataset::new(vec![obs("A", 1.0, 1.0)]).unwrap();
        assert!(matches!(validate(&one), Err(Error::TooFewSources { required: 2, found: 1 })));
        let cov = Dataset::new(vec![
            obs("A", 1.0, 1.0).with_covariates(vec![1.0, 0.5]),
            obs("B", 2.0, 1.0).with_covariates(vec![1.0, 0.1]),
            obs("C", 2.0, 1.0).with_covariates(vec![1.0, 0.3]),
        ])
        .unwrap();
        assert!(matches!(validate(&cov), Err(Error::TooFewSources { required: 4, found: 3 })));
    }

    #[test]
    fn transform_examples() {
        let o = obs("A", 1.0, 0.5);
        assert_eq!(transform_outcome(&o, TransformSpec::Identity).unwrap(), o);
        let t = transform_outcome(&o, TransformSpec::Log).unwrap();
        assert_eq!((t.y, t.s), (0.0, 0.5));
        let t = transform_outcome(&obs("A", 0.5, 0.1), TransformSpec::Logit).unwrap();
        assert!(t.y.abs() < 1e-15);
        assert!((t.s - 0.4).abs() < 1e-12);
        assert_eq!(
            transform_outcome(&obs("B", 0.0, 0.1), TransformSpec::Log).unwrap_err(),
            Error::DomainViolation("B".into())
        );
        assert!(transform_outcome(&obs("B", 1.0, 0.1), TransformSpec::Logit).is_err());
    }

    #[test]
    fn csv_schema_variants() {
        let ds = read_csv("source_id,y,s\nA,1.5,0.2\nB,2e-1,1E1\n".as_bytes(), CsvOptions::default()).unwrap();
        assert_eq!((ds.len(), ds.p()), (2, 0));
        assert_eq!(ds.y(), vec![1.5, 0.2]);

        let text = "source_id,y,s,x1,x2\nA,1,1,0.5,1\nB,2,1,0.1,0\nC,3,2,-1,1\n";
        let ds = read_csv(text.as_bytes(), CsvOptions::default()).unwrap();
        assert_eq!((ds.len(), ds.p()), (3, 3));
        assert_eq!(ds.observations()[2].x.as_deref(), Some(&[1.0, -1.0, 1.0][..]));

        let no_int = read_csv(text.as_bytes(), CsvOptions { add_intercept: false }).unwrap();
        assert_eq!(no_int.p(), 2);
        assert!(!no_int.has_intercept());

        let err = read_csv("source_id,y\nA,1\n".as_bytes(), CsvOptions::default()).unwrap_err();
        assert!(matches!(err, Error::SchemaError(_)));
    }

    #[test]
    fn csv_parse_error_names_line() {
        let err = read_csv("source_id,y,s\nA,1,1\nB,oops,1\n".as_bytes(), CsvOptions::default()).unwrap_err();
        assert!(matches!(err, Error::ParseError { line: 3, .. }), "{err:?}");
    }
}
