use std::cmp::Ordering;
use std::io::{Read, Write};
use std::ops::Range;

use super::OrdregError;

/// Ordered response labels of the study: too small, fits, too large.
pub const DEFAULT_LABELS: [i64; 3] = [-1, 0, 1];

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub subject: String,
    /// Category index `0..J` into the dataset's label list.
    pub response: usize,
    pub covariates: Vec<f64>,
    pub z: Vec<f64>,
}

fn cmp_f64s(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

fn canonical_order(a: &Observation, b: &Observation) -> Ordering {
    a.subject
        .cmp(&b.subject)
        .then_with(|| cmp_f64s(&a.covariates, &b.covariates))
        .then(a.response.cmp(&b.response))
        .then_with(|| cmp_f64s(&a.z, &b.z))
}

/// Observations kept in canonical order (subject, covariates, response,
/// features), so fits do not depend on input row order.
#[derive(Debug, Clone, PartialEq)]
pub struct OrdinalDataset {
    labels: Vec<i64>,
    covariate_names: Vec<String>,
    r: usize,
    rows: Vec<Observation>,
}

impl OrdinalDataset {
    pub fn new(
        labels: Vec<i64>,
        covariate_names: Vec<String>,
        r: usize,
        mut rows: Vec<Observation>,
    ) -> Result<Self, OrdregError> {
        if labels.len() < 2 {
            return Err(OrdregError::TooFewCategories);
        }
        if labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(OrdregError::InvalidParameter(
                "category labels must be strictly increasing".into(),
            ));
        }
        let m = covariate_names.len();
        for (i, row) in rows.iter().enumerate() {
            if row.response >= labels.len() {
                return Err(OrdregError::Dimension(format!(
                    "row {i}: category index {} out of range",
                    row.response
                )));
            }
            if row.covariates.len() != m {
                return Err(OrdregError::Dimension(format!(
                    "row {i}: {} covariates, expected {m}",
                    row.covariates.len()
                )));
            }
            if row.z.len() != r {
                return Err(OrdregError::Dimension(format!(
                    "row {i}: feature vector of length {}, expected {r}",
                    row.z.len()
                )));
            }
            if row.covariates.iter().chain(&row.z).any(|v| !v.is_finite()) {
                return Err(OrdregError::Dimension(format!("row {i}: non-finite value")));
            }
        }
        rows.sort_by(canonical_order);
        Ok(Self {
            labels,
            covariate_names,
            r,
            rows,
        })
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    /// Category count J.
    pub fn j(&self) -> usize {
        self.labels.len()
    }

    /// Feature length r.
    pub fn r(&self) -> usize {
        self.r
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn rows(&self) -> &[Observation] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn label_index(&self, label: i64) -> Result<usize, OrdregError> {
        self.labels
            .iter()
            .position(|&l| l == label)
            .ok_or(OrdregError::UnknownLabel(label))
    }

    pub fn category_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.j()];
        for row in &self.rows {
            counts[row.response] += 1;
        }
        counts
    }

    /// Labels never observed (their thresholds are unidentified).
    pub fn missing_categories(&self) -> Vec<i64> {
        self.category_counts()
            .iter()
            .zip(&self.labels)
            .filter(|(c, _)| **c == 0)
            .map(|(_, l)| *l)
            .collect()
    }

    /// Contiguous row ranges per subject, in subject order.
    pub fn subject_ranges(&self) -> Vec<(String, Range<usize>)> {
        let mut out: Vec<(String, Range<usize>)> = Vec::new();
        for (i, row) in self.rows.iter().enumerate() {
            match out.last_mut() {
                Some((s, range)) if *s == row.subject => range.end = i + 1,
                _ => out.push((row.subject.clone(), i..i + 1)),
            }
        }
        out
    }

    pub fn subjects(&self) -> Vec<String> {
        self.subject_ranges().into_iter().map(|(s, _)| s).collect()
    }

    /// Rows whose subject satisfies `keep`.
    pub fn filter_subjects(&self, keep: impl Fn(&str) -> bool) -> Self {
        Self {
            labels: self.labels.clone(),
            covariate_names: self.covariate_names.clone(),
            r: self.r,
            rows: self
                .rows
                .iter()
                .filter(|r| keep(&r.subject))
                .cloned()
                .collect(),
        }
    }

    /// Write as a comma-separated table with header
    /// `subject,response,<covariates…>,z_1..z_r`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), OrdregError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["subject".to_string(), "response".to_string()];
        header.extend(self.covariate_names.iter().cloned());
        header.extend((1..=self.r).map(|l| format!("z_{l}")));
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.subject.clone(), self.labels[row.response].to_string()];
            rec.extend(row.covariates.iter().map(|v| v.to_string()));
            rec.extend(row.z.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }

    /// Read a table written by [`OrdinalDataset::write_csv`]. Columns after
    /// `response` up to the first `z_1` are covariates.
    pub fn read_csv<R: Read>(input: R, labels: Vec<i64>) -> Result<Self, OrdregError> {
        let mut rdr = csv::Reader::from_reader(input);
        let header: Vec<String> = rdr
            .headers()?
            .iter()
            .map(|s| s.trim().to_string())
            .collect();
        if header.len() < 2 || header[0] != "subject" || header[1] != "response" {
            return Err(OrdregError::Table(
                "header must start with `subject,response`".into(),
            ));
        }
        let z_start = header
            .iter()
            .position(|h| h.starts_with("z_"))
            .unwrap_or(header.len());
        let covariate_names = header[2..z_start].to_vec();
        let r = header.len() - z_start;
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let num = |s: &str| -> Result<f64, OrdregError> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| OrdregError::Table(format!("line {line}: bad number `{s}`")))
            };
            let label: i64 = rec[1].trim().parse().map_err(|_| {
                OrdregError::Table(format!("line {line}: bad response `{}`", &rec[1]))
            })?;
            let response = labels
                .iter()
                .position(|&l| l == label)
                .ok_or(OrdregError::UnknownLabel(label))?;
            rows.push(Observation {
                subject: rec[0].trim().to_string(),
                response,
                covariates: (2..z_start)
                    .map(|c| num(&rec[c]))
                    .collect::<Result<_, _>>()?,
                z: (z_start..header.len())
                    .map(|c| num(&rec[c]))
                    .collect::<Result<_, _>>()?,
            });
        }
        Self::new(labels, covariate_names, r, rows)
    }
}
