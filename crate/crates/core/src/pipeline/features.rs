use std::collections::{BTreeMap, HashSet};

use super::PipelineError;
use crate::bases::BasisSet;
use crate::ordreg::{Observation, OrdinalDataset};
use crate::rkhs::CurrentRepr;

/// Join a covariate table (features ignored) with basis coefficients of each
/// subject's current. Every row of a subject shares one coefficient vector.
pub fn assemble_features(
    currents: &BTreeMap<String, CurrentRepr>,
    basis: &BasisSet,
    table: &OrdinalDataset,
) -> Result<OrdinalDataset, PipelineError> {
    let mut seen: HashSet<(&str, Vec<u64>)> = HashSet::new();
    let mut cache: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut rows = Vec::with_capacity(table.len());
    for row in table.rows() {
        let key: Vec<u64> = row.covariates.iter().map(|x| x.to_bits()).collect();
        if !seen.insert((row.subject.as_str(), key)) {
            return Err(PipelineError::Data(format!(
                "duplicate row for subject `{}` with covariates {:?}",
                row.subject, row.covariates
            )));
        }
        let z = match cache.get(row.subject.as_str()) {
            Some(z) => z.clone(),
            None => {
                let repr = currents.get(&row.subject).ok_or_else(|| {
                    PipelineError::Data(format!("no current for subject `{}`", row.subject))
                })?;
                let z = basis.coefficients(repr)?.values;
                cache.insert(&row.subject, z.clone());
                z
            }
        };
        rows.push(Observation {
            subject: row.subject.clone(),
            response: row.response,
            covariates: row.covariates.clone(),
            z,
        });
    }
    Ok(OrdinalDataset::new(
        table.labels().to_vec(),
        table.covariate_names().to_vec(),
        basis.r(),
        rows,
    )?)
}

/// The covariate table alone: same rows with the feature columns dropped.
pub(crate) fn strip_features(data: &OrdinalDataset) -> Result<OrdinalDataset, PipelineError> {
    let rows = data
        .rows()
        .iter()
        .map(|o| Observation {
            z: Vec::new(),
            ..o.clone()
        })
        .collect();
    Ok(OrdinalDataset::new(
        data.labels().to_vec(),
        data.covariate_names().to_vec(),
        0,
        rows,
    )?)
}
