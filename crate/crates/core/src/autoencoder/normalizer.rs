use crate::dataset::FeatureRecord;
use crate::error::{Error, Result};

/// Per-slot min-max scaling fitted on the training third.
///
/// Values outside the fitted range are clipped into `[0, 1]`; constant slots
/// map to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    min: Vec<f64>,
    max: Vec<f64>,
}

impl Normalizer {
    pub fn from_bounds(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() {
            return Err(Error::Contract(format!(
                "normalizer bounds differ in length ({} vs {})",
                min.len(),
                max.len()
            )));
        }
        if let Some(i) = (0..min.len()).find(|&i| min[i].partial_cmp(&max[i]).is_none_or(|o| o.is_gt())) {
            return Err(Error::Contract(format!(
                "normalizer slot {i} has min {} > max {}",
                min[i], max[i]
            )));
        }
        Ok(Normalizer { min, max })
    }

    pub fn min(&self) -> &[f64] {
        &self.min
    }

    pub fn max(&self) -> &[f64] {
        &self.max
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn transform_into(&self, x: &[f64], out: &mut Vec<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Contract(format!(
                "normalizer expects {} features, got {}",
                self.dim(),
                x.len()
            )));
        }
        out.clear();
        out.extend(x.iter().zip(self.min.iter().zip(&self.max)).map(|(&v, (&lo, &hi))| {
            if hi > lo {
                ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
            } else {
                0.0
            }
        }));
        Ok(())
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(x.len());
        self.transform_into(x, &mut out)?;
        Ok(out)
    }

    pub fn transform_all(&self, records: &[FeatureRecord]) -> Result<Vec<Vec<f64>>> {
        records.iter().map(|r| self.transform(r.features())).collect()
    }
}

pub fn fit_normalizer(trn: &[FeatureRecord]) -> Result<Normalizer> {
    let first = trn
        .first()
        .ok_or_else(|| Error::InsufficientData("cannot fit a normalizer on zero records".into()))?;
    let mut min = first.features().to_vec();
    let mut max = min.clone();
    for r in &trn[1..] {
        for (i, &v) in r.features().iter().enumerate() {
            min[i] = min[i].min(v);
            max[i] = max[i].max(v);
        }
    }
    Normalizer::from_bounds(min, max)
}
