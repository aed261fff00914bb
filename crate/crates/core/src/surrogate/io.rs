//! Bundle directory: `bundle.json` (spec, normalizations, group map, file
//! names), `rnn_<q>.bin` per network and `pca.bin` for kinds II/III.

use std::fs;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Preprocessing, SurrogateBundle, SurrogateSpec};
use crate::data::{Family, NormalizationSpec};
use crate::error::{Error, Result};
use crate::nn::RnnModel;
use crate::pca::PcaModel;

const BUNDLE_FORMAT: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleMeta {
    format: u32,
    spec: SurrogateSpec,
    d: usize,
    family: Family,
    group_map: Vec<Range<usize>>,
    untrained_groups: Vec<usize>,
    input_norm: NormalizationSpec,
    field_norm: NormalizationSpec,
    coef_norm: Option<NormalizationSpec>,
    coef_mean: Option<Vec<f64>>,
    pca_file: Option<String>,
    rnn_files: Vec<String>,
}

impl SurrogateBundle {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let prep = self.prep()?;
        fs::create_dir_all(dir)?;
        let rnn_files: Vec<String> = (0..self.rnns.len()).map(|q| format!("rnn_{q}.bin")).collect();
        for (m, f) in self.rnns.iter().zip(&rnn_files) {
            m.save(&dir.join(f))?;
        }
        let pca_file = match &prep.pca {
            Some(p) => {
                p.write(&dir.join("pca.bin"))?;
                Some("pca.bin".to_string())
            }
            None => None,
        };
        let meta = BundleMeta {
            format: BUNDLE_FORMAT,
            spec: self.spec.clone(),
            d: self.d,
            family: prep.family,
            group_map: self.group_map(),
            untrained_groups: (0..self.rnns.len()).filter(|&q| !self.is_trained(q)).collect(),
            input_norm: prep.input_norm.clone(),
            field_norm: prep.field_norm.clone(),
            coef_norm: prep.coef_norm.clone(),
            coef_mean: prep.coef_mean.clone(),
            pca_file,
            rnn_files,
        };
        fs::write(dir.join("bundle.json"), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: BundleMeta = serde_json::from_str(&fs::read_to_string(dir.join("bundle.json"))?)?;
        if meta.format != BUNDLE_FORMAT {
            return Err(Error::Format(format!("unsupported bundle format {}", meta.format)));
        }
        meta.spec.validate(meta.d)?;
        let rnns = meta.rnn_files.iter().map(|f| RnnModel::load(&dir.join(f))).collect::<Result<Vec<_>>>()?;
        if rnns.len() != meta.spec.n_models() {
            return Err(Error::Format(format!("bundle lists {} networks, spec needs {}", rnns.len(), meta.spec.n_models())));
        }
        let pca = meta.pca_file.as_ref().map(|f| PcaModel::read(&dir.join(f))).transpose()?;
        let prep = Preprocessing {
            family: meta.family,
            input_norm: meta.input_norm,
            field_norm: meta.field_norm,
            pca,
            coef_norm: meta.coef_norm,
            coef_mean: meta.coef_mean,
        };
        let bundle = SurrogateBundle { spec: meta.spec, d: meta.d, rnns, prep: Some(prep) };
        if bundle.group_map() != meta.group_map {
            return Err(Error::Format("group map does not match the networks".into()));
        }
        Ok(bundle)
    }
}
