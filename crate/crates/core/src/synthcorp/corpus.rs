use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::body::{BodyParams, SHAPE_MODES};
use super::SynthError;
use crate::hashing::derive_seed;

/// Scalar covariates attached to every observation, in this order.
pub const COVARIATE_NAMES: [&str; 3] = ["shirt.size", "sex", "age"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub subjects: usize,
    pub master_seed: u64,
    pub resolution: u32,
    /// Nominal garment sizes, increasing.
    pub sizes: Vec<f64>,
    /// Relative frequency of subjects with 1, 2 and 3 evaluations.
    pub evaluation_weights: [f64; 3],
    pub age_min: f64,
    pub age_max: f64,
    pub jitter: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            subjects: 60,
            master_seed: 20240601,
            resolution: 2,
            sizes: vec![3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 12.0],
            evaluation_weights: [9.0, 24.0, 45.0],
            age_min: 3.0,
            age_max: 12.0,
            jitter: 0.02,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidParams(m));
        if self.subjects == 0 {
            return bad("subjects must be positive".into());
        }
        if self.sizes.len() < 3 || self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return bad("sizes must hold at least 3 increasing values".into());
        }
        if self.evaluation_weights.iter().any(|w| !(*w >= 0.0))
            || self.evaluation_weights.iter().sum::<f64>() <= 0.0
        {
            return bad("evaluation_weights must be non-negative and not all zero".into());
        }
        if !(self.age_min > 0.0 && self.age_max > self.age_min) {
            return bad(format!(
                "age range [{}, {}] is invalid",
                self.age_min, self.age_max
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    pub sex: u8,
    pub age: f64,
    /// Sizes tried on, increasing.
    pub sizes: Vec<f64>,
    pub seed: u64,
    pub body: BodyParams,
}

impl SubjectRecord {
    /// Covariate rows `[shirt.size, sex, age]`, one per evaluated size.
    pub fn covariate_rows(&self) -> Vec<Vec<f64>> {
        self.sizes
            .iter()
            .map(|&s| vec![s, self.sex as f64, self.age])
            .collect()
    }

    pub fn mesh_path(&self) -> String {
        format!("meshes/{}.off", self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub config: CorpusConfig,
    pub subjects: Vec<SubjectRecord>,
}

#[derive(Serialize)]
struct ManifestEntry<'a> {
    id: &'a str,
    mesh: String,
    sex: u8,
    age: f64,
    sizes: &'a [f64],
    seed: u64,
    body: &'a BodyParams,
}

#[derive(Serialize)]
struct Manifest<'a> {
    master_seed: u64,
    config: &'a CorpusConfig,
    subjects: Vec<ManifestEntry<'a>>,
}

impl Corpus {
    /// Manifest listing per-subject mesh path, covariates and seeds.
    pub fn manifest_json(&self) -> String {
        let m = Manifest {
            master_seed: self.config.master_seed,
            config: &self.config,
            subjects: self
                .subjects
                .iter()
                .map(|s| ManifestEntry {
                    id: &s.id,
                    mesh: s.mesh_path(),
                    sex: s.sex,
                    age: s.age,
                    sizes: &s.sizes,
                    seed: s.seed,
                    body: &s.body,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&m).expect("manifest serializes")
    }

    pub fn subject(&self, id: &str) -> Option<&SubjectRecord> {
        self.subjects.iter().find(|s| s.id == id)
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn subject(config: &CorpusConfig, k: usize) -> SubjectRecord {
    let seed = derive_seed(config.master_seed, "subject", k as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sex: u8 = rng.random_range(0..2);
    let age = rng.random_range(config.age_min..config.age_max);
    let height = 0.80 + 0.05 * age + 0.04 * normal(&mut rng);
    let girth = 0.32 + 0.012 * age + 0.02 * sex as f64 + 0.03 * normal(&mut rng);
    let mut shape = [0.0; SHAPE_MODES];
    let spread = [0.08, 0.05, 0.06, 0.04];
    for (c, s) in shape.iter_mut().zip(spread) {
        *c = (s * normal(&mut rng)).clamp(-0.15, 0.15);
    }
    shape[2] = (shape[2] + 0.04 * (sex as f64 - 0.5)).clamp(-0.15, 0.15);

    // sizes tried: a window of consecutive sizes around the best guess
    let w = config.evaluation_weights;
    let v: f64 = rng.random_range(0.0..w.iter().sum::<f64>());
    let n_eval = if v < w[0] {
        1
    } else if v < w[0] + w[1] {
        2
    } else {
        3
    };
    let sizes = &config.sizes;
    let best = (0..sizes.len())
        .min_by(|&a, &b| (sizes[a] - age).abs().total_cmp(&(sizes[b] - age).abs()))
        .expect("sizes are non-empty");
    let start = match n_eval {
        1 => best as isize,
        2 => best as isize - rng.random_range(0..2) as isize,
        _ => best as isize - 1,
    };
    let start = start.clamp(0, (sizes.len() - n_eval) as isize) as usize;
    let tried = sizes[start..start + n_eval].to_vec();

    SubjectRecord {
        id: format!("c{k:03}"),
        sex,
        age,
        sizes: tried,
        seed,
        body: BodyParams {
            height,
            girth,
            shape,
            jitter: config.jitter,
            sex,
            age,
            resolution: config.resolution,
            seed: derive_seed(config.master_seed, "mesh", k as u64),
        },
    }
}

/// Subject records of a synthetic corpus (meshes are produced on demand by
/// [`super::generate_body`]).
pub fn generate_corpus(config: &CorpusConfig) -> Result<Corpus, SynthError> {
    config.validate()?;
    let subjects: Vec<SubjectRecord> = (0..config.subjects).map(|k| subject(config, k)).collect();
    for s in &subjects {
        s.body.validate()?;
    }
    Ok(Corpus {
        config: config.clone(),
        subjects,
    })
}
