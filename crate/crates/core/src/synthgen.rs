//! Synthetic questionnaire corpora with planted class structure.
//!
//! A corpus is a mixture of response profiles. Each profile owns a
//! categorical distribution per question and a recidivism rate; a case draws
//! its profile, then its answers, then a Poisson (or negative-binomial)
//! recidivism count. Generation is chunked, with every chunk seeded from
//! `(seed, chunk index)`, so the corpus does not depend on the thread count.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::{Gamma, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::ViogenScoring;
use crate::dataset::{CaseRecord, QuestionnaireSchema};
use crate::error::{Error, Result};
use crate::seeds;

const CHUNK: usize = 1024;

/// Class proportions of the five-class assessment used by the demo scoring,
/// in percent. They add up to slightly more than 100 and are normalized
/// before use.
pub const REFERENCE_CLASS_PERCENT: [f64; 5] = [49.0, 41.0, 10.0, 0.7, 0.01];

/// One mixture component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub weight: f64,
    pub recidivism_rate: f64,
    /// Option probabilities per question, in schema option order. Questions
    /// not listed are answered uniformly.
    #[serde(default)]
    pub responses: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub n_cases: usize,
    pub schema: QuestionnaireSchema,
    pub profiles: Vec<Profile>,
    pub missing_rate: f64,
    pub seed: u64,
    /// Negative-binomial size parameter; `None` gives Poisson counts.
    pub dispersion: Option<f64>,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_cases == 0 {
            return bad("n_cases must be positive".into());
        }
        if self.profiles.is_empty() {
            return bad("at least one profile is required".into());
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad(format!("missing_rate must lie in [0, 1), got {}", self.missing_rate));
        }
        if let Some(r) = self.dispersion {
            if !(r.is_finite() && r > 0.0) {
                return bad(format!("dispersion must be positive and finite, got {r}"));
            }
        }
        let mut total = 0.0;
        for (i, p) in self.profiles.iter().enumerate() {
            if !(p.weight.is_finite() && p.weight > 0.0) {
                return bad(format!("profile {i}: mixture weight must be positive"));
            }
            if !(p.recidivism_rate.is_finite() && p.recidivism_rate >= 0.0) {
                return bad(format!("profile {i}: recidivism rate must be finite and >= 0"));
            }
            total += p.weight;
            for (qid, probs) in &p.responses {
                let Some(q) = self.schema.position(qid).map(|k| &self.schema.questions()[k]) else {
                    return bad(format!("profile {i}: unknown question '{qid}'"));
                };
                if probs.len() != q.options.len() {
                    return bad(format!(
                        "profile {i}: question '{qid}' has {} options but {} probabilities",
                        q.options.len(),
                        probs.len()
                    ));
                }
                if probs.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || probs.iter().sum::<f64>() <= 0.0 {
                    return bad(format!("profile {i}: question '{qid}' has invalid probabilities"));
                }
            }
        }
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("mixture weights sum to {total}, expected 1"));
        }
        Ok(())
    }
}

/// Per-profile sampling tables built once per corpus.
struct Sampler {
    questions: Vec<(String, Vec<String>, bool)>,
    tables: Vec<Vec<WeightedIndex<f64>>>,
    cumulative: Vec<f64>,
    rates: Vec<f64>,
    missing_rate: f64,
    dispersion: Option<f64>,
}

impl Sampler {
    fn new(cfg: &GeneratorConfig) -> Result<Self> {
        let questions: Vec<_> = cfg
            .schema
            .questions()
            .iter()
            .map(|q| (q.id.clone(), q.options.clone(), q.allows_missing))
            .collect();
        let mut tables = Vec::with_capacity(cfg.profiles.len());
        for p in &cfg.profiles {
            let mut per_q = Vec::with_capacity(questions.len());
            for (id, options, _) in &questions {
                let probs = p
                    .responses
                    .get(id)
                    .cloned()
                    .unwrap_or_else(|| vec![1.0; options.len()]);
                per_q.push(WeightedIndex::new(probs).map_err(|e| Error::Config(format!("question '{id}': {e}")))?);
            }
            tables.push(per_q);
        }
        let total: f64 = cfg.profiles.iter().map(|p| p.weight).sum();
        let cumulative = cfg
            .profiles
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p.weight / total;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            questions,
            tables,
            cumulative,
            rates: cfg.profiles.iter().map(|p| p.recidivism_rate).collect(),
            missing_rate: cfg.missing_rate,
            dispersion: cfg.dispersion,
        })
    }

    fn count<R: Rng>(&self, rate: f64, rng: &mut R) -> u32 {
        let lambda = match self.dispersion {
            Some(r) if rate > 0.0 => Gamma::new(r, rate / r).expect("valid gamma").sample(rng),
            _ => rate,
        };
        if lambda <= 0.0 {
            return 0;
        }
        let draw: f64 = Poisson::new(lambda).expect("positive rate").sample(rng);
        draw.min(u32::MAX as f64) as u32
    }

    fn case<R: Rng>(&self, index: usize, rng: &mut R) -> (CaseRecord, usize) {
        let u: f64 = rng.gen();
        let profile = self
            .cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.cumulative.len() - 1);
        let mut responses = BTreeMap::new();
        for ((id, options, allows_missing), table) in self.questions.iter().zip(&self.tables[profile]) {
            let missing = *allows_missing && self.missing_rate > 0.0 && rng.gen_bool(self.missing_rate);
            let answer = table.sample(rng);
            let value = (!missing).then(|| options[answer].clone());
            responses.insert(id.clone(), value);
        }
        let record = CaseRecord {
            case_id: format!("case{index:06}"),
            responses,
            recidivism_count: self.count(self.rates[profile], rng),
            viogen_score: None,
        };
        (record, profile)
    }
}

/// Draws the corpus; also returns the profile index of every case.
pub fn generate_with_profiles(cfg: &GeneratorConfig) -> Result<(Vec<CaseRecord>, Vec<usize>)> {
    cfg.validate()?;
    let sampler = Sampler::new(cfg)?;
    let n_chunks = cfg.n_cases.div_ceil(CHUNK);
    let chunks: Vec<Vec<(CaseRecord, usize)>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seeds::rng_for(cfg.seed, &[c as u64]);
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(cfg.n_cases);
            (lo..hi).map(|i| sampler.case(i, &mut rng)).collect()
        })
        .collect();
    Ok(chunks.into_iter().flatten().unzip())
}

pub fn generate(cfg: &GeneratorConfig) -> Result<Vec<CaseRecord>> {
    generate_with_profiles(cfg).map(|(records, _)| records)
}

/// Fills `viogen_score` from the weighted sum of each case's answers.
pub fn attach_viogen_scores(
    records: &[CaseRecord],
    scoring: &ViogenScoring,
    schema: &QuestionnaireSchema,
) -> Result<Vec<CaseRecord>> {
    scoring.validate(schema)?;
    records
        .iter()
        .map(|r| {
            let class = scoring.classify_score(scoring.score(r)?);
            Ok(CaseRecord {
                viogen_score: Some(class.value()),
                ..r.clone()
            })
        })
        .collect()
}

/// Position of each option on a `[-1, 1]` risk axis: the first option is the
/// mildest, the last the most severe.
fn option_direction(n_options: usize) -> Vec<f64> {
    let half = (n_options as f64 - 1.0) / 2.0;
    (0..n_options).map(|i| (i as f64 - half) / half).collect()
}

/// Recipe for profiles that differ along a shared risk axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub weights: Vec<f64>,
    pub recidivism_rates: Vec<f64>,
    /// Position of each profile on the risk axis; evenly spaced over
    /// `[-1, 1]` when omitted.
    #[serde(default)]
    pub severities: Option<Vec<f64>>,
    /// Strength of the tilt between profiles. Zero makes them identical.
    pub divergence: f64,
    /// Share of questions whose answers depend on the profile.
    pub informative_fraction: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl PlantedSpec {
    fn severities(&self) -> Vec<f64> {
        match &self.severities {
            Some(s) => s.clone(),
            None if self.weights.len() == 1 => vec![0.0],
            None => {
                let k = self.weights.len() as f64 - 1.0;
                (0..self.weights.len()).map(|i| -1.0 + 2.0 * i as f64 / k).collect()
            }
        }
    }

    /// Questions that carry signal, chosen from the planted seed.
    pub fn informative_questions(&self, schema: &QuestionnaireSchema, seed: u64) -> Vec<bool> {
        let n = schema.questions().len();
        let m = ((self.informative_fraction * n as f64).round() as usize).min(n);
        let mut rng = seeds::rng_for(seed, &[seeds::key_of("informative")]);
        let mut mask = vec![false; n];
        for i in rand::seq::index::sample(&mut rng, n, m) {
            mask[i] = true;
        }
        mask
    }
}

/// Builds profiles whose answer distributions are tilted toward severe
/// options in proportion to `divergence * severity`.
pub fn planted_profiles(schema: &QuestionnaireSchema, spec: &PlantedSpec, seed: u64) -> Result<Vec<Profile>> {
    let k = spec.weights.len();
    let severities = spec.severities();
    if k == 0 || spec.recidivism_rates.len() != k || severities.len() != k {
        return Err(Error::Config(
            "planted profiles need matching numbers of weights, rates and severities".into(),
        ));
    }
    if !(spec.divergence.is_finite() && spec.divergence >= 0.0) {
        return Err(Error::Config("divergence must be finite and >= 0".into()));
    }
    if !(0.0..=1.0).contains(&spec.informative_fraction) {
        return Err(Error::Config("informative_fraction must lie in [0, 1]".into()));
    }
    let informative = spec.informative_questions(schema, seed);
    let mut rng = seeds::rng_for(seed, &[seeds::key_of("base")]);
    let mut profiles: Vec<Profile> = (0..k)
        .map(|i| Profile {
            weight: spec.weights[i],
            recidivism_rate: spec.recidivism_rates[i],
            responses: BTreeMap::new(),
        })
        .collect();
    for (qi, q) in schema.questions().iter().enumerate() {
        let base: Vec<f64> = (0..q.options.len()).map(|_| rng.gen_range(0.5..1.5)).collect();
        let dir = option_direction(q.options.len());
        for (p, s) in profiles.iter_mut().zip(&severities) {
            let tilt = if informative[qi] { spec.divergence * s } else { 0.0 };
            let raw: Vec<f64> = base.iter().zip(&dir).map(|(b, d)| b * (tilt * d).exp()).collect();
            let total: f64 = raw.iter().sum();
            p.responses.insert(q.id.clone(), raw.iter().map(|v| v / total).collect());
        }
    }
    Ok(profiles)
}

/// Recipe for a noisy linear assessment score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringSpec {
    /// Standard deviation of the Gaussian noise added to every weight.
    pub noise: f64,
    /// Target share of each of the five classes.
    #[serde(default = "default_proportions")]
    pub proportions: [f64; 5],
}

fn default_proportions() -> [f64; 5] {
    REFERENCE_CLASS_PERCENT
}

/// Weights that follow the planted risk axis on informative questions, plus
/// noise everywhere. Thresholds are left at zero; see [`quantile_thresholds`].
pub fn planted_weights(
    schema: &QuestionnaireSchema,
    informative: &[bool],
    noise: f64,
    seed: u64,
) -> BTreeMap<String, BTreeMap<String, f64>> {
    let mut rng = seeds::rng_for(seed, &[seeds::key_of("weights")]);
    schema
        .questions()
        .iter()
        .zip(informative)
        .map(|(q, &inf)| {
            let dir = option_direction(q.options.len());
            let per_option = q
                .options
                .iter()
                .zip(dir)
                .map(|(o, d)| {
                    let eps: f64 = rng.sample(StandardNormal);
                    (o.clone(), if inf { d } else { 0.0 } + noise * eps)
                })
                .collect();
            (q.id.clone(), per_option)
        })
        .collect()
}

/// Four strictly ascending cut points so that the empirical class shares of
/// `scores` approximate `proportions` (normalized). Ties in the scores make
/// the fit approximate.
pub fn quantile_thresholds(scores: &[f64], proportions: &[f64; 5]) -> Result<[f64; 4]> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("no scores to place thresholds on".into()));
    }
    if proportions.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::Config("class proportions must be finite and >= 0".into()));
    }
    let total: f64 = proportions.iter().sum();
    if total <= 0.0 {
        return Err(Error::Config("class proportions sum to zero".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut out = [0.0; 4];
    let mut cum = 0.0;
    for i in 0..4 {
        cum += proportions[i] / total;
        let pos = ((cum * n as f64).round() as usize).clamp(1, n) - 1;
        let mut t = sorted[pos];
        if i > 0 && t <= out[i - 1] {
            t = out[i - 1].next_up();
        }
        out[i] = t;
    }
    Ok(out)
}

/// Generator settings as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub n_cases: usize,
    #[serde(default)]
    pub missing_rate: f64,
    pub seed: u64,
    #[serde(default)]
    pub dispersion: Option<f64>,
    /// Explicit profiles; ignored when `planted` is given.
    #[serde(default)]
    pub profiles: Vec<Profile>,
    #[serde(default)]
    pub planted: Option<PlantedSpec>,
    /// When present, every case gets a five-class assessment score.
    #[serde(default)]
    pub scoring: Option<ScoringSpec>,
}

/// A generated corpus with the scoring used for its assessment classes.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub records: Vec<CaseRecord>,
    pub profiles: Vec<usize>,
    pub scoring: Option<ViogenScoring>,
}

impl GeneratorSpec {
    /// Three planted profiles with recidivism rates 0, 1.5 and 6, 20,000
    /// cases and a noisy assessment score.
    pub fn demo() -> Self {
        Self {
            n_cases: 20_000,
            missing_rate: 0.05,
            seed: 20_220_901,
            dispersion: None,
            profiles: Vec::new(),
            planted: Some(PlantedSpec {
                weights: vec![0.5, 0.35, 0.15],
                recidivism_rates: vec![0.0, 1.5, 6.0],
                severities: None,
                divergence: 0.3,
                informative_fraction: 0.4,
                seed: None,
            }),
            scoring: Some(ScoringSpec {
                noise: 0.6,
                proportions: REFERENCE_CLASS_PERCENT,
            }),
        }
    }

    fn planted_seed(&self) -> u64 {
        self.planted
            .as_ref()
            .and_then(|p| p.seed)
            .unwrap_or_else(|| seeds::derive(self.seed, &[seeds::key_of("planted")]))
    }

    pub fn to_config(&self, schema: &QuestionnaireSchema) -> Result<GeneratorConfig> {
        let profiles = match &self.planted {
            Some(p) => planted_profiles(schema, p, self.planted_seed())?,
            None => self.profiles.clone(),
        };
        Ok(GeneratorConfig {
            n_cases: self.n_cases,
            schema: schema.clone(),
            profiles,
            missing_rate: self.missing_rate,
            seed: self.seed,
            dispersion: self.dispersion,
        })
    }

    /// Generates the cases and, when a scoring recipe is present, attaches
    /// assessment classes with thresholds fitted to the target proportions.
    pub fn build(&self, schema: &QuestionnaireSchema) -> Result<Corpus> {
        let cfg = self.to_config(schema)?;
        let (records, profiles) = generate_with_profiles(&cfg)?;
        let Some(spec) = &self.scoring else {
            return Ok(Corpus { records, profiles, scoring: None });
        };
        if !(spec.noise.is_finite() && spec.noise >= 0.0) {
            return Err(Error::Config("scoring noise must be finite and >= 0".into()));
        }
        let informative = match &self.planted {
            Some(p) => p.informative_questions(schema, self.planted_seed()),
            None => vec![true; schema.questions().len()],
        };
        let weights = planted_weights(schema, &informative, spec.noise, self.planted_seed());
        let mut scoring = ViogenScoring {
            weights,
            thresholds: [0.0; 4],
        };
        let scores = records.iter().map(|r| scoring.score(r)).collect::<Result<Vec<_>>>()?;
        scoring.thresholds = quantile_thresholds(&scores, &spec.proportions)?;
        let records = attach_viogen_scores(&records, &scoring, schema)?;
        Ok(Corpus {
            records,
            profiles,
            scoring: Some(scoring),
        })
    }
}
