//! Five-class weighted-score assessment and the rule systems that project it
//! onto the three risk labels.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{CaseRecord, FeatureMatrix, QuestionnaireSchema, RiskLabel};
use crate::error::{Error, Result};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum ViogenClass {
    NotAppreciated = 0,
    Low = 1,
    Medium = 2,
    High = 3,
    Extreme = 4,
}

impl ViogenClass {
    pub const ALL: [ViogenClass; 5] = [
        ViogenClass::NotAppreciated,
        ViogenClass::Low,
        ViogenClass::Medium,
        ViogenClass::High,
        ViogenClass::Extreme,
    ];

    pub fn from_score(value: u8) -> Option<Self> {
        Self::ALL.get(usize::from(value)).copied()
    }

    pub fn value(self) -> u8 {
        self as u8
    }
}

/// Monotone map from the five assessment classes onto the risk labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RuleSystemData")]
pub struct RuleSystem {
    name: String,
    mapping: [RiskLabel; 5],
}

#[derive(Deserialize)]
struct RuleSystemData {
    name: String,
    mapping: [RiskLabel; 5],
}

impl TryFrom<RuleSystemData> for RuleSystem {
    type Error = Error;

    fn try_from(d: RuleSystemData) -> Result<Self> {
        RuleSystem::new(d.name, d.mapping)
    }
}

impl RuleSystem {
    pub fn new(name: impl Into<String>, mapping: [RiskLabel; 5]) -> Result<Self> {
        let name = name.into();
        if mapping.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidInput(format!(
                "rule system '{name}' is not monotone in severity"
            )));
        }
        Ok(Self { name, mapping })
    }

    pub fn lax() -> Self {
        use RiskLabel::*;
        Self::new("lax", [No, No, Low, Low, High]).unwrap()
    }

    pub fn medium_lax() -> Self {
        use RiskLabel::*;
        Self::new("medium_lax", [No, Low, Low, Low, High]).unwrap()
    }

    pub fn medium_cautious() -> Self {
        use RiskLabel::*;
        Self::new("medium_cautious", [No, No, Low, High, High]).unwrap()
    }

    pub fn cautious() -> Self {
        use RiskLabel::*;
        Self::new("cautious", [No, Low, Low, High, High]).unwrap()
    }

    /// The four built-in systems, from lax to cautious.
    pub fn named() -> [RuleSystem; 4] {
        [
            Self::lax(),
            Self::medium_lax(),
            Self::medium_cautious(),
            Self::cautious(),
        ]
    }

    pub fn by_name(name: &str) -> Option<Self> {
        let key = name.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        Self::named().into_iter().find(|r| r.name == key)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn mapping(&self) -> &[RiskLabel; 5] {
        &self.mapping
    }

    pub fn apply(&self, class: ViogenClass) -> RiskLabel {
        self.mapping[class as usize]
    }

    /// Parses a 5-entry table such as `strict: No Low High High High`.
    ///
    /// Entries may be separated by whitespace or commas; the `name:` prefix
    /// is optional (defaults to `custom`).
    pub fn parse_table(text: &str) -> Result<Self> {
        let line = text
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty() && !l.starts_with('#'))
            .ok_or_else(|| Error::InvalidInput("empty rule-system table".into()))?;
        let (name, body) = match line.split_once(':') {
            Some((n, b)) => (n.trim(), b),
            None => ("custom", line),
        };
        let labels = body
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(RiskLabel::from_str)
            .collect::<Result<Vec<_>>>()?;
        let mapping: [RiskLabel; 5] = labels.try_into().map_err(|v: Vec<RiskLabel>| {
            Error::InvalidInput(format!("rule-system table needs 5 entries, got {}", v.len()))
        })?;
        Self::new(name, mapping)
    }

    pub fn to_table(&self) -> String {
        let cells: Vec<String> = self.mapping.iter().map(ToString::to_string).collect();
        format!("{}: {}", self.name, cells.join(" "))
    }
}

impl fmt::Display for RuleSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl FromStr for RuleSystem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::by_name(s).map_or_else(|| Self::parse_table(s), Ok)
    }
}

pub fn apply_rule_system(class: ViogenClass, rule: &RuleSystem) -> RiskLabel {
    rule.apply(class)
}

/// Per-(question, option) weights plus four ascending cut points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViogenScoring {
    pub weights: BTreeMap<String, BTreeMap<String, f64>>,
    pub thresholds: [f64; 4],
}

impl ViogenScoring {
    /// Checks coverage of every schema option and threshold ordering.
    pub fn validate(&self, schema: &QuestionnaireSchema) -> Result<()> {
        if self.thresholds.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput(format!(
                "scoring thresholds must be strictly ascending: {:?}",
                self.thresholds
            )));
        }
        for q in schema.questions() {
            let per_q = self.weights.get(&q.id);
            for o in &q.options {
                if per_q.and_then(|m| m.get(o)).is_none() {
                    return Err(Error::InvalidInput(format!(
                        "no scoring weight for question '{}' option '{o}'",
                        q.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Weighted sum of the case's answers; MISSING contributes nothing.
    pub fn score(&self, case: &CaseRecord) -> Result<f64> {
        let mut total = 0.0;
        for (qid, response) in &case.responses {
            let Some(option) = response else { continue };
            let w = self
                .weights
                .get(qid)
                .and_then(|m| m.get(option))
                .ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "case {}: no scoring weight for question '{qid}' option '{option}'",
                        case.case_id
                    ))
                })?;
            total += w;
        }
        Ok(total)
    }

    /// Class = number of thresholds strictly below the score.
    pub fn classify_score(&self, score: f64) -> ViogenClass {
        let n = self.thresholds.iter().filter(|&&t| t < score).count();
        ViogenClass::ALL[n]
    }

    /// The same weights laid out along the encoded columns of `schema`.
    pub fn column_weights(&self, schema: &QuestionnaireSchema) -> Result<Vec<f64>> {
        self.validate(schema)?;
        let mut out = vec![0.0; schema.width()];
        for (qi, q) in schema.questions().iter().enumerate() {
            for (oi, o) in q.options.iter().enumerate() {
                out[schema.offset(qi) + oi] = self.weights[&q.id][o];
            }
        }
        Ok(out)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scoring serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Five-class value for one case, from its stored score or from `scoring`.
pub fn viogen_classify(case: &CaseRecord, scoring: Option<&ViogenScoring>) -> Result<ViogenClass> {
    if let Some(v) = case.viogen_score {
        return ViogenClass::from_score(v).ok_or_else(|| {
            Error::InvalidInput(format!("case {}: viogen score {v} out of range 0-4", case.case_id))
        });
    }
    let scoring = scoring.ok_or_else(|| Error::MissingBaseline(case.case_id.clone()))?;
    Ok(scoring.classify_score(scoring.score(case)?))
}

/// Linear scoring expressed over encoded columns, for matrices without
/// precomputed scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScoring {
    pub column_weights: Vec<f64>,
    pub thresholds: [f64; 4],
}

impl ColumnScoring {
    pub fn from_scoring(scoring: &ViogenScoring, schema: &QuestionnaireSchema) -> Result<Self> {
        Ok(Self {
            column_weights: scoring.column_weights(schema)?,
            thresholds: scoring.thresholds,
        })
    }

    pub fn classify_row(&self, row: &[f64]) -> Result<ViogenClass> {
        if row.len() != self.column_weights.len() {
            return Err(Error::WidthMismatch {
                expected: self.column_weights.len(),
                actual: row.len(),
            });
        }
        let score: f64 = row.iter().zip(&self.column_weights).map(|(x, w)| x * w).sum();
        Ok(ViogenClass::ALL[self.thresholds.iter().filter(|&&t| t < score).count()])
    }
}

/// The pre-existing assessment as a predictor: five-class score then a rule system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub rule: RuleSystem,
    pub scoring: Option<ColumnScoring>,
}

impl BaselineModel {
    pub fn new(rule: RuleSystem) -> Self {
        Self { rule, scoring: None }
    }

    pub fn with_scoring(rule: RuleSystem, scoring: ColumnScoring) -> Self {
        Self {
            rule,
            scoring: Some(scoring),
        }
    }

    pub fn classes(&self, m: &FeatureMatrix) -> Result<Vec<ViogenClass>> {
        (0..m.n_rows())
            .map(|i| match m.viogen_scores()[i] {
                Some(v) => ViogenClass::from_score(v).ok_or_else(|| {
                    Error::InvalidInput(format!("case {}: viogen score {v} out of range", m.case_ids()[i]))
                }),
                None => match &self.scoring {
                    Some(s) => s.classify_row(m.row(i)),
                    None => Err(Error::MissingBaseline(m.case_ids()[i].clone())),
                },
            })
            .collect()
    }

    pub fn predict(&self, m: &FeatureMatrix) -> Result<Vec<RiskLabel>> {
        Ok(self.classes(m)?.into_iter().map(|c| self.rule.apply(c)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Question;
    use RiskLabel::{High, Low, No};

    #[test]
    fn named_systems_match_reference_table() {
        assert_eq!(RuleSystem::lax().mapping(), &[No, No, Low, Low, High]);
        assert_eq!(RuleSystem::medium_lax().mapping(), &[No, Low, Low, Low, High]);
        assert_eq!(RuleSystem::medium_cautious().mapping(), &[No, No, Low, High, High]);
        assert_eq!(RuleSystem::cautious().mapping(), &[No, Low, Low, High, High]);
    }

    #[test]
    fn lookups() {
        assert_eq!(apply_rule_system(ViogenClass::Low, &RuleSystem::lax()), No);
        assert_eq!(apply_rule_system(ViogenClass::High, &RuleSystem::cautious()), High);
        for r in RuleSystem::named() {
            assert_eq!(r.apply(ViogenClass::Extreme), High);
        }
    }

    #[test]
    fn dominance() {
        for c in ViogenClass::ALL {
            let (lax, ml, mc, ca) = (
                RuleSystem::lax().apply(c),
                RuleSystem::medium_lax().apply(c),
                RuleSystem::medium_cautious().apply(c),
                RuleSystem::cautious().apply(c),
            );
            assert!(ca >= lax && mc >= lax && ca >= ml);
        }
    }

    #[test]
    fn non_monotone_rejected() {
        assert!(RuleSystem::new("bad", [No, High, Low, High, High]).is_err());
    }

    #[test]
    fn table_parsing() {
        let r = RuleSystem::parse_table("strict: No, Low, High, High, High").unwrap();
        assert_eq!(r.name(), "strict");
        assert_eq!(r.mapping(), &[No, Low, High, High, High]);
        assert_eq!(RuleSystem::parse_table(&r.to_table()).unwrap(), r);
        assert!(RuleSystem::parse_table("No Low High").is_err());
        assert_eq!("Medium cautious".parse::<RuleSystem>().unwrap(), RuleSystem::medium_cautious());
    }

    fn yes_no_schema() -> QuestionnaireSchema {
        QuestionnaireSchema::new(vec![Question {
            id: "q".into(),
            options: vec!["no".into(), "yes".into()],
            allows_missing: false,
        }])
        .unwrap()
    }

    fn case(answer: &str) -> CaseRecord {
        CaseRecord {
            case_id: answer.into(),
            responses: [("q".to_string(), Some(answer.to_string()))].into(),
            recidivism_count: 0,
            viogen_score: None,
        }
    }

    fn scoring(yes: f64, no: f64, thresholds: [f64; 4]) -> ViogenScoring {
        ViogenScoring {
            weights: [("q".to_string(), [("yes".to_string(), yes), ("no".to_string(), no)].into())].into(),
            thresholds,
        }
    }

    #[test]
    fn classification_from_weights() {
        let s = scoring(1.0, 0.0, [0.5, 1.5, 2.5, 3.5]);
        s.validate(&yes_no_schema()).unwrap();
        assert_eq!(viogen_classify(&case("yes"), Some(&s)).unwrap(), ViogenClass::Low);
        assert_eq!(viogen_classify(&case("no"), Some(&s)).unwrap(), ViogenClass::NotAppreciated);

        let zero = scoring(0.0, 0.0, [0.1, 0.2, 0.3, 0.4]);
        assert_eq!(viogen_classify(&case("yes"), Some(&zero)).unwrap(), ViogenClass::NotAppreciated);
    }

    #[test]
    fn score_on_threshold_takes_lower_class() {
        let s = scoring(1.5, 0.0, [0.5, 1.5, 2.5, 3.5]);
        assert_eq!(viogen_classify(&case("yes"), Some(&s)).unwrap(), ViogenClass::Low);
    }

    #[test]
    fn precomputed_score_passes_through() {
        let mut c = case("no");
        c.viogen_score = Some(4);
        assert_eq!(viogen_classify(&c, None).unwrap(), ViogenClass::Extreme);
        c.viogen_score = None;
        assert!(matches!(viogen_classify(&c, None), Err(Error::MissingBaseline(_))));
    }

    #[test]
    fn scoring_validation() {
        let schema = yes_no_schema();
        assert!(scoring(1.0, 0.0, [0.5, 0.5, 2.5, 3.5]).validate(&schema).is_err());
        let mut s = scoring(1.0, 0.0, [0.5, 1.5, 2.5, 3.5]);
        s.weights.get_mut("q").unwrap().remove("no");
        assert!(s.validate(&schema).is_err());
    }

    #[test]
    fn column_scoring_agrees_with_record_scoring() {
        let schema = yes_no_schema();
        let s = scoring(2.0, 0.25, [0.1, 1.0, 1.9, 2.5]);
        let cols = ColumnScoring::from_scoring(&s, &schema).unwrap();
        for ans in ["yes", "no"] {
            let c = case(ans);
            let m = crate::dataset::encode_cases(&[c.clone()], &schema).unwrap();
            assert_eq!(cols.classify_row(m.row(0)).unwrap(), viogen_classify(&c, Some(&s)).unwrap());
        }
    }
}
