//! On-disk formats for case tables and schemas, plus run manifests.
//!
//! Case tables have a header row with `case_id`, `recidivism_count`, an
//! optional `viogen_score`, then one column per question. An empty field is
//! a MISSING answer (or an absent score). Lines starting with `#` are
//! comments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{CaseRecord, QuestionnaireSchema};
use crate::error::{Error, Result};

const CASE_ID: &str = "case_id";
const COUNT: &str = "recidivism_count";
const SCORE: &str = "viogen_score";

/// Serializes cases with question columns in schema order. `comment`, when
/// given, becomes a leading `# ` line.
pub fn cases_to_csv(records: &[CaseRecord], schema: &QuestionnaireSchema, comment: Option<&str>) -> Result<String> {
    let mut out = Vec::new();
    if let Some(c) = comment {
        out.extend_from_slice(format!("# {c}\n").as_bytes());
    }
    let with_score = records.iter().any(|r| r.viogen_score.is_some());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![CASE_ID, COUNT];
    if with_score {
        header.push(SCORE);
    }
    header.extend(schema.questions().iter().map(|q| q.id.as_str()));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.case_id.clone(), r.recidivism_count.to_string()];
        if with_score {
            row.push(r.viogen_score.map(|s| s.to_string()).unwrap_or_default());
        }
        row.extend(schema.questions().iter().map(|q| r.response(&q.id).unwrap_or("").to_string()));
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("case table is utf-8"))
}

pub fn parse_cases(text: &str, source: &Path) -> Result<Vec<CaseRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| header.iter().position(|h| h == name);
    let id_col = find(CASE_ID).ok_or_else(|| Error::parse(source, format!("missing '{CASE_ID}' column")))?;
    let count_col = find(COUNT).ok_or_else(|| Error::parse(source, format!("missing '{COUNT}' column")))?;
    let score_col = find(SCORE);
    let questions: Vec<(usize, &String)> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != id_col && *i != count_col && Some(*i) != score_col)
        .collect();

    let mut records = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row?;
        let at = |msg: String| Error::parse(source, format!("data row {}: {msg}", line + 1));
        let field = |i: usize| row.get(i).unwrap_or("").trim();
        let case_id = field(id_col).to_string();
        let recidivism_count = field(count_col)
            .parse::<u32>()
            .map_err(|_| at(format!("bad recidivism count '{}'", field(count_col))))?;
        let viogen_score = match score_col.map(field) {
            None | Some("") => None,
            Some(s) => Some(
                s.parse::<u8>()
                    .ok()
                    .filter(|v| *v <= 4)
                    .ok_or_else(|| at(format!("bad viogen score '{s}'")))?,
            ),
        };
        let responses: BTreeMap<String, Option<String>> = questions
            .iter()
            .map(|(i, q)| {
                let v = field(*i);
                ((*q).clone(), (!v.is_empty()).then(|| v.to_string()))
            })
            .collect();
        records.push(CaseRecord {
            case_id,
            responses,
            recidivism_count,
            viogen_score,
        });
    }
    Ok(records)
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_cases(path: &Path) -> Result<Vec<CaseRecord>> {
    parse_cases(&read_text(path)?, path)
}

pub fn read_schema(path: &Path) -> Result<QuestionnaireSchema> {
    QuestionnaireSchema::from_toml(&read_text(path)?).map_err(|e| Error::parse(path, e))
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn fingerprint(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to rerun a command: the resolved configuration, the
/// seed, the input fingerprints and the files it wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub inputs: Vec<InputFile>,
    pub outputs: Vec<String>,
    pub config: toml::Table,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: toml::Table) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            config,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(InputFile {
            path: path.to_path_buf(),
            sha256: fingerprint(path)?,
        });
        Ok(())
    }

    /// Conventional file name, `manifest-<command>.toml`.
    pub fn file_name(&self) -> String {
        format!("manifest-{}.toml", self.command)
    }

    /// First line of every output file.
    pub fn header(&self) -> String {
        format!("manifest: {}", self.file_name())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Question;

    fn schema() -> QuestionnaireSchema {
        QuestionnaireSchema::new(vec![
            Question { id: "a".into(), options: vec!["no".into(), "yes".into()], allows_missing: true },
            Question { id: "b".into(), options: vec!["s0".into(), "s1".into(), "s2".into()], allows_missing: false },
        ])
        .unwrap()
    }

    fn case(id: &str, a: Option<&str>, b: &str, count: u32, score: Option<u8>) -> CaseRecord {
        CaseRecord {
            case_id: id.into(),
            responses: BTreeMap::from([
                ("a".to_string(), a.map(String::from)),
                ("b".to_string(), Some(b.to_string())),
            ]),
            recidivism_count: count,
            viogen_score: score,
        }
    }

    #[test]
    fn round_trip_with_missing_and_scores() {
        let records = vec![case("x1", Some("yes"), "s2", 3, Some(2)), case("x2", None, "s0", 0, None)];
        let text = cases_to_csv(&records, &schema(), Some("manifest: m.toml")).unwrap();
        assert!(text.starts_with("# manifest: m.toml\ncase_id,recidivism_count,viogen_score,a,b\n"));
        assert!(text.contains("x2,0,,,s0"));
        assert_eq!(parse_cases(&text, Path::new("t.csv")).unwrap(), records);
    }

    #[test]
    fn score_column_is_optional() {
        let records = vec![case("x1", Some("no"), "s1", 1, None)];
        let text = cases_to_csv(&records, &schema(), None).unwrap();
        assert!(text.starts_with("case_id,recidivism_count,a,b\n"));
        assert_eq!(parse_cases(&text, Path::new("t.csv")).unwrap(), records);
    }

    #[test]
    fn malformed_rows_name_the_problem() {
        let err = parse_cases("case_id,recidivism_count,a\nx,-1,no\n", Path::new("t.csv")).unwrap_err();
        assert!(err.to_string().contains("bad recidivism count"), "{err}");
        let err = parse_cases("case_id,recidivism_count,viogen_score\nx,1,7\n", Path::new("t.csv")).unwrap_err();
        assert!(err.to_string().contains("bad viogen score"), "{err}");
        let err = parse_cases("id,recidivism_count\n", Path::new("t.csv")).unwrap_err();
        assert!(err.to_string().contains("case_id"), "{err}");
    }

    #[test]
    fn sha256_known_value() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn manifest_serializes() {
        let mut config = toml::Table::new();
        config.insert("seed".into(), toml::Value::Integer(4));
        let m = Manifest::new("sweep", 4, config);
        let text = m.to_toml().unwrap();
        assert!(text.contains("command = \"sweep\""));
        assert_eq!(m.header(), "manifest: manifest-sweep.toml");
        assert_eq!(toml::from_str::<Manifest>(&text).unwrap(), m);
    }
}
