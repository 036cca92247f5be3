//! Dataset model, JSON persistence, type statistics and synthetic data.
//!
//! The on-disk format is one UTF-8 JSON document:
//!
//! ```json
//! {"version":1,"resolution_ppi":500,"seed":7,"subjects":[
//!   {"id":"s001","has_rare":true,
//!    "latent":{"minutiae":[{"x":123.0,"y":45.0,"theta_deg":30.0,"type":5,"raw_points":null}]},
//!    "tenprint":{"minutiae":[...]}}]}
//! ```
//!
//! Unknown fields are rejected. `has_rare` is optional on input; when present
//! it must agree with the latent's contents.

mod stats;
mod synth;

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::minutia::{Minutia, MinutiaSet, MinutiaType, RawPoint, SetKind};

pub use stats::{type_frequencies, Scope, TypeFrequency, TypeFrequencyTable, GCDB_LATENT_TYPE_COUNTS};
pub use synth::{gen_synthetic, SynthParams};

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_RESOLUTION_PPI: u32 = 500;

/// A mated latent/tenprint pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Subject {
    pub id: String,
    pub latent: MinutiaSet,
    pub tenprint: MinutiaSet,
    /// Whether the latent carries at least one rare minutia.
    pub has_rare: bool,
}

impl Subject {
    pub fn new(id: impl Into<String>, latent: MinutiaSet, tenprint: MinutiaSet) -> Self {
        let has_rare = latent.has_rare();
        Self {
            id: id.into(),
            latent,
            tenprint,
            has_rare,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Synthetic,
    External,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub resolution_ppi: u32,
    /// Generator seed for synthetic datasets.
    pub seed: Option<u64>,
    subjects: Vec<Subject>,
}

impl Dataset {
    pub fn new(resolution_ppi: u32, seed: Option<u64>, subjects: Vec<Subject>) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &subjects {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Validation(format!("duplicate subject id '{}'", s.id)));
            }
            if s.has_rare != s.latent.has_rare() {
                return Err(Error::Validation(format!(
                    "subject '{}': has_rare flag disagrees with latent contents",
                    s.id
                )));
            }
        }
        Ok(Self {
            resolution_ppi,
            seed,
            subjects,
        })
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn source(&self) -> Source {
        if self.seed.is_some() {
            Source::Synthetic
        } else {
            Source::External
        }
    }

    pub fn ids(&self) -> Vec<String> {
        self.subjects.iter().map(|s| s.id.clone()).collect()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&DatasetFile::from(self)).expect("dataset serialization is infallible")
    }

    /// Parses and validates a dataset document. `origin` only labels errors.
    pub fn from_json_str(text: &str, origin: &Path) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| {
            Error::parse(
                origin,
                format!("line {}, column {}", e.line(), e.column()),
                e.to_string(),
            )
        })?;
        let file: DatasetFile = serde_path_to_error::deserialize(&value).map_err(|e| {
            let path = e.path().to_string();
            let context = match subject_id_for(&value, &path) {
                Some(id) => format!("subject '{id}', field {path}"),
                None => format!("field {path}"),
            };
            Error::parse(origin, context, e.into_inner().to_string())
        })?;
        if file.version != FORMAT_VERSION {
            return Err(Error::parse(
                origin,
                "field version",
                format!("unsupported version {}, expected {FORMAT_VERSION}", file.version),
            ));
        }
        file.into_dataset()
    }
}

/// Looks up the id of the subject named by a `subjects[i]...` error path.
fn subject_id_for(value: &serde_json::Value, path: &str) -> Option<String> {
    let rest = path.strip_prefix("subjects[")?;
    let idx: usize = rest[..rest.find(']')?].parse().ok()?;
    value
        .get("subjects")?
        .get(idx)?
        .get("id")?
        .as_str()
        .map(str::to_owned)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Dataset::from_json_str(&text, path)
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = dataset.to_json_string();
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a single minutia set document: `{"minutiae":[...]}`.
pub fn load_minutia_set(path: impl AsRef<Path>, kind: SetKind) -> Result<MinutiaSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let file: SetFile = serde_path_to_error::deserialize(de)
        .map_err(|e| Error::parse(path, format!("field {}", e.path()), e.into_inner().to_string()))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    file.into_set(&id, kind)
}

pub fn save_minutia_set(set: &MinutiaSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string(&SetFile::from(set)).expect("set serialization is infallible");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetFile {
    version: u32,
    resolution_ppi: u32,
    seed: Option<u64>,
    subjects: Vec<SubjectFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubjectFile {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    has_rare: Option<bool>,
    latent: SetFile,
    tenprint: SetFile,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SetFile {
    minutiae: Vec<MinutiaFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MinutiaFile {
    x: f64,
    y: f64,
    theta_deg: f64,
    #[serde(rename = "type")]
    code: i64,
    #[serde(default)]
    raw_points: Option<Vec<RawPoint>>,
}

impl From<&Dataset> for DatasetFile {
    fn from(d: &Dataset) -> Self {
        Self {
            version: FORMAT_VERSION,
            resolution_ppi: d.resolution_ppi,
            seed: d.seed,
            subjects: d
                .subjects
                .iter()
                .map(|s| SubjectFile {
                    id: s.id.clone(),
                    has_rare: Some(s.has_rare),
                    latent: SetFile::from(&s.latent),
                    tenprint: SetFile::from(&s.tenprint),
                })
                .collect(),
        }
    }
}

impl From<&MinutiaSet> for SetFile {
    fn from(set: &MinutiaSet) -> Self {
        Self {
            minutiae: set
                .minutiae()
                .iter()
                .map(|m| MinutiaFile {
                    x: m.x,
                    y: m.y,
                    theta_deg: m.theta,
                    code: m.mtype.code() as i64,
                    raw_points: m.raw_points.clone(),
                })
                .collect(),
        }
    }
}

impl SetFile {
    fn into_set(self, id: &str, kind: SetKind) -> Result<MinutiaSet> {
        let minutiae = self
            .minutiae
            .into_iter()
            .enumerate()
            .map(|(i, m)| {
                let code = u8::try_from(m.code).map_err(|_| {
                    Error::Validation(format!(
                        "set '{id}', minutia {i}: type code {} outside 1..=15",
                        m.code
                    ))
                })?;
                let mtype = MinutiaType::from_code(code)
                    .map_err(|e| Error::Validation(format!("set '{id}', minutia {i}: {e}")))?;
                Ok(Minutia {
                    x: m.x,
                    y: m.y,
                    theta: m.theta_deg,
                    mtype,
                    raw_points: m.raw_points,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        MinutiaSet::new(id, kind, minutiae)
    }
}

impl DatasetFile {
    fn into_dataset(self) -> Result<Dataset> {
        let subjects = self
            .subjects
            .into_iter()
            .map(|s| {
                let latent = s.latent.into_set(&format!("{}/latent", s.id), SetKind::Latent)?;
                let tenprint = s
                    .tenprint
                    .into_set(&format!("{}/tenprint", s.id), SetKind::Tenprint)?;
                let subject = Subject::new(s.id, latent, tenprint);
                if let Some(flag) = s.has_rare {
                    if flag != subject.has_rare {
                        return Err(Error::Validation(format!(
                            "subject '{}': has_rare is {flag} but the latent {} rare minutiae",
                            subject.id,
                            if subject.has_rare { "contains" } else { "has no" }
                        )));
                    }
                }
                Ok(subject)
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(self.resolution_ppi, self.seed, subjects)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    const ONE_SUBJECT: &str = r#"{"version":1,"resolution_ppi":500,"seed":null,"subjects":[
        {"id":"s001",
         "latent":{"minutiae":[{"x":123.0,"y":45.0,"theta_deg":30.0,"type":5,"raw_points":null},
                               {"x":100.0,"y":60.0,"theta_deg":10.0,"type":1}]},
         "tenprint":{"minutiae":[{"x":15.0,"y":30.0,"theta_deg":10.0,"type":3,
                                  "raw_points":[[10.0,20.0,30.0],[20.0,40.0,10.0]]}]}}]}"#;

    fn origin() -> PathBuf {
        PathBuf::from("inline.json")
    }

    #[test]
    fn minimal_file_parses() {
        let d = Dataset::from_json_str(ONE_SUBJECT, &origin()).unwrap();
        assert_eq!(d.len(), 1);
        let s = &d.subjects()[0];
        assert!(s.has_rare);
        assert_eq!(s.latent.len(), 2);
        assert_eq!(s.tenprint.minutiae()[0].mtype, MinutiaType::Deviation);
        assert_eq!(d.source(), Source::External);
    }

    #[test]
    fn type_code_16_is_validation_error() {
        let text = ONE_SUBJECT.replace(r#""type":1}"#, r#""type":16}"#);
        assert!(matches!(
            Dataset::from_json_str(&text, &origin()),
            Err(Error::Validation(_))
        ));
        let text = ONE_SUBJECT.replace(r#""type":1}"#, r#""type":-3}"#);
        assert!(matches!(
            Dataset::from_json_str(&text, &origin()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn theta_out_of_range_is_validation_error() {
        let text = ONE_SUBJECT.replace(r#""theta_deg":30.0"#, r#""theta_deg":360.0"#);
        assert!(matches!(
            Dataset::from_json_str(&text, &origin()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn unknown_field_is_parse_error_with_subject_and_path() {
        let text = ONE_SUBJECT.replace(r#""type":1}"#, r#""type":1,"quality":3}"#);
        match Dataset::from_json_str(&text, &origin()) {
            Err(Error::Parse { context, .. }) => {
                assert!(context.contains("s001"), "{context}");
                assert!(context.contains("subjects[0].latent.minutiae[1]"), "{context}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_field_type_is_parse_error() {
        let text = ONE_SUBJECT.replace(r#""x":100.0"#, r#""x":"100""#);
        assert!(matches!(
            Dataset::from_json_str(&text, &origin()),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            Dataset::from_json_str("{", &origin()),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn version_must_be_one() {
        let text = ONE_SUBJECT.replace(r#""version":1"#, r#""version":2"#);
        assert!(matches!(
            Dataset::from_json_str(&text, &origin()),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn has_rare_mismatch_rejected() {
        let text = ONE_SUBJECT.replace(r#""id":"s001","#, r#""id":"s001","has_rare":false,"#);
        assert!(matches!(
            Dataset::from_json_str(&text, &origin()),
            Err(Error::Validation(_))
        ));
        let text = ONE_SUBJECT.replace(r#""id":"s001","#, r#""id":"s001","has_rare":true,"#);
        assert!(Dataset::from_json_str(&text, &origin()).is_ok());
    }

    #[test]
    fn raw_points_must_collapse_to_quadruple() {
        let text = ONE_SUBJECT.replace(r#""x":15.0"#, r#""x":16.0"#);
        assert!(matches!(
            Dataset::from_json_str(&text, &origin()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn duplicate_ids_and_minutiae_rejected() {
        let d = Dataset::from_json_str(ONE_SUBJECT, &origin()).unwrap();
        let s = d.subjects()[0].clone();
        assert!(Dataset::new(500, None, vec![s.clone(), s]).is_err());
        let text = ONE_SUBJECT.replace(
            r#"{"x":100.0,"y":60.0,"theta_deg":10.0,"type":1}"#,
            r#"{"x":123.0,"y":45.0,"theta_deg":50.0,"type":5}"#,
        );
        assert!(matches!(
            Dataset::from_json_str(&text, &origin()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn empty_set_rejected() {
        let text = ONE_SUBJECT.replace(
            r#""tenprint":{"minutiae":[{"x":15.0,"y":30.0,"theta_deg":10.0,"type":3,
                                  "raw_points":[[10.0,20.0,30.0],[20.0,40.0,10.0]]}]}"#,
            r#""tenprint":{"minutiae":[]}"#,
        );
        assert!(matches!(
            Dataset::from_json_str(&text, &origin()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.json");
        let d = Dataset::from_json_str(ONE_SUBJECT, &origin()).unwrap();
        save_dataset(&d, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), d);
        assert!(matches!(
            load_dataset(dir.path().join("missing.json")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn single_set_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("latent.json");
        let d = Dataset::from_json_str(ONE_SUBJECT, &origin()).unwrap();
        save_minutia_set(&d.subjects()[0].tenprint, &path).unwrap();
        let back = load_minutia_set(&path, SetKind::Tenprint).unwrap();
        assert_eq!(back.minutiae(), d.subjects()[0].tenprint.minutiae());
        assert_eq!(back.id, "latent");
    }
}
